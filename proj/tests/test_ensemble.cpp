#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sniforge/common.hpp"
#include "sniforge/ensemble.hpp"

using namespace sniforge;
using eval::ProbMatrix;

TEST_CASE("average_softmax: identity, arithmetic, simplex closure") {
    ProbMatrix a = {{0.2, 0.8}, {0.8, 0.2}, {0.5, 0.5}};
    std::vector<ProbMatrix> same = {a, a, a};
    CHECK(eval::average_softmax(same) == a);

    ProbMatrix b = {{0.8, 0.2}, {0.2, 0.8}, {0.5, 0.5}};
    ProbMatrix avg = eval::average_softmax(std::vector<ProbMatrix>{a, b});
    for (const auto& row : avg) {
        CHECK(row[0] == doctest::Approx(0.5));
        CHECK(row[1] == doctest::Approx(0.5));
    }

    Rng rng(10);
    std::vector<ProbMatrix> mats(3, ProbMatrix(20));
    for (auto& m : mats)
        for (auto& row : m) {
            row.resize(5);
            double sum = 0;
            for (double& v : row) {
                v = rng.uniform();
                sum += v;
            }
            for (double& v : row) v /= sum;
        }
    ProbMatrix mean = eval::average_softmax(mats);
    for (const auto& row : mean) {
        double sum = std::accumulate(row.begin(), row.end(), 0.0);
        CHECK(std::abs(sum - 1.0) <= 1e-6);
        for (double v : row) CHECK(v >= 0.0);
    }

    ProbMatrix wrong_shape = {{0.5, 0.5}};
    CHECK_THROWS(eval::average_softmax(std::vector<ProbMatrix>{a, wrong_shape}));
    CHECK_THROWS(eval::average_softmax(std::vector<ProbMatrix>{}));
}

TEST_CASE("combined_rf_dl implements the half/sixth weighting") {
    ProbMatrix rf = {{0.6, 0.4}};
    ProbMatrix d = {{0.2, 0.8}};
    // scores: [0.5*0.6 + 3*(1/6)*0.2, 0.5*0.4 + 3*(1/6)*0.8] = [0.4, 0.6]
    std::vector<int> pred = eval::combined_rf_dl(rf, d, d, d);
    CHECK(pred == std::vector<int>{1});

    ProbMatrix onehot0 = {{1.0, 0.0}};
    CHECK(eval::combined_rf_dl(onehot0, onehot0, onehot0, onehot0) == std::vector<int>{0});

    // rf one-hot class 0 vs all three deep nets one-hot class 1:
    // 0.5 vs 0.5, tie resolved toward the lowest class index
    ProbMatrix onehot1 = {{0.0, 1.0}};
    CHECK(eval::combined_rf_dl(onehot0, onehot1, onehot1, onehot1) == std::vector<int>{0});

    ProbMatrix bad = {{0.5, 0.5}, {0.5, 0.5}};
    CHECK_THROWS(eval::combined_rf_dl(rf, d, d, bad));
}

TEST_CASE("the paper weights sum to one and keep simplex rows") {
    double sum = 0;
    for (double w : eval::kRfDlWeights) sum += w;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("argmax invariance under common positive scaling") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto rand_mat = [&](std::size_t rows, std::size_t cols) {
            ProbMatrix m(rows);
            for (auto& row : m) {
                row.resize(cols);
                double sum = 0;
                for (double& v : row) {
                    v = rng.uniform();
                    sum += v;
                }
                for (double& v : row) v /= sum;
            }
            return m;
        };
        ProbMatrix rf = rand_mat(10, 4), d1 = rand_mat(10, 4), d2 = rand_mat(10, 4), d3 = rand_mat(10, 4);
        std::vector<int> base = eval::combined_rf_dl(rf, d1, d2, d3);
        double c = rng.uniform(0.1, 10.0);
        auto scale = [&](ProbMatrix m) {
            for (auto& row : m)
                for (double& v : row) v *= c;
            return m;
        };
        CHECK(eval::combined_rf_dl(scale(rf), scale(d1), scale(d2), scale(d3)) == base);
    }
}

TEST_CASE("unanimous argmax wins in both ensembles") {
    Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        std::size_t cols = 3 + rng.below(3);
        auto rand_row_peaked = [&](std::size_t peak) {
            std::vector<double> row(cols);
            double sum = 0;
            for (double& v : row) {
                v = rng.uniform(0, 0.2);
                sum += v;
            }
            row[peak] += 0.5;
            sum += 0.5;
            for (double& v : row) v /= sum;
            return row;
        };
        std::size_t peak = rng.below(cols);
        ProbMatrix rf = {rand_row_peaked(peak)}, d1 = {rand_row_peaked(peak)},
                   d2 = {rand_row_peaked(peak)}, d3 = {rand_row_peaked(peak)};
        CHECK(eval::combined_rf_dl(rf, d1, d2, d3) == std::vector<int>{static_cast<int>(peak)});
        auto avg = eval::average_softmax(std::vector<ProbMatrix>{d1, d2, d3});
        CHECK(eval::argmax_rows(avg) == std::vector<int>{static_cast<int>(peak)});
    }
}

TEST_CASE("accuracy basics") {
    std::vector<int> truth = {0, 1, 0};
    std::vector<int> pred = {0, 1, 1};
    CHECK(eval::accuracy(pred, truth) == doctest::Approx(2.0 / 3.0));
    CHECK(eval::accuracy(truth, truth) == 1.0);
    std::vector<int> wrong = {1, 0, 1};
    CHECK(eval::accuracy(wrong, truth) == 0.0);
    CHECK_THROWS(eval::accuracy({}, {}));
}

TEST_CASE("macro precision/recall/f1 on hand-computed confusion matrices") {
    // 1: perfect three-class prediction
    std::vector<int> t1 = {0, 1, 2, 0, 1, 2};
    eval::Prf p1 = eval::macro_prf(t1, t1, 3);
    CHECK(p1.precision == doctest::Approx(1.0));
    CHECK(p1.recall == doctest::Approx(1.0));
    CHECK(p1.f1 == doctest::Approx(1.0));

    // 2: everything predicted class 0 on balanced truth
    std::vector<int> t2 = {0, 0, 1, 1};
    std::vector<int> p2 = {0, 0, 0, 0};
    eval::Prf r2 = eval::macro_prf(p2, t2, 2);
    CHECK(r2.precision == doctest::Approx(0.25));
    CHECK(r2.recall == doctest::Approx(0.5));
    CHECK(r2.f1 == doctest::Approx(1.0 / 3.0));

    // 3: symmetric confusion between classes 1 and 2
    std::vector<int> t3 = {0, 1, 2, 0, 1, 2};
    std::vector<int> p3 = {0, 1, 1, 0, 2, 2};
    eval::Prf r3 = eval::macro_prf(p3, t3, 3);
    CHECK(r3.precision == doctest::Approx(2.0 / 3.0));
    CHECK(r3.recall == doctest::Approx(2.0 / 3.0));
    CHECK(r3.f1 == doctest::Approx(2.0 / 3.0));

    // 4: a class that never appears in truth but absorbs predictions
    std::vector<int> t4 = {0, 0, 1, 1};
    std::vector<int> p4 = {0, 2, 1, 2};
    eval::Prf r4 = eval::macro_prf(p4, t4, 3);
    CHECK(r4.precision == doctest::Approx(2.0 / 3.0));
    CHECK(r4.recall == doctest::Approx(1.0 / 3.0));
    CHECK(r4.f1 == doctest::Approx((2.0 / 3.0 + 2.0 / 3.0 + 0.0) / 3.0));

    // 5: four imbalanced classes
    std::vector<int> t5 = {0, 1, 1, 2, 2, 2, 3};
    std::vector<int> p5 = {1, 1, 2, 2, 2, 0, 3};
    eval::Prf r5 = eval::macro_prf(p5, t5, 4);
    CHECK(r5.precision == doctest::Approx((0.0 + 0.5 + 2.0 / 3.0 + 1.0) / 4.0));
    CHECK(r5.recall == doctest::Approx((0.0 + 0.5 + 2.0 / 3.0 + 1.0) / 4.0));
    CHECK(r5.f1 == doctest::Approx((0.0 + 0.5 + 2.0 / 3.0 + 1.0) / 4.0));
}

TEST_CASE("single-class macro equals micro accuracy") {
    std::vector<int> t = {0, 0, 0, 0};
    eval::Prf r = eval::macro_prf(t, t, 1);
    CHECK(r.precision == eval::accuracy(t, t));
    CHECK(r.recall == 1.0);
}

TEST_CASE("per-SNI accuracy: restriction, omission, support-weighted identity") {
    std::vector<std::string> classes = {"a.com", "b.net", "c.org"};
    std::vector<int> truth = {0, 0, 1, 1, 1};  // c.org absent
    std::vector<int> pred = {0, 1, 1, 1, 0};
    auto per = eval::per_sni_accuracy(pred, truth, classes);
    REQUIRE(per.size() == 2);
    CHECK(per.at("a.com") == doctest::Approx(0.5));
    CHECK(per.at("b.net") == doctest::Approx(2.0 / 3.0));
    CHECK(per.find("c.org") == per.end());

    // support-weighted mean of per-class accuracies == micro accuracy, 1e-12
    Rng rng(44);
    for (int trial = 0; trial < 30; ++trial) {
        std::size_t n = 50 + rng.below(100);
        int n_classes = 2 + static_cast<int>(rng.below(5));
        std::vector<std::string> names;
        for (int c = 0; c < n_classes; ++c) names.push_back("class" + std::to_string(c));
        std::vector<int> t(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            t[i] = static_cast<int>(rng.below(n_classes));
            p[i] = static_cast<int>(rng.below(n_classes));
        }
        auto by_class = eval::per_sni_accuracy(p, t, names);
        std::vector<std::size_t> support(n_classes, 0);
        for (int y : t) support[static_cast<std::size_t>(y)]++;
        double weighted = 0;
        for (int c = 0; c < n_classes; ++c) {
            auto it = by_class.find(names[static_cast<std::size_t>(c)]);
            if (it != by_class.end())
                weighted += it->second * static_cast<double>(support[static_cast<std::size_t>(c)]);
        }
        weighted /= static_cast<double>(n);
        CHECK(std::abs(weighted - eval::accuracy(p, t)) <= 1e-12);
    }
}

TEST_CASE("one fully-correct class maps to accuracy 1.0") {
    std::vector<std::string> classes = {"only.example.com"};
    std::vector<int> t = {0, 0, 0};
    auto per = eval::per_sni_accuracy(t, t, classes);
    CHECK(per.at("only.example.com") == 1.0);
}

TEST_CASE("metrics are invariant under consistent class relabeling") {
    Rng rng(91);
    std::size_t n = 120;
    int n_classes = 5;
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = static_cast<int>(rng.below(n_classes));
        p[i] = rng.uniform() < 0.7 ? t[i] : static_cast<int>(rng.below(n_classes));
    }
    // permutation of class indices
    std::vector<int> perm = {3, 0, 4, 1, 2};
    std::vector<int> t2(n), p2(n);
    for (std::size_t i = 0; i < n; ++i) {
        t2[i] = perm[static_cast<std::size_t>(t[i])];
        p2[i] = perm[static_cast<std::size_t>(p[i])];
    }
    CHECK(eval::accuracy(p, t) == eval::accuracy(p2, t2));
    eval::Prf a = eval::macro_prf(p, t, n_classes);
    eval::Prf b = eval::macro_prf(p2, t2, n_classes);
    CHECK(a.precision == doctest::Approx(b.precision).epsilon(1e-12));
    CHECK(a.recall == doctest::Approx(b.recall).epsilon(1e-12));
    CHECK(a.f1 == doctest::Approx(b.f1).epsilon(1e-12));
}

TEST_CASE("weighted_argmax validates weight count") {
    ProbMatrix a = {{0.5, 0.5}};
    const ProbMatrix* mats[] = {&a, &a};
    std::vector<double> w3 = {0.3, 0.3, 0.4};
    CHECK_THROWS(eval::weighted_argmax(mats, w3));
}
