#include "sniforge/ensemble.hpp"

#include <stdexcept>

namespace sniforge::eval {

void check_same_shape(std::span<const ProbMatrix* const> mats) {
    if (mats.empty()) throw std::invalid_argument("ensemble: need at least one matrix");
    std::size_t rows = mats[0]->size();
    std::size_t cols = rows ? (*mats[0])[0].size() : 0;
    for (const ProbMatrix* m : mats) {
        if (m->size() != rows) throw std::invalid_argument("ensemble: row count mismatch");
        for (const auto& row : *m)
            if (row.size() != cols) throw std::invalid_argument("ensemble: column count mismatch");
    }
}

ProbMatrix average_softmax(std::span<const ProbMatrix* const> mats) {
    check_same_shape(mats);
    const ProbMatrix& first = *mats[0];
    ProbMatrix out(first.size());
    double inv = 1.0 / static_cast<double>(mats.size());
    for (std::size_t r = 0; r < first.size(); ++r) {
        out[r].assign(first[r].size(), 0.0);
        for (const ProbMatrix* m : mats)
            for (std::size_t c = 0; c < out[r].size(); ++c) out[r][c] += (*m)[r][c];
        for (double& v : out[r]) v *= inv;
    }
    return out;
}

ProbMatrix average_softmax(const std::vector<ProbMatrix>& mats) {
    std::vector<const ProbMatrix*> ptrs;
    ptrs.reserve(mats.size());
    for (const ProbMatrix& m : mats) ptrs.push_back(&m);
    return average_softmax(std::span<const ProbMatrix* const>(ptrs));
}

std::vector<int> argmax_rows(const ProbMatrix& m) {
    std::vector<int> out;
    out.reserve(m.size());
    for (const auto& row : m) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c)
            if (row[c] > row[best]) best = c;
        out.push_back(static_cast<int>(best));
    }
    return out;
}

std::vector<int> weighted_argmax(std::span<const ProbMatrix* const> mats, std::span<const double> weights) {
    if (mats.size() != weights.size())
        throw std::invalid_argument("weighted_argmax: weight count mismatch");
    check_same_shape(mats);
    const ProbMatrix& first = *mats[0];
    std::vector<int> out;
    out.reserve(first.size());
    std::vector<double> score;
    for (std::size_t r = 0; r < first.size(); ++r) {
        score.assign(first[r].size(), 0.0);
        for (std::size_t m = 0; m < mats.size(); ++m)
            for (std::size_t c = 0; c < score.size(); ++c) score[c] += weights[m] * (*mats[m])[r][c];
        std::size_t best = 0;
        for (std::size_t c = 1; c < score.size(); ++c)
            if (score[c] > score[best]) best = c;
        out.push_back(static_cast<int>(best));
    }
    return out;
}

std::vector<int> combined_rf_dl(const ProbMatrix& rf, const ProbMatrix& d1, const ProbMatrix& d2,
                                const ProbMatrix& d3, std::span<const double> weights) {
    const ProbMatrix* mats[] = {&rf, &d1, &d2, &d3};
    return weighted_argmax(mats, weights);
}

double accuracy(std::span<const int> pred, std::span<const int> truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw std::invalid_argument("accuracy: inputs must be equal-length and non-empty");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

Prf macro_prf(std::span<const int> pred, std::span<const int> truth, int n_classes) {
    if (pred.size() != truth.size()) throw std::invalid_argument("macro_prf: length mismatch");
    std::vector<std::size_t> tp(static_cast<std::size_t>(n_classes), 0);
    std::vector<std::size_t> fp(static_cast<std::size_t>(n_classes), 0);
    std::vector<std::size_t> fn(static_cast<std::size_t>(n_classes), 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        int p = pred[i], t = truth[i];
        if (p < 0 || p >= n_classes || t < 0 || t >= n_classes)
            throw std::invalid_argument("macro_prf: label outside [0, n_classes)");
        if (p == t)
            tp[static_cast<std::size_t>(p)]++;
        else {
            fp[static_cast<std::size_t>(p)]++;
            fn[static_cast<std::size_t>(t)]++;
        }
    }
    Prf out;
    for (int c = 0; c < n_classes; ++c) {
        auto i = static_cast<std::size_t>(c);
        double p = tp[i] + fp[i] > 0 ? static_cast<double>(tp[i]) / static_cast<double>(tp[i] + fp[i]) : 0.0;
        double r = tp[i] + fn[i] > 0 ? static_cast<double>(tp[i]) / static_cast<double>(tp[i] + fn[i]) : 0.0;
        double f = p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
        out.precision += p;
        out.recall += r;
        out.f1 += f;
    }
    out.precision /= n_classes;
    out.recall /= n_classes;
    out.f1 /= n_classes;
    return out;
}

std::map<std::string, double> per_sni_accuracy(std::span<const int> pred, std::span<const int> truth,
                                               std::span<const std::string> classes) {
    std::vector<std::size_t> support(classes.size(), 0);
    std::vector<std::size_t> correct(classes.size(), 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        auto t = static_cast<std::size_t>(truth[i]);
        support[t]++;
        if (pred[i] == truth[i]) correct[t]++;
    }
    std::map<std::string, double> out;
    for (std::size_t c = 0; c < classes.size(); ++c)
        if (support[c] > 0)
            out[classes[c]] = static_cast<double>(correct[c]) / static_cast<double>(support[c]);
    return out;
}

}  // namespace sniforge::eval
