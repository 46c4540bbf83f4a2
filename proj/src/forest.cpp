#include "sniforge/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace sniforge::forest {

namespace {

// Split quality is q = ssL/nL + ssR/nR (ss = sum of squared class counts);
// maximizing q minimizes weighted Gini impurity. Kept as an exact rational so
// ties resolve by the documented order, not by rounding.
struct SplitScore {
    std::uint64_t num = 0;  // ssL*nR + ssR*nL
    std::uint64_t den = 1;  // nL*nR

    bool better_than(const SplitScore& other) const {
        return static_cast<unsigned __int128>(num) * other.den >
               static_cast<unsigned __int128>(other.num) * den;
    }
};

struct BestSplit {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    SplitScore score;
};

struct NodeBuilder {
    const std::vector<std::vector<double>>& X;
    const std::vector<int>& y;
    int n_classes;
    int max_features;
    Rng& rng;
    std::vector<TreeNode>& nodes;

    std::vector<int> candidate_features() {
        int d = static_cast<int>(X[0].size());
        std::vector<int> all(static_cast<std::size_t>(d));
        std::iota(all.begin(), all.end(), 0);
        if (max_features >= d) return all;
        // partial Fisher-Yates, then ascending for deterministic tie-breaking
        for (int i = 0; i < max_features; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(d - i)));
            std::swap(all[static_cast<std::size_t>(i)], all[j]);
        }
        all.resize(static_cast<std::size_t>(max_features));
        std::sort(all.begin(), all.end());
        return all;
    }

    BestSplit find_split(std::span<const std::size_t> idx, const std::vector<std::int64_t>& counts) {
        std::size_t n = idx.size();
        std::uint64_t ss_parent = 0;
        for (std::int64_t c : counts) ss_parent += static_cast<std::uint64_t>(c * c);

        BestSplit best;
        std::vector<std::pair<double, int>> vals(n);
        std::vector<std::int64_t> left(static_cast<std::size_t>(n_classes));
        std::vector<std::int64_t> right(static_cast<std::size_t>(n_classes));

        for (int f : candidate_features()) {
            for (std::size_t i = 0; i < n; ++i)
                vals[i] = {X[idx[i]][static_cast<std::size_t>(f)], y[idx[i]]};
            std::sort(vals.begin(), vals.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            if (vals.front().first == vals.back().first) continue;

            std::fill(left.begin(), left.end(), 0);
            for (std::size_t c = 0; c < right.size(); ++c) right[c] = counts[c];
            std::uint64_t ssL = 0;
            std::uint64_t ssR = ss_parent;

            for (std::size_t i = 0; i + 1 < n; ++i) {
                int cls = vals[i].second;
                ssL += static_cast<std::uint64_t>(2 * left[static_cast<std::size_t>(cls)] + 1);
                ssR -= static_cast<std::uint64_t>(2 * right[static_cast<std::size_t>(cls)] - 1);
                left[static_cast<std::size_t>(cls)]++;
                right[static_cast<std::size_t>(cls)]--;
                if (vals[i].first == vals[i + 1].first) continue;

                std::uint64_t nL = i + 1;
                std::uint64_t nR = n - nL;
                SplitScore score{ssL * nR + ssR * nL, nL * nR};
                if (!best.found || score.better_than(best.score)) {
                    best.found = true;
                    best.feature = f;
                    best.threshold = vals[i].first + (vals[i + 1].first - vals[i].first) / 2.0;
                    best.score = score;
                }
            }
        }

        // weighted Gini of a refinement never exceeds the parent's, so any
        // valid threshold is acceptable; zero-decrease splits (XOR-style
        // plateaus) must still recurse to reach pure leaves
        return best;
    }

    int build(std::vector<std::size_t>& idx) {
        std::vector<std::int64_t> counts(static_cast<std::size_t>(n_classes), 0);
        for (std::size_t i : idx) counts[static_cast<std::size_t>(y[i])]++;
        bool pure = std::count_if(counts.begin(), counts.end(), [](std::int64_t c) { return c > 0; }) <= 1;

        BestSplit split;
        if (!pure && idx.size() >= 2) split = find_split(idx, counts);

        int node_id = static_cast<int>(nodes.size());
        nodes.emplace_back();
        if (!split.found) {
            nodes[static_cast<std::size_t>(node_id)].histogram.assign(counts.begin(), counts.end());
            return node_id;
        }

        std::vector<std::size_t> left_idx, right_idx;
        for (std::size_t i : idx) {
            if (X[i][static_cast<std::size_t>(split.feature)] <= split.threshold)
                left_idx.push_back(i);
            else
                right_idx.push_back(i);
        }
        idx.clear();
        idx.shrink_to_fit();

        int left = build(left_idx);
        int right = build(right_idx);
        TreeNode& node = nodes[static_cast<std::size_t>(node_id)];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        return node_id;
    }
};

}  // namespace

DecisionTree train_tree(const std::vector<std::vector<double>>& X, const std::vector<int>& y, int n_classes,
                        std::span<const std::size_t> indices, int max_features, Rng& rng) {
    if (X.empty() || indices.empty()) throw std::invalid_argument("train_tree: no samples");
    if (max_features < 1 || max_features > static_cast<int>(X[0].size()))
        throw std::invalid_argument("train_tree: max_features out of range");
    DecisionTree tree;
    NodeBuilder builder{X, y, n_classes, max_features, rng, tree.nodes};
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    builder.build(idx);
    return tree;
}

RandomForest train_forest(const std::vector<std::vector<double>>& X, const std::vector<int>& y, int n_classes,
                          const ForestConfig& config) {
    if (X.empty()) throw std::invalid_argument("train_forest: empty dataset");
    if (config.n_trees < 1) throw std::invalid_argument("train_forest: n_trees must be >= 1");
    int d = static_cast<int>(X[0].size());
    int max_features = config.max_features > 0 ? config.max_features
                                               : std::max(1, static_cast<int>(std::sqrt(static_cast<double>(d))));

    RandomForest forest;
    forest.n_classes = n_classes;
    forest.n_features = d;
    forest.max_features = max_features;
    forest.seed = config.seed;
    forest.trees.resize(static_cast<std::size_t>(config.n_trees));

    parallel_for(static_cast<std::size_t>(config.n_trees), config.jobs, [&](std::size_t t) {
        Rng rng(derive_seed(config.seed, {0x74726565ULL /* "tree" */, t}));
        std::vector<std::size_t> indices(X.size());
        if (config.bootstrap) {
            for (auto& i : indices) i = static_cast<std::size_t>(rng.below(X.size()));
        } else {
            std::iota(indices.begin(), indices.end(), std::size_t{0});
        }
        forest.trees[t] = train_tree(X, y, n_classes, indices, max_features, rng);
    });
    return forest;
}

RandomForest train_forest(const data::LabeledDataset& ds, const ForestConfig& config) {
    return train_forest(ds.rows, ds.labels, static_cast<int>(ds.n_classes()), config);
}

std::vector<double> predict_proba(const DecisionTree& tree, std::span<const double> x, int n_classes) {
    const TreeNode* node = &tree.nodes[0];
    while (!node->is_leaf()) {
        node = x[static_cast<std::size_t>(node->feature)] <= node->threshold
                   ? &tree.nodes[static_cast<std::size_t>(node->left)]
                   : &tree.nodes[static_cast<std::size_t>(node->right)];
    }
    double total = std::accumulate(node->histogram.begin(), node->histogram.end(), 0.0);
    std::vector<double> proba(static_cast<std::size_t>(n_classes), 0.0);
    for (std::size_t c = 0; c < node->histogram.size(); ++c) proba[c] = node->histogram[c] / total;
    return proba;
}

std::vector<double> predict_proba(const RandomForest& forest, std::span<const double> x) {
    if (x.size() != static_cast<std::size_t>(forest.n_features))
        throw std::invalid_argument("predict_proba: expected " + std::to_string(forest.n_features) +
                                    " features, got " + std::to_string(x.size()));
    std::vector<double> out(static_cast<std::size_t>(forest.n_classes), 0.0);
    for (const DecisionTree& tree : forest.trees) {
        std::vector<double> p = predict_proba(tree, x, forest.n_classes);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += p[c];
    }
    for (double& v : out) v /= static_cast<double>(forest.trees.size());
    return out;
}

std::vector<std::vector<double>> predict_proba(const RandomForest& forest,
                                               const std::vector<std::vector<double>>& X) {
    std::vector<std::vector<double>> out;
    out.reserve(X.size());
    for (const auto& x : X) out.push_back(predict_proba(forest, x));
    return out;
}

std::vector<std::vector<double>> predict_log_proba(const RandomForest& forest,
                                                   const std::vector<std::vector<double>>& X) {
    std::vector<std::vector<double>> out = predict_proba(forest, X);
    for (auto& row : out)
        for (double& v : row) v = std::log(v);
    return out;
}

std::string forest_json(const RandomForest& forest) {
    nlohmann::json j;
    j["version"] = 1;
    j["n_classes"] = forest.n_classes;
    j["n_features"] = forest.n_features;
    j["max_features"] = forest.max_features;
    j["seed"] = forest.seed;
    nlohmann::json trees = nlohmann::json::array();
    for (const DecisionTree& tree : forest.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const TreeNode& n : tree.nodes) {
            if (n.is_leaf())
                nodes.push_back({{"h", n.histogram}});
            else
                nodes.push_back({{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}});
        }
        trees.push_back({{"nodes", std::move(nodes)}});
    }
    j["trees"] = std::move(trees);
    return j.dump();
}

RandomForest forest_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("version").get<int>() != 1) throw ParseError("forest artifact: unsupported version");
    RandomForest forest;
    forest.n_classes = j.at("n_classes").get<int>();
    forest.n_features = j.at("n_features").get<int>();
    forest.max_features = j.at("max_features").get<int>();
    forest.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& jt : j.at("trees")) {
        DecisionTree tree;
        for (const auto& jn : jt.at("nodes")) {
            TreeNode n;
            if (jn.contains("h")) {
                n.histogram = jn.at("h").get<std::vector<double>>();
            } else {
                n.feature = jn.at("f").get<int>();
                n.threshold = jn.at("t").get<double>();
                n.left = jn.at("l").get<int>();
                n.right = jn.at("r").get<int>();
            }
            tree.nodes.push_back(std::move(n));
        }
        forest.trees.push_back(std::move(tree));
    }
    return forest;
}

void save_forest(const std::string& path, const RandomForest& forest) {
    write_file_atomic(path, forest_json(forest));
}

RandomForest load_forest(const std::string& path) {
    return forest_from_json(read_file(path));
}

}  // namespace sniforge::forest
