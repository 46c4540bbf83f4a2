#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sniforge/common.hpp"
#include "sniforge/dataset.hpp"

namespace sniforge::forest {

// feature < 0 marks a leaf; leaves carry the class histogram (counts of the
// training samples that reached them).
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> histogram;

    bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct RandomForest {
    std::vector<DecisionTree> trees;
    int n_classes = 0;
    int n_features = 0;
    int max_features = 0;
    std::uint64_t seed = 0;
};

struct ForestConfig {
    int n_trees = 100;
    std::uint64_t seed = 0;
    bool bootstrap = true;   // test hook: false trains every tree on the full sample
    int max_features = 0;    // 0 -> floor(sqrt(n_features))
    int jobs = 1;
};

// CART growth with Gini impurity: at each node, max_features candidate
// features sampled without replacement; thresholds at midpoints of
// consecutive sorted distinct values; ties broken by lowest feature index,
// then lowest threshold. Split scores are compared exactly (integer
// cross-multiplication), so tie-breaking is deterministic. No depth limit;
// recursion stops at pure nodes or when no candidate feature admits a
// threshold.
DecisionTree train_tree(const std::vector<std::vector<double>>& X, const std::vector<int>& y, int n_classes,
                        std::span<const std::size_t> indices, int max_features, Rng& rng);

RandomForest train_forest(const std::vector<std::vector<double>>& X, const std::vector<int>& y, int n_classes,
                          const ForestConfig& config);
RandomForest train_forest(const data::LabeledDataset& ds, const ForestConfig& config);

std::vector<double> predict_proba(const DecisionTree& tree, std::span<const double> x, int n_classes);
std::vector<double> predict_proba(const RandomForest& forest, std::span<const double> x);
std::vector<std::vector<double>> predict_proba(const RandomForest& forest,
                                               const std::vector<std::vector<double>>& X);
std::vector<std::vector<double>> predict_log_proba(const RandomForest& forest,
                                                   const std::vector<std::vector<double>>& X);

std::string forest_json(const RandomForest& forest);
RandomForest forest_from_json(const std::string& text);
void save_forest(const std::string& path, const RandomForest& forest);
RandomForest load_forest(const std::string& path);

}  // namespace sniforge::forest
