#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sniforge/features.hpp"
#include "sniforge/pcap.hpp"

namespace sniforge::data {

struct LabeledDataset {
    std::vector<std::string> feature_names;
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;           // class index per row
    std::vector<std::string> classes;  // class index -> label string (bijection)
    std::vector<std::string> provenance;

    std::size_t size() const { return rows.size(); }
    std::size_t n_classes() const { return classes.size(); }
    std::size_t n_features() const { return feature_names.size(); }
};

// 42 statistical features per flow, labels are cleaned SNIs. Class indices
// assigned by first appearance in flow order.
LabeledDataset stat_dataset(std::span<const pcap::Flow> flows);

// Flattened sequence channels: pkt_0..pkt_{n-1}, pay_*, iat_* and, when
// direction is set, dir_*.
LabeledDataset sequence_dataset(std::span<const pcap::Flow> flows, std::size_t n = feat::kDefaultSeqLen,
                                bool direction = false);

std::vector<std::size_t> class_counts(const LabeledDataset& ds);

// Removes classes with fewer than threshold samples and re-compacts class
// indices, preserving sample order. Throws when nothing survives.
LabeledDataset apply_min_connections(const LabeledDataset& ds, std::size_t threshold);

struct FoldPlan {
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<int> assignments;  // sample index -> fold id

    std::vector<std::size_t> test_indices(int fold) const;
    std::vector<std::size_t> train_indices(int fold) const;
};

// Stratified: within each class, samples are shuffled with the seeded RNG and
// dealt round-robin, so per-class fold sizes differ by at most one. Throws
// when a class has fewer than k samples, naming it.
FoldPlan kfold_split(const LabeledDataset& ds, int k, std::uint64_t seed);

std::string fold_plan_json(const FoldPlan& plan);
FoldPlan fold_plan_from_json(const std::string& text);

// CSV with feature columns then a final `label` column holding the class
// string. Lines starting with '#' are metadata.
std::string dataset_csv_string(const LabeledDataset& ds, std::string_view meta = {});
void write_dataset_csv(const std::string& path, const LabeledDataset& ds, std::string_view meta = {});
LabeledDataset read_dataset_csv_string(std::string_view content);
LabeledDataset read_dataset_csv(const std::string& path);

}  // namespace sniforge::data
