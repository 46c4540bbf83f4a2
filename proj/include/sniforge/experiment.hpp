#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sniforge/dataset.hpp"
#include "sniforge/ensemble.hpp"
#include "sniforge/forest.hpp"
#include "sniforge/nn.hpp"
#include "sniforge/pcap.hpp"

namespace sniforge::eval {

using json = nlohmann::json;

// Layer widths for the neural models; the defaults are the full-size
// architecture, tests and small machines can shrink them.
struct ArchConfig {
    int conv1 = 200;
    int conv2 = 400;
    int gru = 200;
    int dense = 200;
    int baseline_hidden = 100;
    double dropout_rate = 0.5;
};

// Base classifier ids: rf, cnn-pkt, cnn-pay, cnn-iat, rnn-pkt.
// Derived ids: dl-ensemble (softmax average of the three CNN-RNNs),
// rf-dl (weighted argmax over rf + the three CNN-RNNs),
// avg:<id>+<id>... (equal-weight softmax average of base ids).
struct ExperimentConfig {
    std::vector<std::size_t> thresholds;
    int k = 10;
    std::uint64_t seed = 0;
    std::vector<std::string> classifiers = {"rf", "cnn-pkt", "cnn-pay", "cnn-iat", "dl-ensemble", "rf-dl"};
    std::array<double, 4> rf_dl_weights = kRfDlWeights;
    bool direction = false;     // append the direction channel to every sequence model
    bool rf_log_proba = false;  // feed log-probabilities into rf-dl
    ArchConfig arch;
    nn::TrainConfig train;  // seed field ignored; per-model seeds derive from `seed`
    int n_trees = 100;
    double early_stop_fraction = 0.1;
    int jobs = 1;
    bool timing = false;
};

struct FoldMetrics {
    int fold = 0;
    double accuracy = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

struct ClassifierResult {
    std::string name;
    std::vector<FoldMetrics> folds;
    // pooled over every test fold (each sample predicted exactly once)
    double accuracy = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::map<std::string, double> per_sni;
};

struct ThresholdResult {
    std::size_t min_connections = 0;
    bool skipped = false;
    std::string skip_reason;
    std::size_t n_classes = 0;
    std::size_t n_samples = 0;
    std::vector<ClassifierResult> classifiers;
};

struct EvalReport {
    json config;
    std::vector<ThresholdResult> thresholds;
    double wall_seconds = -1;  // < 0 when timing is disabled

    const ClassifierResult* find(std::size_t threshold, const std::string& classifier) const;
};

json experiment_config_json(const ExperimentConfig& cfg);

// Full sweep: per threshold, min-connections filter -> stratified k-fold CV
// -> train the needed base classifiers per fold -> score every requested
// classifier on the test folds. A threshold that leaves no usable dataset is
// reported and skipped.
EvalReport run_experiment(const data::LabeledDataset& stats, const data::LabeledDataset& seqs,
                          const ExperimentConfig& cfg);
EvalReport run_experiment(std::span<const pcap::Flow> flows, const ExperimentConfig& cfg);

json report_json(const EvalReport& report);
EvalReport report_from_json(const json& j);

// plot data: metrics.csv (min_connections,classifier,metric,value) plus one
// sni_accuracy_<threshold>.csv (sni,classifier,accuracy) per threshold
std::string plot_metrics_csv(const EvalReport& report);
std::map<std::string, std::string> plot_sni_csvs(const EvalReport& report);
void write_plot_csvs(const std::string& dir, const EvalReport& report);

}  // namespace sniforge::eval
