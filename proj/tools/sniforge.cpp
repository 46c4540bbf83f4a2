#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sniforge/common.hpp"
#include "sniforge/dataset.hpp"
#include "sniforge/experiment.hpp"
#include "sniforge/forest.hpp"
#include "sniforge/nn.hpp"
#include "sniforge/pcap.hpp"
#include "sniforge/synth.hpp"

namespace {

using nlohmann::json;
using namespace sniforge;

constexpr const char* kVersion = "0.1.0";

void log_line(const char* level, json fields) {
    fields["level"] = level;
    std::cerr << fields.dump() << "\n";
}

std::string meta_line(const char* cmd, json extra) {
    extra["tool"] = "sniforge";
    extra["version"] = kVersion;
    extra["cmd"] = cmd;
    return extra.dump();
}

std::vector<pcap::Cidr> parse_local_nets(const std::vector<std::string>& specs) {
    if (specs.empty()) return pcap::rfc1918_nets();
    std::vector<pcap::Cidr> nets;
    for (const auto& s : specs) nets.push_back(pcap::parse_cidr(s));
    return nets;
}

struct CommonOpts {
    std::uint64_t seed = 0;
    int jobs = 1;
};

// ------------------------------------------------------------------ ingest

int cmd_ingest(const std::vector<std::string>& pcap_paths, const std::vector<std::string>& local_nets,
               const std::string& out_path, const CommonOpts& opts) {
    auto nets = parse_local_nets(local_nets);

    std::vector<pcap::CaptureResult> captures(pcap_paths.size());
    parallel_for(pcap_paths.size(), opts.jobs,
                 [&](std::size_t i) { captures[i] = pcap::parse_capture(read_file_bytes(pcap_paths[i])); });

    std::vector<pcap::RawPacket> packets;
    pcap::CaptureResult totals;
    for (auto& c : captures) {
        std::move(c.packets.begin(), c.packets.end(), std::back_inserter(packets));
        totals.truncated_records += c.truncated_records;
        totals.skipped_non_ip += c.skipped_non_ip;
        totals.skipped_ipv6 += c.skipped_ipv6;
        totals.skipped_non_tcp += c.skipped_non_tcp;
    }
    pcap::AssemblyResult assembled = pcap::assemble_flows(packets, nets);

    json meta;
    meta["seed"] = opts.seed;
    meta["local_nets"] = local_nets.empty() ? std::vector<std::string>{"rfc1918"} : local_nets;
    pcap::write_flow_file(out_path, assembled.flows, meta_line("ingest", meta));

    json summary;
    summary["files"] = pcap_paths.size();
    summary["total_tcp_packets"] = assembled.total_tcp_packets;
    summary["flows_kept"] = assembled.flows.size();
    summary["flows_dropped_unknown_sni"] =
        assembled.dropped_flows_no_sni + assembled.dropped_flows_unlabelable;
    summary["packets_dropped_unknown_sni"] =
        assembled.dropped_packets_no_sni + assembled.dropped_packets_unlabelable;
    summary["excluded_packets"] = assembled.excluded_packets;
    summary["skipped_non_ip"] = totals.skipped_non_ip;
    summary["skipped_ipv6"] = totals.skipped_ipv6;
    summary["skipped_non_tcp"] = totals.skipped_non_tcp;
    summary["truncated_records"] = totals.truncated_records;
    summary["out"] = out_path;
    std::cout << summary.dump() << "\n";
    return 0;
}

// ------------------------------------------------------------------ featurize

int cmd_featurize(const std::string& flows_path, const std::string& stats_path,
                  const std::string& seq_path, std::size_t n, bool direction, const CommonOpts& opts) {
    std::vector<pcap::Flow> flows = pcap::read_flow_file(flows_path);
    json meta;
    meta["seed"] = opts.seed;
    meta["n"] = n;
    meta["direction"] = direction;

    if (!stats_path.empty()) {
        data::LabeledDataset stats = data::stat_dataset(flows);
        data::write_dataset_csv(stats_path, stats, meta_line("featurize", meta));
    }
    if (!seq_path.empty()) {
        data::LabeledDataset seqs = data::sequence_dataset(flows, n, direction);
        data::write_dataset_csv(seq_path, seqs, meta_line("featurize", meta));
    }

    json summary;
    summary["flows"] = flows.size();
    if (!stats_path.empty()) summary["stats"] = stats_path;
    if (!seq_path.empty()) summary["sequences"] = seq_path;
    std::cout << summary.dump() << "\n";
    return 0;
}

// ------------------------------------------------------------------ synth

int cmd_synth(const std::string& profiles_path, int classes, std::size_t flows_per_class,
              const std::string& pcap_out, const std::string& flows_out, const std::string& profiles_out,
              const CommonOpts& opts) {
    std::vector<synth::ClassProfile> profiles;
    if (!profiles_path.empty())
        profiles = synth::profiles_from_json(json::parse(read_file(profiles_path)));
    else
        profiles = synth::default_profiles(classes);
    for (std::size_t i = 0; i < profiles.size(); ++i)
        profiles[i].seed = derive_seed(opts.seed, {0x70726f66ULL /* "prof" */, i, profiles[i].seed});

    std::vector<pcap::Flow> flows = synth::generate_flows(profiles, flows_per_class);
    std::size_t packets = 0;
    for (const auto& f : flows) packets += f.packets.size();

    json meta;
    meta["seed"] = opts.seed;
    meta["flows_per_class"] = flows_per_class;
    meta["classes"] = profiles.size();

    if (!pcap_out.empty()) write_file_atomic(pcap_out, synth::emit_pcap(flows));
    if (!flows_out.empty()) pcap::write_flow_file(flows_out, flows, meta_line("synth", meta));
    if (!profiles_out.empty()) write_file_atomic(profiles_out, synth::profiles_to_json(profiles).dump(2) + "\n");

    json summary;
    summary["classes"] = profiles.size();
    summary["flows"] = flows.size();
    summary["packets"] = packets;
    if (!pcap_out.empty()) summary["pcap"] = pcap_out;
    if (!flows_out.empty()) summary["flows_out"] = flows_out;
    std::cout << summary.dump() << "\n";
    return 0;
}

// ------------------------------------------------------------------ train

int cmd_train(const std::string& stats_path, const std::string& seq_path, const std::string& classifier,
              const std::string& out_path, int trees, const eval::ArchConfig& arch, nn::TrainConfig train,
              bool direction, const CommonOpts& opts) {
    json summary;
    summary["classifier"] = classifier;
    if (classifier == "rf") {
        if (stats_path.empty()) throw std::runtime_error("train rf: --stats is required");
        data::LabeledDataset ds = data::read_dataset_csv(stats_path);
        forest::ForestConfig fc;
        fc.n_trees = trees;
        fc.seed = opts.seed;
        fc.jobs = opts.jobs;
        forest::RandomForest rf = forest::train_forest(ds, fc);
        forest::save_forest(out_path, rf);
        summary["samples"] = ds.size();
        summary["classes"] = ds.n_classes();
        summary["trees"] = rf.trees.size();
    } else {
        if (seq_path.empty()) throw std::runtime_error("train " + classifier + ": --sequences is required");
        data::LabeledDataset seqs = data::read_dataset_csv(seq_path);
        std::size_t n = 0;
        for (const auto& name : seqs.feature_names)
            if (name.starts_with("pkt_")) n++;
        std::string channel = classifier == "rnn-pkt" ? "pkt" : classifier.substr(4);
        std::vector<std::size_t> offsets = {channel == "pkt" ? 0 : channel == "pay" ? n : 2 * n};
        if (direction) offsets.push_back(3 * n);

        // stratified early-stop carve, same policy as evaluation
        std::vector<std::vector<std::size_t>> by_class(seqs.n_classes());
        for (std::size_t i = 0; i < seqs.size(); ++i)
            by_class[static_cast<std::size_t>(seqs.labels[i])].push_back(i);
        Rng rng(derive_seed(opts.seed, {0x6573706cULL /* "espl" */}));
        std::vector<std::size_t> fit_idx, es_idx;
        for (auto& members : by_class) {
            if (members.empty()) continue;
            rng.shuffle(members);
            std::size_t want = std::min(std::max<std::size_t>(members.size() / 10, 1), members.size() - 1);
            if (members.size() == 1) want = 0;
            for (std::size_t j = 0; j < members.size(); ++j)
                (j < want ? es_idx : fit_idx).push_back(members[j]);
        }
        std::sort(fit_idx.begin(), fit_idx.end());
        std::sort(es_idx.begin(), es_idx.end());

        auto make_tensor = [&](std::span<const std::size_t> rows) {
            nn::Tensor x({rows.size(), n, offsets.size()});
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (std::size_t t = 0; t < n; ++t)
                    for (std::size_t c = 0; c < offsets.size(); ++c)
                        x.at(i, t, c) = seqs.rows[rows[i]][offsets[c] + t];
            return x;
        };
        std::vector<int> y_fit, y_es;
        for (std::size_t i : fit_idx) y_fit.push_back(seqs.labels[i]);
        for (std::size_t i : es_idx) y_es.push_back(seqs.labels[i]);

        int n_classes = static_cast<int>(seqs.n_classes());
        json spec = classifier == "rnn-pkt"
                        ? nn::build_baseline_rnn(n_classes, arch.baseline_hidden)
                        : nn::build_cnn_rnn(n_classes, classifier == "cnn-iat", arch.conv1, arch.conv2,
                                            arch.gru, arch.dense, arch.dropout_rate);
        nn::Network net = nn::build_network(spec, n, offsets.size());
        net.init(derive_seed(opts.seed, {0x696e6974ULL}));
        train.seed = derive_seed(opts.seed, {0x666974ULL /* "fit" */});
        nn::History history = nn::fit(net, make_tensor(fit_idx), y_fit, make_tensor(es_idx), y_es, train);
        nn::save_network(out_path, net);
        summary["samples"] = seqs.size();
        summary["classes"] = seqs.n_classes();
        summary["epochs"] = history.epochs.size();
        summary["best_epoch"] = history.best_epoch;
    }
    summary["out"] = out_path;
    std::cout << summary.dump() << "\n";
    return 0;
}

// ------------------------------------------------------------------ evaluate

int cmd_evaluate(const std::string& stats_path, const std::string& seq_path, eval::ExperimentConfig cfg,
                 const std::string& report_path, const std::string& plot_dir) {
    data::LabeledDataset stats = data::read_dataset_csv(stats_path);
    data::LabeledDataset seqs = data::read_dataset_csv(seq_path);
    log_line("info", {{"msg", "evaluate"},
                      {"samples", stats.size()},
                      {"classes", stats.n_classes()},
                      {"thresholds", cfg.thresholds.size()}});
    eval::EvalReport report = eval::run_experiment(stats, seqs, cfg);

    if (!report_path.empty()) write_file_atomic(report_path, eval::report_json(report).dump(2) + "\n");
    if (!plot_dir.empty()) eval::write_plot_csvs(plot_dir, report);

    json summary;
    summary["report"] = report_path;
    json rows = json::array();
    for (const auto& tr : report.thresholds) {
        if (tr.skipped) {
            rows.push_back({{"min_connections", tr.min_connections}, {"skipped", tr.skip_reason}});
            continue;
        }
        for (const auto& cr : tr.classifiers)
            rows.push_back({{"min_connections", tr.min_connections},
                            {"classifier", cr.name},
                            {"accuracy", cr.accuracy}});
    }
    summary["results"] = std::move(rows);
    std::cout << summary.dump() << "\n";
    return 0;
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
    std::vector<std::size_t> out;
    for (const auto& s : split(csv, ','))
        if (!s.empty()) out.push_back(static_cast<std::size_t>(parse_int(s)));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"encrypted-traffic SNI classification toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    CommonOpts opts;
    app.add_option("--seed", opts.seed, "RNG seed")->envname("SNIFORGE_SEED");
    app.add_option("--jobs", opts.jobs, "worker threads (1 = bitwise deterministic)");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "parse pcaps into a labeled flow file");
    std::vector<std::string> pcap_paths, local_nets;
    std::string flow_out;
    ingest->add_option("pcaps", pcap_paths, "pcap files")->required()->check(CLI::ExistingFile);
    ingest->add_option("--local-net", local_nets, "local CIDR prefix (default: RFC 1918 ranges)");
    ingest->add_option("--out", flow_out, "flow file to write")->required();

    // featurize
    auto* featurize = app.add_subcommand("featurize", "build feature datasets from a flow file");
    std::string flows_in, stats_out, seq_out;
    std::size_t seq_n = feat::kDefaultSeqLen;
    bool direction = false;
    featurize->add_option("--flows", flows_in, "flow file")->required()->check(CLI::ExistingFile);
    featurize->add_option("--stats", stats_out, "statistical dataset CSV to write");
    featurize->add_option("--sequences", seq_out, "sequence dataset CSV to write");
    featurize->add_option("--n", seq_n, "sequence length");
    featurize->add_flag("--direction", direction, "include the direction channel");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic labeled corpus");
    std::string profiles_in, pcap_out, synth_flows_out, profiles_out;
    int classes = 5;
    std::size_t flows_per_class = 200;
    synth_cmd->add_option("--profiles", profiles_in, "profile JSON file")->check(CLI::ExistingFile);
    synth_cmd->add_option("--classes", classes, "class count for the default profiles");
    synth_cmd->add_option("--flows-per-class", flows_per_class, "flows per class");
    synth_cmd->add_option("--pcap", pcap_out, "pcap file to write");
    synth_cmd->add_option("--flows", synth_flows_out, "flow file to write");
    synth_cmd->add_option("--profiles-out", profiles_out, "dump the effective profiles");

    // train
    auto* train_cmd = app.add_subcommand("train", "train one classifier on a full dataset");
    std::string train_stats, train_seqs, train_classifier = "rf", model_out;
    int n_trees = 100;
    eval::ArchConfig arch;
    nn::TrainConfig train_cfg;
    bool train_direction = false;
    train_cmd->add_option("--stats", train_stats, "statistical dataset CSV")->check(CLI::ExistingFile);
    train_cmd->add_option("--sequences", train_seqs, "sequence dataset CSV")->check(CLI::ExistingFile);
    train_cmd->add_option("--classifier", train_classifier, "rf|cnn-pkt|cnn-pay|cnn-iat|rnn-pkt");
    train_cmd->add_option("--out", model_out, "model artifact path")->required();
    train_cmd->add_option("--trees", n_trees, "forest size");
    train_cmd->add_option("--max-epochs", train_cfg.max_epochs, "epoch cap");
    train_cmd->add_option("--patience", train_cfg.patience, "early-stopping patience");
    train_cmd->add_option("--batch", train_cfg.batch_size, "batch size");
    train_cmd->add_option("--conv1", arch.conv1, "first conv filters");
    train_cmd->add_option("--conv2", arch.conv2, "second conv filters");
    train_cmd->add_option("--gru", arch.gru, "GRU hidden units");
    train_cmd->add_option("--dense", arch.dense, "dense hidden units");
    train_cmd->add_flag("--direction", train_direction, "append the direction channel");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "k-fold CV sweep over min-connections thresholds");
    std::string eval_stats, eval_seqs, thresholds_csv = "100", classifiers_csv, weights_csv;
    std::string report_out = "report.json", plot_dir;
    eval::ExperimentConfig ecfg;
    evaluate->add_option("--stats", eval_stats, "statistical dataset CSV")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--sequences", eval_seqs, "sequence dataset CSV")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--thresholds", thresholds_csv, "comma-separated min-connections thresholds");
    evaluate->add_option("--k", ecfg.k, "fold count");
    evaluate->add_option("--classifiers", classifiers_csv,
                         "comma-separated ids (rf, cnn-pkt, cnn-pay, cnn-iat, rnn-pkt, dl-ensemble, rf-dl, avg:a+b)");
    evaluate->add_option("--weights", weights_csv, "four rf-dl weights, comma-separated");
    evaluate->add_flag("--direction", ecfg.direction, "use the direction channel variants");
    evaluate->add_flag("--rf-log-proba", ecfg.rf_log_proba, "combine rf log-probabilities in rf-dl");
    evaluate->add_option("--trees", ecfg.n_trees, "forest size");
    evaluate->add_option("--max-epochs", ecfg.train.max_epochs, "epoch cap");
    evaluate->add_option("--patience", ecfg.train.patience, "early-stopping patience");
    evaluate->add_option("--batch", ecfg.train.batch_size, "batch size");
    evaluate->add_option("--conv1", ecfg.arch.conv1, "first conv filters");
    evaluate->add_option("--conv2", ecfg.arch.conv2, "second conv filters");
    evaluate->add_option("--gru", ecfg.arch.gru, "GRU hidden units");
    evaluate->add_option("--dense", ecfg.arch.dense, "dense hidden units");
    evaluate->add_option("--report", report_out, "report JSON path");
    evaluate->add_option("--plot-dir", plot_dir, "directory for plot CSVs");
    bool timing = false;
    evaluate->add_flag("--timing", timing, "record wall time in the report (breaks byte-reproducibility)");

    // report
    auto* report_cmd = app.add_subcommand("report", "regenerate plot CSVs from a report");
    std::string report_in, report_plot_dir;
    report_cmd->add_option("--report", report_in, "report JSON")->required()->check(CLI::ExistingFile);
    report_cmd->add_option("--plot-dir", report_plot_dir, "directory for plot CSVs")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) return cmd_ingest(pcap_paths, local_nets, flow_out, opts);
        if (featurize->parsed()) return cmd_featurize(flows_in, stats_out, seq_out, seq_n, direction, opts);
        if (synth_cmd->parsed())
            return cmd_synth(profiles_in, classes, flows_per_class, pcap_out, synth_flows_out, profiles_out,
                             opts);
        if (train_cmd->parsed())
            return cmd_train(train_stats, train_seqs, train_classifier, model_out, n_trees, arch, train_cfg,
                             train_direction, opts);
        if (evaluate->parsed()) {
            ecfg.seed = opts.seed;
            ecfg.jobs = opts.jobs;
            ecfg.timing = timing;
            ecfg.thresholds = parse_size_list(thresholds_csv);
            if (!classifiers_csv.empty()) {
                ecfg.classifiers.clear();
                for (const auto& s : split(classifiers_csv, ','))
                    if (!s.empty()) ecfg.classifiers.push_back(s);
            }
            if (!weights_csv.empty()) {
                auto parts = split(weights_csv, ',');
                if (parts.size() != 4) throw std::runtime_error("--weights needs exactly 4 values");
                for (std::size_t i = 0; i < 4; ++i) ecfg.rf_dl_weights[i] = parse_double(parts[i]);
            }
            return cmd_evaluate(eval_stats, eval_seqs, ecfg, report_out, plot_dir);
        }
        if (report_cmd->parsed()) {
            eval::EvalReport report = eval::report_from_json(json::parse(read_file(report_in)));
            eval::write_plot_csvs(report_plot_dir, report);
            std::cout << json{{"plot_dir", report_plot_dir}}.dump() << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        log_line("error", {{"msg", e.what()}});
        return 1;
    }
    return 0;
}
