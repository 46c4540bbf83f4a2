#include "sniforge/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <numeric>
#include <set>
#include <stdexcept>

#include "sniforge/common.hpp"

namespace sniforge::eval {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct SeqLayout {
    std::size_t n = 0;  // sequence length
    bool has_direction = false;
};

SeqLayout seq_layout(const data::LabeledDataset& seqs) {
    SeqLayout layout;
    for (const auto& name : seqs.feature_names) {
        if (name.starts_with("pkt_")) layout.n++;
        if (name.starts_with("dir_")) layout.has_direction = true;
    }
    std::size_t channels = layout.has_direction ? 4 : 3;
    if (layout.n == 0 || seqs.feature_names.size() != channels * layout.n)
        throw std::invalid_argument("sequence dataset: unexpected column layout");
    return layout;
}

// base sequence channel offsets within a row: pkt=0, pay=n, iat=2n, dir=3n
std::size_t channel_offset(const std::string& channel, std::size_t n) {
    if (channel == "pkt") return 0;
    if (channel == "pay") return n;
    if (channel == "iat") return 2 * n;
    if (channel == "dir") return 3 * n;
    throw std::invalid_argument("unknown sequence channel '" + channel + "'");
}

nn::Tensor sequence_tensor(const data::LabeledDataset& seqs, std::span<const std::size_t> rows,
                           const std::vector<std::string>& channels, std::size_t n) {
    nn::Tensor x({rows.size(), n, channels.size()});
    std::vector<std::size_t> offsets;
    for (const auto& ch : channels) offsets.push_back(channel_offset(ch, n));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::vector<double>& row = seqs.rows[rows[i]];
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t c = 0; c < channels.size(); ++c) x.at(i, t, c) = row[offsets[c] + t];
    }
    return x;
}

struct ClassifierPlan {
    std::set<std::string> base_models;  // models to train per fold
    bool needs_rf = false;
};

bool is_base_model(const std::string& id) {
    return id == "rf" || id == "cnn-pkt" || id == "cnn-pay" || id == "cnn-iat" || id == "rnn-pkt";
}

std::vector<std::string> avg_components(const std::string& id) {
    auto parts = split(id.substr(4), '+');
    if (parts.size() < 2) throw std::invalid_argument("classifier '" + id + "': avg needs >= 2 components");
    return {parts.begin(), parts.end()};
}

ClassifierPlan plan_classifiers(const std::vector<std::string>& ids) {
    ClassifierPlan plan;
    auto require = [&](const std::string& base) {
        if (!is_base_model(base)) throw std::invalid_argument("unknown base classifier '" + base + "'");
        plan.base_models.insert(base);
        if (base == "rf") plan.needs_rf = true;
    };
    for (const auto& id : ids) {
        if (is_base_model(id)) {
            require(id);
        } else if (id == "dl-ensemble") {
            require("cnn-pkt");
            require("cnn-pay");
            require("cnn-iat");
        } else if (id == "rf-dl") {
            require("rf");
            require("cnn-pkt");
            require("cnn-pay");
            require("cnn-iat");
        } else if (id.starts_with("avg:")) {
            for (const auto& c : avg_components(id)) require(c);
        } else {
            throw std::invalid_argument("unknown classifier '" + id + "'");
        }
    }
    return plan;
}

struct FoldOutput {
    std::vector<std::size_t> test_idx;
    std::vector<int> truth;
    std::map<std::string, ProbMatrix> probs;      // base model -> test-fold probabilities
    ProbMatrix rf_log;                            // only filled when rf_log_proba is on
};

// stratified carve of the early-stop split out of the training indices
void carve_early_stop(std::span<const std::size_t> train_idx, const std::vector<int>& labels,
                      std::size_t n_classes, double fraction, Rng& rng,
                      std::vector<std::size_t>& fit_idx, std::vector<std::size_t>& es_idx) {
    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i : train_idx) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    for (auto& members : by_class) {
        if (members.empty()) continue;
        rng.shuffle(members);
        std::size_t want = static_cast<std::size_t>(fraction * static_cast<double>(members.size()));
        want = std::min(std::max<std::size_t>(want, 1), members.size() - 1);
        if (members.size() == 1) want = 0;
        for (std::size_t j = 0; j < members.size(); ++j)
            (j < want ? es_idx : fit_idx).push_back(members[j]);
    }
    std::sort(fit_idx.begin(), fit_idx.end());
    std::sort(es_idx.begin(), es_idx.end());
}

json model_spec_for(const std::string& model, const ExperimentConfig& cfg, int n_classes) {
    if (model == "rnn-pkt") return nn::build_baseline_rnn(n_classes, cfg.arch.baseline_hidden);
    bool dropout = model == "cnn-iat";  // the inter-arrival model is the over-fitting prone one
    return nn::build_cnn_rnn(n_classes, dropout, cfg.arch.conv1, cfg.arch.conv2, cfg.arch.gru,
                             cfg.arch.dense, cfg.arch.dropout_rate);
}

std::vector<std::string> model_channels(const std::string& model, bool direction) {
    std::string channel = model == "rnn-pkt" ? "pkt" : model.substr(4);  // cnn-pkt -> pkt
    std::vector<std::string> channels = {channel};
    if (direction) channels.push_back("dir");
    return channels;
}

FoldOutput run_fold(const data::LabeledDataset& stats, const data::LabeledDataset& seqs,
                    const data::FoldPlan& plan, int fold, const ClassifierPlan& cplan,
                    const ExperimentConfig& cfg, std::size_t threshold, std::size_t n) {
    FoldOutput out;
    out.test_idx = plan.test_indices(fold);
    std::vector<std::size_t> train_idx = plan.train_indices(fold);
    for (std::size_t i : out.test_idx) out.truth.push_back(stats.labels[i]);

    int n_classes = static_cast<int>(stats.n_classes());
    std::uint64_t fold_tag = static_cast<std::uint64_t>(fold);

    if (cplan.needs_rf) {
        forest::ForestConfig fc;
        fc.n_trees = cfg.n_trees;
        fc.seed = derive_seed(cfg.seed, {threshold, fold_tag, fnv1a("rf")});
        fc.jobs = 1;  // folds already run in parallel
        std::vector<std::vector<double>> x_train;
        std::vector<int> y_train;
        for (std::size_t i : train_idx) {
            x_train.push_back(stats.rows[i]);
            y_train.push_back(stats.labels[i]);
        }
        forest::RandomForest rf = forest::train_forest(x_train, y_train, n_classes, fc);
        std::vector<std::vector<double>> x_test;
        for (std::size_t i : out.test_idx) x_test.push_back(stats.rows[i]);
        out.probs["rf"] = forest::predict_proba(rf, x_test);
        if (cfg.rf_log_proba) out.rf_log = forest::predict_log_proba(rf, x_test);
    }

    std::vector<std::string> neural_models;
    for (const auto& m : cplan.base_models)
        if (m != "rf") neural_models.push_back(m);
    if (neural_models.empty()) return out;

    // one early-stop carve per fold, shared by all neural models
    std::vector<std::size_t> fit_idx, es_idx;
    Rng es_rng(derive_seed(cfg.seed, {threshold, fold_tag, fnv1a("esplit")}));
    carve_early_stop(train_idx, seqs.labels, seqs.n_classes(), cfg.early_stop_fraction, es_rng, fit_idx,
                     es_idx);
    if (es_idx.empty() || fit_idx.empty())
        throw std::runtime_error("early-stop split: empty split (training portion too small)");

    std::vector<int> y_fit, y_es;
    for (std::size_t i : fit_idx) y_fit.push_back(seqs.labels[i]);
    for (std::size_t i : es_idx) y_es.push_back(seqs.labels[i]);

    for (const auto& model : neural_models) {
        std::vector<std::string> channels = model_channels(model, cfg.direction);
        nn::Tensor x_fit = sequence_tensor(seqs, fit_idx, channels, n);
        nn::Tensor x_es = sequence_tensor(seqs, es_idx, channels, n);
        nn::Tensor x_test = sequence_tensor(seqs, out.test_idx, channels, n);

        nn::Network net = nn::build_network(model_spec_for(model, cfg, n_classes), n, channels.size());
        net.init(derive_seed(cfg.seed, {threshold, fold_tag, fnv1a(model), fnv1a("init")}));
        nn::TrainConfig tc = cfg.train;
        tc.seed = derive_seed(cfg.seed, {threshold, fold_tag, fnv1a(model), fnv1a("fit")});
        nn::fit(net, x_fit, y_fit, x_es, y_es, tc);
        out.probs[model] = nn::predict_proba(net, x_test);
    }
    return out;
}

struct Predictions {
    std::vector<std::vector<int>> per_fold;  // predictions per fold
};

Predictions classifier_predictions(const std::string& id, std::span<const FoldOutput> folds,
                                   const ExperimentConfig& cfg) {
    Predictions preds;
    for (const FoldOutput& fo : folds) {
        if (is_base_model(id)) {
            preds.per_fold.push_back(argmax_rows(fo.probs.at(id)));
        } else if (id == "dl-ensemble") {
            const ProbMatrix* mats[] = {&fo.probs.at("cnn-pkt"), &fo.probs.at("cnn-pay"),
                                        &fo.probs.at("cnn-iat")};
            preds.per_fold.push_back(argmax_rows(average_softmax(mats)));
        } else if (id == "rf-dl") {
            const ProbMatrix& rf = cfg.rf_log_proba ? fo.rf_log : fo.probs.at("rf");
            preds.per_fold.push_back(combined_rf_dl(rf, fo.probs.at("cnn-pkt"), fo.probs.at("cnn-pay"),
                                                    fo.probs.at("cnn-iat"), cfg.rf_dl_weights));
        } else {  // avg:<a>+<b>...
            std::vector<const ProbMatrix*> mats;
            for (const auto& c : avg_components(id)) mats.push_back(&fo.probs.at(c));
            preds.per_fold.push_back(argmax_rows(average_softmax(mats)));
        }
    }
    return preds;
}

ClassifierResult score_classifier(const std::string& id, const Predictions& preds,
                                  std::span<const FoldOutput> folds, const data::LabeledDataset& ds) {
    ClassifierResult res;
    res.name = id;
    std::vector<int> pooled_pred, pooled_truth;
    int n_classes = static_cast<int>(ds.n_classes());
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const std::vector<int>& pred = preds.per_fold[f];
        const std::vector<int>& truth = folds[f].truth;
        Prf prf = macro_prf(pred, truth, n_classes);
        res.folds.push_back(
            {static_cast<int>(f), accuracy(pred, truth), prf.precision, prf.recall, prf.f1});
        pooled_pred.insert(pooled_pred.end(), pred.begin(), pred.end());
        pooled_truth.insert(pooled_truth.end(), truth.begin(), truth.end());
    }
    res.accuracy = accuracy(pooled_pred, pooled_truth);
    Prf pooled = macro_prf(pooled_pred, pooled_truth, n_classes);
    res.precision = pooled.precision;
    res.recall = pooled.recall;
    res.f1 = pooled.f1;
    res.per_sni = per_sni_accuracy(pooled_pred, pooled_truth, ds.classes);
    return res;
}

}  // namespace

const ClassifierResult* EvalReport::find(std::size_t threshold, const std::string& classifier) const {
    for (const auto& tr : thresholds) {
        if (tr.min_connections != threshold) continue;
        for (const auto& cr : tr.classifiers)
            if (cr.name == classifier) return &cr;
    }
    return nullptr;
}

json experiment_config_json(const ExperimentConfig& cfg) {
    json j;
    j["thresholds"] = cfg.thresholds;
    j["k"] = cfg.k;
    j["seed"] = cfg.seed;
    j["classifiers"] = cfg.classifiers;
    j["rf_dl_weights"] = cfg.rf_dl_weights;
    j["direction"] = cfg.direction;
    j["rf_log_proba"] = cfg.rf_log_proba;
    j["arch"] = {{"conv1", cfg.arch.conv1},   {"conv2", cfg.arch.conv2},
                 {"gru", cfg.arch.gru},       {"dense", cfg.arch.dense},
                 {"baseline_hidden", cfg.arch.baseline_hidden},
                 {"dropout_rate", cfg.arch.dropout_rate}};
    j["train"] = {{"batch_size", cfg.train.batch_size},
                  {"lr", cfg.train.adam.lr},
                  {"max_epochs", cfg.train.max_epochs},
                  {"patience", cfg.train.patience}};
    j["n_trees"] = cfg.n_trees;
    j["early_stop_fraction"] = cfg.early_stop_fraction;
    j["jobs"] = cfg.jobs;
    return j;
}

EvalReport run_experiment(const data::LabeledDataset& stats, const data::LabeledDataset& seqs,
                          const ExperimentConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    if (stats.size() != seqs.size())
        throw std::invalid_argument("run_experiment: statistical and sequence datasets differ in size");
    for (std::size_t i = 0; i < stats.size(); ++i)
        if (stats.classes[static_cast<std::size_t>(stats.labels[i])] !=
            seqs.classes[static_cast<std::size_t>(seqs.labels[i])])
            throw std::invalid_argument("run_experiment: datasets disagree on the label of sample " +
                                        std::to_string(i));
    SeqLayout layout = seq_layout(seqs);
    if (cfg.direction && !layout.has_direction)
        throw std::invalid_argument("run_experiment: direction requested but dataset has no dir_ columns");
    if (cfg.k < 2) throw std::invalid_argument("run_experiment: k must be >= 2");

    ClassifierPlan cplan = plan_classifiers(cfg.classifiers);

    EvalReport report;
    report.config = experiment_config_json(cfg);

    for (std::size_t threshold : cfg.thresholds) {
        ThresholdResult tr;
        tr.min_connections = threshold;
        try {
            data::LabeledDataset fstats = data::apply_min_connections(stats, threshold);
            data::LabeledDataset fseqs = data::apply_min_connections(seqs, threshold);
            tr.n_classes = fstats.n_classes();
            tr.n_samples = fstats.size();

            data::FoldPlan plan =
                data::kfold_split(fstats, cfg.k, derive_seed(cfg.seed, {fnv1a("folds"), threshold}));

            std::vector<FoldOutput> folds(static_cast<std::size_t>(cfg.k));
            parallel_for(static_cast<std::size_t>(cfg.k), cfg.jobs, [&](std::size_t f) {
                folds[f] = run_fold(fstats, fseqs, plan, static_cast<int>(f), cplan, cfg, threshold,
                                    layout.n);
            });

            for (const auto& id : cfg.classifiers) {
                Predictions preds = classifier_predictions(id, folds, cfg);
                tr.classifiers.push_back(score_classifier(id, preds, folds, fstats));
            }
        } catch (const std::runtime_error& e) {
            tr.skipped = true;
            tr.skip_reason = e.what();
            tr.classifiers.clear();
        }
        report.thresholds.push_back(std::move(tr));
    }

    if (cfg.timing) {
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return report;
}

EvalReport run_experiment(std::span<const pcap::Flow> flows, const ExperimentConfig& cfg) {
    data::LabeledDataset stats = data::stat_dataset(flows);
    data::LabeledDataset seqs = data::sequence_dataset(flows, feat::kDefaultSeqLen, cfg.direction);
    return run_experiment(stats, seqs, cfg);
}

json report_json(const EvalReport& report) {
    json j;
    j["version"] = 1;
    j["config"] = report.config;
    if (report.wall_seconds >= 0) j["wall_seconds"] = report.wall_seconds;
    json results = json::array();
    for (const auto& tr : report.thresholds) {
        json jt;
        jt["min_connections"] = tr.min_connections;
        if (tr.skipped) {
            jt["skipped"] = true;
            jt["reason"] = tr.skip_reason;
            results.push_back(std::move(jt));
            continue;
        }
        jt["n_classes"] = tr.n_classes;
        jt["n_samples"] = tr.n_samples;
        json classifiers = json::array();
        for (const auto& cr : tr.classifiers) {
            json jc;
            jc["name"] = cr.name;
            jc["accuracy"] = cr.accuracy;
            jc["precision"] = cr.precision;
            jc["recall"] = cr.recall;
            jc["f1"] = cr.f1;
            json folds = json::array();
            for (const auto& fm : cr.folds)
                folds.push_back({{"fold", fm.fold},
                                 {"accuracy", fm.accuracy},
                                 {"precision", fm.precision},
                                 {"recall", fm.recall},
                                 {"f1", fm.f1}});
            jc["folds"] = std::move(folds);
            jc["per_sni_accuracy"] = cr.per_sni;
            classifiers.push_back(std::move(jc));
        }
        jt["classifiers"] = std::move(classifiers);
        results.push_back(std::move(jt));
    }
    j["results"] = std::move(results);
    return j;
}

EvalReport report_from_json(const json& j) {
    EvalReport report;
    report.config = j.at("config");
    report.wall_seconds = j.value("wall_seconds", -1.0);
    for (const auto& jt : j.at("results")) {
        ThresholdResult tr;
        tr.min_connections = jt.at("min_connections").get<std::size_t>();
        if (jt.value("skipped", false)) {
            tr.skipped = true;
            tr.skip_reason = jt.value("reason", "");
            report.thresholds.push_back(std::move(tr));
            continue;
        }
        tr.n_classes = jt.at("n_classes").get<std::size_t>();
        tr.n_samples = jt.at("n_samples").get<std::size_t>();
        for (const auto& jc : jt.at("classifiers")) {
            ClassifierResult cr;
            cr.name = jc.at("name").get<std::string>();
            cr.accuracy = jc.at("accuracy").get<double>();
            cr.precision = jc.at("precision").get<double>();
            cr.recall = jc.at("recall").get<double>();
            cr.f1 = jc.at("f1").get<double>();
            for (const auto& jf : jc.at("folds"))
                cr.folds.push_back({jf.at("fold").get<int>(), jf.at("accuracy").get<double>(),
                                    jf.at("precision").get<double>(), jf.at("recall").get<double>(),
                                    jf.at("f1").get<double>()});
            cr.per_sni = jc.at("per_sni_accuracy").get<std::map<std::string, double>>();
            tr.classifiers.push_back(std::move(cr));
        }
        report.thresholds.push_back(std::move(tr));
    }
    return report;
}

std::string plot_metrics_csv(const EvalReport& report) {
    std::string out = "min_connections,classifier,metric,value\n";
    for (const auto& tr : report.thresholds) {
        if (tr.skipped) continue;
        for (const auto& cr : tr.classifiers) {
            auto row = [&](const char* metric, double v) {
                out += std::to_string(tr.min_connections);
                out += ",";
                out += cr.name;
                out += ",";
                out += metric;
                out += ",";
                out += format_double(v);
                out += "\n";
            };
            row("accuracy", cr.accuracy);
            row("precision", cr.precision);
            row("recall", cr.recall);
            row("f1", cr.f1);
        }
    }
    return out;
}

std::map<std::string, std::string> plot_sni_csvs(const EvalReport& report) {
    std::map<std::string, std::string> out;
    for (const auto& tr : report.thresholds) {
        if (tr.skipped) continue;
        std::string csv = "sni,classifier,accuracy\n";
        // collect the union of SNIs, sorted for stable output
        std::set<std::string> snis;
        for (const auto& cr : tr.classifiers)
            for (const auto& [sni, _] : cr.per_sni) snis.insert(sni);
        for (const auto& sni : snis) {
            for (const auto& cr : tr.classifiers) {
                auto it = cr.per_sni.find(sni);
                if (it == cr.per_sni.end()) continue;
                csv += sni + "," + cr.name + "," + format_double(it->second) + "\n";
            }
        }
        out["sni_accuracy_" + std::to_string(tr.min_connections) + ".csv"] = std::move(csv);
    }
    return out;
}

void write_plot_csvs(const std::string& dir, const EvalReport& report) {
    std::filesystem::create_directories(dir);
    write_file_atomic((std::filesystem::path(dir) / "metrics.csv").string(), plot_metrics_csv(report));
    for (const auto& [name, content] : plot_sni_csvs(report))
        write_file_atomic((std::filesystem::path(dir) / name).string(), content);
}

}  // namespace sniforge::eval
