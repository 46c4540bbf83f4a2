#include "sniforge/dataset.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sniforge/common.hpp"

namespace sniforge::data {

namespace {

int class_index_of(LabeledDataset& ds, std::map<std::string, int>& index, const std::string& label) {
    auto it = index.find(label);
    if (it != index.end()) return it->second;
    int id = static_cast<int>(ds.classes.size());
    ds.classes.push_back(label);
    index.emplace(label, id);
    return id;
}

}  // namespace

LabeledDataset stat_dataset(std::span<const pcap::Flow> flows) {
    LabeledDataset ds;
    ds.feature_names.assign(feat::stat_feature_names().begin(), feat::stat_feature_names().end());
    std::map<std::string, int> index;
    for (const auto& flow : flows) {
        feat::StatFeatureVector f = feat::stat_features(flow);
        ds.rows.emplace_back(f.begin(), f.end());
        ds.labels.push_back(class_index_of(ds, index, flow.sni));
    }
    return ds;
}

LabeledDataset sequence_dataset(std::span<const pcap::Flow> flows, std::size_t n, bool direction) {
    LabeledDataset ds;
    auto add_channel = [&](const char* prefix) {
        for (std::size_t i = 0; i < n; ++i) ds.feature_names.push_back(std::string(prefix) + std::to_string(i));
    };
    add_channel("pkt_");
    add_channel("pay_");
    add_channel("iat_");
    if (direction) add_channel("dir_");

    std::map<std::string, int> index;
    for (const auto& flow : flows) {
        feat::SequenceSample s = feat::sequence_features(flow, n);
        std::vector<double> row;
        row.reserve(ds.feature_names.size());
        row.insert(row.end(), s.packet_size.begin(), s.packet_size.end());
        row.insert(row.end(), s.payload_size.begin(), s.payload_size.end());
        row.insert(row.end(), s.iat_log.begin(), s.iat_log.end());
        if (direction) row.insert(row.end(), s.direction.begin(), s.direction.end());
        ds.rows.push_back(std::move(row));
        ds.labels.push_back(class_index_of(ds, index, flow.sni));
    }
    return ds;
}

std::vector<std::size_t> class_counts(const LabeledDataset& ds) {
    std::vector<std::size_t> counts(ds.classes.size(), 0);
    for (int y : ds.labels) counts[static_cast<std::size_t>(y)]++;
    return counts;
}

LabeledDataset apply_min_connections(const LabeledDataset& ds, std::size_t threshold) {
    if (threshold < 1) throw std::invalid_argument("apply_min_connections: threshold must be >= 1");
    std::vector<std::size_t> counts = class_counts(ds);
    std::vector<int> remap(ds.classes.size(), -1);
    LabeledDataset out;
    out.feature_names = ds.feature_names;
    out.provenance = ds.provenance;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] >= threshold) {
            remap[c] = static_cast<int>(out.classes.size());
            out.classes.push_back(ds.classes[c]);
        }
    }
    if (out.classes.empty())
        throw std::runtime_error("apply_min_connections: threshold " + std::to_string(threshold) +
                                 " removes every class");
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        int m = remap[static_cast<std::size_t>(ds.labels[i])];
        if (m < 0) continue;
        out.rows.push_back(ds.rows[i]);
        out.labels.push_back(m);
    }
    return out;
}

std::vector<std::size_t> FoldPlan::test_indices(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        if (assignments[i] == fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldPlan::train_indices(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        if (assignments[i] != fold) out.push_back(i);
    return out;
}

FoldPlan kfold_split(const LabeledDataset& ds, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
    std::vector<std::vector<std::size_t>> by_class(ds.classes.size());
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (by_class[c].size() < static_cast<std::size_t>(k))
            throw std::runtime_error("kfold_split: class '" + ds.classes[c] + "' has " +
                                     std::to_string(by_class[c].size()) + " samples, fewer than k=" +
                                     std::to_string(k));
    }

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.assignments.assign(ds.size(), -1);
    Rng rng(derive_seed(seed, {0x6b666f6cULL /* "kfol" */, static_cast<std::uint64_t>(k)}));
    for (auto& members : by_class) {
        rng.shuffle(members);
        for (std::size_t j = 0; j < members.size(); ++j)
            plan.assignments[members[j]] = static_cast<int>(j % static_cast<std::size_t>(k));
    }
    return plan;
}

std::string fold_plan_json(const FoldPlan& plan) {
    nlohmann::json j;
    j["k"] = plan.k;
    j["seed"] = plan.seed;
    j["assignments"] = plan.assignments;
    return j.dump();
}

FoldPlan fold_plan_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    FoldPlan plan;
    plan.k = j.at("k").get<int>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.assignments = j.at("assignments").get<std::vector<int>>();
    return plan;
}

std::string dataset_csv_string(const LabeledDataset& ds, std::string_view meta) {
    std::string out;
    if (!meta.empty()) {
        out += "# ";
        out += meta;
        out += "\n";
    }
    for (const auto& name : ds.feature_names) {
        out += name;
        out += ",";
    }
    out += "label\n";
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        for (double v : ds.rows[i]) {
            out += format_double(v);
            out += ",";
        }
        out += ds.classes[static_cast<std::size_t>(ds.labels[i])];
        out += "\n";
    }
    return out;
}

void write_dataset_csv(const std::string& path, const LabeledDataset& ds, std::string_view meta) {
    write_file_atomic(path, dataset_csv_string(ds, meta));
}

LabeledDataset read_dataset_csv_string(std::string_view content) {
    LabeledDataset ds;
    std::map<std::string, int> index;
    bool saw_header = false;
    std::size_t start = 0;
    while (start < content.size()) {
        std::size_t end = content.find('\n', start);
        if (end == std::string_view::npos) end = content.size();
        std::string_view line = content.substr(start, end - start);
        start = end + 1;
        if (line.empty() || line[0] == '#') continue;
        auto fields = split(line, ',');
        if (!saw_header) {
            if (fields.size() < 2 || fields.back() != "label")
                throw ParseError("dataset csv: header must end with 'label'");
            ds.feature_names.assign(fields.begin(), fields.end() - 1);
            saw_header = true;
            continue;
        }
        if (fields.size() != ds.feature_names.size() + 1)
            throw ParseError("dataset csv: wrong column count");
        std::vector<double> row;
        row.reserve(ds.feature_names.size());
        for (std::size_t i = 0; i + 1 < fields.size(); ++i) row.push_back(parse_double(fields[i]));
        ds.rows.push_back(std::move(row));
        ds.labels.push_back(class_index_of(ds, index, fields.back()));
    }
    if (!saw_header) throw ParseError("dataset csv: empty file");
    return ds;
}

LabeledDataset read_dataset_csv(const std::string& path) {
    return read_dataset_csv_string(read_file(path));
}

}  // namespace sniforge::data
