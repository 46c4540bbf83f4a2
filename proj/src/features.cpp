#include "sniforge/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sniforge::feat {

namespace {

constexpr double kIatEpsilon = 1e-6;  // capture resolution in seconds

std::array<std::string, kStatFeatureCount> make_names() {
    std::array<std::string, kStatFeatureCount> names;
    std::size_t i = 0;
    const char* dirs3[] = {"rl", "lr", "all"};
    const char* dirs2[] = {"rl", "lr"};
    const char* pkt_stats[] = {"num", "p25", "p50", "p75", "max", "avg", "var"};
    const char* iat_stats[] = {"p25", "p50", "p75"};
    const char* pay_stats[] = {"p25", "p50", "p75", "max", "avg", "var"};
    for (const char* d : dirs3)
        for (const char* s : pkt_stats) names[i++] = std::string("pkt_") + s + "_" + d;
    for (const char* d : dirs3)
        for (const char* s : iat_stats) names[i++] = std::string("iat_") + s + "_" + d;
    for (const char* d : dirs2)
        for (const char* s : pay_stats) names[i++] = std::string("pay_") + s + "_" + d;
    return names;
}

double mean_of(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double population_variance(std::span<const double> v) {
    double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

std::vector<double> deltas(std::span<const double> ts) {
    std::vector<double> d;
    if (ts.size() < 2) return d;
    d.reserve(ts.size() - 1);
    for (std::size_t i = 1; i < ts.size(); ++i) d.push_back(ts[i] - ts[i - 1]);
    return d;
}

// {num,p25,p50,p75,max,avg,var} with zeros for an empty sample
void put_size_stats(std::span<const double> v, double* out) {
    out[0] = static_cast<double>(v.size());
    if (v.empty()) {
        std::fill(out + 1, out + 7, 0.0);
        return;
    }
    out[1] = percentile(v, 0.25);
    out[2] = percentile(v, 0.50);
    out[3] = percentile(v, 0.75);
    out[4] = *std::max_element(v.begin(), v.end());
    out[5] = mean_of(v);
    out[6] = population_variance(v);
}

// {p25,p50,p75,max,avg,var}
void put_payload_stats(std::span<const double> v, double* out) {
    if (v.empty()) {
        std::fill(out, out + 6, 0.0);
        return;
    }
    out[0] = percentile(v, 0.25);
    out[1] = percentile(v, 0.50);
    out[2] = percentile(v, 0.75);
    out[3] = *std::max_element(v.begin(), v.end());
    out[4] = mean_of(v);
    out[5] = population_variance(v);
}

// {p25,p50,p75}
void put_iat_stats(std::span<const double> ts, double* out) {
    std::vector<double> d = deltas(ts);
    if (d.empty()) {
        std::fill(out, out + 3, 0.0);
        return;
    }
    out[0] = percentile(d, 0.25);
    out[1] = percentile(d, 0.50);
    out[2] = percentile(d, 0.75);
}

inline double to_seconds(std::int64_t usec) { return static_cast<double>(usec) * 1e-6; }

}  // namespace

const std::array<std::string, kStatFeatureCount>& stat_feature_names() {
    static const auto names = make_names();
    return names;
}

double percentile(std::span<const double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile: empty input");
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("percentile: p outside [0,1]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double h = p * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(h);
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

StatFeatureVector stat_features(const pcap::Flow& flow) {
    std::vector<double> pkt_rl, pkt_lr, pkt_all;
    std::vector<double> pay_rl, pay_lr;
    std::vector<double> ts_rl, ts_lr, ts_all;
    for (const auto& p : flow.packets) {
        double frame = static_cast<double>(p.frame_len);
        double payload = static_cast<double>(p.payload_len);
        double t = to_seconds(p.ts_usec);
        pkt_all.push_back(frame);
        ts_all.push_back(t);
        if (p.dir == pcap::Direction::remote_to_local) {
            pkt_rl.push_back(frame);
            pay_rl.push_back(payload);
            ts_rl.push_back(t);
        } else {
            pkt_lr.push_back(frame);
            pay_lr.push_back(payload);
            ts_lr.push_back(t);
        }
    }

    StatFeatureVector f{};
    put_size_stats(pkt_rl, f.data() + 0);
    put_size_stats(pkt_lr, f.data() + 7);
    put_size_stats(pkt_all, f.data() + 14);
    put_iat_stats(ts_rl, f.data() + 21);
    put_iat_stats(ts_lr, f.data() + 24);
    put_iat_stats(ts_all, f.data() + 27);
    put_payload_stats(pay_rl, f.data() + 30);
    put_payload_stats(pay_lr, f.data() + 36);
    return f;
}

std::vector<double> iat_log(std::span<const double> timestamps_sec) {
    std::vector<double> out;
    out.reserve(timestamps_sec.size());
    for (std::size_t i = 0; i < timestamps_sec.size(); ++i) {
        if (i == 0) {
            out.push_back(0.0);
            continue;
        }
        double dt = timestamps_sec[i] - timestamps_sec[i - 1];
        if (dt < 0) throw std::invalid_argument("iat_log: timestamps must be non-decreasing");
        out.push_back(std::log(dt + kIatEpsilon));
    }
    return out;
}

SequenceSample sequence_features(const pcap::Flow& flow, std::size_t n) {
    if (n < 1) throw std::invalid_argument("sequence_features: n must be >= 1");
    if (flow.packets.empty()) throw std::invalid_argument("sequence_features: empty flow");

    std::size_t taken = std::min(n, flow.packets.size());
    std::size_t pad = n - taken;

    std::vector<double> ts;
    ts.reserve(taken);
    for (std::size_t i = 0; i < taken; ++i) ts.push_back(to_seconds(flow.packets[i].ts_usec));
    std::vector<double> iat = iat_log(ts);

    SequenceSample s;
    s.packet_size.assign(n, 0.0);
    s.payload_size.assign(n, 0.0);
    s.iat_log.assign(n, 0.0);
    s.direction.assign(n, 0.0);
    for (std::size_t i = 0; i < taken; ++i) {
        const auto& p = flow.packets[i];
        s.packet_size[pad + i] = static_cast<double>(p.frame_len);
        s.payload_size[pad + i] = static_cast<double>(p.payload_len);
        s.iat_log[pad + i] = iat[i];
        s.direction[pad + i] = p.dir == pcap::Direction::local_to_remote ? 1.0 : -1.0;
    }
    return s;
}

}  // namespace sniforge::feat
