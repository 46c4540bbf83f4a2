#pragma once

// shared fixture builders and independent oracles for the test suites

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "sniforge/common.hpp"
#include "sniforge/features.hpp"
#include "sniforge/pcap.hpp"

namespace testutil {

using sniforge::Rng;
namespace pcap = sniforge::pcap;

inline pcap::Flow make_flow(std::vector<std::tuple<std::int64_t, std::uint32_t, std::uint32_t, int>> pkts,
                            const std::string& sni = "test.example.com") {
    pcap::Flow f;
    f.key = pcap::FlowKey::canonical({pcap::parse_ipv4("10.0.0.1"), 40000},
                                     {pcap::parse_ipv4("93.184.216.34"), 443});
    f.sni = sni;
    for (auto& [ts, frame, payload, dir] : pkts) {
        pcap::PacketRecord rec;
        rec.ts_usec = ts;
        rec.frame_len = frame;
        rec.payload_len = payload;
        rec.dir = dir > 0 ? pcap::Direction::local_to_remote : pcap::Direction::remote_to_local;
        f.packets.push_back(rec);
        f.accumulated_bytes += payload;
    }
    std::stable_sort(f.packets.begin(), f.packets.end(),
                     [](const auto& a, const auto& b) { return a.ts_usec < b.ts_usec; });
    return f;
}

inline pcap::Flow random_flow(Rng& rng, std::size_t min_packets = 1, std::size_t max_packets = 60) {
    std::size_t n = min_packets + static_cast<std::size_t>(rng.below(max_packets - min_packets + 1));
    std::vector<std::tuple<std::int64_t, std::uint32_t, std::uint32_t, int>> pkts;
    std::int64_t ts = 1468972800LL * 1000000LL + static_cast<std::int64_t>(rng.below(1000000));
    for (std::size_t i = 0; i < n; ++i) {
        ts += static_cast<std::int64_t>(rng.below(2000000));  // 0..2s, duplicates possible
        std::uint32_t frame = 60 + static_cast<std::uint32_t>(rng.below(1455));
        std::uint32_t payload = static_cast<std::uint32_t>(rng.below(frame - 54 + 1));
        int dir = rng.uniform() < 0.5 ? 1 : -1;
        pkts.push_back({ts, frame, payload, dir});
    }
    return make_flow(std::move(pkts));
}

// ---------------------------------------------------------------- oracles

// direct formula evaluation, written independently of feat::percentile
inline double oracle_percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    double rank = p * static_cast<double>(v.size() - 1);
    double lo = std::floor(rank);
    double hi = std::ceil(rank);
    double frac = rank - lo;
    return v[static_cast<std::size_t>(lo)] * (1.0 - frac) + v[static_cast<std::size_t>(hi)] * frac;
}

inline double oracle_mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double oracle_pop_var(const std::vector<double>& v) {
    double m = oracle_mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

// the 42 features computed directly from first principles over the flow
inline std::vector<double> oracle_stat_features(const pcap::Flow& flow) {
    auto select = [&](int want_dir) {  // 0 = both
        std::vector<const pcap::PacketRecord*> out;
        for (const auto& p : flow.packets) {
            int d = p.dir == pcap::Direction::local_to_remote ? 1 : -1;
            if (want_dir == 0 || d == want_dir) out.push_back(&p);
        }
        return out;
    };
    auto sizes = [](const std::vector<const pcap::PacketRecord*>& ps, bool payload) {
        std::vector<double> v;
        for (const auto* p : ps) v.push_back(payload ? p->payload_len : p->frame_len);
        return v;
    };
    auto iats = [](const std::vector<const pcap::PacketRecord*>& ps) {
        std::vector<double> v;
        for (std::size_t i = 1; i < ps.size(); ++i)
            v.push_back(static_cast<double>(ps[i]->ts_usec) * 1e-6 -
                        static_cast<double>(ps[i - 1]->ts_usec) * 1e-6);
        return v;
    };

    std::vector<double> out;
    for (int dir : {-1, 1, 0}) {  // rl, lr, all
        std::vector<double> v = sizes(select(dir), false);
        out.push_back(static_cast<double>(v.size()));
        if (v.empty()) {
            out.insert(out.end(), 6, 0.0);
        } else {
            out.push_back(oracle_percentile(v, 0.25));
            out.push_back(oracle_percentile(v, 0.50));
            out.push_back(oracle_percentile(v, 0.75));
            out.push_back(*std::max_element(v.begin(), v.end()));
            out.push_back(oracle_mean(v));
            out.push_back(oracle_pop_var(v));
        }
    }
    for (int dir : {-1, 1, 0}) {
        std::vector<double> v = iats(select(dir));
        if (v.empty()) {
            out.insert(out.end(), 3, 0.0);
        } else {
            out.push_back(oracle_percentile(v, 0.25));
            out.push_back(oracle_percentile(v, 0.50));
            out.push_back(oracle_percentile(v, 0.75));
        }
    }
    for (int dir : {-1, 1}) {
        std::vector<double> v = sizes(select(dir), true);
        if (v.empty()) {
            out.insert(out.end(), 6, 0.0);
        } else {
            out.push_back(oracle_percentile(v, 0.25));
            out.push_back(oracle_percentile(v, 0.50));
            out.push_back(oracle_percentile(v, 0.75));
            out.push_back(*std::max_element(v.begin(), v.end()));
            out.push_back(oracle_mean(v));
            out.push_back(oracle_pop_var(v));
        }
    }
    return out;
}

// sequence channels computed directly: first min(n,len) packets, left-padded
inline sniforge::feat::SequenceSample oracle_sequence_features(const pcap::Flow& flow, std::size_t n) {
    sniforge::feat::SequenceSample s;
    s.packet_size.assign(n, 0.0);
    s.payload_size.assign(n, 0.0);
    s.iat_log.assign(n, 0.0);
    s.direction.assign(n, 0.0);
    std::size_t taken = std::min(n, flow.packets.size());
    std::size_t pad = n - taken;
    for (std::size_t i = 0; i < taken; ++i) {
        const auto& p = flow.packets[i];
        s.packet_size[pad + i] = p.frame_len;
        s.payload_size[pad + i] = p.payload_len;
        s.direction[pad + i] = p.dir == pcap::Direction::local_to_remote ? 1.0 : -1.0;
        if (i > 0) {
            double dt = static_cast<double>(p.ts_usec) * 1e-6 -
                        static_cast<double>(flow.packets[i - 1].ts_usec) * 1e-6;
            s.iat_log[pad + i] = std::log(dt + 1e-6);
        }
    }
    return s;
}

}  // namespace testutil
