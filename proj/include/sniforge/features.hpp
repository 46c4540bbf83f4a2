#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "sniforge/pcap.hpp"

namespace sniforge::feat {

inline constexpr std::size_t kStatFeatureCount = 42;
inline constexpr std::size_t kDefaultSeqLen = 25;

// Canonical order of the 42 statistical features. Groups:
//   packet size  {num,p25,p50,p75,max,avg,var} x {rl,lr,all}
//   inter-arrival {p25,p50,p75}                x {rl,lr,all}
//   payload size {p25,p50,p75,max,avg,var}     x {rl,lr}
// rl = remote->local, lr = local->remote, all = combined.
const std::array<std::string, kStatFeatureCount>& stat_feature_names();

using StatFeatureVector = std::array<double, kStatFeatureCount>;

// Linear-interpolation percentile of an unsorted sample, p in [0,1].
double percentile(std::span<const double> values, double p);

// Population variance and friends are 0 for directions with no packets;
// inter-arrival statistics are 0 for directions with fewer than 2 packets.
StatFeatureVector stat_features(const pcap::Flow& flow);

// element 0 is 0; element i>0 is ln(dt_i + 1e-6) with dt in seconds.
std::vector<double> iat_log(std::span<const double> timestamps_sec);

struct SequenceSample {
    std::vector<double> packet_size;
    std::vector<double> payload_size;
    std::vector<double> iat_log;
    std::vector<double> direction;  // 1 local->remote, -1 remote->local, 0 padding
    int label = -1;
};

// First min(n, len) packets of the time-ordered flow, channels pre-padded
// with zeros on the left to length n.
SequenceSample sequence_features(const pcap::Flow& flow, std::size_t n = kDefaultSeqLen);

}  // namespace sniforge::feat
