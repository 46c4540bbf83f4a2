#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sniforge/common.hpp"
#include "sniforge/pcap.hpp"

namespace sniforge::synth {

struct ClassProfile {
    std::string label;  // hostname carried in the ClientHello, verbatim
    double packet_size_mean = 600;
    double packet_size_spread = 150;
    double payload_ratio = 0.9;   // payload fraction of (frame - headers)
    double iat_log_mean = -6.0;   // log-normal inter-arrival, ln seconds
    double iat_log_sigma = 1.0;
    double flow_len_mean = 20;    // packets per flow
    double flow_len_spread = 6;
    std::uint64_t seed = 0;
    std::uint32_t remote_ip = 0;  // 0 -> assigned from a test range
};

std::vector<ClassProfile> profiles_from_json(const nlohmann::json& j);
nlohmann::json profiles_to_json(std::span<const ClassProfile> profiles);

// n separable classes: disjoint packet-size ranges, distinct timing, labels
// that exercise the digit/hyphen cleaning.
std::vector<ClassProfile> default_profiles(int n_classes);

// Seeded, reproducible flows. Packet 0 of every flow is the local->remote
// ClientHello; its payload length equals the handshake bytes emit_pcap will
// write. Flow sni holds the profile label verbatim.
std::vector<pcap::Flow> generate_flows(std::span<const ClassProfile> profiles, std::size_t flows_per_class);

// Minimal TLS ClientHello carrying `host` as server_name. When pad_to
// exceeds the minimal size the record is grown with a padding extension (or
// trailing bytes) to exactly pad_to bytes.
std::vector<std::uint8_t> client_hello(std::string_view host, std::size_t pad_to = 0);

// Classic pcap bytes for the flows: Ethernet/IPv4/TCP frames, globally
// time-ordered; the first local->remote packet of each flow carries the
// flow's sni in a ClientHello. Ingesting the output reproduces each flow's
// (timestamps, frame/payload sizes, directions) exactly and its label as
// clean_label(sni).
std::vector<std::uint8_t> emit_pcap(std::span<const pcap::Flow> flows);

}  // namespace sniforge::synth
