#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sniforge::pcap {

std::uint32_t parse_ipv4(std::string_view dotted);
std::string ipv4_to_string(std::uint32_t ip);

struct Endpoint {
    std::uint32_t ip = 0;  // host byte order
    std::uint16_t port = 0;
    auto operator<=>(const Endpoint&) const = default;
};

std::string to_string(const Endpoint& ep);
Endpoint parse_endpoint(std::string_view s);  // "a.b.c.d:port"

struct Cidr {
    std::uint32_t prefix = 0;
    int bits = 0;
    bool contains(std::uint32_t ip) const {
        if (bits == 0) return true;
        std::uint32_t shift = 32u - static_cast<std::uint32_t>(bits);
        return (ip >> shift) == (prefix >> shift);
    }
};

Cidr parse_cidr(std::string_view s);  // "10.0.0.0/8"
const std::vector<Cidr>& rfc1918_nets();

struct RawPacket {
    std::int64_t ts_usec = 0;     // microseconds since epoch
    std::uint32_t frame_len = 0;  // original length on the wire
    std::uint32_t src_ip = 0;
    std::uint32_t dst_ip = 0;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::vector<std::uint8_t> tcp_payload;
    bool is_tls_client_hello = false;
};

struct CaptureResult {
    std::vector<RawPacket> packets;
    std::uint64_t truncated_records = 0;  // nonzero when parsing stopped early
    std::uint64_t skipped_non_ip = 0;
    std::uint64_t skipped_ipv6 = 0;
    std::uint64_t skipped_non_tcp = 0;
};

// Classic pcap only (magic 0xa1b2c3d4 native or byte-swapped), Ethernet link
// type. Throws ParseError on a malformed global header; a truncated record
// stops parsing with partial results and bumps truncated_records.
CaptureResult parse_capture(std::span<const std::uint8_t> bytes);

// host_name from the server_name extension of a TLS ClientHello, if the
// payload starts with one. Never throws; malformed input yields nullopt.
std::optional<std::string> extract_sni(std::span<const std::uint8_t> tcp_payload);

// True when the payload starts with a TLS handshake record whose first
// message is a ClientHello.
bool is_client_hello(std::span<const std::uint8_t> tcp_payload);

enum class Direction : std::int8_t {
    remote_to_local = -1,
    local_to_remote = 1,
};

struct PacketRecord {
    std::int64_t ts_usec = 0;
    std::uint32_t frame_len = 0;
    std::uint32_t payload_len = 0;
    Direction dir = Direction::local_to_remote;
    auto operator<=>(const PacketRecord&) const = default;
};

// Canonical direction-agnostic connection key: a is the lexicographically
// smaller endpoint.
struct FlowKey {
    Endpoint a;
    Endpoint b;
    static FlowKey canonical(const Endpoint& x, const Endpoint& y);
    auto operator<=>(const FlowKey&) const = default;
};

struct Flow {
    FlowKey key;
    std::vector<PacketRecord> packets;  // sorted by ts_usec, non-decreasing
    std::string sni;                    // empty = absent
    std::uint64_t accumulated_bytes = 0;
};

struct AssemblyResult {
    std::vector<Flow> flows;  // labeled flows only
    std::uint64_t total_tcp_packets = 0;
    std::uint64_t excluded_packets = 0;  // direction undecidable
    std::uint64_t dropped_flows_no_sni = 0;
    std::uint64_t dropped_packets_no_sni = 0;
    std::uint64_t dropped_flows_unlabelable = 0;
    std::uint64_t dropped_packets_unlabelable = 0;
};

// Groups packets by canonical key, tags directions against local_nets, labels
// each flow with the cleaned SNI of its first ClientHello and drops flows
// without one.
AssemblyResult assemble_flows(std::span<const RawPacket> packets, std::span<const Cidr> local_nets);

// Lowercases, strips digits/hyphens/underscores inside each dot label and
// deletes labels emptied by the removal. Returns "" when nothing is left.
std::string clean_label(std::string_view raw_sni);

// Intermediate flow file: CSV with header
//   flow_id,endpoint_a,endpoint_b,sni,ts_usec,frame_len,payload_len,dir
// one row per packet, rows grouped by flow_id in order, dir in {1,-1}
// (1 = local->remote). Lines starting with '#' are metadata and skipped.
std::string flow_file_string(std::span<const Flow> flows, std::string_view meta = {});
void write_flow_file(const std::string& path, std::span<const Flow> flows, std::string_view meta = {});
std::vector<Flow> read_flow_file_string(std::string_view content);
std::vector<Flow> read_flow_file(const std::string& path);

}  // namespace sniforge::pcap
