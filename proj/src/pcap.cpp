#include "sniforge/pcap.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "sniforge/common.hpp"

namespace sniforge::pcap {

std::uint32_t parse_ipv4(std::string_view dotted) {
    auto parts = split(dotted, '.');
    if (parts.size() != 4) throw ParseError("bad IPv4 address: '" + std::string(dotted) + "'");
    std::uint32_t ip = 0;
    for (const auto& p : parts) {
        long long v = parse_int(p);
        if (v < 0 || v > 255) throw ParseError("bad IPv4 octet: '" + std::string(dotted) + "'");
        ip = (ip << 8) | static_cast<std::uint32_t>(v);
    }
    return ip;
}

std::string ipv4_to_string(std::uint32_t ip) {
    return std::to_string((ip >> 24) & 0xff) + "." + std::to_string((ip >> 16) & 0xff) + "." +
           std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

std::string to_string(const Endpoint& ep) {
    return ipv4_to_string(ep.ip) + ":" + std::to_string(ep.port);
}

Endpoint parse_endpoint(std::string_view s) {
    auto pos = s.rfind(':');
    if (pos == std::string_view::npos) throw ParseError("bad endpoint: '" + std::string(s) + "'");
    long long port = parse_int(s.substr(pos + 1));
    if (port < 0 || port > 65535) throw ParseError("bad port: '" + std::string(s) + "'");
    return Endpoint{parse_ipv4(s.substr(0, pos)), static_cast<std::uint16_t>(port)};
}

Cidr parse_cidr(std::string_view s) {
    auto pos = s.find('/');
    if (pos == std::string_view::npos) throw ParseError("bad CIDR: '" + std::string(s) + "'");
    long long bits = parse_int(s.substr(pos + 1));
    if (bits < 0 || bits > 32) throw ParseError("bad CIDR prefix length: '" + std::string(s) + "'");
    return Cidr{parse_ipv4(s.substr(0, pos)), static_cast<int>(bits)};
}

const std::vector<Cidr>& rfc1918_nets() {
    static const std::vector<Cidr> nets = {
        parse_cidr("10.0.0.0/8"),
        parse_cidr("172.16.0.0/12"),
        parse_cidr("192.168.0.0/16"),
    };
    return nets;
}

namespace {

struct Reader {
    std::span<const std::uint8_t> buf;
    std::size_t pos = 0;
    bool swapped = false;

    std::size_t remaining() const { return buf.size() - pos; }

    std::uint32_t u32() {
        std::uint32_t v;
        if (swapped)
            v = (std::uint32_t(buf[pos]) << 24) | (std::uint32_t(buf[pos + 1]) << 16) |
                (std::uint32_t(buf[pos + 2]) << 8) | std::uint32_t(buf[pos + 3]);
        else
            v = std::uint32_t(buf[pos]) | (std::uint32_t(buf[pos + 1]) << 8) |
                (std::uint32_t(buf[pos + 2]) << 16) | (std::uint32_t(buf[pos + 3]) << 24);
        pos += 4;
        return v;
    }

    std::uint16_t u16() {
        std::uint16_t v;
        if (swapped)
            v = static_cast<std::uint16_t>((buf[pos] << 8) | buf[pos + 1]);
        else
            v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
        pos += 2;
        return v;
    }
};

// big-endian field access inside a frame
inline std::uint16_t be16(std::span<const std::uint8_t> b, std::size_t off) {
    return static_cast<std::uint16_t>((b[off] << 8) | b[off + 1]);
}
inline std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t off) {
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

constexpr std::uint32_t kMagicNative = 0xa1b2c3d4;
constexpr std::uint32_t kMagicSwapped = 0xd4c3b2a1;
constexpr std::uint32_t kLinkEthernet = 1;

}  // namespace

CaptureResult parse_capture(std::span<const std::uint8_t> bytes) {
    CaptureResult result;
    if (bytes.size() < 24) throw ParseError("pcap: file shorter than global header");

    Reader r{bytes};
    std::uint32_t magic = r.u32();
    if (magic == kMagicSwapped) {
        r.swapped = true;
    } else if (magic != kMagicNative) {
        throw ParseError("pcap: bad magic number");
    }
    r.pos = 0;
    magic = r.u32();
    (void)magic;
    r.u16();  // version major
    r.u16();  // version minor
    r.u32();  // thiszone
    r.u32();  // sigfigs
    r.u32();  // snaplen
    std::uint32_t network = r.u32();
    if (network != kLinkEthernet) throw ParseError("pcap: unsupported link type " + std::to_string(network));

    while (r.remaining() > 0) {
        if (r.remaining() < 16) {
            result.truncated_records++;
            break;
        }
        std::uint32_t ts_sec = r.u32();
        std::uint32_t ts_usec = r.u32();
        std::uint32_t incl_len = r.u32();
        std::uint32_t orig_len = r.u32();
        if (r.remaining() < incl_len) {
            result.truncated_records++;
            break;
        }
        std::span<const std::uint8_t> frame = bytes.subspan(r.pos, incl_len);
        r.pos += incl_len;

        if (frame.size() < 14) {
            result.skipped_non_ip++;
            continue;
        }
        std::uint16_t ethertype = be16(frame, 12);
        if (ethertype == 0x86dd) {
            result.skipped_ipv6++;
            continue;
        }
        if (ethertype != 0x0800) {
            result.skipped_non_ip++;
            continue;
        }
        std::span<const std::uint8_t> ip = frame.subspan(14);
        if (ip.size() < 20 || (ip[0] >> 4) != 4) {
            result.skipped_non_ip++;
            continue;
        }
        std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0f) * 4;
        std::uint16_t total_len = be16(ip, 2);
        if (ihl < 20 || ip.size() < ihl || total_len < ihl) {
            result.skipped_non_ip++;
            continue;
        }
        if (ip[9] != 6) {  // not TCP
            result.skipped_non_tcp++;
            continue;
        }
        std::size_t ip_payload = std::min<std::size_t>(total_len, ip.size()) - ihl;
        std::span<const std::uint8_t> tcp = ip.subspan(ihl, ip_payload);
        if (tcp.size() < 20) {
            result.skipped_non_tcp++;
            continue;
        }
        std::size_t data_off = static_cast<std::size_t>(tcp[12] >> 4) * 4;
        if (data_off < 20 || tcp.size() < data_off) {
            result.skipped_non_tcp++;
            continue;
        }

        RawPacket pkt;
        pkt.ts_usec = static_cast<std::int64_t>(ts_sec) * 1000000 + ts_usec;
        pkt.frame_len = orig_len;
        pkt.src_ip = be32(ip, 12);
        pkt.dst_ip = be32(ip, 16);
        pkt.src_port = be16(tcp, 0);
        pkt.dst_port = be16(tcp, 2);
        pkt.tcp_payload.assign(tcp.begin() + data_off, tcp.end());
        pkt.is_tls_client_hello = is_client_hello(pkt.tcp_payload);
        result.packets.push_back(std::move(pkt));
    }
    return result;
}

bool is_client_hello(std::span<const std::uint8_t> p) {
    // content type handshake(22), record length covers >= 4 bytes, handshake
    // type client_hello(1)
    return p.size() >= 6 && p[0] == 0x16 && be16(p, 3) >= 4 && p[5] == 0x01;
}

std::optional<std::string> extract_sni(std::span<const std::uint8_t> p) {
    if (!is_client_hello(p)) return std::nullopt;
    std::size_t record_end = std::min<std::size_t>(5 + be16(p, 3), p.size());
    std::size_t pos = 5;
    if (pos + 4 > record_end) return std::nullopt;
    std::size_t hs_len = (std::size_t(p[pos + 1]) << 16) | (std::size_t(p[pos + 2]) << 8) | p[pos + 3];
    std::size_t hs_end = std::min(pos + 4 + hs_len, record_end);
    pos += 4;

    // client_version + random
    if (pos + 2 + 32 > hs_end) return std::nullopt;
    pos += 34;
    // session id
    if (pos + 1 > hs_end) return std::nullopt;
    pos += 1 + p[pos];
    // cipher suites
    if (pos + 2 > hs_end) return std::nullopt;
    pos += 2 + be16(p, pos);
    // compression methods
    if (pos + 1 > hs_end) return std::nullopt;
    pos += 1 + p[pos];
    // extensions
    if (pos + 2 > hs_end) return std::nullopt;
    std::size_t ext_end = std::min(pos + 2 + be16(p, pos), hs_end);
    pos += 2;
    while (pos + 4 <= ext_end) {
        std::uint16_t ext_type = be16(p, pos);
        std::uint16_t ext_len = be16(p, pos + 2);
        pos += 4;
        if (pos + ext_len > ext_end) return std::nullopt;
        if (ext_type == 0x0000) {  // server_name
            std::size_t q = pos;
            if (q + 2 > pos + ext_len) return std::nullopt;
            std::size_t list_end = std::min<std::size_t>(q + 2 + be16(p, q), pos + ext_len);
            q += 2;
            while (q + 3 <= list_end) {
                std::uint8_t name_type = p[q];
                std::uint16_t name_len = be16(p, q + 1);
                q += 3;
                if (q + name_len > list_end) return std::nullopt;
                if (name_type == 0) {
                    if (name_len == 0) return std::nullopt;
                    return std::string(reinterpret_cast<const char*>(p.data() + q), name_len);
                }
                q += name_len;
            }
            return std::nullopt;
        }
        pos += ext_len;
    }
    return std::nullopt;
}

std::string clean_label(std::string_view raw_sni) {
    std::string out;
    out.reserve(raw_sni.size());
    std::string label;
    auto flush = [&] {
        if (!label.empty()) {
            if (!out.empty()) out.push_back('.');
            out += label;
            label.clear();
        }
    };
    for (char ch : raw_sni) {
        if (ch == '.') {
            flush();
            continue;
        }
        char c = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        if ((c >= '0' && c <= '9') || c == '-' || c == '_') continue;
        label.push_back(c);
    }
    flush();
    return out;
}

FlowKey FlowKey::canonical(const Endpoint& x, const Endpoint& y) {
    return x <= y ? FlowKey{x, y} : FlowKey{y, x};
}

AssemblyResult assemble_flows(std::span<const RawPacket> packets, std::span<const Cidr> local_nets) {
    if (local_nets.empty()) throw std::invalid_argument("assemble_flows: local_nets must be non-empty");

    auto is_local = [&](std::uint32_t ip) {
        return std::any_of(local_nets.begin(), local_nets.end(), [&](const Cidr& c) { return c.contains(ip); });
    };

    struct PendingFlow {
        Flow flow;
        std::vector<const RawPacket*> raw;  // same order as flow.packets before sort
    };

    AssemblyResult result;
    result.total_tcp_packets = packets.size();
    std::map<FlowKey, PendingFlow> flows;

    for (const RawPacket& pkt : packets) {
        bool src_local = is_local(pkt.src_ip);
        bool dst_local = is_local(pkt.dst_ip);
        if (src_local == dst_local) {
            result.excluded_packets++;
            continue;
        }
        Endpoint src{pkt.src_ip, pkt.src_port};
        Endpoint dst{pkt.dst_ip, pkt.dst_port};
        FlowKey key = FlowKey::canonical(src, dst);
        PendingFlow& pf = flows[key];
        pf.flow.key = key;
        PacketRecord rec;
        rec.ts_usec = pkt.ts_usec;
        rec.frame_len = pkt.frame_len;
        rec.payload_len = static_cast<std::uint32_t>(pkt.tcp_payload.size());
        rec.dir = src_local ? Direction::local_to_remote : Direction::remote_to_local;
        pf.flow.packets.push_back(rec);
        pf.raw.push_back(&pkt);
    }

    for (auto& [key, pf] : flows) {
        // order packets (and their raw counterparts) by timestamp, stably
        std::vector<std::size_t> order(pf.flow.packets.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
            return pf.flow.packets[i].ts_usec < pf.flow.packets[j].ts_usec;
        });

        Flow flow;
        flow.key = key;
        flow.packets.reserve(order.size());
        std::string raw_sni;
        for (std::size_t i : order) {
            flow.packets.push_back(pf.flow.packets[i]);
            flow.accumulated_bytes += pf.flow.packets[i].payload_len;
            if (raw_sni.empty() && pf.raw[i]->is_tls_client_hello) {
                if (auto sni = extract_sni(pf.raw[i]->tcp_payload)) raw_sni = *sni;
            }
        }
        if (raw_sni.empty()) {
            result.dropped_flows_no_sni++;
            result.dropped_packets_no_sni += flow.packets.size();
            continue;
        }
        flow.sni = clean_label(raw_sni);
        if (flow.sni.empty()) {
            result.dropped_flows_unlabelable++;
            result.dropped_packets_unlabelable += flow.packets.size();
            continue;
        }
        result.flows.push_back(std::move(flow));
    }
    return result;
}

std::string flow_file_string(std::span<const Flow> flows, std::string_view meta) {
    std::string out;
    if (!meta.empty()) {
        out += "# ";
        out += meta;
        out += "\n";
    }
    out += "flow_id,endpoint_a,endpoint_b,sni,ts_usec,frame_len,payload_len,dir\n";
    for (std::size_t id = 0; id < flows.size(); ++id) {
        const Flow& f = flows[id];
        std::string prefix = std::to_string(id) + "," + to_string(f.key.a) + "," + to_string(f.key.b) + "," + f.sni + ",";
        for (const PacketRecord& p : f.packets) {
            out += prefix;
            out += std::to_string(p.ts_usec);
            out += ",";
            out += std::to_string(p.frame_len);
            out += ",";
            out += std::to_string(p.payload_len);
            out += ",";
            out += (p.dir == Direction::local_to_remote) ? "1" : "-1";
            out += "\n";
        }
    }
    return out;
}

void write_flow_file(const std::string& path, std::span<const Flow> flows, std::string_view meta) {
    write_file_atomic(path, flow_file_string(flows, meta));
}

std::vector<Flow> read_flow_file_string(std::string_view content) {
    std::vector<Flow> flows;
    long long current_id = -1;
    bool saw_header = false;
    std::size_t start = 0;
    while (start < content.size()) {
        std::size_t end = content.find('\n', start);
        if (end == std::string_view::npos) end = content.size();
        std::string_view line = content.substr(start, end - start);
        start = end + 1;
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header) {
            if (!line.starts_with("flow_id,")) throw ParseError("flow file: missing header");
            saw_header = true;
            continue;
        }
        auto fields = split(line, ',');
        if (fields.size() != 8) throw ParseError("flow file: expected 8 fields, got " + std::to_string(fields.size()));
        long long id = parse_int(fields[0]);
        if (id != current_id) {
            if (id != current_id + 1) throw ParseError("flow file: non-contiguous flow_id");
            current_id = id;
            Flow f;
            f.key.a = parse_endpoint(fields[1]);
            f.key.b = parse_endpoint(fields[2]);
            f.sni = fields[3];
            flows.push_back(std::move(f));
        }
        Flow& f = flows.back();
        PacketRecord rec;
        rec.ts_usec = parse_int(fields[4]);
        rec.frame_len = static_cast<std::uint32_t>(parse_int(fields[5]));
        rec.payload_len = static_cast<std::uint32_t>(parse_int(fields[6]));
        long long d = parse_int(fields[7]);
        if (d != 1 && d != -1) throw ParseError("flow file: dir must be 1 or -1");
        rec.dir = d == 1 ? Direction::local_to_remote : Direction::remote_to_local;
        f.packets.push_back(rec);
        f.accumulated_bytes += rec.payload_len;
    }
    if (!saw_header) throw ParseError("flow file: empty file");
    return flows;
}

std::vector<Flow> read_flow_file(const std::string& path) {
    return read_flow_file_string(read_file(path));
}

}  // namespace sniforge::pcap
