#include "sniforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sniforge::synth {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

void push_u16(std::vector<std::uint8_t>& v, std::uint16_t x) {
    v.push_back(static_cast<std::uint8_t>(x >> 8));
    v.push_back(static_cast<std::uint8_t>(x & 0xff));
}

void push_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(static_cast<std::uint8_t>(x >> 24));
    v.push_back(static_cast<std::uint8_t>(x >> 16));
    v.push_back(static_cast<std::uint8_t>(x >> 8));
    v.push_back(static_cast<std::uint8_t>(x & 0xff));
}

void push_u32_le(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(static_cast<std::uint8_t>(x & 0xff));
    v.push_back(static_cast<std::uint8_t>(x >> 8));
    v.push_back(static_cast<std::uint8_t>(x >> 16));
    v.push_back(static_cast<std::uint8_t>(x >> 24));
}

std::uint16_t ip_checksum(std::span<const std::uint8_t> header) {
    std::uint32_t sum = 0;
    for (std::size_t i = 0; i + 1 < header.size(); i += 2)
        sum += (static_cast<std::uint32_t>(header[i]) << 8) | header[i + 1];
    while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
    return static_cast<std::uint16_t>(~sum);
}

constexpr std::size_t kHeaderBytes = 14 + 20 + 20;  // Ethernet + IPv4 + TCP

}  // namespace

std::vector<std::uint8_t> client_hello(std::string_view host, std::size_t pad_to) {
    // body after the 4-byte handshake header
    std::vector<std::uint8_t> body;
    push_u16(body, 0x0303);  // TLS 1.2
    std::uint64_t state = fnv1a(host);
    for (int i = 0; i < 32; ++i) body.push_back(static_cast<std::uint8_t>(splitmix64(state)));
    body.push_back(0x00);    // session id length
    push_u16(body, 0x0004);  // cipher suites length
    push_u16(body, 0x1301);
    push_u16(body, 0x002f);
    body.push_back(0x01);  // compression methods length
    body.push_back(0x00);  // null compression

    std::vector<std::uint8_t> sni_ext;
    push_u16(sni_ext, 0x0000);  // server_name
    push_u16(sni_ext, static_cast<std::uint16_t>(host.size() + 5));
    push_u16(sni_ext, static_cast<std::uint16_t>(host.size() + 3));  // list length
    sni_ext.push_back(0x00);                                         // host_name
    push_u16(sni_ext, static_cast<std::uint16_t>(host.size()));
    sni_ext.insert(sni_ext.end(), host.begin(), host.end());

    std::size_t minimal = 5 + 4 + body.size() + 2 + sni_ext.size();
    std::size_t pad_ext = 0, trailer = 0;
    if (pad_to > minimal) {
        std::size_t extra = pad_to - minimal;
        if (extra >= 4)
            pad_ext = extra - 4;  // padding extension payload
        else
            trailer = extra;  // bytes after the record, ignored by dissection
    }

    std::vector<std::uint8_t> extensions;
    extensions.insert(extensions.end(), sni_ext.begin(), sni_ext.end());
    if (pad_to > minimal && pad_to - minimal >= 4) {
        push_u16(extensions, 0x0015);  // padding
        push_u16(extensions, static_cast<std::uint16_t>(pad_ext));
        extensions.insert(extensions.end(), pad_ext, 0x00);
    }

    std::size_t hs_body = body.size() + 2 + extensions.size();
    std::vector<std::uint8_t> out;
    out.reserve(5 + 4 + hs_body + trailer);
    out.push_back(0x16);  // handshake record
    push_u16(out, 0x0301);
    push_u16(out, static_cast<std::uint16_t>(4 + hs_body));
    out.push_back(0x01);  // client hello
    out.push_back(static_cast<std::uint8_t>(hs_body >> 16));
    out.push_back(static_cast<std::uint8_t>(hs_body >> 8));
    out.push_back(static_cast<std::uint8_t>(hs_body & 0xff));
    out.insert(out.end(), body.begin(), body.end());
    push_u16(out, static_cast<std::uint16_t>(extensions.size()));
    out.insert(out.end(), extensions.begin(), extensions.end());
    out.insert(out.end(), trailer, 0x00);
    return out;
}

std::vector<ClassProfile> profiles_from_json(const nlohmann::json& j) {
    std::vector<ClassProfile> profiles;
    for (const auto& jp : j.at("profiles")) {
        ClassProfile p;
        p.label = jp.at("label").get<std::string>();
        p.packet_size_mean = jp.value("packet_size_mean", p.packet_size_mean);
        p.packet_size_spread = jp.value("packet_size_spread", p.packet_size_spread);
        p.payload_ratio = jp.value("payload_ratio", p.payload_ratio);
        p.iat_log_mean = jp.value("iat_log_mean", p.iat_log_mean);
        p.iat_log_sigma = jp.value("iat_log_sigma", p.iat_log_sigma);
        p.flow_len_mean = jp.value("flow_len_mean", p.flow_len_mean);
        p.flow_len_spread = jp.value("flow_len_spread", p.flow_len_spread);
        p.seed = jp.value("seed", p.seed);
        if (jp.contains("remote_ip")) p.remote_ip = pcap::parse_ipv4(jp.at("remote_ip").get<std::string>());
        if (p.packet_size_mean <= 0 || p.flow_len_mean < 2)
            throw std::invalid_argument("profile '" + p.label + "': mean sizes must be positive, flow length >= 2");
        profiles.push_back(std::move(p));
    }
    if (profiles.empty()) throw std::invalid_argument("profiles: need at least one");
    return profiles;
}

nlohmann::json profiles_to_json(std::span<const ClassProfile> profiles) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : profiles) {
        nlohmann::json jp;
        jp["label"] = p.label;
        jp["packet_size_mean"] = p.packet_size_mean;
        jp["packet_size_spread"] = p.packet_size_spread;
        jp["payload_ratio"] = p.payload_ratio;
        jp["iat_log_mean"] = p.iat_log_mean;
        jp["iat_log_sigma"] = p.iat_log_sigma;
        jp["flow_len_mean"] = p.flow_len_mean;
        jp["flow_len_spread"] = p.flow_len_spread;
        jp["seed"] = p.seed;
        if (p.remote_ip) jp["remote_ip"] = pcap::ipv4_to_string(p.remote_ip);
        arr.push_back(std::move(jp));
    }
    return nlohmann::json{{"profiles", std::move(arr)}};
}

std::vector<ClassProfile> default_profiles(int n_classes) {
    if (n_classes < 1) throw std::invalid_argument("default_profiles: need at least one class");
    static const char* named[] = {
        "alpha.example.com", "static3.bravo-cdn.net", "img-7.charlie.org",
        "api2.delta-edge.io", "www.echo5.net",
    };
    std::vector<ClassProfile> profiles;
    for (int i = 0; i < n_classes; ++i) {
        ClassProfile p;
        if (i < static_cast<int>(std::size(named))) {
            p.label = named[i];
        } else {
            std::string tag;
            for (int v = i; v >= 0; v = v / 26 - 1) tag.push_back(static_cast<char>('a' + v % 26));
            p.label = "svc-" + tag + ".example.net";
        }
        p.packet_size_mean = 120.0 + 200.0 * i;
        p.packet_size_spread = 30.0;
        p.payload_ratio = 0.9;
        p.iat_log_mean = -7.0 + 0.5 * i;
        p.iat_log_sigma = 0.6;
        p.flow_len_mean = 18.0 + 2.0 * i;
        p.flow_len_spread = 4.0;
        p.seed = static_cast<std::uint64_t>(i) + 1;
        profiles.push_back(std::move(p));
    }
    return profiles;
}

std::vector<pcap::Flow> generate_flows(std::span<const ClassProfile> profiles, std::size_t flows_per_class) {
    if (profiles.empty()) throw std::invalid_argument("generate_flows: need at least one profile");
    constexpr std::int64_t kBaseUsec = 1468972800LL * 1000000LL;

    std::vector<pcap::Flow> flows;
    flows.reserve(profiles.size() * flows_per_class);
    std::size_t global = 0;
    for (std::size_t pi = 0; pi < profiles.size(); ++pi) {
        const ClassProfile& p = profiles[pi];
        std::uint32_t remote_ip =
            p.remote_ip ? p.remote_ip : pcap::parse_ipv4("203.0.113.0") + 1 + static_cast<std::uint32_t>(pi % 254);
        std::size_t ch_bytes = client_hello(p.label).size();

        for (std::size_t fi = 0; fi < flows_per_class; ++fi, ++global) {
            Rng rng(derive_seed(p.seed, {fnv1a("flow"), fi}));
            pcap::Endpoint local{pcap::parse_ipv4("10.0.0.5") + static_cast<std::uint32_t>(global / 50000),
                                 static_cast<std::uint16_t>(5000 + global % 50000)};
            pcap::Endpoint remote{remote_ip, 443};

            pcap::Flow flow;
            flow.key = pcap::FlowKey::canonical(local, remote);
            flow.sni = p.label;

            long length = std::lround(rng.normal(p.flow_len_mean, p.flow_len_spread));
            length = std::clamp(length, 2L, 500L);

            std::int64_t ts = kBaseUsec + static_cast<std::int64_t>(global) * 137000;
            for (long i = 0; i < length; ++i) {
                pcap::PacketRecord rec;
                if (i > 0) {
                    double dt_sec = std::exp(rng.normal(p.iat_log_mean, p.iat_log_sigma));
                    ts += std::max<std::int64_t>(1, std::llround(dt_sec * 1e6));
                }
                rec.ts_usec = ts;
                if (i == 0) {
                    rec.dir = pcap::Direction::local_to_remote;
                    rec.payload_len = static_cast<std::uint32_t>(ch_bytes);
                    rec.frame_len = static_cast<std::uint32_t>(kHeaderBytes + ch_bytes);
                } else {
                    rec.dir = rng.uniform() < 0.55 ? pcap::Direction::remote_to_local
                                                   : pcap::Direction::local_to_remote;
                    long frame = std::lround(rng.normal(p.packet_size_mean, p.packet_size_spread));
                    frame = std::clamp(frame, 60L, 1514L);
                    rec.frame_len = static_cast<std::uint32_t>(frame);
                    long room = frame - static_cast<long>(kHeaderBytes);
                    long payload = room > 0 ? std::lround(p.payload_ratio * static_cast<double>(room)) : 0;
                    rec.payload_len = static_cast<std::uint32_t>(std::clamp(payload, 0L, std::max(room, 0L)));
                }
                flow.accumulated_bytes += rec.payload_len;
                flow.packets.push_back(rec);
            }
            flows.push_back(std::move(flow));
        }
    }
    return flows;
}

std::vector<std::uint8_t> emit_pcap(std::span<const pcap::Flow> flows) {
    std::vector<std::uint8_t> out;
    // global header, native byte order
    push_u32_le(out, 0xa1b2c3d4);
    out.push_back(0x02);
    out.push_back(0x00);  // version 2.4
    out.push_back(0x04);
    out.push_back(0x00);
    push_u32_le(out, 0);      // thiszone
    push_u32_le(out, 0);      // sigfigs
    push_u32_le(out, 65535);  // snaplen
    push_u32_le(out, 1);      // Ethernet

    struct Ref {
        std::size_t flow;
        std::size_t pkt;
        std::int64_t ts;
    };
    std::vector<Ref> order;
    for (std::size_t f = 0; f < flows.size(); ++f)
        for (std::size_t i = 0; i < flows[f].packets.size(); ++i)
            order.push_back({f, i, flows[f].packets[i].ts_usec});
    std::stable_sort(order.begin(), order.end(), [](const Ref& a, const Ref& b) { return a.ts < b.ts; });

    // per-flow TCP state
    struct TcpState {
        std::uint32_t seq_local = 1000;
        std::uint32_t seq_remote = 2000;
        bool hello_written = false;
    };
    std::vector<TcpState> state(flows.size());

    const auto& local_nets = pcap::rfc1918_nets();
    auto is_local = [&](std::uint32_t ip) {
        return std::any_of(local_nets.begin(), local_nets.end(),
                           [&](const pcap::Cidr& c) { return c.contains(ip); });
    };

    std::uint16_t ip_id = 1;
    for (const Ref& ref : order) {
        const pcap::Flow& flow = flows[ref.flow];
        const pcap::PacketRecord& rec = flow.packets[ref.pkt];
        TcpState& st = state[ref.flow];

        // a is local when it is the flow's single RFC1918 endpoint
        pcap::Endpoint local = flow.key.a, remote = flow.key.b;
        if (!is_local(local.ip) && is_local(remote.ip)) std::swap(local, remote);

        bool outbound = rec.dir == pcap::Direction::local_to_remote;
        pcap::Endpoint src = outbound ? local : remote;
        pcap::Endpoint dst = outbound ? remote : local;

        std::vector<std::uint8_t> payload;
        if (outbound && !st.hello_written && rec.payload_len > 0) {
            payload = client_hello(flow.sni, rec.payload_len);
            st.hello_written = true;
        } else {
            payload.assign(rec.payload_len, 0x78);
        }

        std::vector<std::uint8_t> frame;
        frame.reserve(kHeaderBytes + payload.size());
        // Ethernet
        const std::uint8_t mac_local[6] = {0x02, 0, 0, 0, 0, 0x01};
        const std::uint8_t mac_remote[6] = {0x02, 0, 0, 0, 0, 0x02};
        frame.insert(frame.end(), outbound ? mac_remote : mac_local, (outbound ? mac_remote : mac_local) + 6);
        frame.insert(frame.end(), outbound ? mac_local : mac_remote, (outbound ? mac_local : mac_remote) + 6);
        push_u16(frame, 0x0800);
        // IPv4
        std::size_t ip_start = frame.size();
        frame.push_back(0x45);
        frame.push_back(0x00);
        push_u16(frame, static_cast<std::uint16_t>(40 + payload.size()));
        push_u16(frame, ip_id++);
        push_u16(frame, 0x4000);  // DF
        frame.push_back(64);      // TTL
        frame.push_back(6);       // TCP
        push_u16(frame, 0);       // checksum placeholder
        push_u32(frame, src.ip);
        push_u32(frame, dst.ip);
        std::uint16_t csum = ip_checksum(std::span(frame).subspan(ip_start, 20));
        frame[ip_start + 10] = static_cast<std::uint8_t>(csum >> 8);
        frame[ip_start + 11] = static_cast<std::uint8_t>(csum & 0xff);
        // TCP
        std::uint32_t& seq = outbound ? st.seq_local : st.seq_remote;
        std::uint32_t ack = outbound ? st.seq_remote : st.seq_local;
        push_u16(frame, src.port);
        push_u16(frame, dst.port);
        push_u32(frame, seq);
        push_u32(frame, ack);
        frame.push_back(0x50);  // data offset 5
        frame.push_back(payload.empty() ? 0x10 : 0x18);  // ACK / PSH|ACK
        push_u16(frame, 65535);
        push_u16(frame, 0);  // checksum not filled
        push_u16(frame, 0);  // urgent
        frame.insert(frame.end(), payload.begin(), payload.end());
        seq += static_cast<std::uint32_t>(payload.size());

        // record header
        push_u32_le(out, static_cast<std::uint32_t>(rec.ts_usec / 1000000));
        push_u32_le(out, static_cast<std::uint32_t>(rec.ts_usec % 1000000));
        push_u32_le(out, static_cast<std::uint32_t>(frame.size()));
        push_u32_le(out, rec.frame_len);
        out.insert(out.end(), frame.begin(), frame.end());
    }
    return out;
}

}  // namespace sniforge::synth
