#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "sniforge/features.hpp"

using namespace sniforge;
using testutil::make_flow;
using testutil::random_flow;

TEST_CASE("percentile: linear interpolation") {
    std::vector<double> v = {1, 2, 3, 4};
    CHECK(feat::percentile(v, 0.5) == doctest::Approx(2.5));
    std::vector<double> single = {5};
    CHECK(feat::percentile(single, 0.25) == 5);
    std::vector<double> five = {10, 20, 30, 40, 50};
    CHECK(feat::percentile(five, 0.75) == doctest::Approx(testutil::oracle_percentile(five, 0.75)));
    CHECK(feat::percentile(five, 0.75) == doctest::Approx(40));
    CHECK(feat::percentile(five, 0.0) == 10);
    CHECK(feat::percentile(five, 1.0) == 50);
    CHECK_THROWS(feat::percentile({}, 0.5));
    CHECK_THROWS(feat::percentile(v, 1.5));
}

TEST_CASE("percentile matches the oracle on random samples") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = 1 + rng.below(40);
        std::vector<double> v(n);
        for (double& x : v) x = std::floor(rng.uniform(0, 100));  // duplicates likely
        double p = rng.uniform();
        CHECK(feat::percentile(v, p) == doctest::Approx(testutil::oracle_percentile(v, p)).epsilon(1e-12));
    }
}

TEST_CASE("stat_features hand-computed example") {
    // remote->local frames [100,200], local->remote [60]
    auto flow = make_flow({{0, 100, 50, -1}, {1000000, 200, 150, -1}, {2000000, 60, 10, 1}});
    feat::StatFeatureVector f = feat::stat_features(flow);
    const auto& names = feat::stat_feature_names();
    auto at = [&](const std::string& name) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return f[i];
        FAIL("missing feature ", name);
        return 0.0;
    };
    CHECK(at("pkt_num_all") == 3);
    CHECK(at("pkt_avg_all") == doctest::Approx(120.0));
    CHECK(at("pkt_var_all") == doctest::Approx(3466.67).epsilon(1e-5));
    CHECK(at("pkt_num_rl") == 2);
    CHECK(at("pkt_num_lr") == 1);
    CHECK(at("pkt_max_rl") == 200);
    CHECK(at("pay_max_rl") == 150);
    CHECK(at("pay_max_lr") == 10);
}

TEST_CASE("constant frames collapse every size statistic") {
    auto flow = make_flow({{0, 50, 10, -1}, {1000, 50, 10, -1}, {2000, 50, 10, -1}});
    feat::StatFeatureVector f = feat::stat_features(flow);
    const auto& names = feat::stat_feature_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i].starts_with("pkt_") && names[i].ends_with("_rl")) {
            if (names[i] == "pkt_num_rl")
                CHECK(f[i] == 3);
            else if (names[i] == "pkt_var_rl")
                CHECK(f[i] == 0);
            else
                CHECK(f[i] == 50);
        }
    }
}

TEST_CASE("combined inter-arrival percentiles interpolate") {
    auto flow = make_flow({{0, 100, 0, 1}, {1000000, 100, 0, -1}, {3000000, 100, 0, 1}});
    feat::StatFeatureVector f = feat::stat_features(flow);
    const auto& names = feat::stat_feature_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == "iat_p50_all") CHECK(f[i] == doctest::Approx(1.5));
}

TEST_CASE("empty and single-packet directions yield zero statistics") {
    auto flow = make_flow({{0, 100, 20, 1}});  // no remote->local packets at all
    feat::StatFeatureVector f = feat::stat_features(flow);
    const auto& names = feat::stat_feature_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i].ends_with("_rl")) CHECK(f[i] == 0.0);
        if (names[i].starts_with("iat_")) CHECK(f[i] == 0.0);  // single packet: no inter-arrivals
    }
}

TEST_CASE("42-feature contract: count, names, determinism") {
    CHECK(feat::stat_feature_names().size() == 42);
    Rng rng(3);
    pcap::Flow flow = random_flow(rng);
    feat::StatFeatureVector a = feat::stat_features(flow);
    feat::StatFeatureVector b = feat::stat_features(flow);
    CHECK(a == b);  // bitwise identical
    for (double v : a) CHECK(std::isfinite(v));
}

TEST_CASE("direction swap exchanges rl/lr groups and fixes combined") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        pcap::Flow flow = random_flow(rng);
        pcap::Flow swapped = flow;
        for (auto& p : swapped.packets)
            p.dir = p.dir == pcap::Direction::local_to_remote ? pcap::Direction::remote_to_local
                                                              : pcap::Direction::local_to_remote;
        feat::StatFeatureVector f = feat::stat_features(flow);
        feat::StatFeatureVector g = feat::stat_features(swapped);
        // packet-size groups: rl <-> lr, combined unchanged
        for (int j = 0; j < 7; ++j) {
            CHECK(f[j] == g[7 + j]);
            CHECK(f[7 + j] == g[j]);
            CHECK(f[14 + j] == g[14 + j]);
        }
        // inter-arrival groups
        for (int j = 0; j < 3; ++j) {
            CHECK(f[21 + j] == g[24 + j]);
            CHECK(f[24 + j] == g[21 + j]);
            CHECK(f[27 + j] == g[27 + j]);
        }
        // payload groups
        for (int j = 0; j < 6; ++j) {
            CHECK(f[30 + j] == g[36 + j]);
            CHECK(f[36 + j] == g[30 + j]);
        }
    }
}

TEST_CASE("iat_log formula") {
    std::vector<double> two = {0.0, 1.0};
    auto out = feat::iat_log(two);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == doctest::Approx(1e-6).epsilon(1e-3));  // ln(1 + 1e-6)

    std::vector<double> same = {5.0, 5.0};
    out = feat::iat_log(same);
    CHECK(out[1] == doctest::Approx(-13.8155).epsilon(1e-4));  // ln(1e-6)

    std::vector<double> one = {42.0};
    CHECK(feat::iat_log(one) == std::vector<double>{0.0});

    std::vector<double> decreasing = {2.0, 1.0};
    CHECK_THROWS(feat::iat_log(decreasing));
}

TEST_CASE("iat_log is strictly increasing in the inter-arrival") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        double a = rng.uniform(0, 10);
        double b = a + rng.uniform(1e-9, 10);
        std::vector<double> ta = {0.0, a};
        std::vector<double> tb = {0.0, b};
        CHECK(feat::iat_log(ta)[1] < feat::iat_log(tb)[1]);
    }
}

TEST_CASE("sequence_features pads on the left") {
    auto flow = make_flow({{0, 100, 10, 1}, {500000, 200, 20, -1}, {1500000, 300, 30, 1}});
    feat::SequenceSample s = feat::sequence_features(flow, 25);
    REQUIRE(s.packet_size.size() == 25);
    for (int i = 0; i < 22; ++i) {
        CHECK(s.packet_size[i] == 0);
        CHECK(s.payload_size[i] == 0);
        CHECK(s.iat_log[i] == 0);
        CHECK(s.direction[i] == 0);
    }
    CHECK(s.packet_size[22] == 100);
    CHECK(s.packet_size[24] == 300);
    CHECK(s.direction[22] == 1);
    CHECK(s.direction[23] == -1);
    CHECK(s.iat_log[22] == 0.0);  // first packet has no predecessor
    CHECK(s.iat_log[23] == doctest::Approx(std::log(0.5 + 1e-6)));
}

TEST_CASE("long flows truncate to the first n packets") {
    std::vector<std::tuple<std::int64_t, std::uint32_t, std::uint32_t, int>> pkts;
    for (int i = 0; i < 30; ++i) pkts.push_back({i * 1000, 100u + i, 10u, 1});
    feat::SequenceSample s = feat::sequence_features(make_flow(pkts), 25);
    CHECK(s.packet_size.front() == 100);  // packet 0, no padding
    CHECK(s.packet_size.back() == 124);   // packet 24; 25..29 dropped
}

TEST_CASE("direction channel per definition") {
    auto flow = make_flow({{0, 100, 10, 1}, {1000, 100, 10, -1}, {2000, 100, 10, 1}});
    feat::SequenceSample s = feat::sequence_features(flow, 5);
    CHECK(s.direction == std::vector<double>{0, 0, 1, -1, 1});
}

TEST_CASE("feature-oracle suite: >=50 random flows match the brute-force oracle") {
    Rng rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        pcap::Flow flow = random_flow(rng);
        feat::StatFeatureVector impl = feat::stat_features(flow);
        std::vector<double> oracle = testutil::oracle_stat_features(flow);
        REQUIRE(oracle.size() == 42);
        for (std::size_t i = 0; i < 42; ++i) {
            if (feat::stat_feature_names()[i].starts_with("pkt_num"))
                CHECK(impl[i] == oracle[i]);  // counts exact
            else
                CHECK(impl[i] == doctest::Approx(oracle[i]).epsilon(1e-9));
        }

        std::size_t n = 1 + rng.below(40);
        feat::SequenceSample s = feat::sequence_features(flow, n);
        feat::SequenceSample o = testutil::oracle_sequence_features(flow, n);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(s.packet_size[i] == o.packet_size[i]);
            CHECK(s.payload_size[i] == o.payload_size[i]);
            CHECK(s.direction[i] == o.direction[i]);
            CHECK(s.iat_log[i] == doctest::Approx(o.iat_log[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("sequence channels are finite and padding is consistent") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        pcap::Flow flow = random_flow(rng);
        feat::SequenceSample s = feat::sequence_features(flow, 25);
        std::size_t pad = 25 - std::min<std::size_t>(25, flow.packets.size());
        for (std::size_t i = 0; i < 25; ++i) {
            CHECK(std::isfinite(s.packet_size[i]));
            CHECK(std::isfinite(s.iat_log[i]));
            bool is_padding = s.direction[i] == 0.0;
            CHECK(is_padding == (i < pad));
        }
    }
}
