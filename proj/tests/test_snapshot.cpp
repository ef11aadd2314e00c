#include <doctest.h>

#include <algorithm>
#include <random>

#include "helpers.hpp"

using namespace knetaudit;
using namespace test_helpers;

namespace {

// Listing modeled on a Flink jobmanager: the declared 6121 is absent, an
// ephemeral port shows up instead.
const char* kNetstatListing =
    "Active Internet connections (only servers)\n"
    "Proto Recv-Q Send-Q Local Address           Foreign Address         State       "
    "PID/Program name\n"
    "tcp        0      0 0.0.0.0:6123            0.0.0.0:*               LISTEN      1/java\n"
    "tcp        0      0 0.0.0.0:8081            0.0.0.0:*               LISTEN      1/java\n"
    "tcp        0      0 0.0.0.0:43271           0.0.0.0:*               LISTEN      1/java\n";

}  // namespace

TEST_CASE("netstat listing parses listening sockets") {
    auto records = parse_socket_listing(kNetstatListing, ListingFormat::Netstat);
    REQUIRE(records.size() == 3);
    CHECK(records[0] == SocketRecord{Protocol::TCP, 6123, {BindScopeKind::AllInterfaces, ""},
                                     "java"});
    CHECK(records[1].port == 8081);
    CHECK(records[2].port == 43271);
    for (const auto& r : records) CHECK(r.scope.kind == BindScopeKind::AllInterfaces);
    // 6121 never appears
    for (const auto& r : records) CHECK(r.port != 6121);
}

TEST_CASE("loopback and specific addresses are classified") {
    auto records = parse_socket_listing(
        "tcp 0 0 127.0.0.1:9000 0.0.0.0:* LISTEN\n"
        "tcp6 0 0 ::1:9001 :::* LISTEN\n"
        "tcp 0 0 10.1.2.3:9002 0.0.0.0:* LISTEN\n"
        "udp 0 0 0.0.0.0:53 0.0.0.0:*\n",
        ListingFormat::Netstat);
    REQUIRE(records.size() == 4);
    CHECK(records[0] == SocketRecord{Protocol::TCP, 9000, {BindScopeKind::Loopback, ""}, ""});
    CHECK(records[1].scope.kind == BindScopeKind::Loopback);
    CHECK(records[2].scope == BindScope{BindScopeKind::SpecificAddress, "10.1.2.3"});
    CHECK(records[3] == SocketRecord{Protocol::UDP, 53, {BindScopeKind::AllInterfaces, ""}, ""});
}

TEST_CASE("non-listening tcp lines are skipped") {
    auto records = parse_socket_listing(
        "tcp 0 0 10.0.0.5:44123 93.184.216.34:443 ESTABLISHED\n", ListingFormat::Netstat);
    CHECK(records.empty());
}

TEST_CASE("header-only output yields empty list") {
    CHECK(parse_socket_listing("Active Internet connections (only servers)\n"
                               "Proto Recv-Q Send-Q Local Address Foreign Address State\n",
                               ListingFormat::Netstat)
              .empty());
    CHECK(parse_socket_listing("", ListingFormat::Netstat).empty());
}

TEST_CASE("unrecognized line reports its number") {
    try {
        parse_socket_listing("tcp 0 0 0.0.0.0:80 0.0.0.0:* LISTEN\ngarbage line here\n",
                             ListingFormat::Netstat);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
    }
}

TEST_CASE("ss listing parses state and process column") {
    auto records = parse_socket_listing(
        "Netid State  Recv-Q Send-Q Local Address:Port Peer Address:Port Process\n"
        "tcp   LISTEN 0      128    0.0.0.0:8081      0.0.0.0:*          "
        "users:((\"java\",pid=1,fd=5))\n"
        "tcp   ESTAB  0      0      10.0.0.2:3311     10.0.0.9:443\n"
        "udp   UNCONN 0      0      127.0.0.1:323     0.0.0.0:*\n"
        "tcp   LISTEN 0      128    [::]:9090         [::]:*\n",
        ListingFormat::Ss);
    REQUIRE(records.size() == 3);
    CHECK(records[0] == SocketRecord{Protocol::TCP, 8081, {BindScopeKind::AllInterfaces, ""},
                                     "java"});
    CHECK(records[1] == SocketRecord{Protocol::UDP, 323, {BindScopeKind::Loopback, ""}, ""});
    CHECK(records[2].port == 9090);
    CHECK(records[2].scope.kind == BindScopeKind::AllInterfaces);
}

TEST_CASE("snapshot document round trips and rejects unknown fields") {
    auto snap = mk_snapshot(1, {{"web", {sock(Protocol::TCP, 8080)}}},
                            {sock(Protocol::TCP, 22)});
    auto doc = snapshot_to_json(snap);
    auto parsed = parse_snapshot_json(doc);
    CHECK(snapshot_to_json(parsed) == doc);

    auto bad = doc;
    bad["extra"] = true;
    CHECK_THROWS_AS(parse_snapshot_json(bad), ValidationError);

    bad = doc;
    bad["observations"][0]["surprise"] = 1;
    CHECK_THROWS_AS(parse_snapshot_json(bad), ValidationError);

    bad = doc;
    bad["version"] = 2;
    CHECK_THROWS_AS(parse_snapshot_json(bad), ValidationError);

    bad = doc;
    bad["observations"].push_back(bad["observations"][0]);  // duplicate pod name
    CHECK_THROWS_AS(parse_snapshot_json(bad), ValidationError);
}

TEST_CASE("subtract_host_baseline only touches hostNetwork units") {
    auto bundle = mk_bundle({mk_unit("exporter", {{"app", "exporter"}}, {{9100}},
                                     WorkloadKind::DaemonSet, true),
                             mk_unit("web", {{"app", "web"}}, {{8080}})});
    RuntimeSnapshot snap;
    snap.application_id = "app";
    snap.iteration = 1;
    snap.host_baseline = {sock(Protocol::TCP, 22)};
    snap.observations.push_back({"exporter-1",
                                 {"app", "default", WorkloadKind::DaemonSet, "exporter"},
                                 {sock(Protocol::TCP, 22), sock(Protocol::TCP, 9100)}});
    snap.observations.push_back({"web-1",
                                 {"app", "default", WorkloadKind::Deployment, "web"},
                                 {sock(Protocol::TCP, 22)}});

    auto out = subtract_host_baseline(snap, bundle);
    REQUIRE(out.observations.size() == 2);
    REQUIRE(out.observations[0].sockets.size() == 1);
    CHECK(out.observations[0].sockets[0].port == 9100);
    // non-hostNetwork pod keeps its own port 22
    REQUIRE(out.observations[1].sockets.size() == 1);
    CHECK(out.observations[1].sockets[0].port == 22);

    snap.host_baseline.clear();
    auto unchanged = subtract_host_baseline(snap, bundle);
    CHECK(unchanged.observations[0].sockets.size() == 2);
}

TEST_CASE("diff_iterations separates stable from unstable ports") {
    auto s1 = mk_snapshot(1, {{"flink", {sock(Protocol::TCP, 6123), sock(Protocol::TCP, 8081),
                                         sock(Protocol::TCP, 43271)}}});
    auto s2 = mk_snapshot(2, {{"flink", {sock(Protocol::TCP, 6123), sock(Protocol::TCP, 8081),
                                         sock(Protocol::TCP, 51844)}}});
    auto diff = diff_iterations(s1, s2);
    REQUIRE(diff.units.size() == 1);
    const auto& d = diff.units.begin()->second;
    CHECK(d.stable.size() == 2);
    CHECK(d.unstable1 == std::set<SocketKey>{{Protocol::TCP, 43271, {}}});
    CHECK(d.unstable2 == std::set<SocketKey>{{Protocol::TCP, 51844, {}}});

    // symmetric in its unstable output
    auto swapped = diff_iterations(s2, s1);
    const auto& sd = swapped.units.begin()->second;
    CHECK(sd.stable == d.stable);
    std::set<SocketKey> u1, u2;
    std::set_union(d.unstable1.begin(), d.unstable1.end(), d.unstable2.begin(), d.unstable2.end(),
                   std::inserter(u1, u1.begin()));
    std::set_union(sd.unstable1.begin(), sd.unstable1.end(), sd.unstable2.begin(),
                   sd.unstable2.end(), std::inserter(u2, u2.begin()));
    CHECK(u1 == u2);
}

TEST_CASE("identical iterations have no unstable ports") {
    auto s1 = mk_snapshot(1, {{"web", {sock(Protocol::TCP, 8080)}}});
    auto s2 = mk_snapshot(2, {{"web", {sock(Protocol::TCP, 8080)}}});
    auto diff = diff_iterations(s1, s2);
    const auto& d = diff.units.begin()->second;
    CHECK(d.unstable1.empty());
    CHECK(d.unstable2.empty());
    CHECK(d.stable.size() == 1);
}

TEST_CASE("unit present in one iteration only is unstable with a warning") {
    auto s1 = mk_snapshot(1, {{"web", {sock(Protocol::TCP, 8080)}}});
    auto s2 = mk_snapshot(2, {});
    auto diff = diff_iterations(s1, s2);
    const auto& d = diff.units.begin()->second;
    CHECK(d.stable.empty());
    CHECK(d.unstable1.size() == 1);
    REQUIRE(diff.diagnostics.size() == 1);
    CHECK(diff.diagnostics[0].find("iteration 1") != std::string::npos);
}

TEST_CASE("single-iteration UDP records are dropped with a diagnostic") {
    auto s1 = mk_snapshot(1, {{"web", {sock(Protocol::TCP, 8080), sock(Protocol::UDP, 5353)}}});
    auto s2 = mk_snapshot(2, {{"web", {sock(Protocol::TCP, 8080)}}});
    auto diff = diff_iterations(s1, s2);
    const auto& d = diff.units.begin()->second;
    CHECK(d.unstable1.empty());
    CHECK(d.unstable2.empty());
    CHECK(d.dropped_udp == std::set<SocketKey>{{Protocol::UDP, 5353, {}}});
    bool noted = false;
    for (const auto& diag : diff.diagnostics)
        if (diag.find("UDP") != std::string::npos) noted = true;
    CHECK(noted);

    // UDP in both iterations is trusted
    auto s2b = mk_snapshot(2, {{"web", {sock(Protocol::TCP, 8080), sock(Protocol::UDP, 5353)}}});
    auto diff2 = diff_iterations(s1, s2b);
    CHECK(diff2.units.begin()->second.stable.size() == 2);
}

TEST_CASE("application_id mismatch is an input error") {
    auto s1 = mk_snapshot(1, {}, {}, "a");
    auto s2 = mk_snapshot(2, {}, {}, "b");
    CHECK_THROWS_AS(diff_iterations(s1, s2), ValidationError);
}

TEST_CASE("stable and unstable partition the observed union") {
    std::mt19937 rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        auto random_sockets = [&] {
            std::vector<SocketRecord> sockets;
            int n = std::uniform_int_distribution<int>(0, 6)(rng);
            for (int i = 0; i < n; ++i) {
                Protocol proto =
                    std::uniform_int_distribution<int>(0, 1)(rng) ? Protocol::TCP : Protocol::UDP;
                int port = std::uniform_int_distribution<int>(8000, 8005)(rng);
                sockets.push_back(sock(proto, port));
            }
            return sockets;
        };
        auto s1 = mk_snapshot(1, {{"u", random_sockets()}});
        auto s2 = mk_snapshot(2, {{"u", random_sockets()}});
        std::set<SocketKey> expected;
        for (const auto& r : s1.observations[0].sockets) expected.insert(SocketKey::of(r));
        for (const auto& r : s2.observations[0].sockets) expected.insert(SocketKey::of(r));

        auto diff = diff_iterations(s1, s2);
        std::set<SocketKey> got;
        if (!diff.units.empty()) {
            const auto& d = diff.units.begin()->second;
            for (const auto* s : {&d.stable, &d.unstable1, &d.unstable2, &d.dropped_udp})
                got.insert(s->begin(), s->end());
        }
        CHECK(got == expected);
    }
}
