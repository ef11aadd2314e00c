#pragma once

#include <set>
#include <tuple>

#include "knetaudit/model.hpp"

namespace knetaudit {

enum class BindScopeKind { Loopback, AllInterfaces, SpecificAddress };

struct BindScope {
    BindScopeKind kind = BindScopeKind::AllInterfaces;
    std::string address;  // set only for SpecificAddress

    auto operator<=>(const BindScope&) const = default;
    std::string str() const;
    static BindScope from_string(const std::string& s);
};

struct SocketRecord {
    Protocol protocol = Protocol::TCP;
    int port = 0;  // 1-65535
    BindScope scope;
    std::string process;  // optional

    auto operator<=>(const SocketRecord&) const = default;
};

// Identity tuple used when comparing sockets across iterations.
struct SocketKey {
    Protocol protocol = Protocol::TCP;
    int port = 0;
    BindScope scope;

    auto operator<=>(const SocketKey&) const = default;
    static SocketKey of(const SocketRecord& r) { return {r.protocol, r.port, r.scope}; }
};

struct PodObservation {
    std::string pod_name;
    UnitId owner_unit_id;
    std::vector<SocketRecord> sockets;
};

struct RuntimeSnapshot {
    std::string application_id;
    int iteration = 1;  // 1 or 2
    std::vector<PodObservation> observations;
    std::vector<SocketRecord> host_baseline;
};

enum class ListingFormat { Netstat, Ss };

// Parses verbatim listening-socket output of netstat or ss. One record per
// LISTEN (TCP) or bound (UDP) line; headers are skipped, anything else is a
// parse error carrying the line number.
std::vector<SocketRecord> parse_socket_listing(const std::string& text, ListingFormat format);

// Versioned snapshot document (version 1), unknown fields rejected.
RuntimeSnapshot parse_snapshot_json(const nlohmann::json& doc);
RuntimeSnapshot load_snapshot_file(const std::string& path);
nlohmann::json snapshot_to_json(const RuntimeSnapshot& snapshot);

// Removes host-baseline (protocol, port) pairs from observations whose
// owning unit runs with hostNetwork; everything else is untouched.
RuntimeSnapshot subtract_host_baseline(const RuntimeSnapshot& snapshot,
                                       const ApplicationBundle& bundle);

struct UnitPortDiff {
    std::set<SocketKey> stable;      // present in both iterations
    std::set<SocketKey> unstable1;   // iteration 1 only
    std::set<SocketKey> unstable2;   // iteration 2 only
    std::set<SocketKey> dropped_udp; // single-iteration UDP, excluded from the above
};

struct SnapshotDiff {
    std::map<UnitId, UnitPortDiff> units;
    std::vector<std::string> diagnostics;
};

// Dual-run comparison keyed by owning compute unit (pod names change across
// restarts). UDP sockets seen in only one iteration are dropped with a
// diagnostic instead of being classified unstable.
SnapshotDiff diff_iterations(const RuntimeSnapshot& s1, const RuntimeSnapshot& s2);

}  // namespace knetaudit
