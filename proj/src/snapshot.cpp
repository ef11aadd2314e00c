#include "knetaudit/snapshot.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace knetaudit {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream iss(line);
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

BindScope scope_from_address(const std::string& addr) {
    if (addr == "0.0.0.0" || addr == "::" || addr == "*" || addr.empty())
        return {BindScopeKind::AllInterfaces, ""};
    if (addr == "::1" || addr == "127.0.0.1" || addr.rfind("127.", 0) == 0)
        return {BindScopeKind::Loopback, ""};
    return {BindScopeKind::SpecificAddress, addr};
}

// Splits "addr:port" on the last colon; handles "[::]:8080" and ":::8080".
bool split_local_address(const std::string& local, std::string& addr, int& port) {
    auto pos = local.rfind(':');
    if (pos == std::string::npos || pos + 1 >= local.size()) return false;
    std::string port_str = local.substr(pos + 1);
    if (port_str == "*") return false;
    try {
        size_t used = 0;
        port = std::stoi(port_str, &used);
        if (used != port_str.size()) return false;
    } catch (const std::exception&) {
        return false;
    }
    if (port < 1 || port > 65535) return false;
    addr = local.substr(0, pos);
    if (addr.size() >= 2 && addr.front() == '[' && addr.back() == ']')
        addr = addr.substr(1, addr.size() - 2);
    return true;
}

std::string ss_process_name(const std::string& field) {
    // users:(("java",pid=1,fd=5))
    auto start = field.find("((\"");
    if (start == std::string::npos) return "";
    start += 3;
    auto end = field.find('"', start);
    if (end == std::string::npos) return "";
    return field.substr(start, end - start);
}

bool is_header_line(const std::string& line) {
    return line.rfind("Active", 0) == 0 || line.rfind("Proto", 0) == 0 ||
           line.rfind("Netid", 0) == 0 || line.rfind("State", 0) == 0;
}

}  // namespace

std::string BindScope::str() const {
    switch (kind) {
        case BindScopeKind::Loopback: return "loopback";
        case BindScopeKind::AllInterfaces: return "all_interfaces";
        case BindScopeKind::SpecificAddress: return address;
    }
    return "all_interfaces";
}

BindScope BindScope::from_string(const std::string& s) {
    if (s == "loopback") return {BindScopeKind::Loopback, ""};
    if (s == "all_interfaces") return {BindScopeKind::AllInterfaces, ""};
    return scope_from_address(s);
}

std::vector<SocketRecord> parse_socket_listing(const std::string& text, ListingFormat format) {
    std::vector<SocketRecord> out;
    std::istringstream stream(text);
    std::string line;
    int line_no = 0;
    while (std::getline(stream, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || is_header_line(line)) continue;
        auto tokens = split_ws(line);
        if (tokens.empty()) continue;

        std::string proto_tok = lower(tokens[0]);
        bool is_tcp = proto_tok == "tcp" || proto_tok == "tcp6";
        bool is_udp = proto_tok == "udp" || proto_tok == "udp6";

        std::string local;
        std::string process;
        bool listening = false;
        if (format == ListingFormat::Netstat) {
            if (!is_tcp && !is_udp)
                throw ParseError("unrecognized netstat line", -1, line_no);
            if (tokens.size() < 5)
                throw ParseError("truncated netstat line", -1, line_no);
            local = tokens[3];
            if (is_tcp) {
                listening = tokens.size() >= 6 && tokens[5] == "LISTEN";
                if (tokens.size() >= 7 && tokens[6] != "-") process = tokens[6];
            } else {
                listening = true;
                if (tokens.size() >= 6 && tokens[5] != "-") process = tokens[5];
            }
            // netstat reports "pid/name"
            auto slash = process.find('/');
            if (slash != std::string::npos) process = process.substr(slash + 1);
        } else {
            if (!is_tcp && !is_udp)
                throw ParseError("unrecognized ss line", -1, line_no);
            if (tokens.size() < 6)
                throw ParseError("truncated ss line", -1, line_no);
            local = tokens[4];
            listening = is_udp || tokens[1] == "LISTEN";
            if (tokens.size() >= 7) process = ss_process_name(tokens[6]);
        }
        if (!listening) continue;

        std::string addr;
        int port = 0;
        if (!split_local_address(local, addr, port))
            throw ParseError("cannot parse local address '" + local + "'", -1, line_no);

        SocketRecord rec;
        rec.protocol = is_tcp ? Protocol::TCP : Protocol::UDP;
        rec.port = port;
        rec.scope = scope_from_address(addr);
        rec.process = process;
        out.push_back(rec);
    }
    return out;
}

namespace {

void reject_unknown_fields(const nlohmann::json& obj, const std::set<std::string>& known,
                           const std::string& context) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!known.contains(it.key()))
            throw ValidationError("unknown field '" + it.key() + "' in " + context +
                                  " (snapshot version 1)");
}

SocketRecord socket_from_json(const nlohmann::json& j, const std::string& context) {
    if (!j.is_object()) throw ValidationError("socket entry must be an object", context);
    reject_unknown_fields(j, {"proto", "port", "scope", "process"}, context);
    SocketRecord rec;
    auto proto = protocol_from_string(j.at("proto").get<std::string>());
    if (!proto) throw ValidationError("bad protocol in " + context, context + ".proto");
    rec.protocol = *proto;
    rec.port = j.at("port").get<int>();
    if (rec.port < 1 || rec.port > 65535)
        throw ValidationError("port out of range in " + context, context + ".port");
    rec.scope = BindScope::from_string(j.at("scope").get<std::string>());
    if (j.contains("process")) rec.process = j.at("process").get<std::string>();
    return rec;
}

nlohmann::json socket_to_json(const SocketRecord& rec) {
    nlohmann::json j;
    j["proto"] = lower(to_string(rec.protocol));
    j["port"] = rec.port;
    j["scope"] = rec.scope.str();
    if (!rec.process.empty()) j["process"] = rec.process;
    return j;
}

}  // namespace

RuntimeSnapshot parse_snapshot_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ValidationError("snapshot document must be an object");
    reject_unknown_fields(doc, {"version", "application_id", "iteration", "host_baseline",
                                "observations"},
                          "snapshot");
    if (doc.at("version").get<int>() != 1)
        throw ValidationError("unsupported snapshot version", "version");
    RuntimeSnapshot snap;
    snap.application_id = doc.at("application_id").get<std::string>();
    snap.iteration = doc.at("iteration").get<int>();
    if (snap.iteration != 1 && snap.iteration != 2)
        throw ValidationError("iteration must be 1 or 2", "iteration");
    for (const auto& j : doc.at("host_baseline"))
        snap.host_baseline.push_back(socket_from_json(j, "host_baseline"));
    std::set<std::string> pod_names;
    for (const auto& j : doc.at("observations")) {
        reject_unknown_fields(j, {"pod", "unit", "sockets"}, "observations");
        PodObservation obs;
        obs.pod_name = j.at("pod").get<std::string>();
        if (!pod_names.insert(obs.pod_name).second)
            throw ValidationError("duplicate pod name '" + obs.pod_name + "'", "observations.pod");
        const auto& unit = j.at("unit");
        reject_unknown_fields(unit, {"kind", "name", "namespace"}, "observations.unit");
        auto kind = workload_kind_from_string(unit.at("kind").get<std::string>());
        if (!kind) throw ValidationError("unknown workload kind", "observations.unit.kind");
        obs.owner_unit_id = {snap.application_id, unit.at("namespace").get<std::string>(), *kind,
                             unit.at("name").get<std::string>()};
        for (const auto& s : j.at("sockets"))
            obs.sockets.push_back(socket_from_json(s, "observations.sockets"));
        snap.observations.push_back(std::move(obs));
    }
    return snap;
}

RuntimeSnapshot load_snapshot_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw EnvironmentError("cannot open snapshot file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid snapshot document ") + path + ": " + e.what());
    }
    return parse_snapshot_json(doc);
}

nlohmann::json snapshot_to_json(const RuntimeSnapshot& snapshot) {
    nlohmann::json doc;
    doc["version"] = 1;
    doc["application_id"] = snapshot.application_id;
    doc["iteration"] = snapshot.iteration;
    doc["host_baseline"] = nlohmann::json::array();
    for (const auto& rec : snapshot.host_baseline)
        doc["host_baseline"].push_back(socket_to_json(rec));
    doc["observations"] = nlohmann::json::array();
    for (const auto& obs : snapshot.observations) {
        nlohmann::json j;
        j["pod"] = obs.pod_name;
        j["unit"] = {{"kind", to_string(obs.owner_unit_id.kind)},
                     {"name", obs.owner_unit_id.name},
                     {"namespace", obs.owner_unit_id.ns}};
        j["sockets"] = nlohmann::json::array();
        for (const auto& s : obs.sockets) j["sockets"].push_back(socket_to_json(s));
        doc["observations"].push_back(std::move(j));
    }
    return doc;
}

RuntimeSnapshot subtract_host_baseline(const RuntimeSnapshot& snapshot,
                                       const ApplicationBundle& bundle) {
    std::set<std::pair<Protocol, int>> baseline;
    for (const auto& rec : snapshot.host_baseline) baseline.insert({rec.protocol, rec.port});

    RuntimeSnapshot out = snapshot;
    if (baseline.empty()) return out;
    for (auto& obs : out.observations) {
        const ComputeUnit* unit = bundle.find_unit(obs.owner_unit_id);
        if (!unit || !unit->host_network) continue;
        std::erase_if(obs.sockets, [&](const SocketRecord& rec) {
            return baseline.contains({rec.protocol, rec.port});
        });
    }
    return out;
}

SnapshotDiff diff_iterations(const RuntimeSnapshot& s1, const RuntimeSnapshot& s2) {
    if (s1.application_id != s2.application_id)
        throw ValidationError("snapshot application_id mismatch: '" + s1.application_id +
                              "' vs '" + s2.application_id + "'");

    auto collect = [](const RuntimeSnapshot& s) {
        std::map<UnitId, std::set<SocketKey>> by_unit;
        for (const auto& obs : s.observations)
            for (const auto& rec : obs.sockets) by_unit[obs.owner_unit_id].insert(SocketKey::of(rec));
        return by_unit;
    };
    auto units1 = collect(s1);
    auto units2 = collect(s2);

    SnapshotDiff diff;
    std::set<UnitId> all_units;
    for (const auto& [id, _] : units1) all_units.insert(id);
    for (const auto& [id, _] : units2) all_units.insert(id);

    for (const auto& id : all_units) {
        auto it1 = units1.find(id);
        auto it2 = units2.find(id);
        const std::set<SocketKey> empty;
        const auto& set1 = it1 != units1.end() ? it1->second : empty;
        const auto& set2 = it2 != units2.end() ? it2->second : empty;
        if (it1 == units1.end())
            diff.diagnostics.push_back("unit " + id.str() + " observed only in iteration 2");
        if (it2 == units2.end())
            diff.diagnostics.push_back("unit " + id.str() + " observed only in iteration 1");

        UnitPortDiff& d = diff.units[id];
        for (const auto& key : set1) {
            if (set2.contains(key)) {
                d.stable.insert(key);
            } else if (key.protocol == Protocol::UDP) {
                d.dropped_udp.insert(key);
                diff.diagnostics.push_back("dropped single-iteration UDP port " +
                                           std::to_string(key.port) + " on " + id.str() +
                                           " (iteration 1 only)");
            } else {
                d.unstable1.insert(key);
            }
        }
        for (const auto& key : set2) {
            if (set1.contains(key)) continue;
            if (key.protocol == Protocol::UDP) {
                d.dropped_udp.insert(key);
                diff.diagnostics.push_back("dropped single-iteration UDP port " +
                                           std::to_string(key.port) + " on " + id.str() +
                                           " (iteration 2 only)");
            } else {
                d.unstable2.insert(key);
            }
        }
    }
    return diff;
}

}  // namespace knetaudit
