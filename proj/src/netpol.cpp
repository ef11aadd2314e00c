#include "knetaudit/netpol.hpp"

#include <algorithm>

#include "knetaudit/selectors.hpp"

namespace knetaudit {

namespace {

// Namespaces are modeled through the label Kubernetes sets on every
// namespace object; richer namespace labeling is out of scope.
LabelSet namespace_labels(const std::string& ns) {
    return {{"kubernetes.io/metadata.name", ns}};
}

bool peer_matches(const PolicyPeer& peer, const ComputeUnit& src, const std::string& policy_ns) {
    if (peer.ip_block) return true;  // approximation: any in-cluster source
    if (peer.namespace_selector) {
        if (!matches(*peer.namespace_selector, namespace_labels(src.id.ns))) return false;
    } else {
        // podSelector-only peers select pods in the policy's own namespace
        if (src.id.ns != policy_ns) return false;
    }
    if (peer.pod_selector && !matches(*peer.pod_selector, src.pod_labels)) return false;
    return true;
}

bool port_matches(const PolicyPort& rule_port, Protocol protocol, int port,
                  const ComputeUnit& dst) {
    Protocol rule_proto = rule_port.protocol.value_or(Protocol::TCP);
    if (rule_proto != protocol) return false;
    if (!rule_port.port && rule_port.port_name.empty()) return true;  // all ports
    int lower = 0;
    if (rule_port.port) {
        lower = *rule_port.port;
    } else {
        auto resolved = dst.port_number_for_name(rule_port.port_name);
        if (!resolved) return false;
        lower = *resolved;
    }
    int upper = rule_port.end_port.value_or(lower);
    return port >= lower && port <= upper;
}

bool rule_admits(const PolicyRule& rule, const ComputeUnit& src, Protocol protocol, int port,
                 const ComputeUnit& dst, const std::string& policy_ns) {
    bool peer_ok = rule.peers.empty();
    for (const auto& peer : rule.peers)
        if (peer_matches(peer, src, policy_ns)) peer_ok = true;
    if (!peer_ok) return false;
    if (rule.ports.empty()) return true;
    for (const auto& p : rule.ports)
        if (port_matches(p, protocol, port, dst)) return true;
    return false;
}

ComputeUnit synthetic_attacker(const std::string& ns) {
    ComputeUnit attacker;
    attacker.id = {"attacker", ns, WorkloadKind::Pod, "attacker"};
    attacker.host_network = false;
    return attacker;
}

}  // namespace

nlohmann::json Endpoint::to_json() const {
    nlohmann::json j;
    j["unit"] = unit_id.str();
    j["protocol"] = to_string(protocol);
    j["port"] = port;
    j["via"] = via;
    return j;
}

std::vector<const NetworkPolicySpec*> effective_ingress_policies(const ComputeUnit& dst,
                                                                 const ApplicationBundle& bundle) {
    std::vector<const NetworkPolicySpec*> out;
    for (const auto& pol : bundle.policies)
        if (pol.applies_ingress && pol.id.ns == dst.id.ns &&
            matches(pol.pod_selector, dst.pod_labels))
            out.push_back(&pol);
    return out;
}

bool is_ingress_allowed(const ComputeUnit& src, const ComputeUnit& dst, Protocol protocol,
                        int port, const ApplicationBundle& bundle) {
    if (dst.host_network) return true;  // policies do not apply to the host network
    auto policies = effective_ingress_policies(dst, bundle);
    if (policies.empty()) return true;  // default allow-all
    for (const auto* pol : policies)
        for (const auto& rule : pol->ingress_rules)
            if (rule_admits(rule, src, protocol, port, dst, pol->id.ns)) return true;
    return false;
}

std::vector<const NetworkPolicySpec*> effective_egress_policies(const ComputeUnit& src,
                                                                const ApplicationBundle& bundle) {
    std::vector<const NetworkPolicySpec*> out;
    for (const auto& pol : bundle.policies)
        if (pol.applies_egress && pol.id.ns == src.id.ns &&
            matches(pol.pod_selector, src.pod_labels))
            out.push_back(&pol);
    return out;
}

bool is_egress_allowed(const ComputeUnit& src, const ComputeUnit& dst, Protocol protocol, int port,
                       const ApplicationBundle& bundle) {
    if (src.host_network) return true;
    auto policies = effective_egress_policies(src, bundle);
    if (policies.empty()) return true;
    for (const auto* pol : policies)
        for (const auto& rule : pol->egress_rules)
            if (rule_admits(rule, dst, protocol, port, dst, pol->id.ns)) return true;
    return false;
}

namespace {

struct ImplicatedPort {
    const ComputeUnit* unit;
    Protocol protocol;
    int port;
};

const ComputeUnit* unit_by_subject(const ApplicationBundle& bundle, const std::string& subject) {
    for (const auto& unit : bundle.compute_units)
        if (unit.id.str() == subject) return &unit;
    return nullptr;
}

void collect_implicated(const ApplicationBundle& bundle, const Finding& f,
                        std::vector<ImplicatedPort>& out) {
    auto push = [&](const ComputeUnit* unit, const std::string& proto_str, int port) {
        if (!unit) return;
        auto proto = protocol_from_string(proto_str);
        if (!proto || port < 1) return;
        out.push_back({unit, *proto, port});
    };
    switch (f.rule) {
        case Rule::M1:
        case Rule::M3: {
            const ComputeUnit* unit = unit_by_subject(bundle, f.subjects.at(0));
            push(unit, f.evidence.value("protocol", ""), f.evidence.value("port", 0));
            break;
        }
        case Rule::M2: {
            const ComputeUnit* unit = unit_by_subject(bundle, f.subjects.at(0));
            for (const char* key : {"iteration1_ports", "iteration2_ports"})
                if (f.evidence.contains(key))
                    for (const auto& p : f.evidence.at(key))
                        push(unit, p.value("protocol", ""), p.value("port", 0));
            break;
        }
        case Rule::M5A:
        case Rule::M5B:
        case Rule::M5C: {
            if (f.subjects.size() < 2) break;
            const ComputeUnit* unit = unit_by_subject(bundle, f.subjects.at(1));
            if (f.evidence.contains("resolved") && f.evidence.at("resolved").is_number())
                push(unit, f.evidence.value("protocol", ""),
                     f.evidence.at("resolved").get<int>());
            break;
        }
        default:
            break;
    }
}

}  // namespace

std::vector<Endpoint> residual_exposure(const RuleContext& ctx,
                                        const std::vector<Finding>& findings,
                                        const std::string& attacker_namespace) {
    if (!ctx.has_runtime())
        throw ValidationError("residual exposure analysis requires both snapshot iterations");
    const ApplicationBundle& bundle = *ctx.bundle;

    std::vector<ImplicatedPort> implicated;
    for (const auto& f : findings) collect_implicated(bundle, f, implicated);

    std::set<Endpoint> endpoints;
    for (const auto& ip : implicated) {
        std::string ns = attacker_namespace.empty() ? ip.unit->id.ns : attacker_namespace;
        ComputeUnit attacker = synthetic_attacker(ns);
        if (!is_ingress_allowed(attacker, *ip.unit, ip.protocol, ip.port, bundle)) continue;
        endpoints.insert({ip.unit->id, ip.protocol, ip.port, "direct_pod"});
        for (const auto& svc : bundle.services) {
            if (!matches(svc.selector, ip.unit->pod_labels)) continue;
            for (const auto& sp : svc.ports) {
                if (sp.protocol != ip.protocol) continue;
                auto resolved = resolve_target_port(sp, *ip.unit);
                if (resolved && *resolved == ip.port)
                    endpoints.insert(
                        {ip.unit->id, ip.protocol, ip.port, "service:" + svc.id.str("Service")});
            }
        }
    }
    return {endpoints.begin(), endpoints.end()};
}

}  // namespace knetaudit
