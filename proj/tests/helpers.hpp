#pragma once

// Shared fixture builders and independent oracles for the test suite. The
// oracles are written straight from the selector/policy semantics and must
// stay independent of the implementation they check.

#include <knetaudit/model.hpp>
#include <knetaudit/snapshot.hpp>

namespace test_helpers {

using namespace knetaudit;

struct PortSpec {
    int port;
    Protocol proto = Protocol::TCP;
    std::string name = "";
};

inline ComputeUnit mk_unit(const std::string& name, LabelSet labels,
                           std::vector<PortSpec> ports = {},
                           WorkloadKind kind = WorkloadKind::Deployment,
                           bool host_network = false, const std::string& app = "app",
                           const std::string& ns = "default") {
    ComputeUnit unit;
    unit.id = {app, ns, kind, name};
    unit.pod_labels = std::move(labels);
    ContainerSpec container;
    container.name = "main";
    container.image = "img:latest";
    for (const auto& p : ports) container.declared_ports.push_back({p.port, p.proto, p.name});
    unit.containers.push_back(std::move(container));
    unit.host_network = host_network;
    return unit;
}

struct SvcPortSpec {
    int port;
    std::optional<int> target_number = std::nullopt;  // default: == port
    std::string target_name = "";
    Protocol proto = Protocol::TCP;
};

inline ServiceSpec mk_service(const std::string& name, std::optional<LabelSet> selector,
                              std::vector<SvcPortSpec> ports, bool headless = false,
                              const std::string& app = "app", const std::string& ns = "default") {
    ServiceSpec svc;
    svc.id = {app, ns, name};
    svc.selector = selector ? LabelSelector::equality(*selector) : LabelSelector::absent();
    for (const auto& p : ports) {
        ServicePort sp;
        sp.port = p.port;
        sp.protocol = p.proto;
        if (!p.target_name.empty())
            sp.target_name = p.target_name;
        else
            sp.target_number = p.target_number.value_or(p.port);
        svc.ports.push_back(sp);
    }
    svc.headless = headless;
    return svc;
}

inline NetworkPolicySpec mk_policy(const std::string& name, LabelSelector pod_selector,
                                   std::vector<PolicyRule> ingress_rules = {},
                                   const std::string& app = "app",
                                   const std::string& ns = "default") {
    NetworkPolicySpec pol;
    pol.id = {app, ns, name};
    pol.pod_selector = std::move(pod_selector);
    pol.applies_ingress = true;
    pol.ingress_rules = std::move(ingress_rules);
    return pol;
}

inline PolicyRule allow_peers_ports(std::vector<LabelSet> peer_labels,
                                    std::vector<std::pair<Protocol, int>> ports) {
    PolicyRule rule;
    for (auto& labels : peer_labels) {
        PolicyPeer peer;
        peer.pod_selector = LabelSelector::equality(std::move(labels));
        rule.peers.push_back(std::move(peer));
    }
    for (const auto& [proto, port] : ports) {
        PolicyPort pp;
        pp.protocol = proto;
        pp.port = port;
        rule.ports.push_back(pp);
    }
    return rule;
}

inline ApplicationBundle mk_bundle(std::vector<ComputeUnit> units,
                                   std::vector<ServiceSpec> services = {},
                                   std::vector<NetworkPolicySpec> policies = {},
                                   const std::string& app = "app") {
    ApplicationBundle bundle;
    bundle.application_id = app;
    bundle.ns = "default";
    bundle.compute_units = std::move(units);
    bundle.services = std::move(services);
    bundle.policies = std::move(policies);
    return bundle;
}

inline SocketRecord sock(Protocol proto, int port,
                         BindScopeKind scope = BindScopeKind::AllInterfaces,
                         const std::string& addr = "") {
    return {proto, port, {scope, addr}, ""};
}

inline RuntimeSnapshot mk_snapshot(int iteration,
                                   std::map<std::string, std::vector<SocketRecord>> by_unit,
                                   std::vector<SocketRecord> host_baseline = {},
                                   const std::string& app = "app",
                                   WorkloadKind kind = WorkloadKind::Deployment) {
    RuntimeSnapshot snap;
    snap.application_id = app;
    snap.iteration = iteration;
    snap.host_baseline = std::move(host_baseline);
    for (auto& [unit_name, sockets] : by_unit) {
        PodObservation obs;
        obs.pod_name = unit_name + "-pod-" + std::to_string(iteration);
        obs.owner_unit_id = {app, "default", kind, unit_name};
        obs.sockets = std::move(sockets);
        snap.observations.push_back(std::move(obs));
    }
    return snap;
}

// Naive selector evaluator written directly from the four operator
// definitions; used as the oracle for matches().
inline bool oracle_matches(const LabelSelector& sel, const LabelSet& labels) {
    if (!sel.present) return false;
    for (const auto& [k, v] : sel.match_labels) {
        bool found = false;
        for (const auto& [lk, lv] : labels)
            if (lk == k && lv == v) found = true;
        if (!found) return false;
    }
    for (const auto& req : sel.match_expressions) {
        bool present = labels.count(req.key) > 0;
        std::string value = present ? labels.at(req.key) : "";
        bool in_set = false;
        for (const auto& v : req.values)
            if (present && v == value) in_set = true;
        if (req.op == SelectorOp::In && !(present && in_set)) return false;
        if (req.op == SelectorOp::NotIn && !(!present || !in_set)) return false;
        if (req.op == SelectorOp::Exists && !present) return false;
        if (req.op == SelectorOp::DoesNotExist && present) return false;
    }
    return true;
}

// Exhaustive reachability evaluator enumerating every (policy, rule, peer,
// port) clause literally from the policy semantics.
inline bool oracle_ingress_allowed(const ComputeUnit& src, const ComputeUnit& dst,
                                   Protocol protocol, int port, const ApplicationBundle& bundle) {
    if (dst.host_network) return true;
    std::vector<const NetworkPolicySpec*> applicable;
    for (const auto& pol : bundle.policies)
        if (pol.applies_ingress && pol.id.ns == dst.id.ns &&
            oracle_matches(pol.pod_selector, dst.pod_labels))
            applicable.push_back(&pol);
    if (applicable.empty()) return true;
    for (const auto* pol : applicable) {
        for (const auto& rule : pol->ingress_rules) {
            bool peer_ok = rule.peers.empty();
            for (const auto& peer : rule.peers) {
                bool this_peer = true;
                if (peer.ip_block) {
                    this_peer = true;
                } else {
                    if (peer.namespace_selector) {
                        LabelSet ns_labels = {{"kubernetes.io/metadata.name", src.id.ns}};
                        if (!oracle_matches(*peer.namespace_selector, ns_labels))
                            this_peer = false;
                    } else if (src.id.ns != pol->id.ns) {
                        this_peer = false;
                    }
                    if (this_peer && peer.pod_selector &&
                        !oracle_matches(*peer.pod_selector, src.pod_labels))
                        this_peer = false;
                }
                if (this_peer) peer_ok = true;
            }
            if (!peer_ok) continue;
            if (rule.ports.empty()) return true;
            for (const auto& pp : rule.ports) {
                Protocol rule_proto = pp.protocol.value_or(Protocol::TCP);
                if (rule_proto != protocol) continue;
                if (!pp.port && pp.port_name.empty()) return true;
                std::optional<int> lower = pp.port;
                if (!lower) lower = dst.port_number_for_name(pp.port_name);
                if (!lower) continue;
                int upper = pp.end_port.value_or(*lower);
                if (port >= *lower && port <= upper) return true;
            }
        }
    }
    return false;
}

inline std::vector<Rule> rules_of(const std::vector<Finding>& findings) {
    std::vector<Rule> rules;
    for (const auto& f : findings) rules.push_back(f.rule);
    return rules;
}

}  // namespace test_helpers
