#pragma once

#include <compare>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace knetaudit {

// Thrown when an input document cannot be parsed at all.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string msg, int document_index = -1, int line = -1)
        : std::runtime_error(std::move(msg)), document_index(document_index), line(line) {}
    int document_index;
    int line;
};

// Thrown when a document parses but violates a resource contract.
class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string msg, std::string field_path = "")
        : std::runtime_error(std::move(msg)), field_path(std::move(field_path)) {}
    std::string field_path;
};

// Missing external tool, unusable path, bad process exit.
class EnvironmentError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Protocol { TCP, UDP, SCTP };

std::string to_string(Protocol p);
std::optional<Protocol> protocol_from_string(const std::string& s);

enum class WorkloadKind { Pod, Deployment, StatefulSet, DaemonSet, ReplicaSet, Job, CronJob };

std::string to_string(WorkloadKind k);
std::optional<WorkloadKind> workload_kind_from_string(const std::string& s);

enum class ServiceType { ClusterIP, NodePort, LoadBalancer, ExternalName };

// Label keys map to values; map semantics keep keys unique and ordering
// deterministic. Validation happens at parse time (see validate_labels).
using LabelSet = std::map<std::string, std::string>;

// Checks Kubernetes label constraints: non-empty keys/values, prefix up to
// 253 chars plus name up to 63, values up to 63 chars.
void validate_labels(const LabelSet& labels, const std::string& field_path);

bool label_set_equal(const LabelSet& a, const LabelSet& b);

enum class SelectorOp { In, NotIn, Exists, DoesNotExist };

std::string to_string(SelectorOp op);

struct SelectorRequirement {
    std::string key;
    SelectorOp op = SelectorOp::Exists;
    std::vector<std::string> values;  // non-empty for In/NotIn, empty otherwise

    auto operator<=>(const SelectorRequirement&) const = default;
};

// "Absent" and "present but empty" are different things: a selectorless
// service has no endpoints while an empty policy podSelector selects every
// pod. The presence flag keeps the two apart.
struct LabelSelector {
    bool present = false;
    LabelSet match_labels;
    std::vector<SelectorRequirement> match_expressions;

    static LabelSelector absent() { return {}; }
    static LabelSelector equality(LabelSet labels) {
        LabelSelector s;
        s.present = true;
        s.match_labels = std::move(labels);
        return s;
    }

    auto operator<=>(const LabelSelector&) const = default;
};

struct PortDecl {
    int number = 0;  // 1-65535
    Protocol protocol = Protocol::TCP;
    std::string name;  // optional, unique within a container

    auto operator<=>(const PortDecl&) const = default;
};

struct ContainerSpec {
    std::string name;
    std::string image;
    std::vector<PortDecl> declared_ports;
};

struct UnitId {
    std::string application_id;
    std::string ns;
    WorkloadKind kind = WorkloadKind::Pod;
    std::string name;

    auto operator<=>(const UnitId&) const = default;
    std::string str() const;
};

struct ObjectId {
    std::string application_id;
    std::string ns;
    std::string name;

    auto operator<=>(const ObjectId&) const = default;
    std::string str(const std::string& kind) const;
};

// A workload flattened to its pod template. pod_labels are the template
// labels, not the workload-object labels: they are what selectors match.
struct ComputeUnit {
    UnitId id;
    LabelSet pod_labels;
    std::vector<ContainerSpec> containers;
    bool host_network = false;
    int replicas = 1;

    bool declares_port(Protocol proto, int port) const;
    std::optional<int> port_number_for_name(const std::string& port_name) const;
};

struct ServicePort {
    int port = 0;  // 1-65535
    // Exactly one of target_number / target_name is meaningful; a named
    // target is resolved per selected unit during rule evaluation.
    std::optional<int> target_number;
    std::string target_name;
    Protocol protocol = Protocol::TCP;
};

struct ServiceSpec {
    ObjectId id;
    LabelSelector selector;  // equality-only for services
    std::vector<ServicePort> ports;
    bool headless = false;  // clusterIP: None
    ServiceType service_type = ServiceType::ClusterIP;
};

struct PolicyPort {
    std::optional<Protocol> protocol;  // absent = any protocol
    std::optional<int> port;           // absent and name empty = all ports
    std::optional<int> end_port;       // inclusive range upper bound
    std::string port_name;             // named port, resolved against the destination unit
};

struct PolicyPeer {
    std::optional<LabelSelector> pod_selector;
    std::optional<LabelSelector> namespace_selector;
    bool ip_block = false;  // modeled as "matches any in-cluster source" (approximation)
};

// Empty peers = all peers; empty ports = all ports.
struct PolicyRule {
    std::vector<PolicyPeer> peers;
    std::vector<PolicyPort> ports;
};

struct NetworkPolicySpec {
    ObjectId id;
    LabelSelector pod_selector;
    bool applies_ingress = false;
    bool applies_egress = false;
    std::vector<PolicyRule> ingress_rules;
    std::vector<PolicyRule> egress_rules;
};

struct ApplicationBundle {
    std::string application_id;
    std::string ns;  // default namespace applied to resources without one
    std::vector<ComputeUnit> compute_units;
    std::vector<ServiceSpec> services;
    std::vector<NetworkPolicySpec> policies;
    bool policy_templates_present_but_disabled = false;
    int unanalyzed_resources = 0;

    const ComputeUnit* find_unit(const UnitId& id) const;
};

enum class Rule { M1, M2, M3, M4A, M4B, M4C, M4Star, M5A, M5B, M5C, M5D, M6, M7 };

std::string to_string(Rule r);
std::optional<Rule> rule_from_string(const std::string& s);

struct Finding {
    Rule rule = Rule::M1;
    std::vector<std::string> subjects;  // canonical resource id strings, non-empty
    nlohmann::json evidence;            // schema fixed per rule
    std::string message;
    std::string mitigation_hint;
    std::vector<std::string> possible_attacks;
    std::string severity;  // advisory only: high / medium / low

    nlohmann::json to_json() const;
};

// Fixed per-rule metadata attached to every finding.
struct RuleInfo {
    std::string mitigation;
    std::vector<std::string> attacks;
    std::string severity;
};

const RuleInfo& rule_info(Rule r);

Finding make_finding(Rule r, std::vector<std::string> subjects, nlohmann::json evidence,
                     std::string message);

// Deterministic ordering used everywhere findings are emitted or serialized.
bool finding_less(const Finding& a, const Finding& b);

// Named targetPort resolution against one selected unit. nullopt means the
// target name matches no declared port (consumed by rule M5B).
std::optional<int> resolve_target_port(const ServicePort& service_port, const ComputeUnit& unit);

}  // namespace knetaudit
