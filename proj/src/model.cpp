#include "knetaudit/model.hpp"

#include <algorithm>
#include <cctype>

namespace knetaudit {

std::string to_string(Protocol p) {
    switch (p) {
        case Protocol::TCP: return "TCP";
        case Protocol::UDP: return "UDP";
        case Protocol::SCTP: return "SCTP";
    }
    return "TCP";
}

std::optional<Protocol> protocol_from_string(const std::string& s) {
    std::string up;
    up.reserve(s.size());
    for (char c : s) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (up == "TCP") return Protocol::TCP;
    if (up == "UDP") return Protocol::UDP;
    if (up == "SCTP") return Protocol::SCTP;
    return std::nullopt;
}

std::string to_string(WorkloadKind k) {
    switch (k) {
        case WorkloadKind::Pod: return "Pod";
        case WorkloadKind::Deployment: return "Deployment";
        case WorkloadKind::StatefulSet: return "StatefulSet";
        case WorkloadKind::DaemonSet: return "DaemonSet";
        case WorkloadKind::ReplicaSet: return "ReplicaSet";
        case WorkloadKind::Job: return "Job";
        case WorkloadKind::CronJob: return "CronJob";
    }
    return "Pod";
}

std::optional<WorkloadKind> workload_kind_from_string(const std::string& s) {
    if (s == "Pod") return WorkloadKind::Pod;
    if (s == "Deployment") return WorkloadKind::Deployment;
    if (s == "StatefulSet") return WorkloadKind::StatefulSet;
    if (s == "DaemonSet") return WorkloadKind::DaemonSet;
    if (s == "ReplicaSet") return WorkloadKind::ReplicaSet;
    if (s == "Job") return WorkloadKind::Job;
    if (s == "CronJob") return WorkloadKind::CronJob;
    return std::nullopt;
}

std::string to_string(SelectorOp op) {
    switch (op) {
        case SelectorOp::In: return "In";
        case SelectorOp::NotIn: return "NotIn";
        case SelectorOp::Exists: return "Exists";
        case SelectorOp::DoesNotExist: return "DoesNotExist";
    }
    return "Exists";
}

void validate_labels(const LabelSet& labels, const std::string& field_path) {
    for (const auto& [key, value] : labels) {
        if (key.empty()) throw ValidationError("empty label key", field_path);
        if (value.empty())
            throw ValidationError("empty value for label key '" + key + "'", field_path);
        // key is optionally "<prefix>/<name>": prefix up to 253 chars, name up to 63
        auto slash = key.rfind('/');
        std::string prefix = slash == std::string::npos ? "" : key.substr(0, slash);
        std::string name = slash == std::string::npos ? key : key.substr(slash + 1);
        if (prefix.size() > 253)
            throw ValidationError("label key prefix exceeds 253 chars: '" + key + "'", field_path);
        if (name.empty() || name.size() > 63)
            throw ValidationError("label key name part must be 1-63 chars: '" + key + "'",
                                  field_path);
        if (value.size() > 63)
            throw ValidationError("label value exceeds 63 chars for key '" + key + "'", field_path);
    }
}

bool label_set_equal(const LabelSet& a, const LabelSet& b) { return a == b; }

std::string UnitId::str() const {
    return application_id + "/" + to_string(kind) + "/" + ns + "/" + name;
}

std::string ObjectId::str(const std::string& kind) const {
    return application_id + "/" + kind + "/" + ns + "/" + name;
}

bool ComputeUnit::declares_port(Protocol proto, int port) const {
    for (const auto& c : containers)
        for (const auto& d : c.declared_ports)
            if (d.protocol == proto && d.number == port) return true;
    return false;
}

std::optional<int> ComputeUnit::port_number_for_name(const std::string& port_name) const {
    for (const auto& c : containers)
        for (const auto& d : c.declared_ports)
            if (!d.name.empty() && d.name == port_name) return d.number;
    return std::nullopt;
}

const ComputeUnit* ApplicationBundle::find_unit(const UnitId& id) const {
    for (const auto& u : compute_units)
        if (u.id == id) return &u;
    return nullptr;
}

std::string to_string(Rule r) {
    switch (r) {
        case Rule::M1: return "M1";
        case Rule::M2: return "M2";
        case Rule::M3: return "M3";
        case Rule::M4A: return "M4A";
        case Rule::M4B: return "M4B";
        case Rule::M4C: return "M4C";
        case Rule::M4Star: return "M4*";
        case Rule::M5A: return "M5A";
        case Rule::M5B: return "M5B";
        case Rule::M5C: return "M5C";
        case Rule::M5D: return "M5D";
        case Rule::M6: return "M6";
        case Rule::M7: return "M7";
    }
    return "M1";
}

std::optional<Rule> rule_from_string(const std::string& s) {
    static const std::map<std::string, Rule> table = {
        {"M1", Rule::M1},   {"M2", Rule::M2},      {"M3", Rule::M3},   {"M4A", Rule::M4A},
        {"M4B", Rule::M4B}, {"M4C", Rule::M4C},    {"M4*", Rule::M4Star},
        {"M5A", Rule::M5A}, {"M5B", Rule::M5B},    {"M5C", Rule::M5C}, {"M5D", Rule::M5D},
        {"M6", Rule::M6},   {"M7", Rule::M7}};
    auto it = table.find(s);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

const RuleInfo& rule_info(Rule r) {
    static const std::string label_mitigation =
        "Make the labels of the affected resources unique after reviewing the relationship "
        "between the application components.";
    static const std::vector<std::string> label_attacks = {"Man in the middle",
                                                           "Server impersonation"};
    static const std::map<Rule, RuleInfo> table = {
        {Rule::M1,
         {"Declare every port the container opens at runtime in the resource configuration so "
          "that only intended ports are exposed and bound to services.",
          {"Command and control", "Sensitive port information"},
          "medium"}},
        {Rule::M2,
         {"Configure the application to use static ports instead of OS-assigned dynamic ports; "
          "if that is not possible, document that the application relies on dynamic ports.",
          {"Loosened security policies"},
          "medium"}},
        {Rule::M3,
         {"Remove or correct the declared port so the configuration matches the ports the "
          "application actually opens.",
          {"Data interception/spoofing", "Data exfiltration"},
          "low"}},
        {Rule::M4A, {label_mitigation, label_attacks, "high"}},
        {Rule::M4B, {label_mitigation, label_attacks, "high"}},
        {Rule::M4C, {label_mitigation, label_attacks, "high"}},
        {Rule::M4Star, {label_mitigation, label_attacks, "high"}},
        {Rule::M5A,
         {"Ensure the service only binds ports that are declared and actually open on the "
          "targeted compute units.",
          {"Data interception"},
          "medium"}},
        {Rule::M5B,
         {"Declare the targeted port on the compute unit, or fix the service targetPort to "
          "reference a declared port.",
          {"Data spoofing"},
          "medium"}},
        {Rule::M5C,
         {"Remove the port settings: headless services do not support port remapping, so the "
          "service port must match a port actually open in the targeted pods.",
          {"Denial of service"},
          "medium"}},
        {Rule::M5D,
         {"Ensure the service has a selector matching the labels of an existing compute unit.",
          {"Bypassing security checks"},
          "medium"}},
        {Rule::M6,
         {"Define and enable network policies, making sure each policy selects at least one pod "
          "and the rules only allow necessary connections.",
          {"Data interception/spoofing", "Privilege escalation"},
          "medium"}},
        {Rule::M7,
         {"Set hostNetwork to false after verifying the change causes no loss of functionality "
          "or performance; otherwise audit the affected pods in depth.",
          {"Bypassing network controls"},
          "medium"}}};
    return table.at(r);
}

Finding make_finding(Rule r, std::vector<std::string> subjects, nlohmann::json evidence,
                     std::string message) {
    const RuleInfo& info = rule_info(r);
    Finding f;
    f.rule = r;
    f.subjects = std::move(subjects);
    f.evidence = std::move(evidence);
    f.message = std::move(message);
    f.mitigation_hint = info.mitigation;
    f.possible_attacks = info.attacks;
    f.severity = info.severity;
    return f;
}

nlohmann::json Finding::to_json() const {
    nlohmann::json j;
    j["rule"] = to_string(rule);
    j["subjects"] = subjects;
    j["evidence"] = evidence;
    j["message"] = message;
    j["mitigation_hint"] = mitigation_hint;
    j["possible_attacks"] = possible_attacks;
    j["severity"] = severity;
    return j;
}

bool finding_less(const Finding& a, const Finding& b) {
    if (a.rule != b.rule) return static_cast<int>(a.rule) < static_cast<int>(b.rule);
    if (a.subjects != b.subjects) return a.subjects < b.subjects;
    return a.evidence.dump() < b.evidence.dump();
}

std::optional<int> resolve_target_port(const ServicePort& service_port, const ComputeUnit& unit) {
    if (service_port.target_number) return *service_port.target_number;
    return unit.port_number_for_name(service_port.target_name);
}

}  // namespace knetaudit
