#include "knetaudit/ingest.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace knetaudit {

namespace {

bool is_analyzed_kind(const std::string& kind) {
    return workload_kind_from_string(kind).has_value() || kind == "Service" ||
           kind == "NetworkPolicy";
}

LabelSet labels_from_node(const YAML::Node& node, const std::string& field_path) {
    LabelSet labels;
    if (!node) return labels;
    if (!node.IsMap()) throw ValidationError("labels must be a string map", field_path);
    for (const auto& kv : node) {
        std::string value;
        if (!kv.second.IsScalar())
            throw ValidationError("label values must be scalars", field_path);
        labels[kv.first.as<std::string>()] = kv.second.as<std::string>();
    }
    validate_labels(labels, field_path);
    return labels;
}

LabelSelector selector_from_node(const YAML::Node& node, const std::string& field_path,
                                 bool allow_expressions) {
    if (!node) return LabelSelector::absent();
    LabelSelector sel;
    sel.present = true;
    if (allow_expressions) {
        // NetworkPolicy-style selector: matchLabels + matchExpressions
        if (node["matchLabels"]) sel.match_labels = labels_from_node(node["matchLabels"],
                                                                     field_path + ".matchLabels");
        if (node["matchExpressions"]) {
            for (const auto& e : node["matchExpressions"]) {
                SelectorRequirement req;
                req.key = e["key"].as<std::string>("");
                if (req.key.empty())
                    throw ValidationError("matchExpressions entry missing key",
                                          field_path + ".matchExpressions");
                std::string op = e["operator"].as<std::string>("");
                if (op == "In")
                    req.op = SelectorOp::In;
                else if (op == "NotIn")
                    req.op = SelectorOp::NotIn;
                else if (op == "Exists")
                    req.op = SelectorOp::Exists;
                else if (op == "DoesNotExist")
                    req.op = SelectorOp::DoesNotExist;
                else
                    throw ValidationError("unknown selector operator '" + op + "'",
                                          field_path + ".matchExpressions.operator");
                if (e["values"])
                    for (const auto& v : e["values"]) req.values.push_back(v.as<std::string>());
                if ((req.op == SelectorOp::In || req.op == SelectorOp::NotIn) && req.values.empty())
                    throw ValidationError("In/NotIn expressions require at least one value",
                                          field_path + ".matchExpressions.values");
                if ((req.op == SelectorOp::Exists || req.op == SelectorOp::DoesNotExist) &&
                    !req.values.empty())
                    throw ValidationError("Exists/DoesNotExist expressions take no values",
                                          field_path + ".matchExpressions.values");
                sel.match_expressions.push_back(std::move(req));
            }
        }
        return sel;
    }
    // Service-style selector: plain equality map
    if (!node.IsMap())
        throw ValidationError("service selector must be a string map", field_path);
    if (node["matchLabels"] || node["matchExpressions"])
        throw ValidationError("service selectors are equality-only", field_path);
    sel.match_labels = labels_from_node(node, field_path);
    return sel;
}

int port_in_range(const YAML::Node& node, const std::string& field_path) {
    int port = 0;
    try {
        port = node.as<int>();
    } catch (const YAML::Exception&) {
        throw ValidationError("port must be an integer", field_path);
    }
    if (port < 1 || port > 65535)
        throw ValidationError("port " + std::to_string(port) + " out of range 1-65535", field_path);
    return port;
}

Protocol protocol_or_default(const YAML::Node& node, const std::string& field_path) {
    if (!node) return Protocol::TCP;
    auto proto = protocol_from_string(node.as<std::string>(""));
    if (!proto) throw ValidationError("unknown protocol", field_path);
    return *proto;
}

std::vector<ContainerSpec> containers_from_pod_spec(const YAML::Node& pod_spec,
                                                    const std::string& field_path) {
    std::vector<ContainerSpec> containers;
    std::set<std::string> container_names;
    if (!pod_spec["containers"])
        throw ValidationError("pod spec missing containers", field_path + ".containers");
    for (const auto& c : pod_spec["containers"]) {
        ContainerSpec spec;
        spec.name = c["name"].as<std::string>("");
        if (spec.name.empty())
            throw ValidationError("container missing name", field_path + ".containers.name");
        if (!container_names.insert(spec.name).second)
            throw ValidationError("duplicate container name '" + spec.name + "'",
                                  field_path + ".containers.name");
        spec.image = c["image"].as<std::string>("");
        std::set<std::string> port_names;
        if (c["ports"]) {
            for (const auto& p : c["ports"]) {
                PortDecl decl;
                if (!p["containerPort"])
                    throw ValidationError("port entry missing containerPort",
                                          field_path + ".containers.ports.containerPort");
                decl.number = port_in_range(p["containerPort"],
                                            field_path + ".containers.ports.containerPort");
                decl.protocol =
                    protocol_or_default(p["protocol"], field_path + ".containers.ports.protocol");
                decl.name = p["name"].as<std::string>("");
                if (!decl.name.empty() && !port_names.insert(decl.name).second)
                    throw ValidationError("duplicate port name '" + decl.name + "' in container '" +
                                              spec.name + "'",
                                          field_path + ".containers.ports.name");
                spec.declared_ports.push_back(decl);
            }
        }
        containers.push_back(std::move(spec));
    }
    return containers;
}

ComputeUnit unit_from_resource(const RawResource& res, const std::string& application_id,
                               const std::string& default_namespace) {
    WorkloadKind kind = *workload_kind_from_string(res.kind);
    YAML::Node pod_spec;
    LabelSet pod_labels;
    int replicas = 1;
    const YAML::Node& body = res.body;
    if (kind == WorkloadKind::Pod) {
        pod_spec = body["spec"];
        pod_labels = res.labels;
    } else {
        YAML::Node tmpl;
        if (kind == WorkloadKind::CronJob) {
            tmpl = body["spec"]["jobTemplate"]["spec"]["template"];
            if (!tmpl)
                throw ValidationError("CronJob missing pod template",
                                      "spec.jobTemplate.spec.template");
        } else {
            tmpl = body["spec"]["template"];
            if (!tmpl) throw ValidationError(res.kind + " missing pod template", "spec.template");
        }
        pod_spec = tmpl["spec"];
        if (tmpl["metadata"])
            pod_labels = labels_from_node(tmpl["metadata"]["labels"],
                                          "spec.template.metadata.labels");
        if (body["spec"]["replicas"]) replicas = body["spec"]["replicas"].as<int>(1);
    }
    if (!pod_spec) throw ValidationError(res.kind + " missing pod spec", "spec");

    ComputeUnit unit;
    unit.id = {application_id, res.ns.empty() ? default_namespace : res.ns, kind, res.name};
    unit.pod_labels = std::move(pod_labels);
    unit.containers = containers_from_pod_spec(pod_spec, "spec");
    unit.host_network = pod_spec["hostNetwork"] ? pod_spec["hostNetwork"].as<bool>(false) : false;
    unit.replicas = std::max(replicas, 0);
    return unit;
}

ServiceSpec service_from_resource(const RawResource& res, const std::string& application_id,
                                  const std::string& default_namespace) {
    const YAML::Node& spec = res.body["spec"];
    if (!spec) throw ValidationError("Service missing spec", "spec");
    ServiceSpec svc;
    svc.id = {application_id, res.ns.empty() ? default_namespace : res.ns, res.name};
    svc.selector = selector_from_node(spec["selector"], "spec.selector", false);
    if (!spec["ports"] || spec["ports"].size() == 0)
        throw ValidationError("Service '" + res.name + "' has no ports", "spec.ports");
    for (const auto& p : spec["ports"]) {
        ServicePort port;
        if (!p["port"]) throw ValidationError("service port entry missing port", "spec.ports.port");
        port.port = port_in_range(p["port"], "spec.ports.port");
        port.protocol = protocol_or_default(p["protocol"], "spec.ports.protocol");
        if (p["targetPort"]) {
            try {
                port.target_number = p["targetPort"].as<int>();
            } catch (const YAML::Exception&) {
                port.target_name = p["targetPort"].as<std::string>();
            }
            if (port.target_number && (*port.target_number < 1 || *port.target_number > 65535))
                throw ValidationError("targetPort out of range", "spec.ports.targetPort");
        } else {
            port.target_number = port.port;  // Kubernetes default
        }
        svc.ports.push_back(std::move(port));
    }
    std::string type = spec["type"] ? spec["type"].as<std::string>("") : "ClusterIP";
    if (type == "ClusterIP")
        svc.service_type = ServiceType::ClusterIP;
    else if (type == "NodePort")
        svc.service_type = ServiceType::NodePort;
    else if (type == "LoadBalancer")
        svc.service_type = ServiceType::LoadBalancer;
    else if (type == "ExternalName")
        svc.service_type = ServiceType::ExternalName;
    else
        throw ValidationError("unknown service type '" + type + "'", "spec.type");
    svc.headless = spec["clusterIP"] && spec["clusterIP"].as<std::string>("") == "None";
    if (svc.headless && svc.service_type != ServiceType::ClusterIP)
        throw ValidationError("headless service must be of type ClusterIP", "spec.clusterIP");
    return svc;
}

std::vector<PolicyRule> policy_rules_from_node(const YAML::Node& node, const char* peers_key,
                                               const std::string& field_path) {
    std::vector<PolicyRule> rules;
    if (!node) return rules;
    for (const auto& r : node) {
        PolicyRule rule;
        if (r[peers_key]) {
            for (const auto& peer_node : r[peers_key]) {
                PolicyPeer peer;
                if (peer_node["podSelector"])
                    peer.pod_selector = selector_from_node(peer_node["podSelector"],
                                                           field_path + ".podSelector", true);
                if (peer_node["namespaceSelector"])
                    peer.namespace_selector = selector_from_node(
                        peer_node["namespaceSelector"], field_path + ".namespaceSelector", true);
                peer.ip_block = static_cast<bool>(peer_node["ipBlock"]);
                if (!peer.pod_selector && !peer.namespace_selector && !peer.ip_block)
                    throw ValidationError("empty policy peer", field_path);
                rule.peers.push_back(std::move(peer));
            }
        }
        if (r["ports"]) {
            for (const auto& p : r["ports"]) {
                PolicyPort port;
                if (p["protocol"]) {
                    auto proto = protocol_from_string(p["protocol"].as<std::string>(""));
                    if (!proto)
                        throw ValidationError("unknown protocol in policy port",
                                              field_path + ".ports.protocol");
                    port.protocol = proto;
                }
                if (p["port"]) {
                    try {
                        port.port = p["port"].as<int>();
                        if (*port.port < 1 || *port.port > 65535)
                            throw ValidationError("policy port out of range",
                                                  field_path + ".ports.port");
                    } catch (const YAML::Exception&) {
                        port.port_name = p["port"].as<std::string>();
                    }
                }
                if (p["endPort"]) {
                    port.end_port = p["endPort"].as<int>();
                    if (!port.port || *port.end_port < *port.port || *port.end_port > 65535)
                        throw ValidationError("invalid endPort range", field_path + ".ports.endPort");
                }
                rule.ports.push_back(std::move(port));
            }
        }
        rules.push_back(std::move(rule));
    }
    return rules;
}

NetworkPolicySpec policy_from_resource(const RawResource& res, const std::string& application_id,
                                       const std::string& default_namespace) {
    const YAML::Node& spec = res.body["spec"];
    if (!spec) throw ValidationError("NetworkPolicy missing spec", "spec");
    NetworkPolicySpec pol;
    pol.id = {application_id, res.ns.empty() ? default_namespace : res.ns, res.name};
    // A missing podSelector selects all pods in the namespace.
    pol.pod_selector = spec["podSelector"]
                           ? selector_from_node(spec["podSelector"], "spec.podSelector", true)
                           : LabelSelector::equality({});
    pol.ingress_rules = policy_rules_from_node(spec["ingress"], "from", "spec.ingress");
    pol.egress_rules = policy_rules_from_node(spec["egress"], "to", "spec.egress");
    if (spec["policyTypes"]) {
        for (const auto& t : spec["policyTypes"]) {
            std::string type = t.as<std::string>("");
            if (type == "Ingress")
                pol.applies_ingress = true;
            else if (type == "Egress")
                pol.applies_egress = true;
            else
                throw ValidationError("unknown policy type '" + type + "'", "spec.policyTypes");
        }
    } else {
        pol.applies_ingress = true;
        pol.applies_egress = !pol.egress_rules.empty();
    }
    return pol;
}

// Conversion doubles as validation so malformed typed resources are rejected
// already at parse time.
void validate_typed_resource(const RawResource& res) {
    if (workload_kind_from_string(res.kind)) {
        unit_from_resource(res, "validate", "default");
    } else if (res.kind == "Service") {
        service_from_resource(res, "validate", "default");
    } else if (res.kind == "NetworkPolicy") {
        policy_from_resource(res, "validate", "default");
    }
}

}  // namespace

std::vector<RawResource> parse_manifests(const std::string& text) {
    // Split on document markers, remembering each document's starting line so
    // parse errors can report absolute positions.
    struct DocSlice {
        std::string text;
        int start_line = 1;
    };
    std::vector<DocSlice> docs;
    {
        DocSlice current;
        current.start_line = 1;
        std::istringstream stream(text);
        std::string line;
        int line_no = 0;
        while (std::getline(stream, line)) {
            ++line_no;
            std::string trimmed = line;
            if (!trimmed.empty() && trimmed.back() == '\r') trimmed.pop_back();
            if (trimmed == "---" || trimmed.rfind("--- ", 0) == 0) {
                docs.push_back(current);
                current = {};
                current.start_line = line_no + 1;
                if (trimmed.size() > 4) current.text = trimmed.substr(4) + "\n";
                continue;
            }
            current.text += trimmed + "\n";
        }
        docs.push_back(current);
    }

    std::vector<RawResource> resources;
    int doc_index = 0;
    for (const auto& doc : docs) {
        ++doc_index;
        YAML::Node node;
        try {
            node = YAML::Load(doc.text);
        } catch (const YAML::Exception& e) {
            throw ParseError("malformed YAML in document " + std::to_string(doc_index) + ": " +
                                 e.msg,
                             doc_index, doc.start_line + e.mark.line);
        }
        if (!node || node.IsNull()) continue;
        if (!node.IsMap())
            throw ParseError("document " + std::to_string(doc_index) + " is not a mapping",
                             doc_index, doc.start_line);

        RawResource res;
        res.api_version = node["apiVersion"] ? node["apiVersion"].as<std::string>("") : "";
        res.kind = node["kind"] ? node["kind"].as<std::string>("") : "";
        if (res.kind.empty())
            throw ValidationError("document " + std::to_string(doc_index) + " missing kind",
                                  "kind");
        const YAML::Node& meta = node["metadata"];
        if (meta) {
            res.name = meta["name"] ? meta["name"].as<std::string>("") : "";
            res.ns = meta["namespace"] ? meta["namespace"].as<std::string>("") : "";
            res.labels = labels_from_node(meta["labels"], "metadata.labels");
        }
        if (res.name.empty())
            throw ValidationError("document " + std::to_string(doc_index) + " missing metadata.name",
                                  "metadata.name");
        res.body = node;
        res.analyzed = is_analyzed_kind(res.kind);
        if (res.analyzed) validate_typed_resource(res);
        resources.push_back(std::move(res));
    }
    return resources;
}

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    out += "'";
    return out;
}

}  // namespace

std::string render_chart(const std::string& chart_path, const ChartRenderOptions& options) {
    namespace fs = std::filesystem;
    if (!fs::exists(chart_path))
        throw EnvironmentError("chart path does not exist: " + chart_path);

    std::string errfile_template =
        (fs::temp_directory_path() / "knetaudit-render-XXXXXX").string();
    std::vector<char> errfile(errfile_template.begin(), errfile_template.end());
    errfile.push_back('\0');
    int errfd = mkstemp(errfile.data());
    if (errfd < 0) throw EnvironmentError("cannot create temporary file for renderer stderr");
    close(errfd);
    std::string errpath(errfile.data());

    std::string cmd = shell_quote(options.renderer) + " template " +
                      shell_quote(options.release_name) + " " + shell_quote(chart_path);
    for (const auto& [key, value] : options.value_overrides)
        cmd += " --set " + shell_quote(key + "=" + value);
    cmd += " 2>" + shell_quote(errpath);

    std::string output;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        fs::remove(errpath);
        throw EnvironmentError("failed to invoke chart renderer '" + options.renderer + "'");
    }
    char buffer[4096];
    size_t n = 0;
    while ((n = fread(buffer, 1, sizeof(buffer), pipe)) > 0) output.append(buffer, n);
    int status = pclose(pipe);
    std::string stderr_text;
    {
        std::ifstream err(errpath);
        std::stringstream ss;
        ss << err.rdbuf();
        stderr_text = ss.str();
    }
    fs::remove(errpath);

    int exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (exit_code == 127)
        throw EnvironmentError("chart renderer '" + options.renderer +
                               "' not found; install it or point --renderer at the binary");
    if (exit_code != 0)
        throw EnvironmentError("chart renderer exited with status " + std::to_string(exit_code) +
                               ": " + stderr_text);
    return output;
}

ApplicationBundle normalize(const std::vector<RawResource>& resources,
                            const std::string& application_id,
                            const std::string& default_namespace) {
    ApplicationBundle bundle;
    bundle.application_id = application_id;
    bundle.ns = default_namespace;

    std::set<std::tuple<std::string, std::string, std::string>> seen_ids;
    for (const auto& res : resources) {
        if (!res.analyzed) {
            ++bundle.unanalyzed_resources;
            continue;
        }
        std::string ns = res.ns.empty() ? default_namespace : res.ns;
        if (!seen_ids.insert({res.kind, ns, res.name}).second)
            throw ValidationError("duplicate resource " + res.kind + "/" + ns + "/" + res.name +
                                  " in application '" + application_id + "'");
        if (workload_kind_from_string(res.kind))
            bundle.compute_units.push_back(
                unit_from_resource(res, application_id, default_namespace));
        else if (res.kind == "Service")
            bundle.services.push_back(service_from_resource(res, application_id,
                                                            default_namespace));
        else
            bundle.policies.push_back(policy_from_resource(res, application_id,
                                                           default_namespace));
    }

    std::sort(bundle.compute_units.begin(), bundle.compute_units.end(),
              [](const ComputeUnit& a, const ComputeUnit& b) {
                  return std::tuple(to_string(a.id.kind), a.id.ns, a.id.name) <
                         std::tuple(to_string(b.id.kind), b.id.ns, b.id.name);
              });
    std::sort(bundle.services.begin(), bundle.services.end(),
              [](const ServiceSpec& a, const ServiceSpec& b) { return a.id < b.id; });
    std::sort(bundle.policies.begin(), bundle.policies.end(),
              [](const NetworkPolicySpec& a, const NetworkPolicySpec& b) { return a.id < b.id; });
    return bundle;
}

}  // namespace knetaudit
