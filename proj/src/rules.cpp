#include "knetaudit/rules.hpp"

#include <algorithm>

#include "knetaudit/selectors.hpp"

namespace knetaudit {

namespace {

bool runtime_observable(const ComputeUnit& unit) {
    // CronJob pods are not continuously running; snapshots cannot observe
    // them reliably, so they are excluded from runtime rules.
    return unit.id.kind != WorkloadKind::CronJob;
}

std::string port_str(Protocol proto, int port) {
    return to_string(proto) + "/" + std::to_string(port);
}

// Union of everything seen on a unit across both iterations, including
// dropped single-run UDP records (used by the conservative M3/M5 checks).
std::set<SocketKey> observed_union(const UnitPortDiff& d) {
    std::set<SocketKey> all = d.stable;
    all.insert(d.unstable1.begin(), d.unstable1.end());
    all.insert(d.unstable2.begin(), d.unstable2.end());
    all.insert(d.dropped_udp.begin(), d.dropped_udp.end());
    return all;
}

bool observed_open_non_loopback(const UnitPortDiff& d, Protocol proto, int port) {
    for (const auto& key : observed_union(d))
        if (key.protocol == proto && key.port == port &&
            key.scope.kind != BindScopeKind::Loopback)
            return true;
    return false;
}

std::string find_process(const RuleContext& ctx, const UnitId& unit, const SocketKey& key) {
    for (const RuntimeSnapshot* snap : {&*ctx.snapshot1, &*ctx.snapshot2})
        for (const auto& obs : snap->observations) {
            if (obs.owner_unit_id != unit) continue;
            for (const auto& rec : obs.sockets)
                if (SocketKey::of(rec) == key && !rec.process.empty()) return rec.process;
        }
    return "";
}

nlohmann::json selector_to_json(const LabelSelector& sel) {
    nlohmann::json j;
    j["present"] = sel.present;
    j["match_labels"] = sel.match_labels;
    auto exprs = nlohmann::json::array();
    for (const auto& e : sel.match_expressions)
        exprs.push_back({{"key", e.key}, {"operator", to_string(e.op)}, {"values", e.values}});
    j["match_expressions"] = exprs;
    return j;
}

}  // namespace

std::vector<Finding> detect_m1(const RuleContext& ctx, AnalysisResult* out) {
    std::vector<Finding> findings;
    if (!ctx.has_runtime()) return findings;
    auto diff = diff_iterations(*ctx.snapshot1, *ctx.snapshot2);
    for (const auto& [unit_id, port_diff] : diff.units) {
        const ComputeUnit* unit = ctx.bundle->find_unit(unit_id);
        if (!unit) {
            if (out)
                out->diagnostics.push_back("observation for unknown unit " + unit_id.str() +
                                           " ignored");
            continue;
        }
        if (!runtime_observable(*unit)) continue;
        for (const auto& key : port_diff.stable) {
            if (unit->declares_port(key.protocol, key.port)) continue;
            if (key.scope.kind == BindScopeKind::Loopback) {
                if (out)
                    out->diagnostics.push_back("undeclared loopback-bound port " +
                                               port_str(key.protocol, key.port) + " on " +
                                               unit_id.str() + " (excluded from M1)");
                continue;
            }
            nlohmann::json evidence;
            evidence["port"] = key.port;
            evidence["protocol"] = to_string(key.protocol);
            evidence["bind_scope"] = key.scope.str();
            std::string process = find_process(ctx, unit_id, key);
            if (!process.empty()) evidence["process"] = process;
            findings.push_back(make_finding(
                Rule::M1, {unit_id.str()}, std::move(evidence),
                "open port " + port_str(key.protocol, key.port) + " is not declared on " +
                    unit_id.str()));
        }
    }
    std::sort(findings.begin(), findings.end(), finding_less);
    return findings;
}

std::vector<Finding> detect_m2(const RuleContext& ctx) {
    std::vector<Finding> findings;
    if (!ctx.has_runtime()) return findings;
    auto diff = diff_iterations(*ctx.snapshot1, *ctx.snapshot2);
    for (const auto& [unit_id, port_diff] : diff.units) {
        const ComputeUnit* unit = ctx.bundle->find_unit(unit_id);
        if (!unit || !runtime_observable(*unit)) continue;
        if (port_diff.unstable1.empty() && port_diff.unstable2.empty()) continue;

        bool any_outside_range = false;
        auto ports_json = [&](const std::set<SocketKey>& keys) {
            auto arr = nlohmann::json::array();
            for (const auto& key : keys) {
                bool in_range = ctx.ephemeral_range.contains(key.port);
                if (!in_range) any_outside_range = true;
                arr.push_back({{"port", key.port},
                               {"protocol", to_string(key.protocol)},
                               {"bind_scope", key.scope.str()},
                               {"in_ephemeral_range", in_range}});
            }
            return arr;
        };
        nlohmann::json evidence;
        evidence["iteration1_ports"] = ports_json(port_diff.unstable1);
        evidence["iteration2_ports"] = ports_json(port_diff.unstable2);
        std::string message = "ports on " + unit_id.str() + " differ between iterations";
        if (any_outside_range) message += " (some outside configured ephemeral range)";
        findings.push_back(
            make_finding(Rule::M2, {unit_id.str()}, std::move(evidence), std::move(message)));
    }
    std::sort(findings.begin(), findings.end(), finding_less);
    return findings;
}

std::vector<Finding> detect_m3(const RuleContext& ctx) {
    std::vector<Finding> findings;
    if (!ctx.has_runtime()) return findings;
    auto diff = diff_iterations(*ctx.snapshot1, *ctx.snapshot2);
    for (const auto& unit : ctx.bundle->compute_units) {
        if (!runtime_observable(unit)) continue;
        std::set<std::pair<Protocol, int>> observed;
        auto it = diff.units.find(unit.id);
        if (it != diff.units.end())
            for (const auto& key : observed_union(it->second))
                observed.insert({key.protocol, key.port});
        for (const auto& container : unit.containers) {
            for (const auto& decl : container.declared_ports) {
                if (observed.contains({decl.protocol, decl.number})) continue;
                nlohmann::json evidence;
                evidence["port"] = decl.number;
                evidence["protocol"] = to_string(decl.protocol);
                evidence["container"] = container.name;
                findings.push_back(make_finding(
                    Rule::M3, {unit.id.str()}, std::move(evidence),
                    "declared port " + port_str(decl.protocol, decl.number) + " is not open on " +
                        unit.id.str()));
            }
        }
    }
    std::sort(findings.begin(), findings.end(), finding_less);
    return findings;
}

std::vector<Finding> detect_m4(const ApplicationBundle& bundle) {
    std::vector<Finding> findings;

    // M4A: identical pod-label sets on distinct units, one finding per pair.
    // Pairs are ordered by unit id so the output does not depend on input
    // order.
    for (size_t i = 0; i < bundle.compute_units.size(); ++i) {
        for (size_t j = i + 1; j < bundle.compute_units.size(); ++j) {
            const auto& first = bundle.compute_units[i];
            const auto& second = bundle.compute_units[j];
            const auto& a = first.id < second.id ? first : second;
            const auto& b = first.id < second.id ? second : first;
            if (!label_set_equal(a.pod_labels, b.pod_labels)) continue;
            nlohmann::json evidence;
            evidence["labels"] = a.pod_labels;
            findings.push_back(make_finding(
                Rule::M4A, {a.id.str(), b.id.str()}, std::move(evidence),
                "compute units " + a.id.str() + " and " + b.id.str() +
                    " carry the same pod labels"));
        }
    }

    // M4B: a unit targeted by two or more services.
    for (const auto& unit : bundle.compute_units) {
        std::vector<std::string> service_ids;
        for (const auto& svc : bundle.services)
            if (matches(svc.selector, unit.pod_labels)) service_ids.push_back(svc.id.str("Service"));
        if (service_ids.size() < 2) continue;
        std::sort(service_ids.begin(), service_ids.end());
        nlohmann::json evidence;
        evidence["services"] = service_ids;
        std::vector<std::string> subjects = {unit.id.str()};
        subjects.insert(subjects.end(), service_ids.begin(), service_ids.end());
        findings.push_back(make_finding(Rule::M4B, std::move(subjects), std::move(evidence),
                                        std::to_string(service_ids.size()) +
                                            " services target compute unit " + unit.id.str() +
                                            " (may be deliberate, e.g. primary + headless)"));
    }

    // M4C: a single service whose selector picks up several distinct units.
    for (const auto& svc : bundle.services) {
        auto selected = select_units(svc.selector, bundle);
        if (selected.size() < 2) continue;
        bool all_equal = true;
        for (size_t i = 1; i < selected.size(); ++i)
            if (!label_set_equal(selected[0]->pod_labels, selected[i]->pod_labels))
                all_equal = false;
        nlohmann::json evidence;
        evidence["selector"] = selector_to_json(svc.selector);
        auto unit_ids = nlohmann::json::array();
        std::vector<std::string> subjects = {svc.id.str("Service")};
        for (const auto* unit : selected) {
            unit_ids.push_back(unit->id.str());
            subjects.push_back(unit->id.str());
        }
        evidence["units"] = unit_ids;
        evidence["label_sets_equal"] = all_equal;
        findings.push_back(make_finding(Rule::M4C, std::move(subjects), std::move(evidence),
                                        "service " + svc.id.str("Service") + " selects " +
                                            std::to_string(selected.size()) +
                                            " distinct compute units"));
    }

    std::sort(findings.begin(), findings.end(), finding_less);
    return findings;
}

std::vector<Finding> detect_m4_star(const std::vector<ApplicationBundle>& bundles) {
    std::vector<Finding> findings;
    for (size_t i = 0; i < bundles.size(); ++i) {
        for (size_t j = 0; j < bundles.size(); ++j) {
            if (i == j) continue;
            const auto& a = bundles[i];
            const auto& b = bundles[j];

            if (i < j) {
                for (const auto& ua : a.compute_units) {
                    for (const auto& ub : b.compute_units) {
                        if (!label_set_equal(ua.pod_labels, ub.pod_labels)) continue;
                        nlohmann::json evidence;
                        evidence["kind"] = "equal_labels";
                        evidence["labels"] = ua.pod_labels;
                        evidence["applications"] = {a.application_id, b.application_id};
                        findings.push_back(make_finding(
                            Rule::M4Star, {ua.id.str(), ub.id.str()}, std::move(evidence),
                            "compute units of applications " + a.application_id + " and " +
                                b.application_id + " carry identical pod labels"));
                    }
                }
            }

            // Services of a selecting units of b (cross-application routing).
            for (const auto& svc : a.services) {
                for (const auto& unit : b.compute_units) {
                    if (!matches(svc.selector, unit.pod_labels)) continue;
                    nlohmann::json evidence;
                    evidence["kind"] = "cross_selection";
                    evidence["selector"] = selector_to_json(svc.selector);
                    evidence["applications"] = {a.application_id, b.application_id};
                    findings.push_back(make_finding(
                        Rule::M4Star, {svc.id.str("Service"), unit.id.str()}, std::move(evidence),
                        "service " + svc.id.str("Service") + " of application " +
                            a.application_id + " selects compute unit " + unit.id.str() +
                            " of application " + b.application_id));
                }
            }
        }
    }
    std::sort(findings.begin(), findings.end(), finding_less);
    return findings;
}

std::vector<Finding> detect_m5(const RuleContext& ctx) {
    std::vector<Finding> findings;
    const ApplicationBundle& bundle = *ctx.bundle;
    std::optional<SnapshotDiff> diff;
    if (ctx.has_runtime()) diff = diff_iterations(*ctx.snapshot1, *ctx.snapshot2);

    for (const auto& svc : bundle.services) {
        auto selected = select_units(svc.selector, bundle);
        if (selected.empty()) {
            nlohmann::json evidence;
            evidence["selector"] = selector_to_json(svc.selector);
            findings.push_back(make_finding(
                Rule::M5D, {svc.id.str("Service")}, std::move(evidence),
                "service " + svc.id.str("Service") + " does not match any compute unit"));
            continue;
        }
        for (const auto* unit : selected) {
            for (const auto& sp : svc.ports) {
                auto target_desc = sp.target_number ? std::to_string(*sp.target_number)
                                                    : "'" + sp.target_name + "'";
                auto resolved = resolve_target_port(sp, *unit);
                if (!resolved) {
                    nlohmann::json evidence;
                    evidence["service_port"] = sp.port;
                    evidence["protocol"] = to_string(sp.protocol);
                    evidence["target"] = sp.target_name;
                    evidence["resolved"] = nullptr;
                    findings.push_back(make_finding(
                        Rule::M5B, {svc.id.str("Service"), unit->id.str()}, std::move(evidence),
                        "service " + svc.id.str("Service") + " targets port name '" +
                            sp.target_name + "' which is not declared on " + unit->id.str()));
                    continue;
                }
                if (!unit->declares_port(sp.protocol, *resolved)) {
                    nlohmann::json evidence;
                    evidence["service_port"] = sp.port;
                    evidence["protocol"] = to_string(sp.protocol);
                    evidence["target"] = target_desc;
                    evidence["resolved"] = *resolved;
                    findings.push_back(make_finding(
                        Rule::M5B, {svc.id.str("Service"), unit->id.str()}, std::move(evidence),
                        "service " + svc.id.str("Service") + " targets undeclared port " +
                            port_str(sp.protocol, *resolved) + " on " + unit->id.str()));
                    continue;
                }
                // Declared target; openness requires runtime data.
                if (!diff || !runtime_observable(*unit)) continue;
                auto it = diff->units.find(unit->id);
                bool open = it != diff->units.end() &&
                            observed_open_non_loopback(it->second, sp.protocol, *resolved);
                if (open) continue;
                nlohmann::json evidence;
                evidence["service_port"] = sp.port;
                evidence["protocol"] = to_string(sp.protocol);
                evidence["target"] = target_desc;
                evidence["resolved"] = *resolved;
                evidence["headless"] = svc.headless;
                Rule rule = svc.headless ? Rule::M5C : Rule::M5A;
                std::string what = svc.headless ? "headless service " : "service ";
                findings.push_back(make_finding(
                    rule, {svc.id.str("Service"), unit->id.str()}, std::move(evidence),
                    what + svc.id.str("Service") + " targets port " +
                        port_str(sp.protocol, *resolved) + " which is not open on " +
                        unit->id.str()));
            }
        }
    }
    std::sort(findings.begin(), findings.end(), finding_less);
    return findings;
}

std::vector<Finding> detect_m6(const ApplicationBundle& bundle) {
    std::vector<Finding> findings;
    if (bundle.policies.empty()) {
        nlohmann::json evidence;
        evidence["kind"] = bundle.policy_templates_present_but_disabled ? "available_but_disabled"
                                                                        : "none_defined";
        std::string message = bundle.policy_templates_present_but_disabled
                                  ? "network policy templates exist but are not enabled"
                                  : "no network policies are defined";
        findings.push_back(make_finding(Rule::M6, {bundle.application_id}, std::move(evidence),
                                        std::move(message)));
    }
    for (const auto& pol : bundle.policies) {
        if (!select_units(pol.pod_selector, bundle).empty()) continue;
        nlohmann::json evidence;
        evidence["kind"] = "policy_selects_no_pods";
        evidence["selector"] = selector_to_json(pol.pod_selector);
        findings.push_back(make_finding(
            Rule::M6, {pol.id.str("NetworkPolicy")}, std::move(evidence),
            "network policy " + pol.id.str("NetworkPolicy") + " selects no pods"));
    }
    std::sort(findings.begin(), findings.end(), finding_less);
    return findings;
}

std::vector<Finding> detect_m7(const ApplicationBundle& bundle) {
    std::vector<Finding> findings;
    for (const auto& unit : bundle.compute_units) {
        if (!unit.host_network) continue;
        std::vector<std::string> policy_ids;
        for (const auto& pol : bundle.policies)
            if (matches(pol.pod_selector, unit.pod_labels))
                policy_ids.push_back(pol.id.str("NetworkPolicy"));
        std::sort(policy_ids.begin(), policy_ids.end());
        nlohmann::json evidence;
        evidence["policies_selecting"] = policy_ids;
        evidence["policies_ineffective"] = !policy_ids.empty();
        std::string message = "compute unit " + unit.id.str() + " binds to the host network";
        if (!policy_ids.empty()) message += "; network policies selecting it are ineffective";
        findings.push_back(
            make_finding(Rule::M7, {unit.id.str()}, std::move(evidence), std::move(message)));
    }
    std::sort(findings.begin(), findings.end(), finding_less);
    return findings;
}

AnalysisResult analyze_application(const RuleContext& ctx) {
    AnalysisResult result;
    auto append = [&](std::vector<Finding> fs) {
        std::move(fs.begin(), fs.end(), std::back_inserter(result.findings));
    };

    if (ctx.has_runtime()) {
        auto diff = diff_iterations(*ctx.snapshot1, *ctx.snapshot2);
        result.diagnostics = diff.diagnostics;
        append(detect_m1(ctx, &result));
        append(detect_m2(ctx));
        append(detect_m3(ctx));
    } else {
        result.skipped_rules = {"M1: requires runtime data", "M2: requires runtime data",
                                "M3: requires runtime data",
                                "M5A/M5C: require runtime data"};
    }
    append(detect_m4(*ctx.bundle));
    append(detect_m5(ctx));
    append(detect_m6(*ctx.bundle));
    append(detect_m7(*ctx.bundle));

    std::sort(result.findings.begin(), result.findings.end(), finding_less);
    std::sort(result.diagnostics.begin(), result.diagnostics.end());
    return result;
}

}  // namespace knetaudit
