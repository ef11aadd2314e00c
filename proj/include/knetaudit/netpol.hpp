#pragma once

#include "knetaudit/rules.hpp"

namespace knetaudit {

struct Endpoint {
    UnitId unit_id;
    Protocol protocol = Protocol::TCP;
    int port = 0;
    std::string via;  // "direct_pod" or "service:<service-id>"

    auto operator<=>(const Endpoint&) const = default;
    nlohmann::json to_json() const;
};

std::vector<const NetworkPolicySpec*> effective_ingress_policies(const ComputeUnit& dst,
                                                                 const ApplicationBundle& bundle);

// Core policy semantics: hostNetwork destinations bypass policies, no
// applicable policy means default allow-all, otherwise some applicable rule
// must admit both the peer and the port.
bool is_ingress_allowed(const ComputeUnit& src, const ComputeUnit& dst, Protocol protocol,
                        int port, const ApplicationBundle& bundle);

std::vector<const NetworkPolicySpec*> effective_egress_policies(const ComputeUnit& src,
                                                                const ApplicationBundle& bundle);

bool is_egress_allowed(const ComputeUnit& src, const ComputeUnit& dst, Protocol protocol, int port,
                       const ApplicationBundle& bundle);

// Misconfigured ports (from M1/M2/M3/M5 findings) that a label-less
// in-cluster attacker pod can still reach, both directly and through any
// service routing to them. Requires runtime data.
std::vector<Endpoint> residual_exposure(const RuleContext& ctx,
                                        const std::vector<Finding>& findings,
                                        const std::string& attacker_namespace = "");

}  // namespace knetaudit
