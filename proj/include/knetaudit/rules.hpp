#pragma once

#include "knetaudit/model.hpp"
#include "knetaudit/snapshot.hpp"

namespace knetaudit {

struct PortRange {
    int lower = 32768;
    int upper = 60999;

    bool contains(int port) const { return port >= lower && port <= upper; }
};

struct RuleContext {
    const ApplicationBundle* bundle = nullptr;
    // Post baseline-subtraction snapshots; both present or runtime rules skip.
    std::optional<RuntimeSnapshot> snapshot1;
    std::optional<RuntimeSnapshot> snapshot2;
    PortRange ephemeral_range;

    bool has_runtime() const { return snapshot1.has_value() && snapshot2.has_value(); }
};

struct AnalysisResult {
    std::vector<Finding> findings;
    std::vector<std::string> skipped_rules;  // "M1: requires runtime data", ...
    std::vector<std::string> diagnostics;
};

std::vector<Finding> detect_m1(const RuleContext& ctx, AnalysisResult* out = nullptr);
std::vector<Finding> detect_m2(const RuleContext& ctx);
std::vector<Finding> detect_m3(const RuleContext& ctx);
std::vector<Finding> detect_m4(const ApplicationBundle& bundle);
std::vector<Finding> detect_m4_star(const std::vector<ApplicationBundle>& bundles);
std::vector<Finding> detect_m5(const RuleContext& ctx);
std::vector<Finding> detect_m6(const ApplicationBundle& bundle);
std::vector<Finding> detect_m7(const ApplicationBundle& bundle);

// Runs all per-application rules in order M1..M7 and returns the findings in
// deterministic order, along with skip diagnostics for runtime rules when
// snapshots are absent.
AnalysisResult analyze_application(const RuleContext& ctx);

}  // namespace knetaudit
