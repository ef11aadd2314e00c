#pragma once

#include "knetaudit/netpol.hpp"

namespace knetaudit {

struct ApplicationReport {
    std::string application_id;
    std::vector<Finding> findings;
    std::vector<std::string> skipped_rules;
    std::vector<std::string> diagnostics;
};

struct SuppressedFinding {
    Finding finding;
    std::string justification;
};

struct Report {
    std::string tool_version;
    std::vector<ApplicationReport> applications;
    std::vector<Finding> cluster_findings;  // M4*
    std::optional<std::vector<Endpoint>> exposure;
    std::vector<SuppressedFinding> suppressed;
    std::vector<std::string> stale_suppressions;

    bool has_findings() const;
};

struct Suppression {
    Rule rule = Rule::M1;
    std::string subject_pattern;  // glob over canonical resource id strings
    std::string justification;    // non-empty
};

std::vector<Suppression> parse_suppressions(const nlohmann::json& doc);
std::vector<Suppression> load_suppression_file(const std::string& path);

// Per-application and total per-rule counts plus the affected-apps ratio.
nlohmann::json aggregate(const Report& report);

// Moves matching findings into the suppressed section; suppressions that
// match nothing are reported as stale.
Report apply_suppressions(const Report& report, const std::vector<Suppression>& suppressions);

enum class OutputFormat { Json, Text };

// Byte-deterministic serialization: sorted keys, deterministic arrays, no
// timestamps.
std::string render(const Report& report, OutputFormat format);

// CI exit convention: 0 no findings, 1 findings present, 2 execution error.
int exit_code_for(const Report& report);

}  // namespace knetaudit
