#include "knetaudit/report.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace knetaudit {

namespace {

const char* kRuleColumns[] = {"M1", "M2", "M3", "M4A", "M4B", "M4C", "M4*",
                              "M5A", "M5B", "M5C", "M5D", "M6", "M7"};

}  // namespace

bool Report::has_findings() const {
    if (!cluster_findings.empty()) return true;
    for (const auto& app : applications)
        if (!app.findings.empty()) return true;
    return false;
}

std::vector<Suppression> parse_suppressions(const nlohmann::json& doc) {
    if (!doc.is_array())
        throw ValidationError("suppression file must be a list of {rule, subject, justification}");
    std::vector<Suppression> out;
    for (const auto& entry : doc) {
        Suppression s;
        auto rule = rule_from_string(entry.value("rule", ""));
        if (!rule)
            throw ValidationError("suppression entry has unknown rule '" +
                                  entry.value("rule", "") + "'");
        s.rule = *rule;
        s.subject_pattern = entry.value("subject", "");
        if (s.subject_pattern.empty())
            throw ValidationError("suppression entry missing subject pattern");
        s.justification = entry.value("justification", "");
        if (s.justification.empty())
            throw ValidationError("suppression entry missing justification");
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Suppression> load_suppression_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw EnvironmentError("cannot open suppression file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid suppression file ") + path + ": " + e.what());
    }
    return parse_suppressions(doc);
}

nlohmann::json aggregate(const Report& report) {
    nlohmann::json summary;
    nlohmann::json per_app = nlohmann::json::object();
    std::map<std::string, int> totals;
    for (const char* col : kRuleColumns) totals[col] = 0;

    int affected = 0;
    for (const auto& app : report.applications) {
        std::map<std::string, int> counts;
        for (const char* col : kRuleColumns) counts[col] = 0;
        for (const auto& f : app.findings) ++counts[to_string(f.rule)];
        if (!app.findings.empty()) ++affected;
        per_app[app.application_id] = counts;
    }
    for (const auto& f : report.cluster_findings) ++totals[to_string(f.rule)];
    for (const auto& app : report.applications)
        for (const auto& f : app.findings) ++totals[to_string(f.rule)];

    summary["per_application"] = per_app;
    summary["totals"] = totals;
    summary["affected_apps"] = affected;
    summary["total_apps"] = report.applications.size();
    return summary;
}

Report apply_suppressions(const Report& report, const std::vector<Suppression>& suppressions) {
    Report out = report;
    out.suppressed.clear();
    out.stale_suppressions.clear();
    std::vector<bool> used(suppressions.size(), false);

    auto filter = [&](std::vector<Finding>& findings) {
        std::vector<Finding> kept;
        for (auto& f : findings) {
            std::string justification;
            bool suppressed = false;
            for (size_t i = 0; i < suppressions.size(); ++i) {
                const auto& s = suppressions[i];
                if (s.rule != f.rule) continue;
                bool any_subject = false;
                for (const auto& subject : f.subjects)
                    if (fnmatch(s.subject_pattern.c_str(), subject.c_str(), 0) == 0)
                        any_subject = true;
                if (!any_subject) continue;
                used[i] = true;
                if (!suppressed) justification = s.justification;
                suppressed = true;
            }
            if (suppressed)
                out.suppressed.push_back({std::move(f), std::move(justification)});
            else
                kept.push_back(std::move(f));
        }
        findings = std::move(kept);
    };

    for (auto& app : out.applications) filter(app.findings);
    filter(out.cluster_findings);

    for (size_t i = 0; i < suppressions.size(); ++i)
        if (!used[i])
            out.stale_suppressions.push_back(to_string(suppressions[i].rule) + " " +
                                             suppressions[i].subject_pattern);
    return out;
}

namespace {

nlohmann::json report_to_json(const Report& report) {
    nlohmann::json doc;
    doc["tool_version"] = report.tool_version;
    doc["applications"] = nlohmann::json::array();
    for (const auto& app : report.applications) {
        nlohmann::json j;
        j["application_id"] = app.application_id;
        j["findings"] = nlohmann::json::array();
        for (const auto& f : app.findings) j["findings"].push_back(f.to_json());
        j["skipped_rules"] = app.skipped_rules;
        j["diagnostics"] = app.diagnostics;
        doc["applications"].push_back(std::move(j));
    }
    doc["cluster_findings"] = nlohmann::json::array();
    for (const auto& f : report.cluster_findings) doc["cluster_findings"].push_back(f.to_json());
    if (report.exposure) {
        doc["exposure"] = nlohmann::json::array();
        for (const auto& e : *report.exposure) doc["exposure"].push_back(e.to_json());
    }
    doc["suppressed"] = nlohmann::json::array();
    for (const auto& s : report.suppressed) {
        nlohmann::json j = s.finding.to_json();
        j["justification"] = s.justification;
        doc["suppressed"].push_back(std::move(j));
    }
    doc["stale_suppressions"] = report.stale_suppressions;
    doc["summary"] = aggregate(report);
    return doc;
}

void render_finding_text(std::ostream& os, const Finding& f) {
    os << "  [" << to_string(f.rule) << "] (" << f.severity << ") " << f.message << "\n";
    os << "      subjects: ";
    for (size_t i = 0; i < f.subjects.size(); ++i) os << (i ? ", " : "") << f.subjects[i];
    os << "\n";
    os << "      possible attacks: ";
    for (size_t i = 0; i < f.possible_attacks.size(); ++i)
        os << (i ? "; " : "") << f.possible_attacks[i];
    os << "\n";
    os << "      mitigation: " << f.mitigation_hint << "\n";
}

std::string render_text(const Report& report) {
    std::ostringstream os;
    for (const auto& app : report.applications) {
        os << "application " << app.application_id << ": " << app.findings.size()
           << " finding(s)\n";
        for (const auto& f : app.findings) render_finding_text(os, f);
        for (const auto& s : app.skipped_rules) os << "  skipped: " << s << "\n";
        for (const auto& d : app.diagnostics) os << "  note: " << d << "\n";
    }
    if (!report.cluster_findings.empty()) {
        os << "cluster-wide: " << report.cluster_findings.size() << " finding(s)\n";
        for (const auto& f : report.cluster_findings) render_finding_text(os, f);
    }
    if (report.exposure) {
        os << "residual exposure: " << report.exposure->size() << " endpoint(s)\n";
        for (const auto& e : *report.exposure)
            os << "  " << e.unit_id.str() << " " << to_string(e.protocol) << "/" << e.port
               << " via " << e.via << "\n";
    }
    if (!report.suppressed.empty()) {
        os << "suppressed: " << report.suppressed.size() << " finding(s)\n";
        for (const auto& s : report.suppressed)
            os << "  [" << to_string(s.finding.rule) << "] " << s.finding.message << " ("
               << s.justification << ")\n";
    }
    for (const auto& s : report.stale_suppressions) os << "stale suppression: " << s << "\n";

    auto summary = aggregate(report);
    os << "summary: " << summary["affected_apps"].get<int>() << "/"
       << summary["total_apps"].get<size_t>() << " application(s) affected\n";
    os << "per-rule totals:";
    for (const auto& [rule, count] : summary["totals"].items())
        if (count.get<int>() > 0) os << " " << rule << "=" << count.get<int>();
    os << "\n";
    return os.str();
}

}  // namespace

std::string render(const Report& report, OutputFormat format) {
    if (format == OutputFormat::Json) return report_to_json(report).dump(2) + "\n";
    return render_text(report);
}

int exit_code_for(const Report& report) { return report.has_findings() ? 1 : 0; }

}  // namespace knetaudit
