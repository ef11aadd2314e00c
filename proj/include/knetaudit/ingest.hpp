#pragma once

#include <yaml-cpp/yaml.h>

#include "knetaudit/model.hpp"

namespace knetaudit {

struct RawResource {
    std::string api_version;
    std::string kind;
    std::string name;
    std::string ns;
    LabelSet labels;  // object metadata labels, not pod-template labels
    YAML::Node body;
    bool analyzed = false;  // known kinds only; unknown kinds are retained
};

// One RawResource per non-empty YAML document, order preserved. Fails fast on
// the first malformed document with its index and line.
std::vector<RawResource> parse_manifests(const std::string& text);

struct ChartRenderOptions {
    std::string renderer = "helm";  // binary name on PATH
    std::string release_name = "release";
    std::vector<std::pair<std::string, std::string>> value_overrides;
};

// Invokes `<renderer> template <release> <chart-path> [--set k=v ...]` and
// returns its stdout verbatim.
std::string render_chart(const std::string& chart_path, const ChartRenderOptions& options);

// Flattens workloads to ComputeUnits, types services and policies, and sorts
// everything by (kind, namespace, name).
ApplicationBundle normalize(const std::vector<RawResource>& resources,
                            const std::string& application_id,
                            const std::string& default_namespace = "default");

}  // namespace knetaudit
