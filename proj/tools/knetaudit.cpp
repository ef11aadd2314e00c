#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "knetaudit/ingest.hpp"
#include "knetaudit/netpol.hpp"
#include "knetaudit/report.hpp"
#include "knetaudit/rules.hpp"

namespace {

constexpr const char* kToolVersion = "0.1.0";

using namespace knetaudit;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw EnvironmentError("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct IngestOptions {
    std::vector<std::string> manifest_paths;
    std::string chart_path;
    std::string renderer = "helm";
    std::string release_name = "release";
    std::vector<std::string> set_overrides;
    std::string netpol_enable_key = "networkPolicy.enabled";
    std::string app_id;
};

std::vector<std::pair<std::string, std::string>> parse_overrides(
    const std::vector<std::string>& raw) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& kv : raw) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ValidationError("--set expects key=value, got '" + kv + "'");
        out.push_back({kv.substr(0, eq), kv.substr(eq + 1)});
    }
    return out;
}

ApplicationBundle ingest_application(const IngestOptions& opts) {
    std::string app_id = opts.app_id;
    std::string manifest_text;
    bool disabled_policy_templates = false;

    if (!opts.chart_path.empty()) {
        if (app_id.empty())
            app_id = std::filesystem::path(opts.chart_path).filename().string();
        ChartRenderOptions render_opts;
        render_opts.renderer = opts.renderer;
        render_opts.release_name = opts.release_name;
        render_opts.value_overrides = parse_overrides(opts.set_overrides);
        manifest_text = render_chart(opts.chart_path, render_opts);

        // Probe for policy templates that exist but are disabled by default.
        auto count_policies = [](const std::string& text) {
            int n = 0;
            for (const auto& res : parse_manifests(text))
                if (res.kind == "NetworkPolicy") ++n;
            return n;
        };
        if (count_policies(manifest_text) == 0) {
            auto probe_opts = render_opts;
            probe_opts.value_overrides.push_back({opts.netpol_enable_key, "true"});
            try {
                if (count_policies(render_chart(opts.chart_path, probe_opts)) > 0)
                    disabled_policy_templates = true;
            } catch (const std::exception&) {
                // probe render failures are not fatal; the chart may not
                // understand the override key at all
            }
        }
    } else {
        if (opts.manifest_paths.empty())
            throw ValidationError("either --manifests or --chart is required");
        if (app_id.empty())
            app_id = std::filesystem::path(opts.manifest_paths.front()).stem().string();
        for (const auto& path : opts.manifest_paths) {
            if (!manifest_text.empty()) manifest_text += "\n---\n";
            manifest_text += read_file(path);
        }
    }

    auto bundle = normalize(parse_manifests(manifest_text), app_id);
    bundle.policy_templates_present_but_disabled = disabled_policy_templates;
    return bundle;
}

PortRange parse_ephemeral_range(const std::string& spec) {
    PortRange range;
    if (spec.empty()) return range;
    auto dash = spec.find('-');
    if (dash == std::string::npos)
        throw ValidationError("--ephemeral-range expects lo-hi, got '" + spec + "'");
    range.lower = std::stoi(spec.substr(0, dash));
    range.upper = std::stoi(spec.substr(dash + 1));
    if (range.lower < 1 || range.upper > 65535 || range.lower > range.upper)
        throw ValidationError("invalid ephemeral range '" + spec + "'");
    return range;
}

RuleContext make_context(const ApplicationBundle& bundle, const std::string& snapshot1_path,
                         const std::string& snapshot2_path, const PortRange& ephemeral_range) {
    RuleContext ctx;
    ctx.bundle = &bundle;
    ctx.ephemeral_range = ephemeral_range;
    if (!snapshot1_path.empty() && !snapshot2_path.empty()) {
        ctx.snapshot1 = subtract_host_baseline(load_snapshot_file(snapshot1_path), bundle);
        ctx.snapshot2 = subtract_host_baseline(load_snapshot_file(snapshot2_path), bundle);
    } else if (!snapshot1_path.empty() || !snapshot2_path.empty()) {
        throw ValidationError("dynamic-port detection needs both --snapshot1 and --snapshot2");
    }
    return ctx;
}

int emit(const Report& report, const std::string& format, const std::string& suppress_path,
         const std::string& output_path) {
    Report final_report = report;
    if (!suppress_path.empty())
        final_report = apply_suppressions(report, load_suppression_file(suppress_path));

    OutputFormat fmt = format == "text" ? OutputFormat::Text : OutputFormat::Json;
    std::string rendered = render(final_report, fmt);
    if (output_path.empty()) {
        std::cout << rendered;
    } else {
        std::ofstream out(output_path);
        if (!out) throw EnvironmentError("cannot write output file: " + output_path);
        out << rendered;
        if (!out) throw EnvironmentError("failed writing output file: " + output_path);
    }
    return exit_code_for(final_report);
}

ApplicationReport analyze_one(const ApplicationBundle& bundle, const RuleContext& ctx) {
    auto result = analyze_application(ctx);
    ApplicationReport app;
    app.application_id = bundle.application_id;
    app.findings = std::move(result.findings);
    app.skipped_rules = std::move(result.skipped_rules);
    app.diagnostics = std::move(result.diagnostics);
    return app;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"Kubernetes network misconfiguration analyzer"};
    cli.set_version_flag("--version", kToolVersion);
    cli.require_subcommand(1);

    IngestOptions ingest_opts;
    std::string snapshot1_path, snapshot2_path, ephemeral_spec, format = "json";
    std::string suppress_path, output_path, attacker_ns;

    auto add_ingest_flags = [&](CLI::App* cmd) {
        cmd->add_option("--manifests", ingest_opts.manifest_paths,
                        "Rendered manifest files (multi-document YAML)");
        cmd->add_option("--chart", ingest_opts.chart_path, "Chart directory to render");
        cmd->add_option("--set", ingest_opts.set_overrides, "Chart value override key=value");
        cmd->add_option("--netpol-enable-key", ingest_opts.netpol_enable_key,
                        "Chart value key probed to detect disabled network-policy templates");
        cmd->add_option("--renderer", ingest_opts.renderer, "Chart renderer binary name");
        cmd->add_option("--release-name", ingest_opts.release_name, "Release name for rendering");
        cmd->add_option("--app-id", ingest_opts.app_id, "Application id (default: input name)");
    };
    auto add_output_flags = [&](CLI::App* cmd) {
        cmd->add_option("--format", format, "Output format: json or text")
            ->check(CLI::IsMember({"json", "text"}));
        cmd->add_option("--suppress", suppress_path, "Suppression file (JSON)");
        cmd->add_option("--output", output_path, "Write report to file instead of stdout");
    };

    auto* analyze_cmd = cli.add_subcommand("analyze", "Analyze a single application");
    add_ingest_flags(analyze_cmd);
    analyze_cmd->add_option("--snapshot1", snapshot1_path, "Runtime snapshot, iteration 1");
    analyze_cmd->add_option("--snapshot2", snapshot2_path, "Runtime snapshot, iteration 2");
    analyze_cmd->add_option("--ephemeral-range", ephemeral_spec,
                            "Ephemeral port range lo-hi (default 32768-60999)");
    add_output_flags(analyze_cmd);

    std::vector<std::string> cluster_apps;
    std::string snapshots_dir;
    auto* cluster_cmd =
        cli.add_subcommand("cluster", "Analyze several applications plus cluster-wide collisions");
    cluster_cmd->add_option("--app", cluster_apps, "Application as <id>=<manifest-file>")
        ->required();
    cluster_cmd->add_option("--snapshots", snapshots_dir,
                            "Directory of snapshot documents (*.json)");
    cluster_cmd->add_option("--ephemeral-range", ephemeral_spec, "Ephemeral port range lo-hi");
    add_output_flags(cluster_cmd);

    auto* reach_cmd =
        cli.add_subcommand("reachability", "Residual exposure of misconfigured endpoints");
    add_ingest_flags(reach_cmd);
    reach_cmd->add_option("--snapshot1", snapshot1_path, "Runtime snapshot, iteration 1")
        ->required();
    reach_cmd->add_option("--snapshot2", snapshot2_path, "Runtime snapshot, iteration 2")
        ->required();
    reach_cmd->add_option("--ephemeral-range", ephemeral_spec, "Ephemeral port range lo-hi");
    reach_cmd->add_option("--attacker-namespace", attacker_ns,
                          "Place the synthetic attacker in this namespace");
    add_output_flags(reach_cmd);

    auto* snapshot_cmd = cli.add_subcommand("snapshot", "Snapshot utilities");
    snapshot_cmd->require_subcommand(1);
    std::string listing_format = "netstat", listing_file, parse_app = "app", parse_pod = "pod";
    std::string parse_unit, parse_ns = "default";
    int parse_iteration = 1;
    auto* parse_cmd =
        snapshot_cmd->add_subcommand("parse", "Convert a raw socket listing to a snapshot document");
    parse_cmd->add_option("--format", listing_format, "Listing format: netstat or ss")
        ->check(CLI::IsMember({"netstat", "ss"}));
    parse_cmd->add_option("file", listing_file, "Raw listing file")->required();
    parse_cmd->add_option("--app", parse_app, "Application id");
    parse_cmd->add_option("--iteration", parse_iteration, "Snapshot iteration (1 or 2)");
    parse_cmd->add_option("--pod", parse_pod, "Pod name the listing was captured in");
    parse_cmd->add_option("--unit", parse_unit, "Owning unit as <Kind>/<name>")->required();
    parse_cmd->add_option("--namespace", parse_ns, "Unit namespace");
    parse_cmd->add_option("--output", output_path, "Write snapshot document to file");

    CLI11_PARSE(cli, argc, argv);

    try {
        if (*analyze_cmd) {
            auto bundle = ingest_application(ingest_opts);
            auto ctx = make_context(bundle, snapshot1_path, snapshot2_path,
                                    parse_ephemeral_range(ephemeral_spec));
            Report report;
            report.tool_version = kToolVersion;
            report.applications.push_back(analyze_one(bundle, ctx));
            return emit(report, format, suppress_path, output_path);
        }
        if (*cluster_cmd) {
            std::vector<ApplicationBundle> bundles;
            for (const auto& spec : cluster_apps) {
                auto eq = spec.find('=');
                if (eq == std::string::npos)
                    throw ValidationError("--app expects <id>=<manifest-file>, got '" + spec + "'");
                IngestOptions opts;
                opts.app_id = spec.substr(0, eq);
                opts.manifest_paths = {spec.substr(eq + 1)};
                bundles.push_back(ingest_application(opts));
            }
            std::sort(bundles.begin(), bundles.end(),
                      [](const ApplicationBundle& a, const ApplicationBundle& b) {
                          return a.application_id < b.application_id;
                      });

            // Snapshots are matched to applications by the ids recorded in
            // the documents themselves.
            std::map<std::string, std::map<int, RuntimeSnapshot>> snapshots;
            if (!snapshots_dir.empty()) {
                for (const auto& entry : std::filesystem::directory_iterator(snapshots_dir)) {
                    if (entry.path().extension() != ".json") continue;
                    auto snap = load_snapshot_file(entry.path().string());
                    snapshots[snap.application_id][snap.iteration] = std::move(snap);
                }
            }

            Report report;
            report.tool_version = kToolVersion;
            auto ephemeral_range = parse_ephemeral_range(ephemeral_spec);
            for (const auto& bundle : bundles) {
                RuleContext ctx;
                ctx.bundle = &bundle;
                ctx.ephemeral_range = ephemeral_range;
                auto it = snapshots.find(bundle.application_id);
                if (it != snapshots.end() && it->second.contains(1) && it->second.contains(2)) {
                    ctx.snapshot1 = subtract_host_baseline(it->second.at(1), bundle);
                    ctx.snapshot2 = subtract_host_baseline(it->second.at(2), bundle);
                }
                report.applications.push_back(analyze_one(bundle, ctx));
            }
            report.cluster_findings = detect_m4_star(bundles);
            return emit(report, format, suppress_path, output_path);
        }
        if (*reach_cmd) {
            auto bundle = ingest_application(ingest_opts);
            auto ctx = make_context(bundle, snapshot1_path, snapshot2_path,
                                    parse_ephemeral_range(ephemeral_spec));
            Report report;
            report.tool_version = kToolVersion;
            report.applications.push_back(analyze_one(bundle, ctx));
            report.exposure =
                residual_exposure(ctx, report.applications.front().findings, attacker_ns);
            return emit(report, format, suppress_path, output_path);
        }
        if (*parse_cmd) {
            auto slash = parse_unit.find('/');
            if (slash == std::string::npos)
                throw ValidationError("--unit expects <Kind>/<name>, got '" + parse_unit + "'");
            auto kind = workload_kind_from_string(parse_unit.substr(0, slash));
            if (!kind)
                throw ValidationError("unknown workload kind in --unit '" + parse_unit + "'");

            RuntimeSnapshot snap;
            snap.application_id = parse_app;
            snap.iteration = parse_iteration;
            PodObservation obs;
            obs.pod_name = parse_pod;
            obs.owner_unit_id = {parse_app, parse_ns, *kind, parse_unit.substr(slash + 1)};
            obs.sockets = parse_socket_listing(
                read_file(listing_file),
                listing_format == "ss" ? ListingFormat::Ss : ListingFormat::Netstat);
            snap.observations.push_back(std::move(obs));

            std::string rendered = snapshot_to_json(snap).dump(2) + "\n";
            if (output_path.empty()) {
                std::cout << rendered;
            } else {
                std::ofstream out(output_path);
                if (!out) throw EnvironmentError("cannot write output file: " + output_path);
                out << rendered;
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
