#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridpulse/campaign.hpp"
#include "gridpulse/cascade.hpp"
#include "gridpulse/damage_model.hpp"
#include "gridpulse/errors.hpp"
#include "gridpulse/grid_model.hpp"
#include "gridpulse/json_io.hpp"
#include "gridpulse/powerflow.hpp"
#include "gridpulse/report.hpp"
#include "gridpulse/sensitivity.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridpulse;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitCampaign = 3;

std::atomic<bool> g_cancel{false};

extern "C" void on_sigint(int) { g_cancel.store(true); }

/// Thrown for failures of a running campaign rather than of its inputs.
struct CampaignFailure : Error {
    using Error::Error;
};

// Options shared by every subcommand that reads a case.
struct CaseArgs {
    std::string config;
    std::string case_path;
    std::string geo;
    std::string counties;
    std::optional<double> tol;
    std::optional<int> max_iter;
    bool no_q_limits{false};
};

struct DamageArgs {
    std::string center;
    std::optional<int> county;
    std::optional<double> radius_km;
    std::optional<double> k;
    std::optional<std::uint64_t> seed;
    std::optional<double> gamma_shape;
    std::optional<double> gamma_scale;
};

void add_case_options(CLI::App* cmd, CaseArgs& a, bool case_required = true) {
    cmd->add_option("--config", a.config, "JSON config file; flags override its values");
    auto* c = cmd->add_option("--case", a.case_path, "MATPOWER case file");
    if (case_required) c->description("MATPOWER case file (or \"case\" in --config)");
    cmd->add_option("--geo", a.geo, "Bus coordinates CSV: bus_id,lat,lon[,county_id]");
    cmd->add_option("--counties", a.counties, "County table CSV: county_id,name,lat,lon,pop_density");
    cmd->add_option("--tol", a.tol, "Power-flow mismatch tolerance (pu)");
    cmd->add_option("--max-iter", a.max_iter, "Newton-Raphson iteration limit");
    cmd->add_flag("--no-q-limits", a.no_q_limits, "Do not enforce generator reactive limits");
}

void add_damage_options(CLI::App* cmd, DamageArgs& d) {
    cmd->add_option("--center", d.center, "Ground zero as LAT,LON");
    cmd->add_option("--county", d.county, "Use this county's centroid as ground zero");
    cmd->add_option("--radius-km", d.radius_km, "Damage radius R (km)");
    cmd->add_option("--k", d.k, "Failure probability at ground zero");
    cmd->add_option("--seed", d.seed, "Scenario seed");
    cmd->add_option("--gamma-shape", d.gamma_shape, "Failure-time gamma shape");
    cmd->add_option("--gamma-scale", d.gamma_scale, "Failure-time gamma scale (s)");
}

/// Config values with file-relative paths resolved.
struct Config {
    json values = json::object();
    fs::path dir;

    static Config load(const std::string& path) {
        Config c;
        if (path.empty()) return c;
        const auto text = read_text_file(path);
        try {
            c.values = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ValidationError("config " + path + ": " + e.what());
        }
        if (!c.values.is_object()) throw ValidationError("config " + path + " must be a JSON object");
        c.dir = fs::path(path).parent_path();
        return c;
    }

    template <typename T>
    T get(const std::optional<T>& flag, const char* key, T fallback) const {
        if (flag) return *flag;
        if (values.contains(key)) {
            try {
                return values.at(key).get<T>();
            } catch (const json::exception& e) {
                throw ValidationError(std::string("config key '") + key + "': " + e.what());
            }
        }
        return fallback;
    }

    std::string path(const std::string& flag, const char* key) const {
        if (!flag.empty()) return flag;
        if (!values.contains(key)) return {};
        const fs::path p(values.at(key).get<std::string>());
        return (p.is_absolute() || dir.empty() ? p : dir / p).string();
    }
};

struct Loaded {
    Config config;
    GridCase grid;
    PowerFlowOptions powerflow;
};

Loaded load(const CaseArgs& a) {
    Loaded out{Config::load(a.config), {}, {}};
    const auto case_path = out.config.path(a.case_path, "case");
    if (case_path.empty()) throw ValidationError("no case file given (--case)");
    const auto geo = out.config.path(a.geo, "geo");
    const auto counties = out.config.path(a.counties, "counties");
    out.grid = load_case(case_path, geo.empty() ? std::nullopt : std::optional<fs::path>(geo),
                         counties.empty() ? std::nullopt : std::optional<fs::path>(counties));
    for (const auto& w : out.grid.warnings()) std::cerr << "warning: " << case_path << ": " << w << "\n";
    out.powerflow.tol_pu = out.config.get(a.tol, "tol", out.powerflow.tol_pu);
    out.powerflow.max_iter = out.config.get(a.max_iter, "max_iter", out.powerflow.max_iter);
    out.powerflow.enforce_q_limits =
        a.no_q_limits ? false : out.config.get(std::optional<bool>{}, "enforce_q_limits", true);
    out.powerflow.validate();
    return out;
}

DamageParams damage_params(const DamageArgs& d, const Loaded& l) {
    DamageParams p;
    const auto& cfg = l.config;
    std::optional<int> county = d.county;
    if (!county && d.center.empty() && cfg.values.contains("county")) county = cfg.values.at("county").get<int>();
    if (county) {
        const auto* c = l.grid.find_county(*county);
        if (!c) throw ValidationError("unknown county " + std::to_string(*county));
        p.center = c->centroid;
    } else {
        std::string text = d.center;
        if (text.empty() && cfg.values.contains("center")) {
            const auto& v = cfg.values.at("center");
            text = v.is_string() ? v.get<std::string>()
                                 : std::to_string(v.at(0).get<double>()) + "," + std::to_string(v.at(1).get<double>());
        }
        if (text.empty()) throw ValidationError("no ground zero given (--center LAT,LON or --county ID)");
        const auto comma = text.find(',');
        try {
            if (comma == std::string::npos) throw std::invalid_argument(text);
            p.center.lat_deg = std::stod(text.substr(0, comma));
            p.center.lon_deg = std::stod(text.substr(comma + 1));
        } catch (const std::exception&) {
            throw ValidationError("--center must be LAT,LON, got '" + text + "'");
        }
    }
    p.radius_km = cfg.get(d.radius_km, "radius_km", p.radius_km);
    p.slope = cfg.get(d.k, "k", p.slope);
    p.seed = cfg.get(d.seed, "seed", std::uint64_t{0});
    p.gamma_shape = cfg.get(d.gamma_shape, "gamma_shape", p.gamma_shape);
    p.gamma_scale = cfg.get(d.gamma_scale, "gamma_scale", p.gamma_scale);
    p.validate();
    return p;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << text;
    if (!out) throw ValidationError("cannot write " + path.string());
}

void emit(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") {
        std::cout << text;
    } else {
        write_text(out, text);
    }
}

int run_inspect(const CaseArgs& a, const std::string& out) {
    const auto l = load(a);
    emit(out, case_summary(l.grid).dump(2) + "\n");
    return 0;
}

int run_solve(const CaseArgs& a, bool flat, const std::string& out) {
    const auto l = load(a);
    auto opt = l.powerflow;
    opt.flat_start = l.config.get(flat ? std::optional<bool>(true) : std::nullopt, "flat_start", true);
    const auto sol = solve(l.grid, opt);
    emit(out, to_json(sol, l.grid).dump(2) + "\n");
    if (!sol.converged) std::cerr << "power flow did not converge: " << to_string(sol.status) << "\n";
    return 0;
}

int run_sensitivity(const CaseArgs& a, std::optional<double> threshold_flag, const std::string& out) {
    const auto l = load(a);
    const double threshold = l.config.get(threshold_flag, "threshold", kDefaultSiThreshold);
    const auto table = si_count(lodf(l.grid), threshold, l.grid);
    if (out.empty() || out == "-") {
        std::cout << si_csv(table);
        return 0;
    }
    const fs::path path(out);
    write_text(path, si_csv(table));
    write_text(path.parent_path() / (path.stem().string() + "_county" + path.extension().string()),
               si_county_csv(table));
    std::cerr << "si total " << table.total() << " over " << table.branch_ids.size() << " outages\n";
    return 0;
}

int run_sample(const CaseArgs& a, const DamageArgs& d, const std::string& out) {
    const auto l = load(a);
    const auto params = damage_params(d, l);
    const auto set = sample_failures(l.grid, params);
    emit(out, failures_to_csv(set));
    std::cerr << set.size() << " branches failed\n";
    return 0;
}

struct CascadeArgs {
    std::string failures;
    std::optional<int> batch_size;
    bool no_bisect{false};
    std::vector<double> thresholds;
    std::string out;
};

int run_cascade_cmd(const CaseArgs& a, const DamageArgs& d, const CascadeArgs& c) {
    const auto l = load(a);
    CascadeOptions opt;
    opt.powerflow = l.powerflow;
    opt.batch_size = l.config.get(c.batch_size, "batch_size", opt.batch_size);
    opt.bisect_on_failure = c.no_bisect ? false : l.config.get(std::optional<bool>{}, "bisect", true);
    std::vector<double> thresholds =
        l.config.get(c.thresholds.empty() ? std::nullopt : std::optional(c.thresholds), "thresholds",
                     std::vector<double>{kDefaultSiThreshold});

    FailureSet failures;
    SeverityRecord ids;
    const auto failures_path = l.config.path(c.failures, "failures");
    if (!failures_path.empty()) {
        failures = parse_failures_csv(read_text_file(failures_path));
    } else {
        const auto params = damage_params(d, l);
        failures = sample_failures(l.grid, params);
        ids.k = params.slope;
        ids.seed = params.seed;
        ids.center_lat = params.center.lat_deg;
        ids.center_lon = params.center.lon_deg;
        ids.radius_km = params.radius_km;
    }
    const auto trace = run_cascade(l.grid, failures, opt);
    auto record = summarize_cascade(trace, thresholds);
    record.n_failures = failures.size();
    record.county_id = d.county.value_or(0);
    record.k = ids.k;
    record.seed = ids.seed;
    record.center_lat = ids.center_lat;
    record.center_lon = ids.center_lon;
    record.radius_km = ids.radius_km;

    const fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
    write_text(dir / "steps.jsonl", steps_jsonl(trace));
    write_text(dir / "summary.json", to_json(record, false).dump(2) + "\n");
    const auto text = serialize_case(trace.last_convergent_case);
    write_text(dir / "last_state.m", text.matpower);
    if (!text.geo_csv.empty()) write_text(dir / "last_state_geo.csv", text.geo_csv);
    if (!text.county_csv.empty()) write_text(dir / "last_state_counties.csv", text.county_csv);
    std::cerr << "cascade: " << failures.size() << " sampled, " << trace.steps.size() << " steps, lf "
              << trace.lf_total << ", bf " << trace.bf_total << ", " << to_string(trace.terminated_by) << "\n";
    return 0;
}

struct CampaignArgs {
    std::string spec;
    std::optional<int> workers;
    std::string out;
    std::string preset;
    std::optional<std::size_t> limit;
    bool quiet{false};
};

int run_campaign_cmd(const CampaignArgs& c) {
    auto spec = load_campaign_spec(c.spec);
    if (c.workers) {
        spec.workers = *c.workers;
    } else if (const char* env = std::getenv("GRIDPULSE_WORKERS"); env && *env) {
        try {
            spec.workers = std::stoi(env);
        } catch (const std::exception&) {
            throw ValidationError(std::string("GRIDPULSE_WORKERS is not an integer: ") + env);
        }
    }
    if (!c.preset.empty()) spec.preset = c.preset;
    spec.validate();
    const auto grid = load_case(spec.case_path,
                                spec.geo_path.empty() ? std::nullopt : std::optional<fs::path>(spec.geo_path),
                                spec.county_path.empty() ? std::nullopt : std::optional<fs::path>(spec.county_path));

    std::signal(SIGINT, on_sigint);
    RunControl control;
    control.cancel = &g_cancel;
    control.max_new_scenarios = c.limit;
    const bool quiet = c.quiet;
    control.on_record = [quiet](const SeverityRecord& r, std::size_t done, std::size_t total) {
        if (quiet) return;
        std::cerr << "[" << done << "/" << total << "] " << r.scenario_id;
        if (r.error) {
            std::cerr << " error: " << *r.error << "\n";
        } else {
            std::cerr << " steps=" << r.steps << " lf=" << r.lf_total << " bf=" << r.bf_total << " "
                      << r.terminated_by << "\n";
        }
    };
    CampaignResults results;
    try {
        results = run_campaign(grid, spec, c.out, control);
    } catch (const ValidationError&) {
        throw;
    } catch (const Error& e) {
        throw CampaignFailure(e.what());
    }
    std::signal(SIGINT, SIG_DFL);
    std::size_t errors = 0;
    for (const auto& r : results.records) errors += r.error ? 1 : 0;
    std::cerr << "campaign: " << results.completed.size() << "/" << results.scenario_count << " scenarios complete, "
              << errors << " with errors\n";
    if (g_cancel.load()) {
        std::cerr << "interrupted; rerun the same command to resume\n";
        return kExitCampaign;
    }
    return 0;
}

int run_report(const CaseArgs& a, const std::string& results, const std::string& out, std::optional<int> bins,
               std::optional<double> threshold) {
    const auto l = load(a);
    ReportOptions opt;
    opt.bins = l.config.get(bins, "bins", opt.bins);
    opt.si_threshold = l.config.get(threshold, "threshold", opt.si_threshold);
    const auto records = read_report_records(results);
    const auto figs = emit_figures(records, l.grid, out, opt);
    std::cerr << "report: " << figs.scenario_count << " scenarios, " << figs.files.size() << " files in " << out
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridpulse: cascading-failure analysis of transmission grids under wide-area line damage"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "gridpulse 1.0.0");

    CaseArgs case_args;
    DamageArgs damage;
    std::string out;

    auto* inspect = app.add_subcommand("inspect", "Parse and validate a case; print a summary");
    add_case_options(inspect, case_args);
    inspect->add_option("--out", out, "Write the summary JSON here instead of stdout");

    bool flat = false;
    auto* solve_cmd = app.add_subcommand("solve", "Run an AC power flow");
    add_case_options(solve_cmd, case_args);
    solve_cmd->add_flag("--flat-start", flat, "Start from a flat voltage profile (the default)");
    solve_cmd->add_option("--out", out, "Write the solution JSON here instead of stdout");

    std::optional<double> threshold;
    auto* sens = app.add_subcommand("sensitivity", "LODF severity-index table of the intact case");
    add_case_options(sens, case_args);
    sens->add_option("--threshold", threshold, "|LODF| threshold for the severity count");
    sens->add_option("--out", out, "Write si.csv here (plus a _county sibling)");

    auto* sample = app.add_subcommand("sample", "Draw the failed-branch set of one damage scenario");
    add_case_options(sample, case_args);
    add_damage_options(sample, damage);
    sample->add_option("--out", out, "Write failures CSV here instead of stdout");

    CascadeArgs cascade_args;
    auto* cascade = app.add_subcommand("cascade", "Run one cascade to non-convergence or exhaustion");
    add_case_options(cascade, case_args);
    add_damage_options(cascade, damage);
    cascade->add_option("--failures", cascade_args.failures, "Failures CSV from `sample` (else sample inline)");
    cascade->add_option("--batch-size", cascade_args.batch_size, "Failures applied per power-flow step");
    cascade->add_flag("--no-bisect", cascade_args.no_bisect, "Do not bisect a failing batch");
    cascade->add_option("--thresholds", cascade_args.thresholds, "Severity-index thresholds")->delimiter(',');
    cascade->add_option("--out", cascade_args.out, "Output directory")->required();

    CampaignArgs campaign_args;
    auto* campaign = app.add_subcommand("campaign", "Run a Monte Carlo campaign (resumable)");
    campaign->add_option("--spec", campaign_args.spec, "campaign.json")->required();
    campaign->add_option("--workers", campaign_args.workers, "Worker threads (default $GRIDPULSE_WORKERS, then spec)");
    campaign->add_option("--out", campaign_args.out, "Results directory")->required();
    campaign->add_option("--preset", campaign_args.preset, "popdensity or gs30");
    campaign->add_option("--limit", campaign_args.limit, "Stop after this many new scenarios");
    campaign->add_flag("--quiet", campaign_args.quiet, "No per-scenario progress lines");

    std::string results;
    std::optional<int> bins;
    auto* report = app.add_subcommand("report", "Aggregate campaign records into figure data");
    add_case_options(report, case_args);
    report->add_option("--results", results, "Campaign results directory")->required();
    report->add_option("--out", out, "Figure output directory")->required();
    report->add_option("--bins", bins, "Histogram bin count");
    report->add_option("--threshold", threshold, "|LODF| threshold for the county maps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        if (*inspect) return run_inspect(case_args, out);
        if (*solve_cmd) return run_solve(case_args, flat, out);
        if (*sens) return run_sensitivity(case_args, threshold, out);
        if (*sample) return run_sample(case_args, damage, out);
        if (*cascade) return run_cascade_cmd(case_args, damage, cascade_args);
        if (*campaign) return run_campaign_cmd(campaign_args);
        if (*report) return run_report(case_args, results, out, bins, threshold);
    } catch (const CampaignFailure& e) {
        std::cerr << "error: campaign " << campaign_args.out << ": " << e.what() << "\n";
        return kExitCampaign;
    } catch (const SyntaxError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitUsage;
}
