#include "gridpulse/campaign.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "gridpulse/errors.hpp"
#include "gridpulse/rng.hpp"
#include "gridpulse/sensitivity.hpp"
#include "text_util.hpp"

namespace gridpulse {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kGsPresetStream = 0x6773333020ULL;

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw Error("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

/// Append-only line log; each record is a single write(2) on an O_APPEND fd.
class RecordLog {
public:
    explicit RecordLog(const fs::path& path) {
        fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
        if (fd_ < 0) throw Error("cannot open " + path.string());
    }
    RecordLog(const RecordLog&) = delete;
    RecordLog& operator=(const RecordLog&) = delete;
    ~RecordLog() {
        if (fd_ >= 0) ::close(fd_);
    }

    void append(const std::string& line) {
        const char* p = line.data();
        std::size_t left = line.size();
        while (left > 0) {
            const auto n = ::write(fd_, p, left);
            if (n < 0) throw Error("write to record log failed");
            p += n;
            left -= static_cast<std::size_t>(n);
        }
        ::fsync(fd_);
    }

private:
    int fd_{-1};
};

struct LoadedLog {
    std::vector<SeverityRecord> records;
    std::uintmax_t valid_bytes{0};
    bool torn{false};
};

LoadedLog read_log(const fs::path& path) {
    LoadedLog out;
    if (!fs::exists(path)) return out;
    const auto text = read_text_file(path);
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            out.torn = true;
            break;
        }
        const auto line = std::string_view(text).substr(pos, nl - pos);
        if (!detail::trim(line).empty()) {
            try {
                out.records.push_back(record_from_json(json::parse(line)));
            } catch (const std::exception&) {
                out.torn = true;
                break;
            }
        }
        pos = nl + 1;
        out.valid_bytes = pos;
    }
    return out;
}

bool record_order(const SeverityRecord& a, const SeverityRecord& b) {
    return std::tie(a.county_id, a.k_index, a.replicate, a.scenario_id) <
           std::tie(b.county_id, b.k_index, b.replicate, b.scenario_id);
}

}  // namespace

void CampaignSpec::validate() const {
    if (!(radius_km > 0)) throw ValidationError("campaign radius_km must be positive");
    if (k_values.empty()) throw ValidationError("campaign needs at least one k value");
    for (double k : k_values) {
        if (!(k > 0 && k <= 1)) throw ValidationError("campaign k values must lie in (0, 1]");
    }
    if (replicates < 1) throw ValidationError("campaign replicates must be at least 1");
    if (workers < 1) throw ValidationError("campaign workers must be at least 1");
    for (double t : thresholds) {
        if (!(t > 0)) throw ValidationError("SI thresholds must be positive");
    }
    if (!preset.empty() && preset != "popdensity" && preset != "gs30") {
        throw ValidationError("unknown campaign preset '" + preset + "'");
    }
    cascade_options().validate();
    DamageParams probe;
    probe.radius_km = radius_km;
    probe.gamma_shape = gamma_shape;
    probe.gamma_scale = gamma_scale;
    probe.validate();
}

CascadeOptions CampaignSpec::cascade_options() const {
    CascadeOptions o;
    o.batch_size = batch_size;
    o.bisect_on_failure = bisect_on_failure;
    o.powerflow = powerflow;
    return o;
}

std::uint64_t CampaignSpec::fingerprint() const {
    auto j = to_json(*this);
    j.erase("workers");
    return fnv1a(j.dump());
}

json to_json(const CampaignSpec& s) {
    json j;
    j["case"] = s.case_path.string();
    j["geo"] = s.geo_path.string();
    j["counties"] = s.county_path.string();
    if (s.centers) j["centers"] = *s.centers;
    j["radius_km"] = s.radius_km;
    j["k_values"] = s.k_values;
    j["replicates"] = s.replicates;
    j["master_seed"] = s.master_seed;
    j["batch_size"] = s.batch_size;
    j["bisect"] = s.bisect_on_failure;
    j["thresholds"] = s.thresholds;
    j["gamma_shape"] = s.gamma_shape;
    j["gamma_scale"] = s.gamma_scale;
    j["tol"] = s.powerflow.tol_pu;
    j["max_iter"] = s.powerflow.max_iter;
    j["enforce_q_limits"] = s.powerflow.enforce_q_limits;
    j["workers"] = s.workers;
    if (!s.preset.empty()) j["preset"] = s.preset;
    return j;
}

CampaignSpec campaign_spec_from_json(const json& j, const fs::path& base_dir) {
    CampaignSpec s;
    try {
        s.case_path = resolve(base_dir, j.at("case").get<std::string>());
        s.geo_path = resolve(base_dir, j.value("geo", std::string{}));
        s.county_path = resolve(base_dir, j.value("counties", std::string{}));
        if (j.contains("centers") && !j["centers"].is_null()) s.centers = j["centers"].get<std::vector<int>>();
        s.radius_km = j.value("radius_km", s.radius_km);
        s.k_values = j.value("k_values", s.k_values);
        s.replicates = j.value("replicates", s.replicates);
        s.master_seed = j.value("master_seed", s.master_seed);
        s.batch_size = j.value("batch_size", s.batch_size);
        s.bisect_on_failure = j.value("bisect", s.bisect_on_failure);
        s.thresholds = j.value("thresholds", s.thresholds);
        s.gamma_shape = j.value("gamma_shape", s.gamma_shape);
        s.gamma_scale = j.value("gamma_scale", s.gamma_scale);
        s.powerflow.tol_pu = j.value("tol", s.powerflow.tol_pu);
        s.powerflow.max_iter = j.value("max_iter", s.powerflow.max_iter);
        s.powerflow.enforce_q_limits = j.value("enforce_q_limits", s.powerflow.enforce_q_limits);
        s.workers = j.value("workers", s.workers);
        s.preset = j.value("preset", std::string{});
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid campaign spec: ") + e.what());
    }
    s.validate();
    return s;
}

CampaignSpec load_campaign_spec(const fs::path& path) {
    const auto text = read_text_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError("campaign spec " + path.string() + " is not valid JSON: " + e.what());
    }
    return campaign_spec_from_json(j, path.parent_path());
}

CampaignSpec apply_preset(CampaignSpec spec, const GridCase& grid) {
    if (spec.preset.empty()) return spec;
    std::vector<int> ids;
    for (const auto& c : grid.counties()) ids.push_back(c.id);
    std::sort(ids.begin(), ids.end());
    if (spec.preset == "popdensity") {
        spec.radius_km = kPopDensityRadiusKm;
        spec.centers = ids;
    } else if (spec.preset == "gs30") {
        rng::CounterStream stream(spec.master_seed, kGsPresetStream);
        const std::size_t take = std::min(kGsPresetCounties, ids.size());
        for (std::size_t i = 0; i < take; ++i) {
            const auto j = i + static_cast<std::size_t>(stream.below(ids.size() - i));
            std::swap(ids[i], ids[j]);
        }
        ids.resize(take);
        std::sort(ids.begin(), ids.end());
        spec.centers = ids;
    }
    spec.k_values = {kPresetK};
    spec.replicates = 1;
    spec.preset.clear();
    return spec;
}

std::uint64_t scenario_seed(std::uint64_t master_seed, int county_id, std::size_t k_index, int replicate) {
    return rng::stable_hash({master_seed, static_cast<std::uint64_t>(static_cast<std::int64_t>(county_id)),
                             static_cast<std::uint64_t>(k_index), static_cast<std::uint64_t>(replicate)});
}

std::vector<ScenarioSpec> enumerate_scenarios(const CampaignSpec& spec_in, const GridCase& grid) {
    const CampaignSpec spec = apply_preset(spec_in, grid);
    spec.validate();
    std::vector<const County*> centers;
    if (spec.centers) {
        for (int id : *spec.centers) {
            const auto* c = grid.find_county(id);
            if (!c) throw ValidationError("campaign center references unknown county " + std::to_string(id));
            centers.push_back(c);
        }
    } else {
        for (const auto& c : grid.counties()) centers.push_back(&c);
    }
    std::sort(centers.begin(), centers.end(), [](const County* a, const County* b) { return a->id < b->id; });
    centers.erase(std::unique(centers.begin(), centers.end()), centers.end());

    std::vector<ScenarioSpec> out;
    out.reserve(centers.size() * spec.k_values.size() * static_cast<std::size_t>(spec.replicates));
    std::set<std::uint64_t> seeds;
    for (const auto* c : centers) {
        for (std::size_t ki = 0; ki < spec.k_values.size(); ++ki) {
            for (int rep = 0; rep < spec.replicates; ++rep) {
                ScenarioSpec s;
                s.order = out.size();
                s.county_id = c->id;
                s.k_index = ki;
                s.replicate = rep;
                s.id = "c" + std::to_string(c->id) + "-k" + std::to_string(ki) + "-r" + std::to_string(rep);
                s.damage.center = c->centroid;
                s.damage.radius_km = spec.radius_km;
                s.damage.slope = spec.k_values[ki];
                s.damage.gamma_shape = spec.gamma_shape;
                s.damage.gamma_scale = spec.gamma_scale;
                s.damage.seed = scenario_seed(spec.master_seed, c->id, ki, rep);
                if (!seeds.insert(s.damage.seed).second) throw Error("scenario seed collision at " + s.id);
                out.push_back(std::move(s));
            }
        }
    }
    return out;
}

std::string threshold_key(double threshold) { return detail::format_double(threshold); }

SeverityRecord summarize_cascade(const CascadeTrace& trace, std::span<const double> thresholds) {
    SeverityRecord r;
    r.steps = trace.steps.size();
    r.terminated_by = to_string(trace.terminated_by);
    r.failures_applied = trace.failures_applied;
    r.lf_total = trace.lf_total;
    r.lf_failed = trace.lf_failed;
    r.lf_pruned = trace.lf_pruned;
    r.bf_total = trace.bf_total;
    r.next_failure = trace.next_failure;
    const auto bf = bus_failures(trace);
    const auto buses = trace.last_convergent_case.buses();
    for (std::size_t i = 0; i < bf.failed.size(); ++i) {
        if (bf.failed[i]) r.failed_buses.push_back(buses[i].id);
    }

    const auto gs = generation_surplus(trace.last_convergent_case, trace.last_convergent_solution);
    r.gs_total_mw = gs.total_mw;
    for (const auto& g : gs.per_generator) r.gen_gs_mw.emplace_back(g.gen_index, g.gs_mw);

    if (!thresholds.empty()) {
        const auto factors = lodf(trace.last_convergent_case);
        for (double t : thresholds) r.si_totals[threshold_key(t)] = si_count(factors, t).total();
    }

    r.slack_p_base_mw = trace.base_slack_p_mw;
    r.slack_p_final_mw = trace.last_convergent_solution.slack_p_mw;
    r.slack_dp_mw = r.slack_p_final_mw - r.slack_p_base_mw;
    r.base_load_mw = trace.base_load_mw;
    r.gen_loading_pct = trace.gen_loading_pct;
    if (!r.gen_loading_pct.empty()) {
        r.mean_gen_loading_pct = std::accumulate(r.gen_loading_pct.begin(), r.gen_loading_pct.end(), 0.0) /
                                 static_cast<double>(r.gen_loading_pct.size());
    }
    return r;
}

SeverityRecord run_scenario(const GridCase& grid, const ScenarioSpec& scenario, const CascadeOptions& options,
                            std::span<const double> thresholds) {
    const auto t0 = std::chrono::steady_clock::now();
    SeverityRecord r;
    try {
        const auto failures = sample_failures(grid, scenario.damage);
        const auto trace = run_cascade(grid, failures, options);
        r = summarize_cascade(trace, thresholds);
        r.n_failures = failures.size();
    } catch (const std::exception& e) {
        r = SeverityRecord{};
        r.error = e.what();
    }
    r.scenario_id = scenario.id;
    r.county_id = scenario.county_id;
    r.k_index = scenario.k_index;
    r.k = scenario.damage.slope;
    r.replicate = scenario.replicate;
    r.seed = scenario.damage.seed;
    r.center_lat = scenario.damage.center.lat_deg;
    r.center_lon = scenario.damage.center.lon_deg;
    r.radius_km = scenario.damage.radius_km;
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

json to_json(const SeverityRecord& r, bool include_wall_time) {
    json j;
    j["scenario_id"] = r.scenario_id;
    j["county_id"] = r.county_id;
    j["k_index"] = r.k_index;
    j["k"] = r.k;
    j["replicate"] = r.replicate;
    j["seed"] = r.seed;
    j["center_lat"] = r.center_lat;
    j["center_lon"] = r.center_lon;
    j["radius_km"] = r.radius_km;
    if (r.error) {
        j["error"] = *r.error;
    } else {
        j["n_failures"] = r.n_failures;
        j["failures_applied"] = r.failures_applied;
        j["steps"] = r.steps;
        j["terminated_by"] = r.terminated_by;
        j["lf_total"] = r.lf_total;
        j["lf_failed"] = r.lf_failed;
        j["lf_pruned"] = r.lf_pruned;
        j["bf_total"] = r.bf_total;
        j["failed_buses"] = r.failed_buses;
        j["next_failure"] = r.next_failure ? json(*r.next_failure) : json(nullptr);
        j["gs_total_mw"] = r.gs_total_mw;
        json gens = json::array();
        for (const auto& [idx, mw] : r.gen_gs_mw) gens.push_back({{"gen", idx}, {"gs_mw", mw}});
        j["gen_gs_mw"] = gens;
        j["si_totals"] = r.si_totals;
        j["slack_p_base_mw"] = r.slack_p_base_mw;
        j["slack_p_final_mw"] = r.slack_p_final_mw;
        j["slack_dp_mw"] = r.slack_dp_mw;
        j["base_load_mw"] = r.base_load_mw;
        j["mean_gen_loading_pct"] = r.mean_gen_loading_pct;
        j["gen_loading_pct"] = r.gen_loading_pct;
    }
    if (include_wall_time) j["wall_time_s"] = r.wall_time_s;
    return j;
}

SeverityRecord record_from_json(const json& j) {
    SeverityRecord r;
    r.scenario_id = j.at("scenario_id").get<std::string>();
    r.county_id = j.at("county_id").get<int>();
    r.k_index = j.at("k_index").get<std::size_t>();
    r.k = j.at("k").get<double>();
    r.replicate = j.at("replicate").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.center_lat = j.value("center_lat", 0.0);
    r.center_lon = j.value("center_lon", 0.0);
    r.radius_km = j.value("radius_km", 0.0);
    r.wall_time_s = j.value("wall_time_s", 0.0);
    if (j.contains("error")) {
        r.error = j["error"].get<std::string>();
        return r;
    }
    r.n_failures = j.at("n_failures").get<std::size_t>();
    r.failures_applied = j.at("failures_applied").get<std::size_t>();
    r.steps = j.at("steps").get<std::size_t>();
    r.terminated_by = j.at("terminated_by").get<std::string>();
    r.lf_total = j.at("lf_total").get<std::size_t>();
    r.lf_failed = j.at("lf_failed").get<std::size_t>();
    r.lf_pruned = j.at("lf_pruned").get<std::size_t>();
    r.bf_total = j.at("bf_total").get<std::size_t>();
    r.failed_buses = j.at("failed_buses").get<std::vector<int>>();
    if (!j.at("next_failure").is_null()) r.next_failure = j["next_failure"].get<int>();
    r.gs_total_mw = j.at("gs_total_mw").get<double>();
    for (const auto& g : j.at("gen_gs_mw")) r.gen_gs_mw.emplace_back(g.at("gen").get<std::size_t>(), g.at("gs_mw").get<double>());
    r.si_totals = j.at("si_totals").get<std::map<std::string, long>>();
    r.slack_p_base_mw = j.at("slack_p_base_mw").get<double>();
    r.slack_p_final_mw = j.at("slack_p_final_mw").get<double>();
    r.slack_dp_mw = j.at("slack_dp_mw").get<double>();
    r.base_load_mw = j.at("base_load_mw").get<double>();
    r.mean_gen_loading_pct = j.at("mean_gen_loading_pct").get<double>();
    r.gen_loading_pct = j.at("gen_loading_pct").get<std::vector<double>>();
    return r;
}

std::vector<SeverityRecord> load_records(const fs::path& out_dir) {
    auto log = read_log(out_dir / kRecordsFile);
    std::sort(log.records.begin(), log.records.end(), record_order);
    return std::move(log.records);
}

std::map<int, long> per_bus_failures(const GridCase& grid, std::span<const SeverityRecord> records) {
    std::map<int, long> counts;
    for (const auto& b : grid.buses()) counts[b.id] = 0;
    for (const auto& r : records) {
        for (int id : r.failed_buses) ++counts[id];
    }
    return counts;
}

std::string per_bus_csv(const GridCase& grid, const std::map<int, long>& counts) {
    std::ostringstream os;
    os << "bus_id,bf_count\n";
    for (const auto& b : grid.buses()) {
        const auto it = counts.find(b.id);
        os << b.id << ',' << (it == counts.end() ? 0 : it->second) << '\n';
    }
    return os.str();
}

CampaignResults run_campaign(const GridCase& grid, const CampaignSpec& spec, const fs::path& out_dir,
                             const RunControl& control) {
    spec.validate();
    const auto scenarios = enumerate_scenarios(spec, grid);
    const auto options = spec.cascade_options();
    const auto thresholds = spec.thresholds;
    fs::create_directories(out_dir);

    const auto manifest_path = out_dir / kManifestFile;
    const auto records_path = out_dir / kRecordsFile;
    const std::string fingerprint = hex64(spec.fingerprint());
    if (fs::exists(manifest_path)) {
        json m;
        try {
            m = json::parse(read_text_file(manifest_path));
        } catch (const json::exception&) {
            m = json::object();
        }
        if (m.contains("fingerprint") && m["fingerprint"] != fingerprint) {
            throw Error("results directory " + out_dir.string() + " belongs to a different campaign");
        }
    }

    // Records are the source of truth; a torn trailing line is discarded.
    auto log = read_log(records_path);
    if (log.torn) fs::resize_file(records_path, log.valid_bytes);

    std::map<std::string, std::size_t> order;
    for (const auto& s : scenarios) order.emplace(s.id, s.order);
    std::vector<std::optional<SeverityRecord>> slots(scenarios.size());
    for (auto& r : log.records) {
        const auto it = order.find(r.scenario_id);
        if (it != order.end() && !slots[it->second]) slots[it->second] = std::move(r);
    }

    std::mutex writer;
    auto write_manifest = [&]() {
        json m;
        m["fingerprint"] = fingerprint;
        m["scenario_count"] = scenarios.size();
        json done = json::array();
        for (std::size_t i = 0; i < slots.size(); ++i) {
            if (slots[i]) done.push_back(scenarios[i].id);
        }
        m["completed"] = done;
        write_file_atomic(manifest_path, m.dump(1) + "\n");
    };
    write_manifest();

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        if (!slots[i]) pending.push_back(i);
    }
    std::size_t done_count = scenarios.size() - pending.size();

    RecordLog out(records_path);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    auto worker = [&]() {
        for (;;) {
            if (control.cancel && control.cancel->load()) return;
            const auto k = next.fetch_add(1);
            if (k >= pending.size()) return;
            if (control.max_new_scenarios && k >= *control.max_new_scenarios) return;
            const auto& scenario = scenarios[pending[k]];
            auto record = run_scenario(grid, scenario, options, thresholds);
            const std::lock_guard lock(writer);
            if (failure) return;
            try {
                out.append(to_json(record).dump() + "\n");
                slots[scenario.order] = record;
                ++done_count;
                write_manifest();
                if (control.on_record) control.on_record(record, done_count, scenarios.size());
            } catch (...) {
                failure = std::current_exception();
                return;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(spec.workers), std::max<std::size_t>(pending.size(), 1));
        for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    CampaignResults results;
    results.scenario_count = scenarios.size();
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i]) continue;
        results.completed.push_back(scenarios[i].id);
        results.records.push_back(*slots[i]);
    }
    results.per_bus_bf = per_bus_failures(grid, results.records);
    write_file_atomic(out_dir / kPerBusFile, per_bus_csv(grid, results.per_bus_bf));
    return results;
}

CampaignResults run_campaign(const CampaignSpec& spec, const fs::path& out_dir, const RunControl& control) {
    const auto geo = spec.geo_path.empty() ? std::nullopt : std::optional<fs::path>(spec.geo_path);
    const auto counties = spec.county_path.empty() ? std::nullopt : std::optional<fs::path>(spec.county_path);
    const auto grid = load_case(spec.case_path, geo, counties);
    return run_campaign(grid, spec, out_dir, control);
}

}  // namespace gridpulse
