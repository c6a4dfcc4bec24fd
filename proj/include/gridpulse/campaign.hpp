#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridpulse/cascade.hpp"
#include "gridpulse/damage_model.hpp"
#include "gridpulse/grid_model.hpp"

namespace gridpulse {

struct CampaignSpec {
    std::filesystem::path case_path;
    std::filesystem::path geo_path;
    std::filesystem::path county_path;
    std::optional<std::vector<int>> centers;  // county ids; all counties when absent
    double radius_km{100.0};
    std::vector<double> k_values{0.5, 0.7, 0.9};
    int replicates{1};
    std::uint64_t master_seed{1};
    int batch_size{5};
    bool bisect_on_failure{true};
    std::vector<double> thresholds{0.03};
    double gamma_shape{2.0};
    double gamma_scale{1.0};
    PowerFlowOptions powerflow{};
    int workers{1};
    std::string preset;  // "", "popdensity" or "gs30"

    void validate() const;
    CascadeOptions cascade_options() const;
    /// Hash of every field that affects record contents.
    std::uint64_t fingerprint() const;
};

/// Reads campaign.json; relative paths resolve against the file's directory.
CampaignSpec load_campaign_spec(const std::filesystem::path& path);
CampaignSpec campaign_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const CampaignSpec& spec);

inline constexpr double kPresetK = 0.7;
inline constexpr double kPopDensityRadiusKm = 50.0;
inline constexpr std::size_t kGsPresetCounties = 30;

/// Resolves `spec.preset` against the county table: "popdensity" is one
/// 50 km scenario per county, "gs30" one scenario at each of 30 counties
/// drawn without replacement from the master seed.
CampaignSpec apply_preset(CampaignSpec spec, const GridCase& grid);

struct ScenarioSpec {
    std::string id;
    std::size_t order{0};
    int county_id{0};
    std::size_t k_index{0};
    int replicate{0};
    DamageParams damage;
};

std::uint64_t scenario_seed(std::uint64_t master_seed, int county_id, std::size_t k_index, int replicate);

/// Scenarios in (county_id, k_index, replicate) order.
std::vector<ScenarioSpec> enumerate_scenarios(const CampaignSpec& spec, const GridCase& grid);

struct SeverityRecord {
    std::string scenario_id;
    int county_id{0};
    std::size_t k_index{0};
    double k{0};
    int replicate{0};
    std::uint64_t seed{0};
    double center_lat{0};
    double center_lon{0};
    double radius_km{0};
    std::optional<std::string> error;

    std::size_t n_failures{0};
    std::size_t failures_applied{0};
    std::size_t steps{0};
    std::string terminated_by;
    std::size_t lf_total{0};
    std::size_t lf_failed{0};
    std::size_t lf_pruned{0};
    std::size_t bf_total{0};
    std::vector<int> failed_buses;
    std::optional<int> next_failure;

    double gs_total_mw{0};
    std::vector<std::pair<std::size_t, double>> gen_gs_mw;  // (generator index, MW)
    std::map<std::string, long> si_totals;                  // threshold text -> total
    double slack_p_base_mw{0};
    double slack_p_final_mw{0};
    double slack_dp_mw{0};
    double base_load_mw{0};
    double mean_gen_loading_pct{0};
    std::vector<double> gen_loading_pct;
    double wall_time_s{0};  // excluded from all equality checks

    bool complete() const { return !error.has_value(); }
};

std::string threshold_key(double threshold);

/// Severity indices of a finished cascade.
SeverityRecord summarize_cascade(const CascadeTrace& trace, std::span<const double> thresholds);

/// Samples, cascades and summarizes one scenario; errors are captured in the record.
SeverityRecord run_scenario(const GridCase& grid, const ScenarioSpec& scenario, const CascadeOptions& options,
                            std::span<const double> thresholds);

nlohmann::json to_json(const SeverityRecord& r, bool include_wall_time = true);
SeverityRecord record_from_json(const nlohmann::json& j);

struct CampaignResults {
    std::vector<SeverityRecord> records;     // enumeration order
    std::map<int, long> per_bus_bf;          // bus id -> scenarios in which it failed
    std::vector<std::string> completed;      // enumeration order
    std::size_t scenario_count{0};
};

struct RunControl {
    const std::atomic<bool>* cancel{nullptr};
    std::optional<std::size_t> max_new_scenarios;
    std::function<void(const SeverityRecord&, std::size_t done, std::size_t total)> on_record;
};

inline constexpr const char* kRecordsFile = "records.jsonl";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kPerBusFile = "per_bus_bf.csv";

/// Runs every scenario not yet listed in `out_dir`'s manifest. Record
/// contents do not depend on worker count or completion order.
CampaignResults run_campaign(const GridCase& grid, const CampaignSpec& spec, const std::filesystem::path& out_dir,
                             const RunControl& control = {});
CampaignResults run_campaign(const CampaignSpec& spec, const std::filesystem::path& out_dir,
                             const RunControl& control = {});

/// Reads records.jsonl, dropping a torn final line. Sorted by
/// (county_id, k_index, replicate).
std::vector<SeverityRecord> load_records(const std::filesystem::path& out_dir);

std::map<int, long> per_bus_failures(const GridCase& grid, std::span<const SeverityRecord> records);
std::string per_bus_csv(const GridCase& grid, const std::map<int, long>& counts);

}  // namespace gridpulse
