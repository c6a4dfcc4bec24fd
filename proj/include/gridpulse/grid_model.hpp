#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gridpulse/geo.hpp"

namespace gridpulse {

using geo::GeoPoint;

enum class BusKind { Slack, PV, PQ };

struct Bus {
    int id{0};
    BusKind kind{BusKind::PQ};
    double voltage_setpoint{1.0};  // pu
    double vm{1.0};                // pu
    double va{0.0};                // rad
    double base_kv{0.0};
    double gs_mw{0.0};    // shunt conductance, MW at 1 pu
    double bs_mvar{0.0};  // shunt susceptance, Mvar injected at 1 pu
    int area{1};
    int zone{1};
    double vmax{1.1};
    double vmin{0.9};
    std::optional<GeoPoint> coordinates;
    std::optional<int> county_id;
    bool in_service{true};

    friend bool operator==(const Bus&, const Bus&) = default;
};

struct Branch {
    int id{0};
    int from_bus{0};
    int to_bus{0};
    double r{0.0};
    double x{0.0};
    double b{0.0};          // total line charging, pu
    double tap{1.0};        // off-nominal ratio, 1 for lines
    double shift_deg{0.0};
    double rate_mva{0.0};
    bool in_service{true};
    std::optional<std::array<GeoPoint, 2>> endpoints_geo;

    friend bool operator==(const Branch&, const Branch&) = default;
};

struct Generator {
    int bus_id{0};
    double p_mw{0.0};
    double q_mvar{0.0};
    double q_max_mvar{0.0};
    double q_min_mvar{0.0};
    double voltage_setpoint{1.0};
    double mbase{100.0};
    double p_max_mw{0.0};
    double p_min_mw{0.0};
    bool in_service{true};

    friend bool operator==(const Generator&, const Generator&) = default;
};

struct Load {
    int bus_id{0};
    double p_mw{0.0};
    double q_mvar{0.0};
    bool in_service{true};

    friend bool operator==(const Load&, const Load&) = default;
};

struct County {
    int id{0};
    std::string name;
    GeoPoint centroid;
    double pop_density{0.0};  // people per square mile

    friend bool operator==(const County&, const County&) = default;
};

/// Validated network model. Construction checks referential integrity and
/// the single-slack rule; afterwards only the switching API below mutates
/// it, and that API keeps every in-service branch between in-service buses.
class GridCase {
public:
    GridCase() = default;
    GridCase(double base_mva, std::vector<Bus> buses, std::vector<Branch> branches,
             std::vector<Generator> generators, std::vector<Load> loads,
             std::vector<County> counties = {});

    double base_mva() const noexcept { return base_mva_; }
    std::span<const Bus> buses() const noexcept { return buses_; }
    std::span<const Branch> branches() const noexcept { return branches_; }
    std::span<const Generator> generators() const noexcept { return generators_; }
    std::span<const Load> loads() const noexcept { return loads_; }
    std::span<const County> counties() const noexcept { return counties_; }

    bool has_bus(int id) const { return bus_index_.contains(id); }
    std::size_t bus_index(int id) const;
    const Bus& bus(int id) const { return buses_[bus_index(id)]; }
    /// Branch ids are 1-based row positions.
    const Branch& branch(int id) const;
    std::size_t slack_index() const noexcept { return slack_index_; }
    int slack_bus_id() const noexcept { return buses_[slack_index_].id; }

    bool has_geography() const noexcept;
    /// County of a branch, by nearest centroid to its geographic midpoint.
    std::optional<int> branch_county(int branch_id) const;
    const County* find_county(int county_id) const;

    /// Non-fatal findings from construction (e.g. a disconnected network).
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

    std::size_t in_service_branch_count() const;
    double total_load_mw() const;

    void set_branch_in_service(int branch_id, bool in_service);
    /// Takes a bus out of service together with its branches, generators and loads.
    void de_energize_bus(int bus_id);
    void set_bus_voltage(std::size_t bus_index, double vm, double va);
    void set_bus_county(std::size_t bus_index, std::optional<int> county_id);

    friend bool operator==(const GridCase& a, const GridCase& b) {
        return a.base_mva_ == b.base_mva_ && a.buses_ == b.buses_ && a.branches_ == b.branches_ &&
               a.generators_ == b.generators_ && a.loads_ == b.loads_ && a.counties_ == b.counties_;
    }

private:
    void validate_and_index();
    void refresh_branch_geometry();
    void check_connectivity();

    double base_mva_{100.0};
    std::vector<Bus> buses_;
    std::vector<Branch> branches_;
    std::vector<Generator> generators_;
    std::vector<Load> loads_;
    std::vector<County> counties_;
    std::unordered_map<int, std::size_t> bus_index_;
    std::vector<std::optional<int>> branch_county_;
    std::size_t slack_index_{0};
    std::vector<std::string> warnings_;
};

/// Parses MATPOWER v2 case text plus optional CSV sidecars.
///
/// `geo_csv` rows are `bus_id,lat,lon[,county_id]`; when it is non-empty every
/// bus must be listed. `county_csv` rows are `county_id,name,lat,lon,pop_density`.
/// Buses without an explicit county are assigned to the nearest centroid.
GridCase parse_case(std::string_view case_text, std::string_view geo_csv = {},
                    std::string_view county_csv = {});

GridCase load_case(const std::filesystem::path& case_path,
                   const std::optional<std::filesystem::path>& geo_path = std::nullopt,
                   const std::optional<std::filesystem::path>& county_path = std::nullopt);

/// Nearest-centroid county index for a point; ties go to the smaller county id.
/// Returns std::nullopt for an empty table.
std::optional<int> nearest_county(std::span<const County> counties, const GeoPoint& p);

/// Reassigns every bus to its nearest county centroid.
GridCase assign_counties(const GridCase& grid);

struct CaseText {
    std::string matpower;
    std::string geo_csv;
    std::string county_csv;
};

/// Inverse of parse_case: parse_case(t.matpower, t.geo_csv, t.county_csv) == grid.
CaseText serialize_case(const GridCase& grid);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace gridpulse
