#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gridpulse/grid_model.hpp"

namespace gridpulse {

struct DamageParams {
    GeoPoint center;
    double radius_km{100.0};
    double slope{0.7};  // failure probability at ground zero
    double gamma_shape{2.0};
    double gamma_scale{1.0};  // seconds
    std::uint64_t seed{0};

    void validate() const;
};

struct BranchFailure {
    int branch_id{0};
    double distance_km{0};
    double fail_time_s{0};

    friend bool operator==(const BranchFailure&, const BranchFailure&) = default;
};

/// Failed branches ordered by (fail_time_s, branch_id).
struct FailureSet {
    std::vector<BranchFailure> failures;

    std::size_t size() const noexcept { return failures.size(); }
    bool empty() const noexcept { return failures.empty(); }
    friend bool operator==(const FailureSet&, const FailureSet&) = default;
};

/// Distance from `center` to the branch's geographic segment.
double line_distance_km(const Branch& branch, const GeoPoint& center);

/// clamp(k * (R - r) / R, 0, 1).
double failure_probability(double r_km, const DamageParams& params);

/// Draw 0 of the branch's substream decides failure; later draws give the time.
struct BranchDraw {
    bool failed{false};
    double fail_time_s{0};
};
BranchDraw draw_branch(std::uint64_t seed, int branch_id, double probability, double gamma_shape,
                       double gamma_scale);

FailureSet sample_failures(const GridCase& grid, const DamageParams& params);

/// CSV with header `branch_id,distance_km,fail_time_s`.
std::string failures_to_csv(const FailureSet& set);
FailureSet parse_failures_csv(std::string_view text);

}  // namespace gridpulse
