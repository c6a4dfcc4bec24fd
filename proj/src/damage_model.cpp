#include "gridpulse/damage_model.hpp"

#include <algorithm>
#include <sstream>

#include "gridpulse/errors.hpp"
#include "gridpulse/rng.hpp"
#include "text_util.hpp"

namespace gridpulse {

void DamageParams::validate() const {
    if (!(radius_km > 0)) throw ValidationError("damage radius must be positive");
    if (!(slope > 0 && slope <= 1)) throw ValidationError("failure slope k must lie in (0, 1]");
    if (!(gamma_shape > 0)) throw ValidationError("gamma shape must be positive");
    if (!(gamma_scale > 0)) throw ValidationError("gamma scale must be positive");
    if (!(center.lat_deg >= -90 && center.lat_deg <= 90 && center.lon_deg >= -180 && center.lon_deg <= 180)) {
        throw ValidationError("detonation center out of range");
    }
}

double line_distance_km(const Branch& branch, const GeoPoint& center) {
    if (!branch.endpoints_geo) {
        throw ValidationError("branch " + std::to_string(branch.id) + " has no endpoint coordinates");
    }
    const auto& [a, b] = *branch.endpoints_geo;
    return geo::point_segment_distance_km(center, a, b);
}

double failure_probability(double r_km, const DamageParams& params) {
    if (r_km >= params.radius_km) return 0.0;
    return std::clamp(params.slope * (params.radius_km - r_km) / params.radius_km, 0.0, 1.0);
}

BranchDraw draw_branch(std::uint64_t seed, int branch_id, double probability, double gamma_shape,
                       double gamma_scale) {
    rng::CounterStream stream(seed, static_cast<std::uint64_t>(branch_id));
    BranchDraw d;
    d.failed = probability > 0.0 && stream.uniform() <= probability;
    if (d.failed) d.fail_time_s = stream.gamma(gamma_shape, gamma_scale);
    return d;
}

FailureSet sample_failures(const GridCase& grid, const DamageParams& params) {
    params.validate();
    FailureSet out;
    for (const auto& br : grid.branches()) {
        if (!br.in_service) continue;
        const double r = line_distance_km(br, params.center);
        const double p = failure_probability(r, params);
        if (p <= 0.0) continue;
        const auto d = draw_branch(params.seed, br.id, p, params.gamma_shape, params.gamma_scale);
        if (d.failed) out.failures.push_back({br.id, r, d.fail_time_s});
    }
    std::sort(out.failures.begin(), out.failures.end(), [](const BranchFailure& a, const BranchFailure& b) {
        return a.fail_time_s != b.fail_time_s ? a.fail_time_s < b.fail_time_s : a.branch_id < b.branch_id;
    });
    return out;
}

std::string failures_to_csv(const FailureSet& set) {
    std::ostringstream os;
    os << "branch_id,distance_km,fail_time_s\n";
    for (const auto& f : set.failures) {
        os << f.branch_id << ',' << detail::format_double(f.distance_km) << ','
           << detail::format_double(f.fail_time_s) << '\n';
    }
    return os.str();
}

FailureSet parse_failures_csv(std::string_view text) {
    FailureSet out;
    const auto lines = detail::split_lines(text);
    bool first = true;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line = detail::trim(lines[i]);
        if (line.empty() || line.front() == '#') continue;
        const auto fields = detail::split_csv_line(line);
        if (first && !detail::parse_double(fields.front())) {
            first = false;
            continue;
        }
        first = false;
        if (fields.size() != 3) throw SyntaxError(i + 1, "failure row needs branch_id,distance_km,fail_time_s");
        const auto id = detail::parse_integer(fields[0]);
        const auto r = detail::parse_double(fields[1]);
        const auto t = detail::parse_double(fields[2]);
        if (!id || !r || !t) throw SyntaxError(i + 1, "malformed failure row");
        out.failures.push_back({static_cast<int>(*id), *r, *t});
    }
    return out;
}

}  // namespace gridpulse
