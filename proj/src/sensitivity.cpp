#include "gridpulse/sensitivity.hpp"

#include <numeric>

namespace gridpulse {

long SeverityIndexTable::total() const { return std::accumulate(si_count.begin(), si_count.end(), 0L); }

SeverityIndexTable si_count(const LodfMatrix& lodf, double threshold) {
    if (!(threshold > 0)) throw ValidationError("SI threshold must be positive");
    SeverityIndexTable out;
    out.threshold = threshold;
    out.branch_ids = lodf.branch_ids;
    out.islanding = lodf.islanding;
    const auto nl = lodf.size();
    out.si_count.assign(static_cast<std::size_t>(nl), 0);
    out.branch_county.assign(static_cast<std::size_t>(nl), std::nullopt);
    for (Eigen::Index i = 0; i < nl; ++i) {
        if (lodf.islanding[static_cast<std::size_t>(i)]) continue;
        long count = 0;
        for (Eigen::Index n = 0; n < nl; ++n) {
            if (n != i && std::abs(lodf.entries(n, i)) >= threshold) ++count;
        }
        out.si_count[static_cast<std::size_t>(i)] = count;
    }
    return out;
}

SeverityIndexTable si_count(const LodfMatrix& lodf, double threshold, const GridCase& grid) {
    auto out = si_count(lodf, threshold);
    std::map<int, CountySeverity> by_county;
    for (const auto& c : grid.counties()) by_county[c.id].county_id = c.id;
    for (std::size_t k = 0; k < out.branch_ids.size(); ++k) {
        const auto county = grid.branch_county(out.branch_ids[k]);
        out.branch_county[k] = county;
        if (!county) continue;
        auto& agg = by_county[*county];
        agg.county_id = *county;
        agg.total += out.si_count[k];
        ++agg.branch_count;
    }
    for (auto& [id, agg] : by_county) {
        agg.no_branches = agg.branch_count == 0;
        agg.normalized = agg.no_branches ? 0.0 : static_cast<double>(agg.total) / static_cast<double>(agg.branch_count);
        out.counties.push_back(agg);
    }
    return out;
}

GenerationSurplus generation_surplus(const GridCase& grid, const PowerFlowSolution& solution) {
    if (!solution.converged) throw ValidationError("generation surplus needs a converged solution");
    GenerationSurplus out;
    const auto gens = grid.generators();
    for (std::size_t g = 0; g < gens.size(); ++g) {
        const auto& gen = gens[g];
        if (!gen.in_service || gen.p_max_mw == 0.0) continue;
        if (!solution.energized[grid.bus_index(gen.bus_id)]) continue;
        GeneratorSurplus row;
        row.gen_index = g;
        row.bus_id = gen.bus_id;
        row.p_max_mw = gen.p_max_mw;
        row.p_mw = solution.gen_p_mw[g];
        row.loading_pct = 100.0 * row.p_mw / row.p_max_mw;
        row.gs_mw = generator_surplus_mw(row.p_max_mw, row.loading_pct);
        row.headroom_mw = -row.gs_mw;
        out.total_mw += row.gs_mw;
        out.per_generator.push_back(row);
    }
    return out;
}

}  // namespace gridpulse
