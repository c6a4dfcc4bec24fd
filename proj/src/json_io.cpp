#include "gridpulse/json_io.hpp"

#include <numbers>

#include "text_util.hpp"

namespace gridpulse {

using nlohmann::json;

namespace {

const char* kind_name(BusKind k) {
    switch (k) {
        case BusKind::Slack: return "slack";
        case BusKind::PV: return "pv";
        case BusKind::PQ: return "pq";
    }
    return "pq";
}

}  // namespace

json case_summary(const GridCase& grid) {
    json j;
    j["base_mva"] = grid.base_mva();
    j["buses"] = grid.buses().size();
    j["branches"] = grid.branches().size();
    j["branches_in_service"] = grid.in_service_branch_count();
    j["generators"] = grid.generators().size();
    j["loads"] = grid.loads().size();
    j["counties"] = grid.counties().size();
    j["slack_bus"] = grid.slack_bus_id();
    j["total_load_mw"] = grid.total_load_mw();
    double pmax = 0;
    for (const auto& g : grid.generators()) {
        if (g.in_service) pmax += g.p_max_mw;
    }
    j["total_p_max_mw"] = pmax;
    j["has_geography"] = grid.has_geography();
    json kinds{{"slack", 0}, {"pv", 0}, {"pq", 0}};
    for (const auto& b : grid.buses()) kinds[kind_name(b.kind)] = kinds[kind_name(b.kind)].get<int>() + 1;
    j["bus_kinds"] = kinds;
    const auto islands = energized_islands(grid);
    j["islands"] = islands.size();
    j["warnings"] = grid.warnings();
    return j;
}

json to_json(const PowerFlowSolution& sol, const GridCase& grid) {
    json j;
    j["converged"] = sol.converged;
    j["status"] = to_string(sol.status);
    j["iterations"] = sol.iterations;
    j["max_mismatch_pu"] = sol.max_mismatch_pu;
    j["slack_p_mw"] = sol.slack_p_mw;
    j["slack_q_mvar"] = sol.slack_q_mvar;
    j["slack_p_outside_limits"] = sol.slack_p_outside_limits;
    j["converted_to_pq"] = sol.converted_to_pq;
    json buses = json::array();
    for (std::size_t i = 0; i < grid.buses().size() && i < sol.vm.size(); ++i) {
        buses.push_back({{"id", grid.buses()[i].id},
                         {"vm", sol.vm[i]},
                         {"va_deg", sol.va[i] * 180.0 / std::numbers::pi},
                         {"energized", static_cast<bool>(sol.energized[i])}});
    }
    j["buses"] = std::move(buses);
    json branches = json::array();
    for (std::size_t i = 0; i < grid.branches().size() && i < sol.branch_flows.size(); ++i) {
        const auto& f = sol.branch_flows[i];
        branches.push_back({{"id", grid.branches()[i].id},
                            {"p_from_mw", f.p_from_mw},
                            {"q_from_mvar", f.q_from_mvar},
                            {"p_to_mw", f.p_to_mw},
                            {"q_to_mvar", f.q_to_mvar}});
    }
    j["branches"] = std::move(branches);
    json gens = json::array();
    for (std::size_t g = 0; g < grid.generators().size() && g < sol.gen_p_mw.size(); ++g) {
        gens.push_back({{"index", g},
                        {"bus_id", grid.generators()[g].bus_id},
                        {"p_mw", sol.gen_p_mw[g]},
                        {"q_mvar", sol.gen_q_mvar[g]},
                        {"q_limited", static_cast<bool>(sol.gen_q_limited[g])}});
    }
    j["generators"] = std::move(gens);
    return j;
}

json to_json(const CascadeStep& s) {
    return json{{"step", s.step_index},
                {"branches_failed", s.branches_failed},
                {"branches_pruned", s.branches_pruned},
                {"de_energized_buses", s.de_energized_buses},
                {"converged", s.converged},
                {"status", to_string(s.status)},
                {"iterations", s.iterations},
                {"slack_p_mw", s.slack_p_mw},
                {"bisected", s.bisected}};
}

std::string steps_jsonl(const CascadeTrace& trace) {
    std::string out;
    for (const auto& s : trace.steps) out += to_json(s).dump() + "\n";
    return out;
}

std::string si_csv(const SeverityIndexTable& t) {
    std::string out = "outage_branch,si_count,islanding,county_id\n";
    for (std::size_t i = 0; i < t.branch_ids.size(); ++i) {
        out += std::to_string(t.branch_ids[i]) + "," + std::to_string(t.si_count[i]) + "," +
               (t.islanding[i] ? "1" : "0") + "," +
               (i < t.branch_county.size() && t.branch_county[i] ? std::to_string(*t.branch_county[i]) : "") + "\n";
    }
    return out;
}

std::string si_county_csv(const SeverityIndexTable& t) {
    std::string out = "county_id,si_total,branch_count,si_normalized,no_branches\n";
    for (const auto& c : t.counties) {
        out += std::to_string(c.county_id) + "," + std::to_string(c.total) + "," + std::to_string(c.branch_count) +
               "," + detail::format_double(c.normalized) + "," + (c.no_branches ? "1" : "0") + "\n";
    }
    return out;
}

}  // namespace gridpulse
