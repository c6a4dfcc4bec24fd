#pragma once

#include <json.hpp>

#include "gridpulse/cascade.hpp"
#include "gridpulse/grid_model.hpp"
#include "gridpulse/powerflow.hpp"
#include "gridpulse/sensitivity.hpp"

namespace gridpulse {

/// Counts, totals and warnings for `gridpulse inspect`.
nlohmann::json case_summary(const GridCase& grid);

/// Bus voltages, branch flows and generator dispatch keyed by element id.
nlohmann::json to_json(const PowerFlowSolution& solution, const GridCase& grid);

nlohmann::json to_json(const CascadeStep& step);

/// One line per step, newline-terminated.
std::string steps_jsonl(const CascadeTrace& trace);

/// `outage_branch,si_count,islanding,county_id` rows.
std::string si_csv(const SeverityIndexTable& table);
/// `county_id,si_total,branch_count,si_normalized,no_branches` rows.
std::string si_county_csv(const SeverityIndexTable& table);

}  // namespace gridpulse
