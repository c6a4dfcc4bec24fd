#pragma once

#include <optional>
#include <vector>

#include "gridpulse/damage_model.hpp"
#include "gridpulse/grid_model.hpp"
#include "gridpulse/powerflow.hpp"

namespace gridpulse {

struct CascadeOptions {
    int batch_size{5};
    bool bisect_on_failure{true};
    PowerFlowOptions powerflow{};

    void validate() const;
};

enum class Termination { NonConvergence, FailureSetExhausted };

const char* to_string(Termination t);

struct CascadeStep {
    int step_index{0};
    std::vector<int> branches_failed;  // sampled failures applied this step
    std::vector<int> branches_pruned;  // opened because their island lost the slack
    std::vector<int> de_energized_buses;
    bool converged{false};
    SolveStatus status{SolveStatus::Converged};
    int iterations{0};
    double slack_p_mw{0};
    bool bisected{false};  // a partial batch found by bisection

    /// branches_failed followed by branches_pruned.
    std::vector<int> branches_disabled() const;
};

struct CascadeTrace {
    std::vector<CascadeStep> steps;
    Termination terminated_by{Termination::FailureSetExhausted};

    GridCase last_convergent_case;  // topology and voltages of the last convergent step
    PowerFlowSolution last_convergent_solution;
    double base_slack_p_mw{0};
    double base_load_mw{0};
    std::vector<bool> base_energized;  // per bus, before any failure

    std::size_t lf_failed{0};
    std::size_t lf_pruned{0};
    std::size_t lf_total{0};
    std::size_t bf_total{0};
    std::size_t failures_applied{0};  // prefix length of the FailureSet in the last convergent state
    /// Sampled branch whose outage first broke convergence, when isolated to one line.
    std::optional<int> next_failure;
    /// Loading percent of each energized generator with p_max > 0 at the last convergent state.
    std::vector<double> gen_loading_pct;
};

/// Disables failures in time order, `batch_size` at a time, solving after
/// each batch. Throws BaseCaseInfeasible if the unperturbed case does not solve.
CascadeTrace run_cascade(const GridCase& grid, const FailureSet& failures, const CascadeOptions& options = {});

struct BusFailures {
    std::vector<bool> failed;  // per bus, case order
    std::size_t total{0};
};

/// A bus failed iff it was energized before the cascade and is outside the
/// slack island at the last convergent state.
BusFailures bus_failures(const CascadeTrace& trace);

}  // namespace gridpulse
