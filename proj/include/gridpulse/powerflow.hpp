#pragma once

#include <complex>
#include <vector>

#include <Eigen/SparseCore>

#include "gridpulse/grid_model.hpp"

namespace gridpulse {

struct PowerFlowOptions {
    double tol_pu{1e-8};
    int max_iter{30};
    bool enforce_q_limits{true};
    bool flat_start{false};

    void validate() const;
};

enum class SolveStatus {
    Converged,
    IterationLimit,
    SingularJacobian,
    Diverged,
    NoViableIsland,     // slack bus out of service
    NoSlackGeneration,  // slack bus has no in-service generator
};

const char* to_string(SolveStatus s);

struct BranchFlow {
    double p_from_mw{0};
    double q_from_mvar{0};
    double p_to_mw{0};
    double q_to_mvar{0};

    friend bool operator==(const BranchFlow&, const BranchFlow&) = default;
};

/// Result of one AC solve. A non-converged result is a normal outcome,
/// not an error: cascades terminate on it.
struct PowerFlowSolution {
    bool converged{false};
    SolveStatus status{SolveStatus::IterationLimit};
    int iterations{0};
    double max_mismatch_pu{0};

    // Per bus, in case order; zero for buses outside the solved island.
    std::vector<double> vm;
    std::vector<double> va;
    std::vector<bool> energized;
    // Per branch, in case order; zero for out-of-service or de-energized branches.
    std::vector<BranchFlow> branch_flows;
    // Per generator, in case order.
    std::vector<double> gen_p_mw;
    std::vector<double> gen_q_mvar;
    std::vector<bool> gen_q_limited;
    std::vector<int> converted_to_pq;  // PV bus ids switched to PQ by the limit loop

    double slack_p_mw{0};
    double slack_q_mvar{0};
    /// Diagnostic: slack dispatch outside its generators' [p_min, p_max].
    bool slack_p_outside_limits{false};

    std::vector<int> energized_set(const GridCase& grid) const;
};

/// Bus admittance matrix over all buses (case order), in-service elements only.
struct Admittance {
    Eigen::SparseMatrix<std::complex<double>> matrix;
    std::vector<int> bus_ids;
};

Admittance build_admittance(const GridCase& grid);

/// Adds one branch's pi-model stamp to `triplets` with local bus positions `f`, `t`.
void stamp_branch(const Branch& br, int f, int t,
                  std::vector<Eigen::Triplet<std::complex<double>>>& triplets);

struct Island {
    std::vector<int> bus_ids;  // ascending case order
    bool viable{false};        // contains the system slack
};

/// Connected components of in-service buses over in-service branches.
std::vector<Island> energized_islands(const GridCase& grid);

/// Newton-Raphson AC power flow over the slack island. Initial state comes
/// from the bus vm/va fields unless `options.flat_start`.
PowerFlowSolution solve(const GridCase& grid, const PowerFlowOptions& options = {});

/// Writes the solved voltages back into the case as the next warm start.
void store_state(GridCase& grid, const PowerFlowSolution& solution);

}  // namespace gridpulse
