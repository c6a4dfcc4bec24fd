#include "gridpulse/cascade.hpp"

#include <algorithm>
#include <set>

#include "gridpulse/errors.hpp"

namespace gridpulse {

namespace {

struct Applied {
    std::vector<int> failed;
    std::vector<int> pruned;
    std::vector<int> de_energized;
};

/// De-energizes every island that lost the slack.
void prune_islands(GridCase& grid, Applied& applied) {
    for (const auto& island : energized_islands(grid)) {
        if (island.viable) continue;
        for (int bus_id : island.bus_ids) {
            for (const auto& br : grid.branches()) {
                if (br.in_service && (br.from_bus == bus_id || br.to_bus == bus_id)) applied.pruned.push_back(br.id);
            }
            grid.de_energize_bus(bus_id);
            applied.de_energized.push_back(bus_id);
        }
    }
    std::sort(applied.pruned.begin(), applied.pruned.end());
    applied.pruned.erase(std::unique(applied.pruned.begin(), applied.pruned.end()), applied.pruned.end());
}

Applied apply_failures(GridCase& grid, std::span<const BranchFailure> batch) {
    Applied applied;
    for (const auto& f : batch) {
        if (!grid.branch(f.branch_id).in_service) continue;
        grid.set_branch_in_service(f.branch_id, false);
        applied.failed.push_back(f.branch_id);
    }
    prune_islands(grid, applied);
    return applied;
}

struct Probe {
    GridCase grid;
    Applied applied;
    PowerFlowSolution solution;
};

Probe probe(const GridCase& from, std::span<const BranchFailure> batch, const PowerFlowOptions& opt) {
    Probe p{from, {}, {}};
    p.applied = apply_failures(p.grid, batch);
    p.solution = solve(p.grid, opt);
    if (p.solution.converged) store_state(p.grid, p.solution);
    return p;
}

CascadeStep make_step(int index, const Probe& p, bool bisected) {
    CascadeStep s;
    s.step_index = index;
    s.branches_failed = p.applied.failed;
    s.branches_pruned = p.applied.pruned;
    s.de_energized_buses = p.applied.de_energized;
    s.converged = p.solution.converged;
    s.status = p.solution.status;
    s.iterations = p.solution.iterations;
    s.slack_p_mw = p.solution.converged ? p.solution.slack_p_mw : 0.0;
    s.bisected = bisected;
    return s;
}

std::vector<double> loading_snapshot(const GridCase& grid, const PowerFlowSolution& sol) {
    std::vector<double> out;
    const auto gens = grid.generators();
    for (std::size_t g = 0; g < gens.size(); ++g) {
        if (!gens[g].in_service || gens[g].p_max_mw == 0.0) continue;
        if (!sol.energized[grid.bus_index(gens[g].bus_id)]) continue;
        out.push_back(100.0 * sol.gen_p_mw[g] / gens[g].p_max_mw);
    }
    return out;
}

}  // namespace

void CascadeOptions::validate() const {
    if (batch_size < 1) throw ValidationError("cascade batch_size must be at least 1");
    powerflow.validate();
}

const char* to_string(Termination t) {
    return t == Termination::NonConvergence ? "non_convergence" : "failure_set_exhausted";
}

std::vector<int> CascadeStep::branches_disabled() const {
    std::vector<int> out = branches_failed;
    out.insert(out.end(), branches_pruned.begin(), branches_pruned.end());
    return out;
}

CascadeTrace run_cascade(const GridCase& grid, const FailureSet& failure_set, const CascadeOptions& options) {
    options.validate();
    std::vector<BranchFailure> failures = failure_set.failures;
    std::stable_sort(failures.begin(), failures.end(), [](const BranchFailure& a, const BranchFailure& b) {
        return a.fail_time_s != b.fail_time_s ? a.fail_time_s < b.fail_time_s : a.branch_id < b.branch_id;
    });
    for (const auto& f : failures) grid.branch(f.branch_id);

    CascadeTrace trace;
    GridCase state = grid;
    Applied initial;
    prune_islands(state, initial);
    trace.base_energized.assign(state.buses().size(), false);
    for (std::size_t i = 0; i < state.buses().size(); ++i) trace.base_energized[i] = state.buses()[i].in_service;

    PowerFlowOptions first = options.powerflow;
    first.flat_start = true;
    PowerFlowSolution current = solve(state, first);
    if (!current.converged) {
        throw BaseCaseInfeasible(std::string("base case does not converge (") + to_string(current.status) + ")");
    }
    store_state(state, current);
    trace.base_slack_p_mw = current.slack_p_mw;
    trace.base_load_mw = state.total_load_mw();

    PowerFlowOptions warm = options.powerflow;
    warm.flat_start = false;
    const std::span<const BranchFailure> all(failures);
    const auto batch = static_cast<std::size_t>(options.batch_size);
    std::set<int> opened_failed, opened_pruned;
    auto accept = [&](Probe&& p, bool bisected) {
        trace.steps.push_back(make_step(static_cast<int>(trace.steps.size()), p, bisected));
        opened_failed.insert(p.applied.failed.begin(), p.applied.failed.end());
        opened_pruned.insert(p.applied.pruned.begin(), p.applied.pruned.end());
        state = std::move(p.grid);
        current = std::move(p.solution);
    };

    std::size_t pos = 0;
    while (pos < all.size()) {
        const auto len = std::min(batch, all.size() - pos);
        Probe full = probe(state, all.subspan(pos, len), warm);
        if (full.solution.converged) {
            accept(std::move(full), false);
            pos += len;
            continue;
        }

        trace.terminated_by = Termination::NonConvergence;
        if (options.bisect_on_failure && len > 1) {
            // Largest convergent prefix, assuming prefixes fail monotonically.
            std::size_t good = 0, bad = len;
            std::optional<Probe> best;
            while (bad - good > 1) {
                const auto mid = good + (bad - good) / 2;
                Probe p = probe(state, all.subspan(pos, mid), warm);
                if (p.solution.converged) {
                    good = mid;
                    best = std::move(p);
                } else {
                    bad = mid;
                }
            }
            if (best) {
                accept(std::move(*best), true);
                pos += good;
            }
            Probe failing = probe(state, all.subspan(pos, 1), warm);
            if (failing.solution.converged) {
                // Non-monotone prefix: the line solves from the new state, so keep going.
                accept(std::move(failing), true);
                ++pos;
                trace.terminated_by = Termination::FailureSetExhausted;
                continue;
            }
            trace.steps.push_back(make_step(static_cast<int>(trace.steps.size()), failing, true));
            trace.next_failure = all[pos].branch_id;
        } else {
            trace.steps.push_back(make_step(static_cast<int>(trace.steps.size()), full, false));
            if (len == 1) trace.next_failure = all[pos].branch_id;
        }
        break;
    }

    trace.failures_applied = pos;
    trace.lf_failed = opened_failed.size();
    trace.lf_pruned = opened_pruned.size();
    trace.lf_total = trace.lf_failed + trace.lf_pruned;
    trace.last_convergent_case = state;
    trace.last_convergent_solution = current;
    trace.gen_loading_pct = loading_snapshot(state, current);
    trace.bf_total = bus_failures(trace).total;
    return trace;
}

BusFailures bus_failures(const CascadeTrace& trace) {
    BusFailures out;
    const auto buses = trace.last_convergent_case.buses();
    out.failed.assign(buses.size(), false);
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const bool was = i < trace.base_energized.size() && trace.base_energized[i];
        if (was && !trace.last_convergent_solution.energized[i]) {
            out.failed[i] = true;
            ++out.total;
        }
    }
    return out;
}

}  // namespace gridpulse
