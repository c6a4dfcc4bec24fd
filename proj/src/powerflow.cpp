#include "gridpulse/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/SparseLU>

#include "gridpulse/errors.hpp"
#include "gridpulse/union_find.hpp"

namespace gridpulse {

namespace {

using cd = std::complex<double>;
using CVec = Eigen::VectorXcd;
using SpC = Eigen::SparseMatrix<cd>;

constexpr double kDivergedMismatch = 1e10;

struct IslandSystem {
    std::vector<std::size_t> buses;  // case positions
    std::vector<int> local;          // case position -> local index, -1 outside
    SpC y;
};

IslandSystem assemble_island(const GridCase& grid, const std::vector<int>& island_bus_ids) {
    IslandSystem sys;
    sys.local.assign(grid.buses().size(), -1);
    for (int id : island_bus_ids) {
        const auto pos = grid.bus_index(id);
        sys.local[pos] = static_cast<int>(sys.buses.size());
        sys.buses.push_back(pos);
    }
    const auto n = static_cast<Eigen::Index>(sys.buses.size());
    std::vector<Eigen::Triplet<cd>> trips;
    for (const auto& br : grid.branches()) {
        if (!br.in_service) continue;
        const int f = sys.local[grid.bus_index(br.from_bus)];
        const int t = sys.local[grid.bus_index(br.to_bus)];
        if (f < 0 || t < 0) continue;
        stamp_branch(br, f, t, trips);
    }
    const double base = grid.base_mva();
    for (std::size_t k = 0; k < sys.buses.size(); ++k) {
        const auto& b = grid.buses()[sys.buses[k]];
        if (b.gs_mw != 0.0 || b.bs_mvar != 0.0) {
            trips.emplace_back(static_cast<int>(k), static_cast<int>(k), cd(b.gs_mw, b.bs_mvar) / base);
        }
    }
    sys.y.resize(n, n);
    sys.y.setFromTriplets(trips.begin(), trips.end());
    sys.y.makeCompressed();
    return sys;
}

enum class LocalKind { Slack, PV, PQ };

struct NewtonResult {
    bool converged{false};
    SolveStatus status{SolveStatus::IterationLimit};
    int iterations{0};
    double max_mismatch{0};
};

CVec mismatch(const SpC& y, const CVec& v, const CVec& sbus) {
    const CVec i = y * v;
    return v.cwiseProduct(i.conjugate()) - sbus;
}

double norm_inf(const Eigen::VectorXd& f) { return f.size() ? f.cwiseAbs().maxCoeff() : 0.0; }

Eigen::VectorXd stack_mismatch(const CVec& mis, const std::vector<int>& pvpq, const std::vector<int>& pq) {
    Eigen::VectorXd f(static_cast<Eigen::Index>(pvpq.size() + pq.size()));
    Eigen::Index r = 0;
    for (int i : pvpq) f[r++] = mis[i].real();
    for (int i : pq) f[r++] = mis[i].imag();
    return f;
}

NewtonResult newton(const SpC& y, const CVec& sbus, const std::vector<LocalKind>& kind, CVec& v,
                    const PowerFlowOptions& opt) {
    const auto n = static_cast<int>(kind.size());
    std::vector<int> pvpq, pq;
    for (int i = 0; i < n; ++i) {
        if (kind[i] == LocalKind::PV) pvpq.push_back(i);
    }
    for (int i = 0; i < n; ++i) {
        if (kind[i] == LocalKind::PQ) {
            pvpq.push_back(i);
            pq.push_back(i);
        }
    }
    std::sort(pvpq.begin(), pvpq.end());
    std::vector<int> col_va(n, -1), col_vm(n, -1);
    for (std::size_t k = 0; k < pvpq.size(); ++k) col_va[pvpq[k]] = static_cast<int>(k);
    for (std::size_t k = 0; k < pq.size(); ++k) col_vm[pq[k]] = static_cast<int>(pvpq.size() + k);
    const int dim = static_cast<int>(pvpq.size() + pq.size());

    Eigen::VectorXd vm = v.cwiseAbs();
    Eigen::VectorXd va(n);
    for (int i = 0; i < n; ++i) va[i] = std::arg(v[i]);

    NewtonResult res;
    Eigen::VectorXd f = stack_mismatch(mismatch(y, v, sbus), pvpq, pq);
    res.max_mismatch = norm_inf(f);
    if (res.max_mismatch < opt.tol_pu) {
        res.converged = true;
        res.status = SolveStatus::Converged;
        return res;
    }

    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    std::vector<Eigen::Triplet<double>> trips;
    for (int iter = 1; iter <= opt.max_iter; ++iter) {
        res.iterations = iter;
        const CVec ibus = y * v;
        trips.clear();
        auto add = [&](int i, int k, const cd& dva, const cd& dvm) {
            const int rp = col_va[i];  // P row shares the va column numbering
            const int rq = col_vm[i];  // Q row shares the vm column numbering
            if (rp >= 0) {
                if (col_va[k] >= 0) trips.emplace_back(rp, col_va[k], dva.real());
                if (col_vm[k] >= 0) trips.emplace_back(rp, col_vm[k], dvm.real());
            }
            if (rq >= 0) {
                if (col_va[k] >= 0) trips.emplace_back(rq, col_va[k], dva.imag());
                if (col_vm[k] >= 0) trips.emplace_back(rq, col_vm[k], dvm.imag());
            }
        };
        for (int k = 0; k < y.outerSize(); ++k) {
            const cd vn_k = v[k] / vm[k];
            for (SpC::InnerIterator it(y, k); it; ++it) {
                const int i = static_cast<int>(it.row());
                const cd yik = it.value();
                add(i, k, cd(0, -1) * v[i] * std::conj(yik * v[k]), v[i] * std::conj(yik * vn_k));
            }
        }
        for (int i = 0; i < n; ++i) {
            add(i, i, cd(0, 1) * v[i] * std::conj(ibus[i]), std::conj(ibus[i]) * v[i] / vm[i]);
        }
        Eigen::SparseMatrix<double> jac(dim, dim);
        jac.setFromTriplets(trips.begin(), trips.end());
        jac.makeCompressed();
        lu.analyzePattern(jac);
        lu.factorize(jac);
        if (lu.info() != Eigen::Success) {
            res.status = SolveStatus::SingularJacobian;
            return res;
        }
        const Eigen::VectorXd dx = lu.solve(-f);
        if (lu.info() != Eigen::Success || !dx.allFinite()) {
            res.status = SolveStatus::SingularJacobian;
            return res;
        }
        for (int i : pvpq) va[i] += dx[col_va[i]];
        for (int i : pq) vm[i] += dx[col_vm[i]];
        for (int i = 0; i < n; ++i) v[i] = std::polar(vm[i], va[i]);

        f = stack_mismatch(mismatch(y, v, sbus), pvpq, pq);
        res.max_mismatch = norm_inf(f);
        if (!std::isfinite(res.max_mismatch) || res.max_mismatch > kDivergedMismatch) {
            res.status = SolveStatus::Diverged;
            return res;
        }
        if (res.max_mismatch < opt.tol_pu) {
            res.converged = true;
            res.status = SolveStatus::Converged;
            return res;
        }
    }
    res.status = SolveStatus::IterationLimit;
    return res;
}

/// Splits a bus-level reactive output across its generators in proportion to
/// their reactive ranges, so each unit stays inside its own limits whenever
/// the total is inside the summed limits.
void distribute_q(const GridCase& grid, const std::vector<std::size_t>& gens, double q_total,
                  std::vector<double>& gen_q) {
    if (gens.empty()) return;
    double qmin_sum = 0, range_sum = 0;
    for (auto g : gens) {
        const auto& gen = grid.generators()[g];
        qmin_sum += gen.q_min_mvar;
        range_sum += gen.q_max_mvar - gen.q_min_mvar;
    }
    if (std::isfinite(qmin_sum) && std::isfinite(range_sum) && range_sum > 0) {
        for (auto g : gens) {
            const auto& gen = grid.generators()[g];
            gen_q[g] = gen.q_min_mvar + (q_total - qmin_sum) * (gen.q_max_mvar - gen.q_min_mvar) / range_sum;
        }
    } else {
        for (auto g : gens) gen_q[g] = q_total / static_cast<double>(gens.size());
    }
}

}  // namespace

void PowerFlowOptions::validate() const {
    if (!(tol_pu > 0)) throw ValidationError("power-flow tolerance must be positive");
    if (max_iter < 1) throw ValidationError("power-flow max_iter must be at least 1");
}

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged: return "converged";
        case SolveStatus::IterationLimit: return "iteration_limit";
        case SolveStatus::SingularJacobian: return "singular_jacobian";
        case SolveStatus::Diverged: return "diverged";
        case SolveStatus::NoViableIsland: return "no_viable_island";
        case SolveStatus::NoSlackGeneration: return "no_slack_generation";
    }
    return "unknown";
}

std::vector<int> PowerFlowSolution::energized_set(const GridCase& grid) const {
    std::vector<int> ids;
    for (std::size_t i = 0; i < energized.size(); ++i) {
        if (energized[i]) ids.push_back(grid.buses()[i].id);
    }
    return ids;
}

void stamp_branch(const Branch& br, int f, int t, std::vector<Eigen::Triplet<cd>>& trips) {
    if (br.x == 0.0) throw SingularBranch(br.id);
    const cd ys = 1.0 / cd(br.r, br.x);
    const cd ytt = ys + cd(0, br.b / 2);
    const cd tap = std::polar(br.tap, br.shift_deg * std::numbers::pi / 180.0);
    trips.emplace_back(f, f, ytt / (tap * std::conj(tap)));
    trips.emplace_back(f, t, -ys / std::conj(tap));
    trips.emplace_back(t, f, -ys / tap);
    trips.emplace_back(t, t, ytt);
}

Admittance build_admittance(const GridCase& grid) {
    Admittance adm;
    const auto n = static_cast<Eigen::Index>(grid.buses().size());
    std::vector<Eigen::Triplet<cd>> trips;
    for (const auto& br : grid.branches()) {
        if (!br.in_service) continue;
        stamp_branch(br, static_cast<int>(grid.bus_index(br.from_bus)), static_cast<int>(grid.bus_index(br.to_bus)),
                     trips);
    }
    for (std::size_t k = 0; k < grid.buses().size(); ++k) {
        const auto& b = grid.buses()[k];
        adm.bus_ids.push_back(b.id);
        if (b.in_service && (b.gs_mw != 0.0 || b.bs_mvar != 0.0)) {
            trips.emplace_back(static_cast<int>(k), static_cast<int>(k), cd(b.gs_mw, b.bs_mvar) / grid.base_mva());
        }
    }
    adm.matrix.resize(n, n);
    adm.matrix.setFromTriplets(trips.begin(), trips.end());
    adm.matrix.makeCompressed();
    return adm;
}

std::vector<Island> energized_islands(const GridCase& grid) {
    const auto buses = grid.buses();
    UnionFind uf(buses.size());
    for (const auto& br : grid.branches()) {
        if (br.in_service) uf.unite(grid.bus_index(br.from_bus), grid.bus_index(br.to_bus));
    }
    std::vector<Island> islands;
    std::vector<int> root_to_island(buses.size(), -1);
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (!buses[i].in_service) continue;
        const auto r = uf.find(i);
        if (root_to_island[r] < 0) {
            root_to_island[r] = static_cast<int>(islands.size());
            islands.emplace_back();
        }
        auto& isl = islands[static_cast<std::size_t>(root_to_island[r])];
        isl.bus_ids.push_back(buses[i].id);
        if (i == grid.slack_index()) isl.viable = true;
    }
    return islands;
}

PowerFlowSolution solve(const GridCase& grid, const PowerFlowOptions& opt) {
    opt.validate();
    const auto buses = grid.buses();
    const auto gens = grid.generators();
    const double base = grid.base_mva();

    PowerFlowSolution sol;
    sol.vm.assign(buses.size(), 0.0);
    sol.va.assign(buses.size(), 0.0);
    sol.energized.assign(buses.size(), false);
    sol.branch_flows.assign(grid.branches().size(), BranchFlow{});
    sol.gen_p_mw.assign(gens.size(), 0.0);
    sol.gen_q_mvar.assign(gens.size(), 0.0);
    sol.gen_q_limited.assign(gens.size(), false);

    const auto islands = energized_islands(grid);
    const auto viable = std::find_if(islands.begin(), islands.end(), [](const Island& i) { return i.viable; });
    if (viable == islands.end()) {
        sol.status = SolveStatus::NoViableIsland;
        return sol;
    }
    const auto sys = assemble_island(grid, viable->bus_ids);
    const auto n = sys.buses.size();
    const auto slack_local = static_cast<std::size_t>(sys.local[grid.slack_index()]);

    std::vector<std::vector<std::size_t>> bus_gens(n);
    for (std::size_t g = 0; g < gens.size(); ++g) {
        if (!gens[g].in_service) continue;
        const int k = sys.local[grid.bus_index(gens[g].bus_id)];
        if (k >= 0) bus_gens[static_cast<std::size_t>(k)].push_back(g);
    }
    if (bus_gens[slack_local].empty()) {
        sol.status = SolveStatus::NoSlackGeneration;
        return sol;
    }

    std::vector<LocalKind> kind(n, LocalKind::PQ);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& b = buses[sys.buses[k]];
        if (k == slack_local) kind[k] = LocalKind::Slack;
        else if (b.kind == BusKind::PV && !bus_gens[k].empty()) kind[k] = LocalKind::PV;
    }

    CVec load = CVec::Zero(static_cast<Eigen::Index>(n));
    for (const auto& l : grid.loads()) {
        if (!l.in_service) continue;
        const int k = sys.local[grid.bus_index(l.bus_id)];
        if (k >= 0) load[k] += cd(l.p_mw, l.q_mvar) / base;
    }

    std::vector<double> gen_q(gens.size(), 0.0);
    for (std::size_t g = 0; g < gens.size(); ++g) gen_q[g] = gens[g].q_mvar;

    auto build_sbus = [&]() {
        CVec s = -load;
        for (std::size_t k = 0; k < n; ++k) {
            for (auto g : bus_gens[k]) s[static_cast<Eigen::Index>(k)] += cd(gens[g].p_mw, gen_q[g]) / base;
        }
        return s;
    };

    CVec v(static_cast<Eigen::Index>(n));
    const double slack_va = buses[grid.slack_index()].va;
    for (std::size_t k = 0; k < n; ++k) {
        const auto& b = buses[sys.buses[k]];
        const bool controlled = kind[k] != LocalKind::PQ;
        double vm = opt.flat_start ? 1.0 : b.vm;
        double va = opt.flat_start ? slack_va : b.va;
        if (!(vm > 0) || !std::isfinite(vm)) vm = 1.0;
        if (controlled) vm = b.voltage_setpoint;
        if (k == slack_local) va = slack_va;
        v[static_cast<Eigen::Index>(k)] = std::polar(vm, va);
    }

    const double q_tol = std::max(10.0 * opt.tol_pu * base, 1e-9);
    const std::size_t max_outer = 1 + std::count(kind.begin(), kind.end(), LocalKind::PV);
    NewtonResult nr;
    CVec sinj;
    for (std::size_t outer = 0; outer < max_outer; ++outer) {
        const CVec sbus = build_sbus();
        const auto step = newton(sys.y, sbus, kind, v, opt);
        nr.iterations += step.iterations;
        nr.converged = step.converged;
        nr.status = step.status;
        nr.max_mismatch = step.max_mismatch;
        if (!step.converged) break;

        sinj = v.cwiseProduct((sys.y * v).conjugate());
        if (!opt.enforce_q_limits) break;
        bool changed = false;
        for (std::size_t k = 0; k < n; ++k) {
            if (kind[k] != LocalKind::PV) continue;
            const double q_total = sinj[static_cast<Eigen::Index>(k)].imag() * base + load[static_cast<Eigen::Index>(k)].imag() * base;
            double qmax = 0, qmin = 0;
            for (auto g : bus_gens[k]) {
                qmax += gens[g].q_max_mvar;
                qmin += gens[g].q_min_mvar;
            }
            const bool over = q_total > qmax + q_tol;
            const bool under = q_total < qmin - q_tol;
            if (!over && !under) continue;
            for (auto g : bus_gens[k]) {
                gen_q[g] = over ? gens[g].q_max_mvar : gens[g].q_min_mvar;
                sol.gen_q_limited[g] = true;
            }
            kind[k] = LocalKind::PQ;
            sol.converted_to_pq.push_back(buses[sys.buses[k]].id);
            changed = true;
        }
        if (!changed) break;
        nr.converged = false;  // must re-solve with the new bus types
    }

    sol.converged = nr.converged;
    sol.status = nr.status;
    sol.iterations = nr.iterations;
    sol.max_mismatch_pu = nr.max_mismatch;
    std::sort(sol.converted_to_pq.begin(), sol.converted_to_pq.end());

    for (std::size_t k = 0; k < n; ++k) {
        const auto pos = sys.buses[k];
        sol.energized[pos] = true;
        sol.vm[pos] = std::abs(v[static_cast<Eigen::Index>(k)]);
        sol.va[pos] = std::arg(v[static_cast<Eigen::Index>(k)]);
    }
    if (!sol.converged) return sol;

    for (std::size_t k = 0; k < n; ++k) {
        const auto& gk = bus_gens[k];
        for (auto g : gk) {
            sol.gen_p_mw[g] = gens[g].p_mw;
            sol.gen_q_mvar[g] = gen_q[g];
        }
        const auto idx = static_cast<Eigen::Index>(k);
        const double p_total = (sinj[idx].real() + load[idx].real()) * base;
        const double q_total = (sinj[idx].imag() + load[idx].imag()) * base;
        if (kind[k] == LocalKind::Slack) {
            double others = 0;
            for (std::size_t j = 1; j < gk.size(); ++j) others += gens[gk[j]].p_mw;
            sol.gen_p_mw[gk.front()] = p_total - others;
            sol.slack_p_mw = p_total;
            sol.slack_q_mvar = q_total;
            double pmax = 0, pmin = 0;
            for (auto g : gk) {
                pmax += gens[g].p_max_mw;
                pmin += gens[g].p_min_mw;
            }
            sol.slack_p_outside_limits = p_total > pmax || p_total < pmin;
        }
        if (kind[k] != LocalKind::PQ) distribute_q(grid, gk, q_total, sol.gen_q_mvar);
    }

    for (const auto& br : grid.branches()) {
        if (!br.in_service) continue;
        const int f = sys.local[grid.bus_index(br.from_bus)];
        const int t = sys.local[grid.bus_index(br.to_bus)];
        if (f < 0 || t < 0) continue;
        const cd ys = 1.0 / cd(br.r, br.x);
        const cd ytt = ys + cd(0, br.b / 2);
        const cd tap = std::polar(br.tap, br.shift_deg * std::numbers::pi / 180.0);
        const cd vf = v[f], vt = v[t];
        const cd i_from = ytt / (tap * std::conj(tap)) * vf - ys / std::conj(tap) * vt;
        const cd i_to = -ys / tap * vf + ytt * vt;
        const cd s_from = vf * std::conj(i_from) * base;
        const cd s_to = vt * std::conj(i_to) * base;
        sol.branch_flows[static_cast<std::size_t>(br.id) - 1] = {s_from.real(), s_from.imag(), s_to.real(), s_to.imag()};
    }
    return sol;
}

void store_state(GridCase& grid, const PowerFlowSolution& solution) {
    for (std::size_t i = 0; i < solution.vm.size(); ++i) {
        if (solution.energized[i]) grid.set_bus_voltage(i, solution.vm[i], solution.va[i]);
    }
}

}  // namespace gridpulse
