#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "gridpulse/errors.hpp"
#include "gridpulse/grid_model.hpp"
#include "gridpulse/powerflow.hpp"
#include "gridpulse/union_find.hpp"

namespace gridpulse {

/// DC power transfer distribution factors. Row n is an in-service branch,
/// column b an in-service bus: flow change on n per unit injection at b
/// withdrawn at the slack. The slack column is zero.
template <typename Scalar>
struct PtdfT {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    Matrix factors;
    std::vector<int> branch_ids;
    std::vector<int> bus_ids;
    int slack_bus{0};
    std::vector<Eigen::Index> from_col;  // per row
    std::vector<Eigen::Index> to_col;

    /// Sensitivity of row `n` to a unit transfer from the from-bus to the
    /// to-bus of row `i`.
    Scalar transfer(Eigen::Index n, Eigen::Index i) const {
        return factors(n, from_col[static_cast<std::size_t>(i)]) - factors(n, to_col[static_cast<std::size_t>(i)]);
    }
};

using Ptdf = PtdfT<double>;

/// Line outage distribution factors; entries(n, i) = dP_n / dP_i for outage i.
template <typename Scalar>
struct LodfMatrixT {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    Matrix entries;
    std::vector<int> branch_ids;
    std::vector<int> islanding_outages;  // ascending branch ids
    std::vector<bool> islanding;         // per column

    Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(branch_ids.size()); }
};

using LodfMatrix = LodfMatrixT<double>;

inline constexpr double kIslandingTolerance = 1e-9;

template <typename Scalar = double>
PtdfT<Scalar> ptdf(const GridCase& grid, int slack_bus) {
    using SparseMat = Eigen::SparseMatrix<Scalar>;
    PtdfT<Scalar> out;
    out.slack_bus = slack_bus;
    const auto buses = grid.buses();
    std::vector<Eigen::Index> col(buses.size(), -1);
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (!buses[i].in_service) continue;
        col[i] = static_cast<Eigen::Index>(out.bus_ids.size());
        out.bus_ids.push_back(buses[i].id);
    }
    const auto slack_pos = grid.bus_index(slack_bus);
    if (col[slack_pos] < 0) throw SingularSystem("slack bus " + std::to_string(slack_bus) + " is out of service");

    const auto nb = static_cast<Eigen::Index>(out.bus_ids.size());
    UnionFind uf(static_cast<std::size_t>(nb));
    std::vector<Scalar> susceptance;
    for (const auto& br : grid.branches()) {
        if (!br.in_service) continue;
        if (br.x == 0.0) throw SingularBranch(br.id);
        const auto f = col[grid.bus_index(br.from_bus)];
        const auto t = col[grid.bus_index(br.to_bus)];
        out.branch_ids.push_back(br.id);
        out.from_col.push_back(f);
        out.to_col.push_back(t);
        susceptance.push_back(Scalar(1) / (Scalar(br.x) * Scalar(br.tap)));
        uf.unite(static_cast<std::size_t>(f), static_cast<std::size_t>(t));
    }
    for (Eigen::Index k = 1; k < nb; ++k) {
        if (uf.find(static_cast<std::size_t>(k)) != uf.find(0)) {
            throw SingularSystem("DC susceptance matrix is singular: network is disconnected");
        }
    }

    // Reduced B over all in-service buses except the slack.
    const Eigen::Index slack_col = col[slack_pos];
    auto reduced = [&](Eigen::Index c) { return c < slack_col ? c : c - 1; };
    std::vector<Eigen::Triplet<Scalar>> trips;
    for (std::size_t m = 0; m < out.branch_ids.size(); ++m) {
        const auto f = out.from_col[m], t = out.to_col[m];
        const Scalar b = susceptance[m];
        if (f != slack_col) trips.emplace_back(reduced(f), reduced(f), b);
        if (t != slack_col) trips.emplace_back(reduced(t), reduced(t), b);
        if (f != slack_col && t != slack_col) {
            trips.emplace_back(reduced(f), reduced(t), -b);
            trips.emplace_back(reduced(t), reduced(f), -b);
        }
    }
    const Eigen::Index nr = nb - 1;
    const auto nl = static_cast<Eigen::Index>(out.branch_ids.size());
    out.factors = PtdfT<Scalar>::Matrix::Zero(nl, nb);
    if (nr == 0) return out;

    SparseMat bred(nr, nr);
    bred.setFromTriplets(trips.begin(), trips.end());
    bred.makeCompressed();
    Eigen::SparseLU<SparseMat, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(bred);
    if (lu.info() != Eigen::Success) throw SingularSystem("DC susceptance matrix factorization failed");
    const typename PtdfT<Scalar>::Matrix x = lu.solve(PtdfT<Scalar>::Matrix::Identity(nr, nr));
    if (lu.info() != Eigen::Success) throw SingularSystem("DC susceptance matrix solve failed");

    for (Eigen::Index m = 0; m < nl; ++m) {
        const auto f = out.from_col[static_cast<std::size_t>(m)];
        const auto t = out.to_col[static_cast<std::size_t>(m)];
        const Scalar b = susceptance[static_cast<std::size_t>(m)];
        for (Eigen::Index c = 0; c < nb; ++c) {
            if (c == slack_col) continue;
            const Scalar xf = f == slack_col ? Scalar(0) : x(reduced(f), reduced(c));
            const Scalar xt = t == slack_col ? Scalar(0) : x(reduced(t), reduced(c));
            out.factors(m, c) = b * (xf - xt);
        }
    }
    return out;
}

template <typename Scalar = double>
LodfMatrixT<Scalar> lodf(const PtdfT<Scalar>& p) {
    using std::abs;
    LodfMatrixT<Scalar> out;
    const auto nl = static_cast<Eigen::Index>(p.branch_ids.size());
    out.branch_ids = p.branch_ids;
    out.entries = LodfMatrixT<Scalar>::Matrix::Zero(nl, nl);
    out.islanding.assign(static_cast<std::size_t>(nl), false);
    for (Eigen::Index i = 0; i < nl; ++i) {
        const Scalar denom = Scalar(1) - p.transfer(i, i);
        if (abs(denom) < Scalar(kIslandingTolerance)) {
            out.islanding[static_cast<std::size_t>(i)] = true;
            out.islanding_outages.push_back(p.branch_ids[static_cast<std::size_t>(i)]);
            continue;
        }
        for (Eigen::Index n = 0; n < nl; ++n) out.entries(n, i) = p.transfer(n, i) / denom;
        out.entries(i, i) = Scalar(-1);
    }
    std::sort(out.islanding_outages.begin(), out.islanding_outages.end());
    return out;
}

template <typename Scalar = double>
LodfMatrixT<Scalar> lodf(const GridCase& grid) {
    return lodf(ptdf<Scalar>(grid, grid.slack_bus_id()));
}

struct CountySeverity {
    int county_id{0};
    long total{0};
    std::size_t branch_count{0};
    double normalized{0.0};  // total / branch_count, 0 when the county has no branches
    bool no_branches{false};

    friend bool operator==(const CountySeverity&, const CountySeverity&) = default;
};

/// Per-outage count of monitored lines whose |LODF| reaches the threshold.
struct SeverityIndexTable {
    double threshold{0.03};
    std::vector<int> branch_ids;
    std::vector<long> si_count;
    std::vector<bool> islanding;
    std::vector<std::optional<int>> branch_county;
    std::vector<CountySeverity> counties;  // ascending county id

    long total() const;
};

inline constexpr double kDefaultSiThreshold = 0.03;

SeverityIndexTable si_count(const LodfMatrix& lodf, double threshold);
/// As above, with county totals from the case's branch membership.
SeverityIndexTable si_count(const LodfMatrix& lodf, double threshold, const GridCase& grid);

/// Surplus of one unit: p_max * (loading_pct - 100) / 100.
constexpr double generator_surplus_mw(double p_max_mw, double loading_pct) {
    return p_max_mw * (loading_pct - 100.0) / 100.0;
}

struct GeneratorSurplus {
    std::size_t gen_index{0};
    int bus_id{0};
    double p_max_mw{0};
    double p_mw{0};
    double loading_pct{0};
    double gs_mw{0};
    double headroom_mw{0};  // -gs_mw
};

struct GenerationSurplus {
    std::vector<GeneratorSurplus> per_generator;
    double total_mw{0};
};

/// Requires a converged solution; generators with p_max = 0 or outside the
/// solved island are skipped.
GenerationSurplus generation_surplus(const GridCase& grid, const PowerFlowSolution& solution);

}  // namespace gridpulse
