#pragma once

// Dense, slow reference computations used to check the library.

#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <queue>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "gridpulse/grid_model.hpp"

namespace oracle {

using gridpulse::GridCase;
using cd = std::complex<double>;

/// Bus admittance matrix over all buses, straight from the pi model.
inline Eigen::MatrixXcd dense_ybus(const GridCase& g) {
    const auto n = static_cast<Eigen::Index>(g.buses().size());
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : g.branches()) {
        if (!br.in_service) continue;
        const auto f = static_cast<Eigen::Index>(g.bus_index(br.from_bus));
        const auto t = static_cast<Eigen::Index>(g.bus_index(br.to_bus));
        const cd ys = 1.0 / cd(br.r, br.x);
        const cd a = std::polar(br.tap, br.shift_deg * std::numbers::pi / 180.0);
        const cd half = cd(0, br.b / 2);
        y(f, f) += (ys + half) / std::norm(a);
        y(t, t) += ys + half;
        y(f, t) -= ys / std::conj(a);
        y(t, f) -= ys / a;
    }
    for (std::size_t i = 0; i < g.buses().size(); ++i) {
        const auto& b = g.buses()[i];
        if (b.in_service) y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += cd(b.gs_mw, b.bs_mvar) / g.base_mva();
    }
    return y;
}

/// DC branch flows with `removed` branch ids out; b = 1/(x tap), slack angle 0.
inline Eigen::VectorXd dc_flows(const GridCase& g, const Eigen::VectorXd& injection, const std::set<int>& removed) {
    const auto n = static_cast<Eigen::Index>(g.buses().size());
    const auto s = static_cast<Eigen::Index>(g.slack_index());
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
    for (const auto& br : g.branches()) {
        if (!br.in_service || removed.contains(br.id)) continue;
        const auto f = static_cast<Eigen::Index>(g.bus_index(br.from_bus));
        const auto t = static_cast<Eigen::Index>(g.bus_index(br.to_bus));
        const double y = 1.0 / (br.x * br.tap);
        b(f, f) += y;
        b(t, t) += y;
        b(f, t) -= y;
        b(t, f) -= y;
    }
    b.row(s).setZero();
    b.col(s).setZero();
    b(s, s) = 1.0;
    Eigen::VectorXd rhs = injection;
    rhs(s) = 0.0;
    const Eigen::VectorXd theta = b.fullPivLu().solve(rhs);
    Eigen::VectorXd flows = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.branches().size()));
    for (std::size_t k = 0; k < g.branches().size(); ++k) {
        const auto& br = g.branches()[k];
        if (!br.in_service || removed.contains(br.id)) continue;
        const auto f = static_cast<Eigen::Index>(g.bus_index(br.from_bus));
        const auto t = static_cast<Eigen::Index>(g.bus_index(br.to_bus));
        flows(static_cast<Eigen::Index>(k)) = (theta(f) - theta(t)) / (br.x * br.tap);
    }
    return flows;
}

/// True when removing branch `removed` leaves some in-service bus unreachable from the slack.
inline bool disconnects(const GridCase& g, int removed) {
    std::map<int, std::vector<int>> adj;
    for (const auto& br : g.branches()) {
        if (!br.in_service || br.id == removed) continue;
        adj[br.from_bus].push_back(br.to_bus);
        adj[br.to_bus].push_back(br.from_bus);
    }
    std::set<int> seen{g.slack_bus_id()};
    std::queue<int> q;
    q.push(g.slack_bus_id());
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (int v : adj[u]) {
            if (seen.insert(v).second) q.push(v);
        }
    }
    std::size_t live = 0;
    for (const auto& b : g.buses()) live += b.in_service ? 1 : 0;
    return seen.size() != live;
}

struct BruteLodf {
    Eigen::MatrixXd entries;
    std::vector<bool> islanding;
};

/// LODF by re-solving the DC flow with each branch removed, under random injections.
inline BruteLodf brute_lodf(const GridCase& g, unsigned seed = 7) {
    const auto nl = static_cast<Eigen::Index>(g.branches().size());
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd inj(static_cast<Eigen::Index>(g.buses().size()));
    for (Eigen::Index i = 0; i < inj.size(); ++i) inj(i) = u(rng);
    const Eigen::VectorXd base = dc_flows(g, inj, {});
    BruteLodf out{Eigen::MatrixXd::Zero(nl, nl), std::vector<bool>(static_cast<std::size_t>(nl), false)};
    for (Eigen::Index i = 0; i < nl; ++i) {
        const int id = g.branches()[static_cast<std::size_t>(i)].id;
        if (disconnects(g, id)) {
            out.islanding[static_cast<std::size_t>(i)] = true;
            continue;
        }
        const Eigen::VectorXd after = dc_flows(g, inj, {id});
        for (Eigen::Index n = 0; n < nl; ++n) out.entries(n, i) = (after(n) - base(n)) / base(i);
        out.entries(i, i) = -1.0;
    }
    return out;
}

/// Textbook single-pass correlation formula in long double.
inline double direct_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    const auto n = static_cast<long double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += static_cast<long double>(x[i]) * x[i];
        syy += static_cast<long double>(y[i]) * y[i];
        sxy += static_cast<long double>(x[i]) * y[i];
    }
    const long double num = n * sxy - sx * sy;
    const long double den = std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
    return static_cast<double>(num / den);
}

}  // namespace oracle
