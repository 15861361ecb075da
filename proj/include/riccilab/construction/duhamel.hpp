#pragma once

/** @file
 * Duhamel and Picard solvers for (d/dtau - L) X = N(tau, X) + G(tau) in the
 * eigenbasis of L, on ancient (-inf, T] or immortal [T, inf) intervals.
 *
 * Each mode is integrated exactly against a piecewise-exponential interpolant
 * of its forcing. Modes with eigenvalue above the splitting exponent theta are
 * anchored at the far end (T for ancient, +inf for immortal); the others are
 * anchored at the near end (-inf for ancient, T for immortal). Infinite ends
 * are truncated where the certified tail bound falls below tail_tolerance.
 */

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "riccilab/core/errors.hpp"
#include "riccilab/core/types.hpp"

namespace riccilab {

enum class Direction { ancient, immortal };

inline const char* to_string(Direction d) { return d == Direction::ancient ? "ancient" : "immortal"; }

using ModeField = std::function<Vec(double, const Vec&)>;
using ModeForcing = std::function<Vec(double)>;

struct ConstructionProblem {
    Vec eigenvalues;  // L in the eigenbasis
    Direction direction = Direction::ancient;
    double horizon = 0.0;  // T
    double span = 6.0;     // reported window length beyond/before T
    double theta = std::numeric_limits<double>::quiet_NaN();  // splitting exponent

    /// E + Q in mode coordinates; empty for linear problems.
    ModeField nonlinearity;
    double C0 = 0.0;  // bilinear bound of the nonlinearity

    /// Inhomogeneity with |G(tau)| <= budget e^{rate tau}.
    ModeForcing forcing;
    double forcing_rate = 0.0;
    double forcing_budget = 0.0;

    /// Prescribed homogeneous data a e^{lambda_i tau} Y_i.
    std::vector<std::pair<int, double>> prescribed;

    /// Known solution to perturb around (values on the solver grid, optional).
    std::function<Vec(double)> base;
    double base_rate = 0.0;  // |base(tau)| <= C e^{base_rate tau}

    double step = 0.01;
    double tail_tolerance = 1e-10;
    double increment_tolerance = 1e-10;  // relative to the leading term
    double floor_tolerance = 1e-8;       // relative increment accepted once contraction stalls
    int max_iterations = 60;
    bool shrink_horizon = true;
};

struct ConstructedSolution {
    Direction direction = Direction::ancient;
    std::vector<double> tau;  // full solver grid, increasing
    std::vector<Vec> coords;  // mode coordinates of X (base included)
    double horizon = 0.0;     // T after any shrink
    double theta = 0.0;
    int iterations = 0;
    std::vector<double> increments;           // sup-norm of X^k - X^{k-1}
    std::vector<double> contraction_factors;  // increments[k+1] / increments[k]
    double residual = 0.0;    // sup-norm fixed-point residual of the Duhamel map
    double tail_bound = 0.0;  // certified truncation bound
    double gate = 0.0;        // 2 C0 C1 sup|X^0|
    double C0 = 0.0, C1 = 0.0;
    bool converged = false;
    bool stagnated = false;  // stopped at the roundoff floor; the last factor is not a contraction

    std::size_t size() const { return tau.size(); }

    /// Indices of the grid points in the reported window.
    std::pair<std::size_t, std::size_t> window(double span) const {
        std::size_t i0 = 0, i1 = tau.size();
        const double lo = direction == Direction::ancient ? horizon - span : horizon;
        const double hi = direction == Direction::ancient ? horizon : horizon + span;
        while (i0 < tau.size() && tau[i0] < lo - 1e-12) ++i0;
        while (i1 > i0 && tau[i1 - 1] > hi + 1e-12) --i1;
        return {i0, i1};
    }

    /// Coordinates at tau by exponential-linear interpolation on the grid.
    Vec at(double t) const {
        if (tau.empty()) throw ParameterError("ConstructedSolution::at: empty solution");
        if (t <= tau.front()) return coords.front();
        if (t >= tau.back()) return coords.back();
        const auto it = std::upper_bound(tau.begin(), tau.end(), t);
        const std::size_t k = static_cast<std::size_t>(it - tau.begin()) - 1;
        const double s = (t - tau[k]) / (tau[k + 1] - tau[k]);
        return (1 - s) * coords[k] + s * coords[k + 1];
    }
};

namespace detail {

/// (e^z - 1) / z
inline double phi1(double z) { return std::abs(z) < 1e-8 ? 1.0 + 0.5 * z : std::expm1(z) / z; }
/// int_0^1 t e^{z t} dt
inline double psi1(double z) {
    if (std::abs(z) < 1e-3) return 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0;
    return (std::exp(z) * (z - 1.0) + 1.0) / (z * z);
}

/// J = int_0^h e^{-lambda s} G(s) ds for the interpolant through (g0, g1).
inline double segment_integral(double lambda, double h, double g0, double g1) {
    if (g0 == 0.0 && g1 == 0.0) return 0.0;
    if (g0 * g1 > 0.0) {
        const double beta = std::log(g1 / g0) / h;
        if (std::abs(beta * h) < 50.0) return g0 * h * phi1((beta - lambda) * h);
    }
    return h * (g0 * phi1(-lambda * h) + (g1 - g0) * psi1(-lambda * h));
}

inline double sup_norm(const std::vector<Vec>& xs) {
    double m = 0.0;
    for (const auto& x : xs) m = std::max(m, x.norm());
    return m;
}

inline std::vector<double> uniform_grid(double lo, double hi, double h) {
    const int m = std::max(2, static_cast<int>(std::llround(std::ceil((hi - lo) / h - 1e-6))));
    std::vector<double> g(m + 1);
    for (int i = 0; i <= m; ++i) g[i] = lo + (hi - lo) * i / m;
    return g;
}

}  // namespace detail

/// Per-mode Duhamel integration of forcing values F on grid t (no prescribed data).
inline std::vector<Vec> duhamel_integrate(const Vec& lam, double theta, const std::vector<double>& t,
                                          const std::vector<Vec>& F) {
    const std::size_t m = t.size();
    const int N = static_cast<int>(lam.size());
    std::vector<Vec> X(m, Vec::Zero(N));
    for (int i = 0; i < N; ++i) {
        const double l = lam(i);
        const bool far = l > theta;  // anchored at the right end of the grid
        if (far) {
            // X(t_k) = e^{-l h} X(t_{k+1}) - int_{t_k}^{t_{k+1}} e^{l (t_k - s)} G(s) ds
            for (std::size_t k = m - 1; k-- > 0;) {
                const double h = t[k + 1] - t[k];
                X[k](i) = std::exp(-l * h) * X[k + 1](i) - detail::segment_integral(l, h, F[k](i), F[k + 1](i));
            }
        } else {
            for (std::size_t k = 0; k + 1 < m; ++k) {
                const double h = t[k + 1] - t[k];
                X[k + 1](i) =
                    std::exp(l * h) * (X[k](i) + detail::segment_integral(l, h, F[k](i), F[k + 1](i)));
            }
        }
    }
    return X;
}

/// Checks theta clearance and fills the default when unset.
inline double resolve_theta(const ConstructionProblem& p) {
    double theta = p.theta;
    if (std::isnan(theta)) {
        // Midpoint of the gap next to the slowest prescribed or forcing rate.
        double rate = p.forcing ? p.forcing_rate : 0.0;
        if (!p.prescribed.empty()) rate = p.eigenvalues(p.prescribed.front().first);
        double nb = p.direction == Direction::ancient ? std::numeric_limits<double>::infinity()
                                                      : -std::numeric_limits<double>::infinity();
        for (int i = 0; i < p.eigenvalues.size(); ++i) {
            const double l = p.eigenvalues(i);
            if (p.direction == Direction::ancient && l > rate + 1e-9) nb = std::min(nb, l);
            if (p.direction == Direction::immortal && l < rate - 1e-9) nb = std::max(nb, l);
        }
        const double cap = p.direction == Direction::ancient ? rate + std::abs(rate) : rate - std::abs(rate);
        const double edge = p.direction == Direction::ancient ? std::min(nb, cap) : std::max(nb, cap);
        theta = 0.5 * (rate + edge);
    }
    for (int i = 0; i < p.eigenvalues.size(); ++i)
        if (std::abs(p.eigenvalues(i) - theta) < 1e-6)
            throw NumericalError("duhamel: theta=" + std::to_string(theta) + " lies within 1e-6 of the spectrum");
    return theta;
}

namespace detail {

/// Leading exponential rate of the solution (prescribed modes or forcing).
inline double leading_rate(const ConstructionProblem& p) {
    double r = p.direction == Direction::ancient ? std::numeric_limits<double>::infinity()
                                                 : -std::numeric_limits<double>::infinity();
    auto take = [&](double x) { r = p.direction == Direction::ancient ? std::min(r, x) : std::max(r, x); };
    for (const auto& [i, a] : p.prescribed)
        if (a != 0.0) take(p.eigenvalues(i));
    if (p.forcing && p.forcing_budget > 0) take(p.forcing_rate);
    if (p.base) take(p.base_rate);
    if (std::isinf(r)) r = p.direction == Direction::ancient ? 1.0 : -1.0;
    return r;
}

/// Solver grid: [T - len, T] (ancient) or [T, T + len] (immortal). Modes
/// anchored at the truncated end start from zero there; for a forcing budget
/// (scale, rate) the missing piece reaches tau as
///   scale e^{(rate - l) edge} e^{l tau} / |rate - l|,
/// and len is chosen so that the sum over modes, maximised over the reported
/// window, stays below tail_tolerance.
inline std::vector<double> solver_grid(const ConstructionProblem& p, double theta,
                                       const std::vector<std::pair<double, double>>& budgets, double& tail_bound) {
    const bool anc = p.direction == Direction::ancient;
    const double w0 = anc ? p.horizon - p.span : p.horizon;
    const double w1 = anc ? p.horizon : p.horizon + p.span;
    std::vector<double> cut;  // eigenvalues of modes anchored at the truncated end
    for (int i = 0; i < p.eigenvalues.size(); ++i) {
        const double l = p.eigenvalues(i);
        if (anc ? l < theta : l > theta) cut.push_back(l);
    }
    std::size_t active = 0;
    for (const auto& b : budgets) active += b.first > 0;
    const double share = p.tail_tolerance / std::max<std::size_t>(1, cut.size() * active);
    // log of the bound for one mode at window point tw, given the edge
    auto log_term = [](double scale, double rate, double l, double edge, double tw) {
        return std::log(scale) + (rate - l) * edge + l * tw - std::log(std::abs(rate - l));
    };
    double len = p.span;
    bool certified = true;
    for (const auto& [scale, rate] : budgets) {
        if (!(scale > 0)) continue;
        for (const double l : cut) {
            const double d = rate - l;  // must be > 0 (ancient) or < 0 (immortal)
            if (anc ? d <= 0 : d >= 0) {
                certified = false;
                continue;
            }
            const double tw = l >= 0 ? w1 : w0;
            const double edge = (std::log(share) + std::log(std::abs(d)) - std::log(scale) - l * tw) / d;
            len = std::max(len, anc ? p.horizon - edge : edge - p.horizon);
        }
    }
    len = std::ceil(len / p.step - 1e-9) * p.step;  // keeps grids of equal step aligned at T
    const double edge = anc ? p.horizon - len : p.horizon + len;
    tail_bound = certified ? 0.0 : std::numeric_limits<double>::infinity();
    for (const auto& [scale, rate] : budgets) {
        if (!(scale > 0) || !certified) continue;
        for (const double l : cut) tail_bound += std::exp(log_term(scale, rate, l, edge, l >= 0 ? w1 : w0));
    }
    return anc ? uniform_grid(edge, p.horizon, p.step) : uniform_grid(p.horizon, edge, p.step);
}

inline std::vector<Vec> evaluate(const std::vector<double>& t, const std::function<Vec(double)>& f, int N) {
    std::vector<Vec> v(t.size(), Vec::Zero(N));
    if (f)
        for (std::size_t k = 0; k < t.size(); ++k) v[k] = f(t[k]);
    return v;
}

}  // namespace detail

/// Linear solve: Q == 0. Returns X with (d/dtau - L) X = G plus prescribed data.
inline ConstructedSolution duhamel_solve(const ConstructionProblem& p) {
    const double theta = resolve_theta(p);
    const int N = static_cast<int>(p.eigenvalues.size());
    ConstructedSolution s;
    s.direction = p.direction;
    s.theta = theta;
    s.horizon = p.horizon;
    std::vector<std::pair<double, double>> budgets;
    if (p.forcing) budgets.emplace_back(p.forcing_budget, p.forcing_rate);
    s.tau = detail::solver_grid(p, theta, budgets, s.tail_bound);
    const auto F = detail::evaluate(s.tau, p.forcing, N);
    s.coords = duhamel_integrate(p.eigenvalues, theta, s.tau, F);
    for (std::size_t k = 0; k < s.tau.size(); ++k)
        for (const auto& [i, a] : p.prescribed) s.coords[k](i) += a * std::exp(p.eigenvalues(i) * s.tau[k]);
    if (p.base) {
        const auto B = detail::evaluate(s.tau, p.base, N);
        for (std::size_t k = 0; k < s.tau.size(); ++k) s.coords[k] += B[k];
    }
    s.iterations = 1;
    s.converged = true;
    return s;
}

/// Empirical bilinear constant of N on a ball around the sample points,
/// inflated by 2: |N(X) - N(Y)| <= C0 (|X| + |Y|) |X - Y|.
inline double measure_C0(const ModeField& N, const std::vector<std::pair<double, Vec>>& samples, int pairs,
                         unsigned seed = 7) {
    if (!N || samples.empty()) return 0.0;
    std::mt19937 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
    double C = 0.0;
    for (int k = 0; k < pairs; ++k) {
        const auto& [t, x] = samples[pick(rng)];
        const double r = std::max(x.norm(), 1e-12);
        Vec d(x.size());
        for (int i = 0; i < d.size(); ++i) d(i) = g(rng) / (1.0 + i);  // bias to slow modes
        d *= 0.5 * r / d.norm();
        const Vec X = x, Y = x + d;
        const double den = (X.norm() + Y.norm()) * d.norm();
        if (den > 0) C = std::max(C, (N(t, X) - N(t, Y)).norm() / den);
    }
    return 2.0 * C;
}

/// Picard iteration X^{k+1} = X^0 + D[N(base + X^k) - N(base)], with the
/// horizon shrunk until 2 C0 C1 sup|X^0| <= 1/4.
inline ConstructedSolution picard_solve(ConstructionProblem p) {
    if (!p.nonlinearity) return duhamel_solve(p);
    const double theta = resolve_theta(p);
    const int N = static_cast<int>(p.eigenvalues.size());
    const bool anc = p.direction == Direction::ancient;
    const double rate = detail::leading_rate(p);
    const double qrate = 2.0 * rate;  // rate of the quadratic forcing

    double C1 = 0.0;
    for (int i = 0; i < N; ++i) C1 = std::max(C1, 1.0 / std::abs(qrate - p.eigenvalues(i)));

    ConstructedSolution s;
    s.direction = p.direction;
    s.theta = theta;
    double A = 0.0;  // sup |X^0| e^{-rate tau}
    for (int attempt = 0;; ++attempt) {
        // Linear part on a provisional grid to size the nonlinear forcing.
        ConstructionProblem lin = p;
        lin.nonlinearity = nullptr;
        lin.base = nullptr;
        ConstructedSolution z0 = duhamel_solve(lin);
        std::vector<std::pair<double, Vec>> samples;
        double M = 0.0;
        A = 0.0;
        for (std::size_t k = 0; k < z0.size(); k += std::max<std::size_t>(1, z0.size() / 40)) {
            Vec x = z0.coords[k];
            if (p.base) x += p.base(z0.tau[k]);
            samples.emplace_back(z0.tau[k], x);
        }
        for (std::size_t k = 0; k < z0.size(); ++k) {
            Vec x = z0.coords[k];
            if (p.base) x += p.base(z0.tau[k]);
            M = std::max(M, x.norm());
            A = std::max(A, x.norm() * std::exp(-rate * z0.tau[k]));
        }
        const double C0 = p.C0 > 0 ? p.C0 : measure_C0(p.nonlinearity, samples, 200);
        s.C0 = C0;
        s.C1 = C1;
        s.gate = 2.0 * C0 * C1 * M;
        if (s.gate <= 0.25 || !p.shrink_horizon) break;
        if (attempt > 20) throw NumericalError("picard_solve: smallness gate unachievable, gate=" + std::to_string(s.gate));
        const double shift = std::log(s.gate / 0.25) / std::abs(rate) + 1e-3;
        p.horizon += anc ? -shift : shift;
    }
    s.horizon = p.horizon;

    // Grid sized for the quadratic forcing C0 (A e^{rate t})^2 and for G.
    std::vector<std::pair<double, double>> budgets{{s.C0 * A * A, qrate}};
    if (p.forcing) budgets.emplace_back(p.forcing_budget, p.forcing_rate);
    s.tau = detail::solver_grid(p, theta, budgets, s.tail_bound);
    const std::size_t m = s.tau.size();
    const auto B = detail::evaluate(s.tau, p.base, N);
    const auto G = detail::evaluate(s.tau, p.forcing, N);

    std::vector<Vec> Z0 = duhamel_integrate(p.eigenvalues, theta, s.tau, G);
    for (std::size_t k = 0; k < m; ++k)
        for (const auto& [i, a] : p.prescribed) Z0[k](i) += a * std::exp(p.eigenvalues(i) * s.tau[k]);
    std::vector<Vec> NB(m);
    for (std::size_t k = 0; k < m; ++k) NB[k] = p.base ? p.nonlinearity(s.tau[k], B[k]) : Vec(Vec::Zero(N));

    auto map = [&](const std::vector<Vec>& Z) {
        std::vector<Vec> F(m);
        for (std::size_t k = 0; k < m; ++k) F[k] = p.nonlinearity(s.tau[k], B[k] + Z[k]) - NB[k];
        auto D = duhamel_integrate(p.eigenvalues, theta, s.tau, F);
        for (std::size_t k = 0; k < m; ++k) D[k] += Z0[k];
        return D;
    };

    const double lead = std::max(detail::sup_norm(Z0), 1e-300);
    std::vector<Vec> Z = Z0;
    for (int it = 1; it <= p.max_iterations; ++it) {
        std::vector<Vec> next = map(Z);
        double inc = 0.0;
        for (std::size_t k = 0; k < m; ++k) inc = std::max(inc, (next[k] - Z[k]).norm());
        Z = std::move(next);
        s.iterations = it;
        if (!s.increments.empty() && s.increments.back() > 0)
            s.contraction_factors.push_back(inc / s.increments.back());
        s.increments.push_back(inc);
        if (inc <= p.increment_tolerance * lead) {
            s.converged = true;
            break;
        }
        // Contraction lost while already tiny: the iterate sits on the roundoff floor.
        if (s.increments.size() >= 2 && inc >= 0.5 * s.increments[s.increments.size() - 2] &&
            inc <= p.floor_tolerance * lead) {
            s.converged = true;
            s.stagnated = true;
            break;
        }
    }
    if (!s.converged)
        throw NumericalError("picard_solve: no convergence after " + std::to_string(p.max_iterations) +
                             " iterations, last increment " + std::to_string(s.increments.back()));
    const std::vector<Vec> check = map(Z);
    s.residual = 0.0;
    for (std::size_t k = 0; k < m; ++k) s.residual = std::max(s.residual, (check[k] - Z[k]).norm());
    s.coords.resize(m);
    for (std::size_t k = 0; k < m; ++k) s.coords[k] = B[k] + Z[k];
    return s;
}

}  // namespace riccilab
