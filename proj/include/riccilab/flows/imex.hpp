#pragma once

/** @file
 * Additive Runge-Kutta IMEX integrator, ARK3(2)4L[2]SA of Kennedy and
 * Carpenter: ESDIRK implicit part, explicit part of the same stage count,
 * third-order solution with a second-order embedded estimate, and PI step
 * control. The implicit part is linear and applied through a caller-supplied
 * solver for (I - gamma dt A) x = r.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "riccilab/core/errors.hpp"
#include "riccilab/core/types.hpp"

namespace riccilab {

struct ArkTableau {
    static constexpr int stages = 4;
    double gamma;
    std::array<double, 4> c;
    std::array<std::array<double, 4>, 4> ae;  // explicit
    std::array<std::array<double, 4>, 4> ai;  // implicit
    std::array<double, 4> b;
    std::array<double, 4> bhat;
};

inline ArkTableau ark324() {
    ArkTableau t{};
    const double g = 1767732205903.0 / 4055673282236.0;
    t.gamma = g;
    t.c = {0.0, 1767732205903.0 / 2027836641118.0, 3.0 / 5.0, 1.0};
    t.b = {1471266399579.0 / 7840856788654.0, -4482444167858.0 / 7529755066697.0,
           11266239266428.0 / 11593286722821.0, g};
    t.bhat = {2756255671327.0 / 12835298489170.0, -10771552573575.0 / 22201958757719.0,
              9247589265047.0 / 10645013368117.0, 2193209047091.0 / 5459859503100.0};
    t.ae[1][0] = 1767732205903.0 / 2027836641118.0;
    t.ae[2][0] = 5535828885825.0 / 10492691773637.0;
    t.ae[2][1] = 788022342437.0 / 10882634858940.0;
    t.ae[3][0] = 6485989280629.0 / 16251701735622.0;
    t.ae[3][1] = -4246266847089.0 / 9704473918619.0;
    t.ae[3][2] = 10755448449292.0 / 10357097424841.0;
    t.ai[1][0] = g;
    t.ai[1][1] = g;
    t.ai[2][0] = 2746238789719.0 / 10658868560708.0;
    t.ai[2][1] = -640167445237.0 / 6845629431997.0;
    t.ai[2][2] = g;
    for (int j = 0; j < 4; ++j) t.ai[3][j] = t.b[j];
    return t;
}

/// u' = F_E(t, u) + A u, with A linear (stiff) and F_E non-stiff.
struct ImexProblem {
    std::function<Vec(double, const Vec&)> explicit_rhs;
    std::function<Vec(const Vec&)> implicit_apply;
    /// Returns x solving (I - gdt A) x = r.
    std::function<Vec(double gdt, const Vec& r)> implicit_solve;
};

struct StepControl {
    double dt0 = 1e-3;
    double rtol = 1e-9;
    double atol = 1e-13;
    double dt_min = 1e-12;
    double dt_max = 0.1;
    bool fixed = false;  // constant dt, no error control
    int max_steps = 2000000;
};

struct ImexResult {
    std::vector<double> t;
    std::vector<Vec> x;
    std::vector<double> dt;  // last accepted step before each sample
    int accepted = 0;
    int rejected = 0;
    bool halted = false;
    std::string halt_reason;
};

/// Returns false (and a reason) when the state leaves the admissible region.
using ValidityCheck = std::function<bool(double, const Vec&, std::string&)>;

namespace detail {

struct StageResult {
    Vec x, err;
};

inline StageResult ark_step(const ArkTableau& tab, const ImexProblem& p, double t, const Vec& u, double dt) {
    std::array<Vec, 4> FE, FI;
    Vec X = u;
    for (int i = 0; i < 4; ++i) {
        if (i > 0) {
            Vec r = u;
            for (int j = 0; j < i; ++j) r += dt * (tab.ae[i][j] * FE[j] + tab.ai[i][j] * FI[j]);
            X = p.implicit_solve(tab.gamma * dt, r);
        }
        FE[i] = p.explicit_rhs(t + tab.c[i] * dt, X);
        FI[i] = p.implicit_apply(X);
    }
    StageResult s{u, Vec::Zero(u.size())};
    for (int j = 0; j < 4; ++j) {
        s.x += dt * tab.b[j] * (FE[j] + FI[j]);
        s.err += dt * (tab.b[j] - tab.bhat[j]) * (FE[j] + FI[j]);
    }
    return s;
}

}  // namespace detail

/// Integrates from t0 through the increasing sample times, landing on each
/// exactly. A thrown DegenerateMetricError inside a stage counts as a rejected
/// step. The validity check runs after every accepted step; a failure halts
/// the integration and is reported, not thrown.
inline ImexResult integrate_imex(const ImexProblem& p, const Vec& u0, double t0, const std::vector<double>& samples,
                                 const StepControl& ctl, const ValidityCheck& valid = {}) {
    const ArkTableau tab = ark324();
    ImexResult res;
    double t = t0;
    Vec u = u0;
    double dt = ctl.dt0;
    double err_prev = 1.0;
    double last_dt = 0.0;
    std::size_t next = 0;
    while (next < samples.size() && samples[next] <= t0 + 1e-14) {
        res.t.push_back(samples[next]);
        res.x.push_back(u);
        res.dt.push_back(0.0);
        ++next;
    }
    int steps = 0;
    while (next < samples.size()) {
        if (++steps > ctl.max_steps) throw NumericalError("integrate_imex: step budget exhausted");
        const double target = samples[next];
        const bool hits = t + dt >= target - 1e-14 * std::max(1.0, std::abs(target));
        const double h = hits ? target - t : dt;
        detail::StageResult s;
        bool ok = true;
        try {
            s = detail::ark_step(tab, p, t, u, h);
            ok = s.x.allFinite();
        } catch (const DegenerateMetricError&) {
            ok = false;
        }
        double err = 0.0;
        if (ok && !ctl.fixed) {
            const Vec scale = (ctl.atol + ctl.rtol * u.cwiseAbs().cwiseMax(s.x.cwiseAbs()).array()).matrix();
            err = std::sqrt((s.err.cwiseQuotient(scale)).squaredNorm() / std::max<Eigen::Index>(1, u.size()));
        }
        if (!ok || err > 1.0) {
            ++res.rejected;
            if (ctl.fixed) {
                res.halted = true;
                res.halt_reason = "fixed-step integration failed at t=" + std::to_string(t);
                return res;
            }
            dt = h * (ok ? std::max(0.2, 0.9 * std::pow(err, -1.0 / 3.0)) : 0.25);
            if (dt < ctl.dt_min)
                throw NumericalError("integrate_imex: step-size underflow at t=" + std::to_string(t));
            continue;
        }
        ++res.accepted;
        t = hits ? target : t + h;
        u = std::move(s.x);
        last_dt = h;
        if (!ctl.fixed) {
            const double e = std::max(err, 1e-10);
            double fac = 0.9 * std::pow(e, -0.7 / 3.0) * std::pow(err_prev, 0.4 / 3.0);
            fac = std::clamp(fac, 0.2, 5.0);
            err_prev = e;
            // Landing on a sample shortens the step artificially; keep the controller's dt.
            dt = std::min(ctl.dt_max, (hits ? std::max(h, dt) : h) * fac);
        }
        std::string why;
        if (valid && !valid(t, u, why)) {
            res.t.push_back(t);
            res.x.push_back(u);
            res.dt.push_back(last_dt);
            res.halted = true;
            res.halt_reason = why;
            return res;
        }
        if (hits) {
            res.t.push_back(t);
            res.x.push_back(u);
            res.dt.push_back(last_dt);
            ++next;
        }
    }
    return res;
}

}  // namespace riccilab
