#pragma once

/** @file
 * Zonal gauge maps, pullbacks, the harmonic map heat flow and gauge fixing.
 *
 * A gauge map is theta -> U(theta) = theta + x(theta) with x = sin(theta) xi(u),
 * i.e. phi_X(p) = exp_p(X(p)) for the meridional field X = x d/dtheta of the
 * round metric (meridians are geodesics, so the exponential map just shifts
 * theta by x). The generator is stored in the vector Galerkin basis.
 */

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "riccilab/flows/rdtf.hpp"

namespace riccilab {

struct GaugeMap {
    AxisymVector X;

    static GaugeMap identity(int lmax) { return {AxisymVector(lmax)}; }
};

namespace detail {

/// sin(x)/x and (2x - sin 2x)/(2x^3), stable near zero.
inline double sinc(double x) { return std::abs(x) < 1e-4 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }
inline double tfun(double x) {
    return std::abs(x) < 1e-3 ? 2.0 / 3.0 - 2.0 * x * x / 15.0 : (2.0 * x - std::sin(2.0 * x)) / (2.0 * x * x * x);
}

struct MapJet {
    Vec x;      // U - theta
    Vec Ut;     // dU/dtheta
    Vec rho;    // sin U / sin theta
    Vec cosU;
};

inline MapJet map_jet(const SphereBackground& bg, const VectorJet& v) {
    const int N = bg.nodes();
    MapJet m{Vec(N), Vec(N), Vec(N), Vec(N)};
    for (int k = 0; k < N; ++k) {
        const double u = bg.u()(k), s2 = bg.s2()(k), s = std::sqrt(s2);
        const double xi = v.xi(k);
        const double x = s * xi;
        m.x(k) = x;
        m.Ut(k) = 1.0 + u * xi - s2 * v.xi_u(k);
        m.rho(k) = std::cos(x) + u * xi * sinc(x);
        m.cosU(k) = u * std::cos(x) - s * std::sin(x);
    }
    return m;
}

}  // namespace detail

/// Smallest dU/dtheta over the nodes.
inline double gauge_min_slope(const SphereBackground& bg, const GaugeMap& g) {
    return detail::map_jet(bg, bg.synthesize(g.X)).Ut.minCoeff();
}

/// C^1 size of x = U - theta in arclength units.
inline double gauge_c1(const SphereBackground& bg, const GaugeMap& g) {
    const auto m = detail::map_jet(bg, bg.synthesize(g.X));
    return m.x.cwiseAbs().maxCoeff() + (m.Ut.array() - 1.0).abs().maxCoeff();
}

inline void check_gauge(const SphereBackground& bg, const GaugeMap& g, double delta = 0.5) {
    if (gauge_min_slope(bg, g) <= 0.0) throw DegenerateMetricError("gauge map is not monotone on the grid");
    if (gauge_c1(bg, g) > delta)
        throw ParameterError("gauge map exceeds the C^1 threshold " + std::to_string(delta));
}

/// h* with g_bar + h* = phi^*(g_bar + h), projected on the truncated sector.
inline AxisymTensor gauge_pullback(const SphereBackground& bg, const GaugeMap& g, const AxisymTensor& h) {
    check_gauge(bg, g);
    const auto m = detail::map_jet(bg, bg.synthesize(g.X));
    const int N = bg.nodes();
    Vec a(N), b(N);
    for (int k = 0; k < N; ++k) {
        const auto [aU, bU] = bg.evaluate(h, m.cosU(k));
        const double Ut = m.Ut(k), rho = m.rho(k);
        a(k) = aU * Ut * Ut + (Ut - 1.0) * (Ut + 1.0);
        b(k) = bU * rho * rho + (rho - 1.0) * (rho + 1.0);
    }
    return bg.analyze(a, b);
}

/// phi_outer o phi_inner, so that gauge_pullback(compose(X, Y)) = pullback by Y after X.
inline GaugeMap compose(const SphereBackground& bg, const GaugeMap& outer, const GaugeMap& inner) {
    const auto mi = detail::map_jet(bg, bg.synthesize(inner.X));
    const int N = bg.nodes();
    Vec xi(N);
    for (int k = 0; k < N; ++k) {
        const double s = std::sqrt(bg.s2()(k));
        const double cu = mi.cosU(k);
        const double su = mi.rho(k) * s;
        const double x_outer = su * bg.evaluate_xi(outer.X, cu);
        xi(k) = (mi.x(k) + x_outer) / s;
    }
    return {bg.analyze_vector(xi)};
}

// --- Harmonic map heat flow ------------------------------------------------

/// d xi / d tau for the map U = theta + sin(theta) xi from (M, g_bar + h) to (M, g_bar).
inline Vec hmhf_rate_grid(const SphereBackground& bg, const VectorJet& v, const TensorJet& h) {
    const int N = bg.nodes();
    const double n = bg.n(), r2 = bg.r2();
    Vec out(N);
    for (int k = 0; k < N; ++k) {
        const double u = bg.u()(k), s2 = bg.s2()(k), s = std::sqrt(s2);
        const double xi = v.xi(k), xu = v.xi_u(k), xuu = v.xi_uu(k);
        const double x = s * xi;
        const double S = detail::sinc(x), T = detail::tfun(x);
        const double A = 1.0 + h.a(k), B = 1.0 + h.b(k);
        const double Ut = 1.0 + u * xi - s2 * xu;
        // U_tt / s and the metric-derivative part of the domain Laplacian.
        const double main = (-(xi + 3.0 * u * xu - s2 * xuu) +
                             Ut * (-0.5 * (n - 1) * h.b_u(k) / B + 0.5 * h.a_u(k) / A)) / (r2 * A);
        // [cot(theta) U_t / A - sin U cos U / (s^2 B)] / s, with the 1/s^2 cancellation done by hand.
        const double E = 2.0 * u * xi * xi * S * S + u * u * xi * xi * xi * T - u * xu + xi * S * std::cos(x);
        const double Et = E / B - u * Ut * h.q(k) / (A * B);
        out(k) = main + (n - 1) * Et / r2;
    }
    return out;
}

struct HmhfTrace {
    std::vector<double> tau;
    std::vector<AxisymVector> X;
    std::vector<double> min_slope;
    std::vector<double> linear_defect;  // ||X - e^{tau frakL} X_0||, meaningful when h = 0
    bool halted = false;
    std::string halt_reason;
};

struct HmhfOptions {
    double sample_dt = 0.05;
    StepControl control{};
};

/// Evolves the gauge map along the metric path tau -> g_bar + h(tau).
inline HmhfTrace evolve_hmhf(const SphereBackground& bg, const std::function<AxisymTensor(double)>& h_of_tau,
                             const GaugeMap& u0, double tau0, double tau1, const HmhfOptions& opt = {}) {
    check_gauge(bg, u0);
    const int L = bg.lmax();
    const DiscreteOperator op = assemble_operator(bg, OperatorKind::frakL_vector);
    ImexProblem p;
    p.explicit_rhs = [&](double t, const Vec& e) {
        const AxisymVector X(L, e);
        const Vec rate = hmhf_rate_grid(bg, bg.synthesize(X), bg.synthesize(h_of_tau(t)));
        return Vec(bg.analyze_vector(rate).coeffs() - apply_frakL(bg, X).coeffs());
    };
    p.implicit_apply = [&](const Vec& x) { return block_apply(op, x); };
    p.implicit_solve = [&](double gdt, const Vec& r) { return block_implicit_solve(op, gdt, r); };
    const ValidityCheck valid = [&](double, const Vec& e, std::string& why) {
        if (gauge_min_slope(bg, {AxisymVector(L, e)}) <= 0.0) {
            why = "gauge degeneration: U is no longer monotone";
            return false;
        }
        return true;
    };
    const ImexResult r = integrate_imex(p, u0.X.coeffs(), tau0, sample_grid(tau0, tau1, opt.sample_dt), opt.control, valid);
    HmhfTrace tr;
    tr.halted = r.halted;
    tr.halt_reason = r.halt_reason;
    for (std::size_t i = 0; i < r.t.size(); ++i) {
        const AxisymVector X(L, r.x[i]);
        AxisymVector lin(L);
        for (int l = 1; l <= L; ++l)
            lin.e(l) = std::exp((1.0 - bg.laplace_eigenvalue(l)) * (r.t[i] - tau0)) * u0.X.e(l);
        tr.tau.push_back(r.t[i]);
        tr.X.push_back(X);
        tr.min_slope.push_back(gauge_min_slope(bg, {X}));
        tr.linear_defect.push_back(norm(bg, X - lin));
    }
    return tr;
}

// --- Gauge fixing ----------------------------------------------------------------

struct LieReduction {
    GaugeMap gauge;
    AxisymTensor h;  // reduced perturbation
    int iterations = 0;
    std::vector<double> residuals;  // ||P^{>=lambda}_Lie h'|| per iteration
    bool converged = false;
};

struct LieReductionOptions {
    int max_iterations = 30;
    double tolerance = 1e-9;
    double input_threshold = 0.1;  // C^2 guard on h
};

/// Finds X in the span of grad(phi_l) for the generic degrees with eigenvalue
/// >= lambda such that P^{>=lambda}_Lie (phi_X^*(g_bar + h) - g_bar) = 0, by
/// Newton iteration with a finite-difference Jacobian.
inline LieReduction lie_reduction(const SphereBackground& bg, const SpectralDecomposition& sd, const AxisymTensor& h,
                                  double lambda, const LieReductionOptions& opt = {}) {
    if (c2_estimate(bg, bg.synthesize(h)) > opt.input_threshold)
        throw ParameterError("lie_reduction: perturbation exceeds the configured threshold");
    const int L = bg.lmax();
    std::vector<int> modes, degrees;
    for (int i = 0; i < sd.size(); ++i) {
        const Mode& m = sd.modes[i];
        if (m.cls == ModeClass::generic && m.eigenvalue >= lambda) {
            modes.push_back(i);
            degrees.push_back(m.degree);
        }
    }
    const int k = static_cast<int>(modes.size());
    LieReduction out;
    out.gauge = GaugeMap::identity(L);
    out.h = h;
    if (k == 0) {
        out.converged = true;
        return out;
    }
    const auto residual = [&](const Vec& e, AxisymTensor* hp) {
        AxisymVector X(L);
        for (int j = 0; j < k; ++j) X.e(degrees[j]) = e(j);
        const AxisymTensor p = gauge_pullback(bg, {X}, h);
        const Vec a = sd.coordinates(p.coeffs());
        Vec r(k);
        for (int j = 0; j < k; ++j) r(j) = a(modes[j]);
        if (hp) *hp = p;
        return r;
    };
    Vec e = Vec::Zero(k);
    AxisymTensor hp(L);
    Vec r = residual(e, &hp);
    for (int it = 0; it <= opt.max_iterations; ++it) {
        out.residuals.push_back(r.norm());
        out.iterations = it;
        if (r.norm() <= opt.tolerance) {
            out.converged = true;
            break;
        }
        if (it == opt.max_iterations) break;
        Mat J(k, k);
        const double step = 1e-7;
        for (int j = 0; j < k; ++j) {
            Vec ep = e, em = e;
            ep(j) += step;
            em(j) -= step;
            J.col(j) = (residual(ep, nullptr) - residual(em, nullptr)) / (2 * step);
        }
        e -= J.partialPivLu().solve(r);
        r = residual(e, &hp);
    }
    if (!out.converged)
        throw NumericalError("lie_reduction: no convergence, last residual " + std::to_string(out.residuals.back()));
    for (int j = 0; j < k; ++j) out.gauge.X.e(degrees[j]) = e(j);
    out.h = hp;
    return out;
}

/// Gauge fixing against every generic mode. Refuses backgrounds with essential
/// neutral modes.
inline LieReduction slice_projection(const SphereBackground& bg, const SpectralDecomposition& sd, const AxisymTensor& h,
                                     const LieReductionOptions& opt = {}) {
    for (const auto& m : sd.modes)
        if (m.sign == ModeSign::neutral && m.cls == ModeClass::essential)
            throw CapabilityError("slice_projection: background has essential neutral modes");
    return lie_reduction(bg, sd, h, -std::numeric_limits<double>::infinity(), opt);
}

}  // namespace riccilab
