#pragma once

/** @file
 * Curvature of a zonal perturbation g = g_bar + h of the round shrinker.
 *
 * g = r^2 (1+a) dtheta^2 + r^2 sin^2(theta) (1+b) g_{S^{n-1}} is a warped
 * product; all quantities below are evaluated in closed form at the
 * quadrature nodes and are regular at the poles.
 */

#include <string>

#include "riccilab/core/dual.hpp"
#include "riccilab/core/errors.hpp"
#include "riccilab/geometry/background.hpp"

namespace riccilab {

struct CurvatureData {
    /// Ric(g) in normalized components: Ric = r^2 ric_a dtheta^2 + r^2 sin^2 ric_b g_S.
    Vec ric_a, ric_b;
    /// Scalar curvature of g.
    Vec scalar;
    /// Christoffel differences Gamma(g) - Gamma(g_bar), divided by sin(theta):
    /// theta-theta-theta, theta-psi-psi (per unit round metric on S^{n-1} and
    /// additionally divided by sin^2), psi-theta-psi.
    Vec dgamma_ttt, dgamma_tpp, dgamma_ptp;
    /// DeTurck field W = g^{ij}(Gamma - Gamma_bar)_ij = sin(theta) w d/dtheta and dw/du.
    Vec w, w_u;
};

/// Throws DegenerateMetricError unless 1+a and 1+b are positive at every node.
inline void check_positive(const TensorGrid& h, const char* where = "metric") {
    for (int k = 0; k < h.a.size(); ++k) {
        if (!(1.0 + h.a(k) > 0.0) || !(1.0 + h.b(k) > 0.0))
            throw DegenerateMetricError(std::string(where) + ": g_bar + h is not positive definite at node " +
                                        std::to_string(k));
    }
}

namespace detail {
template <class T>
T deturck_w(int n, double r2, T u, T a, T b, T a_u, T b_u, T q) {
    const T A = 1.0 + a, B = 1.0 + b;
    return (-1.0 * a_u / (2.0 * A * A) + (n - 1) * b_u / (2.0 * A * B) + (n - 1) * u * q / (A * B)) / r2;
}
}  // namespace detail

/// Curvature and gauge data of g_bar + h. The jet must come from a smooth field.
inline CurvatureData curvature(const SphereBackground& bg, const TensorJet& h) {
    check_positive(h.values(), "curvature");
    const int N = bg.nodes();
    const int n = bg.n();
    const double r2 = bg.r2();
    CurvatureData cd;
    for (Vec* v : {&cd.ric_a, &cd.ric_b, &cd.scalar, &cd.dgamma_ttt, &cd.dgamma_tpp, &cd.dgamma_ptp, &cd.w, &cd.w_u})
        v->resize(N);
    for (int k = 0; k < N; ++k) {
        const double u = bg.u()(k), s2 = bg.s2()(k);
        const double A = 1.0 + h.a(k), B = 1.0 + h.b(k);
        const double p = h.a_u(k) / (2.0 * A);
        const Dual Bd(B, h.b_u(k));
        const Dual qt = Dual(h.b_u(k), h.b_uu(k)) / (2.0 * Bd);
        const double qq = qt.v, qq_u = qt.d;
        // B_ss/B and (1 - B_s^2)/B^2 of the warping function in arclength s.
        const double bss = (-1.0 - 3.0 * u * qq + s2 * (qq_u + qq * qq) + u * p - s2 * p * qq) / (r2 * A);
        const double bs = (B + h.q(k) + u * h.b_u(k) - s2 * B * qq * qq) / (r2 * A * B);
        const double k1 = -(n - 1) * bss;
        const double k2 = -bss + (n - 2) * bs;
        cd.ric_a(k) = k1 * A;
        cd.ric_b(k) = k2 * B;
        cd.scalar(k) = k1 + (n - 1) * k2;

        cd.dgamma_ttt(k) = -h.a_u(k) / (2.0 * A);
        cd.dgamma_tpp(k) = (2.0 * u * h.q(k) + h.b_u(k)) / (2.0 * A);
        cd.dgamma_ptp(k) = -h.b_u(k) / (2.0 * B);

        const Dual w = detail::deturck_w<Dual>(n, r2, Dual(u, 1.0), Dual(h.a(k), h.a_u(k)), Dual(h.b(k), h.b_u(k)),
                                               Dual(h.a_u(k), h.a_uu(k)), Dual(h.b_u(k), h.b_uu(k)),
                                               Dual(h.q(k), h.q_u(k)));
        cd.w(k) = w.v;
        cd.w_u(k) = w.d;
    }
    return cd;
}

}  // namespace riccilab
