#pragma once

/** @file
 * First- and second-order operators of the round shrinker on the zonal sector.
 *
 * Two routes are provided. The coefficient route applies closed-form
 * per-degree arithmetic (valid for the constant-potential shrinker). The grid
 * route differentiates synthesized grid values directly, carries the
 * potential f explicitly, and serves as an independent check of the first.
 *
 * Conventions: div*_f X = -1/2 L_X g, L_X g = 2 Hess(psi) for X = grad(psi),
 * (Rm*h)_ij = K (tr(h) g_ij - h_ij), Delta is the rough Laplacian (negative
 * semi-definite).
 */

#include <algorithm>
#include <cmath>

#include "riccilab/core/errors.hpp"
#include "riccilab/geometry/background.hpp"

namespace riccilab {

namespace detail {
inline void require_constant_potential(const SphereBackground& bg, const char* what) {
    if (bg.has_potential())
        throw CapabilityError(std::string(what) +
                              ": coefficient route requires constant f; use the grid route");
}
}  // namespace detail

// --- Coefficient route ------------------------------------------------------

/// div_f h. Equals div h for constant f.
inline AxisymVector div_f(const SphereBackground& bg, const AxisymTensor& h) {
    detail::require_constant_potential(bg, "div_f");
    AxisymVector out(bg.lmax());
    for (int l = 1; l <= bg.lmax(); ++l)
        out.e(l) = h.c(l) + h.d(l) * (0.5 - bg.laplace_eigenvalue(l));
    return out;
}

/// div_0 h = div h - 1/2 grad tr h.
inline AxisymVector div_zero(const SphereBackground& bg, const AxisymTensor& h) {
    detail::require_constant_potential(bg, "div_zero");
    AxisymVector out(bg.lmax());
    const double n = bg.n();
    for (int l = 1; l <= bg.lmax(); ++l)
        out.e(l) = (1.0 - 0.5 * n) * h.c(l) + 0.5 * (1.0 - bg.laplace_eigenvalue(l)) * h.d(l);
    return out;
}

/// div*_f X = -1/2 L_X g.
inline AxisymTensor div_star_f(const SphereBackground& bg, const AxisymVector& X) {
    AxisymTensor out(bg.lmax());
    out.c(1) = X.e(1) / bg.r2();  // -Hess(phi_1) = phi_1 g / r^2
    for (int l = 2; l <= bg.lmax(); ++l) out.d(l) = -X.e(l);
    return out;
}

/// Rough Laplacian on tensors.
inline AxisymTensor rough_laplacian_f(const SphereBackground& bg, const AxisymTensor& h) {
    detail::require_constant_potential(bg, "rough_laplacian_f");
    AxisymTensor out(bg.lmax());
    const double K = bg.sectional_curvature();
    for (int l = 0; l <= bg.lmax(); ++l) {
        const double lam = bg.laplace_eigenvalue(l);
        out.c(l) = -lam * h.c(l) + 2.0 * K * lam * h.d(l);
        if (l >= 2) out.d(l) = (-lam + 2.0 * K + 1.0) * h.d(l);
    }
    return out;
}

/// Rough Laplacian on vectors (Bochner: Delta grad phi = grad Delta phi + Ric(grad phi)).
inline AxisymVector rough_laplacian_f(const SphereBackground& bg, const AxisymVector& X) {
    detail::require_constant_potential(bg, "rough_laplacian_f");
    AxisymVector out(bg.lmax());
    for (int l = 1; l <= bg.lmax(); ++l) out.e(l) = (0.5 - bg.laplace_eigenvalue(l)) * X.e(l);
    return out;
}

/// 2 Rm*h with (Rm*h) = K (tr h g - h).
inline AxisymTensor rm_action(const SphereBackground& bg, const AxisymTensor& h) {
    AxisymTensor out(bg.lmax());
    const double K = bg.sectional_curvature();
    for (int l = 0; l <= bg.lmax(); ++l) {
        const double lam = bg.laplace_eigenvalue(l);
        // tr(phi g) = n phi, tr Hess(phi) = -lam phi.
        out.c(l) = 2.0 * K * (bg.n() - 1) * h.c(l) - 2.0 * K * lam * h.d(l);
        if (l >= 2) out.d(l) = -2.0 * K * h.d(l);
    }
    return out;
}

/// Stability operator L = Delta_f + 2 Rm*.
inline AxisymTensor apply_L(const SphereBackground& bg, const AxisymTensor& h) {
    return rough_laplacian_f(bg, h) + rm_action(bg, h);
}

/// Vector stability operator Delta_f + 1/2.
inline AxisymVector apply_frakL(const SphereBackground& bg, const AxisymVector& X) {
    AxisymVector out = rough_laplacian_f(bg, X);
    out += 0.5 * X;
    return out;
}

/// L_X g at the background metric (= -2 div* X).
inline AxisymTensor lie_derivative(const SphereBackground& bg, const AxisymVector& X) {
    return -2.0 * div_star_f(bg, X);
}

// --- Inner products and norms ----------------------------------------------

inline double inner(const SphereBackground& bg, const AxisymTensor& h1, const AxisymTensor& h2) {
    double acc = h1.c(0) * h2.c(0) * bg.n() + h1.c(1) * h2.c(1) * bg.n();
    for (int l = 2; l <= bg.lmax(); ++l) {
        const Eigen::Matrix2d G = bg.tensor_gram_closed_form(l);
        const Eigen::Vector2d x(h1.c(l), h1.d(l)), y(h2.c(l), h2.d(l));
        acc += x.dot(G * y);
    }
    return acc;
}

inline double inner(const SphereBackground& bg, const AxisymVector& X1, const AxisymVector& X2) {
    double acc = 0.0;
    for (int l = 1; l <= bg.lmax(); ++l) acc += bg.laplace_eigenvalue(l) * X1.e(l) * X2.e(l);
    return acc;
}

inline double norm(const SphereBackground& bg, const AxisymTensor& h) { return std::sqrt(inner(bg, h, h)); }
inline double norm(const SphereBackground& bg, const AxisymVector& X) { return std::sqrt(inner(bg, X, X)); }

/// ||h||_{H^1}^2 = ||h||^2 - <h, Delta h>.
inline double h1_norm_squared(const SphereBackground& bg, const AxisymTensor& h) {
    return inner(bg, h, h) - inner(bg, h, rough_laplacian_f(bg, h));
}

/// Gram matrix of the tensor basis in the flat layout.
inline Mat tensor_gram(const SphereBackground& bg) {
    const int m = TensorLayout::size(bg.lmax());
    Mat G = Mat::Zero(m, m);
    G(0, 0) = bg.n();
    G(1, 1) = bg.n();
    for (int l = 2; l <= bg.lmax(); ++l) {
        const int i = TensorLayout::c_index(l);
        G.block<2, 2>(i, i) = bg.tensor_gram_closed_form(l);
    }
    return G;
}

// --- Grid route ---------------------------------------------------------------

/// Weighted L^2_f pairing of grid tensors.
inline double grid_inner(const SphereBackground& bg, const TensorGrid& h1, const TensorGrid& h2) {
    const Vec f = h1.a.cwiseProduct(h2.a) + (bg.n() - 1) * h1.b.cwiseProduct(h2.b);
    return bg.weights_f().dot(f);
}

/// Weighted L^2_f pairing of grid vectors, |X|^2 = r^2 sin^2 xi^2.
inline double grid_inner(const SphereBackground& bg, const Vec& xi1, const Vec& xi2) {
    return bg.r2() * bg.weights_f().dot(bg.s2().cwiseProduct(xi1).cwiseProduct(xi2));
}

/// xi of div_f h, including -h(grad f, .) for an injected potential.
inline Vec grid_div_f(const SphereBackground& bg, const TensorJet& h) {
    const double n = bg.n();
    Vec xi = (-h.a_u + (n - 1) * bg.u().cwiseProduct(h.q)) / bg.r2();
    if (bg.has_potential()) xi += h.a.cwiseProduct(bg.potential_u()) / bg.r2();
    return xi;
}

inline Vec grid_div_zero(const SphereBackground& bg, const TensorJet& h) {
    const double n = bg.n();
    return (-h.a_u + (n - 1) * bg.u().cwiseProduct(h.q) + 0.5 * (h.a_u + (n - 1) * h.b_u)) / bg.r2();
}

inline TensorGrid grid_div_star(const SphereBackground& bg, const VectorJet& X) {
    const Vec& u = bg.u();
    TensorGrid t;
    t.a = -(u.cwiseProduct(X.xi) - bg.s2().cwiseProduct(X.xi_u));
    t.b = -u.cwiseProduct(X.xi);
    t.q = X.xi_u;
    return t;
}

/// L_X (g_bar + h) for X = sin(theta) xi d/dtheta.
inline TensorGrid grid_lie_derivative(const SphereBackground& bg, const VectorJet& X, const TensorJet& h) {
    const Vec& u = bg.u();
    const Vec& s2 = bg.s2();
    const int N = bg.nodes();
    TensorGrid t{Vec(N), Vec(N), Vec(N)};
    for (int k = 0; k < N; ++k) {
        const double xi = X.xi(k), xu = X.xi_u(k);
        const double A = 1.0 + h.a(k), B = 1.0 + h.b(k);
        t.a(k) = -s2(k) * xi * h.a_u(k) + 2.0 * A * (u(k) * xi - s2(k) * xu);
        t.b(k) = 2.0 * u(k) * xi * B - s2(k) * xi * h.b_u(k);
        t.q(k) = xi * (h.b_u(k) - h.a_u(k)) - 2.0 * A * xu + 2.0 * u(k) * xi * h.q(k);
    }
    return t;
}

/// Grid closed form of 2 Rm*h = 2K(tr h g - h).
inline TensorGrid grid_rm_action(const SphereBackground& bg, const TensorGrid& h) {
    const double K = bg.sectional_curvature();
    const int n = bg.n();
    TensorGrid t;
    t.a = 2.0 * K * (n - 1) * h.b;
    t.b = 2.0 * K * (h.a + (n - 2) * h.b);
    t.q = -2.0 * K * h.q;
    return t;
}

/// Pointwise |h|_g_bar at the nodes.
inline double c0_estimate(const SphereBackground& bg, const TensorGrid& h) {
    double m = 0.0;
    for (int k = 0; k < bg.nodes(); ++k)
        m = std::max(m, std::sqrt(h.a(k) * h.a(k) + (bg.n() - 1) * h.b(k) * h.b(k)));
    return m;
}

/// C^2 estimate in the orthonormal frame: nodal maxima of the components and
/// of their first two arclength derivatives. The quotient q stands in for the
/// connection terms cot(theta)(a - b).
inline double c2_estimate(const SphereBackground& bg, const TensorJet& h) {
    const auto mx = [](const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; };
    const Vec s = bg.s2().cwiseSqrt();
    const Vec& u = bg.u();
    const double r = bg.radius();
    const Vec a1 = s.cwiseProduct(h.a_u) / r, b1 = s.cwiseProduct(h.b_u) / r;
    const Vec a2 = (bg.s2().cwiseProduct(h.a_uu) - u.cwiseProduct(h.a_u)) / bg.r2();
    const Vec b2 = (bg.s2().cwiseProduct(h.b_uu) - u.cwiseProduct(h.b_u)) / bg.r2();
    return std::max(mx(h.a), mx(h.b)) + std::max({mx(a1), mx(b1), mx(s.cwiseProduct(h.q)) / r}) +
           std::max({mx(a2), mx(b2), mx(h.q) / bg.r2(), mx(s.cwiseProduct(h.q_u)) / bg.r2()});
}

}  // namespace riccilab
