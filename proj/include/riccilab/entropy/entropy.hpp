#pragma once

/** @file
 * Perelman's W and mu functionals on zonal perturbations of the round
 * shrinker, and the second-variation operators at the shrinker.
 *
 * mu is minimized in the variable w = exp(-(f - f_const)/2), for which the
 * functional at tau = 1 becomes
 *   F(w) = sum_k wt_k J_k [ 4 |grad w|^2_g + (R_g + f_const - n) w^2 - w^2 log w^2 ]
 * under the constraint sum_k wt_k J_k w^2 = 1, where J = dvol_g / dvol_gbar
 * and wt are the normalized quadrature weights.
 */

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>
#include <vector>

#include "riccilab/core/errors.hpp"
#include "riccilab/geometry/curvature.hpp"
#include "riccilab/spectral/decomposition.hpp"

namespace riccilab {

struct EntropyResult {
    double mu = 0.0;
    ScalarField minimizer_f;  // L^2 projection of the minimizing f
    Vec f_grid;               // minimizing f at the nodes
    int iterations = 0;
    double kkt_residual = 0.0;
    bool used_gradient_fallback = false;
};

struct EntropyOptions {
    int max_iterations = 60;
    double tolerance = 1e-13;
    /// Refuses metrics with ||g - g_bar||_{C^2} above this.
    double c2_guard = 0.1;
};

namespace detail {

struct MetricFactors {
    Vec J;      // volume density
    Vec gtt;    // 1/(1+a): g^{theta theta} r^2
    Vec R;      // scalar curvature
};

inline MetricFactors metric_factors(const SphereBackground& bg, const TensorJet& h) {
    const CurvatureData cd = curvature(bg, h);
    MetricFactors m;
    const int N = bg.nodes();
    m.J.resize(N);
    m.gtt.resize(N);
    for (int k = 0; k < N; ++k) {
        const double A = 1.0 + h.a(k), B = 1.0 + h.b(k);
        m.J(k) = std::sqrt(A) * std::pow(B, 0.5 * (bg.n() - 1));
        m.gtt(k) = 1.0 / A;
    }
    m.R = cd.scalar;
    return m;
}

}  // namespace detail

/// W(g, f, tau) with g = g_bar + h and f a zonal scalar. Throws if f violates
/// (4 pi tau)^{-n/2} int e^{-f} dvol_g = 1 beyond 1e-9.
inline double w_functional(const SphereBackground& bg, const AxisymTensor& h, const ScalarField& f, double tau = 1.0) {
    if (!(tau > 0)) throw ParameterError("w_functional: tau must be positive");
    const TensorJet j = bg.synthesize(h);
    const auto mf = detail::metric_factors(bg, j);
    const ScalarJet fj = bg.synthesize(f);
    const double n = bg.n();
    const double pref = std::exp(bg.f_const()) * std::pow(tau, -0.5 * n);
    double norm = 0.0, W = 0.0;
    for (int k = 0; k < bg.nodes(); ++k) {
        const double wt = bg.weights()(k) * mf.J(k) * std::exp(-fj.s(k));
        const double grad2 = bg.s2()(k) * fj.s_u(k) * fj.s_u(k) * mf.gtt(k) / bg.r2();
        norm += wt;
        W += wt * (tau * (grad2 + mf.R(k)) + fj.s(k) - n);
    }
    norm *= pref;
    if (std::abs(norm - 1.0) > 1e-9)
        throw ParameterError("w_functional: f violates the weighted-volume normalization (integral " +
                             std::to_string(norm) + ")");
    return pref * W;
}

/// mu(g_bar + h, 1) by constrained Newton iteration on the coefficients of w,
/// retracting onto the constraint after each step. Starts from the normalized
/// constant, so the first step is the linearized correction.
inline EntropyResult mu_entropy(const SphereBackground& bg, const AxisymTensor& h, const EntropyOptions& opt = {}) {
    const TensorJet j = bg.synthesize(h);
    if (c2_estimate(bg, j) > opt.c2_guard)
        throw ParameterError("mu_entropy: perturbation exceeds the C^2 guard " + std::to_string(opt.c2_guard));
    const auto mf = detail::metric_factors(bg, j);
    const int N = bg.nodes(), M = bg.lmax() + 1;
    const double n = bg.n();

    Mat Phi(N, M), Dphi(N, M);
    for (int l = 0; l < M; ++l) {
        Phi.col(l) = bg.phi(l, 0);
        Dphi.col(l) = bg.phi(l, 1);
    }
    const Vec wj = bg.weights().cwiseProduct(mf.J);
    const Vec kin = 4.0 * wj.cwiseProduct(bg.s2()).cwiseProduct(mf.gtt) / bg.r2();
    const Vec pot = wj.cwiseProduct((mf.R.array() + bg.f_const() - n).matrix());
    const Mat K = Dphi.transpose() * kin.asDiagonal() * Dphi;
    const Mat V = Phi.transpose() * pot.asDiagonal() * Phi;
    const Mat Ms = Phi.transpose() * wj.asDiagonal() * Phi;

    const auto entropy_terms = [&](const Vec& w) {
        const Vec lw = (w.array().square().log()).matrix();
        return std::make_pair(lw, wj.dot(w.cwiseProduct(w).cwiseProduct(lw)));
    };
    const auto value = [&](const Vec& x) {
        const Vec w = Phi * x;
        if ((w.array() <= 0).any()) return std::numeric_limits<double>::infinity();
        return x.dot(K * x) + x.dot(V * x) - entropy_terms(w).second;
    };

    Vec x = Vec::Zero(M);
    x(0) = 1.0 / std::sqrt(Ms(0, 0));  // phi_0 = 1
    EntropyResult res;
    double F = value(x);
    for (int it = 0; it < opt.max_iterations; ++it) {
        const Vec w = Phi * x;
        const Vec lw = entropy_terms(w).first;
        const Vec grad = 2.0 * (K + V) * x - Phi.transpose() * wj.cwiseProduct(2.0 * w.cwiseProduct(lw) + 2.0 * w);
        const Vec cg = 2.0 * Ms * x;
        const double mult = x.dot(grad) / x.dot(cg);
        const Vec r1 = grad - mult * cg;
        res.kkt_residual = r1.norm();
        res.iterations = it;
        if (res.kkt_residual <= opt.tolerance) break;

        const Mat H = 2.0 * (K + V) - Phi.transpose() * (wj.cwiseProduct((2.0 * lw.array() + 6.0).matrix())).asDiagonal() * Phi;
        const Mat Hl = H - mult * 2.0 * Ms;
        // Reduced Hessian on the constraint tangent space decides Newton vs gradient.
        const Vec t = cg.normalized();
        const Mat P = Mat::Identity(M, M) - t * t.transpose();
        Eigen::SelfAdjointEigenSolver<Mat> es(P * Hl * P);
        double minpos = std::numeric_limits<double>::infinity();
        for (int i = 0; i < M; ++i)
            if (std::abs(es.eigenvectors().col(i).dot(t)) < 0.5) minpos = std::min(minpos, es.eigenvalues()(i));

        Vec dx;
        if (minpos > 0) {
            Mat KKT = Mat::Zero(M + 1, M + 1);
            KKT.topLeftCorner(M, M) = Hl;
            KKT.block(0, M, M, 1) = -cg;
            KKT.block(M, 0, 1, M) = cg.transpose();
            Vec rhs(M + 1);
            rhs << -r1, 0.0;
            dx = KKT.partialPivLu().solve(rhs).head(M);
        } else {
            res.used_gradient_fallback = true;
            dx = -P * r1;
        }
        double step = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            Vec xn = x + step * dx;
            xn /= std::sqrt(xn.dot(Ms * xn));
            const double Fn = value(xn);
            // Newton steps near the optimum may raise F at roundoff level; accept those.
            if (Fn <= F + 1e-14 * (1.0 + std::abs(F))) {
                x = xn;
                F = Fn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
    }
    if (res.kkt_residual > 1e-7)
        throw NumericalError("mu_entropy: no convergence, KKT residual " + std::to_string(res.kkt_residual));
    res.mu = F;
    const Vec w = Phi * x;
    res.f_grid = (bg.f_const() - w.array().square().log()).matrix();
    res.minimizer_f = bg.analyze_scalar(res.f_grid);
    return res;
}

inline double mu_entropy_value(const SphereBackground& bg, const AxisymTensor& h, const EntropyOptions& opt = {}) {
    return mu_entropy(bg, h, opt).mu;
}

// --- Second variation at the shrinker --------------------------------------

/// Solves (Delta_f + 1/2) v = -1/2 div_f div_f h per degree.
inline ScalarField v_h_solve(const SphereBackground& bg, const AxisymTensor& h, double clearance = 1e-6) {
    const AxisymVector dv = div_f(bg, h);
    ScalarField v(bg.lmax());
    for (int l = 1; l <= bg.lmax(); ++l) {
        const double lam = bg.laplace_eigenvalue(l);
        const double divdiv = -lam * dv.e(l);
        const double k = 0.5 - lam;
        if (std::abs(k) < clearance)
            throw NumericalError("v_h_solve: resonance, 1/2 is within " + std::to_string(clearance) +
                                 " of the scalar eigenvalue at degree " + std::to_string(l));
        v.coeffs()(l) = -0.5 * divdiv / k;
    }
    return v;
}

/// Hess(v) for a zonal scalar v.
inline AxisymTensor hessian(const SphereBackground& bg, const ScalarField& v) {
    AxisymTensor out(bg.lmax());
    out.c(1) = -v.coeffs()(1) / bg.r2();
    for (int l = 2; l <= bg.lmax(); ++l) out.d(l) = v.coeffs()(l);
    return out;
}

/// N~ h = L h + 2 div* div_f h - 2 Hess(v_h).
inline AxisymTensor apply_Ntilde(const SphereBackground& bg, const AxisymTensor& h) {
    return apply_L(bg, h) + 2.0 * div_star_f(bg, div_f(bg, h)) - 2.0 * hessian(bg, v_h_solve(bg, h));
}

/// N h = N~ h - 2 (int <Ric,h> / int R) Ric, the nu-entropy operator.
inline AxisymTensor apply_N(const SphereBackground& bg, const AxisymTensor& h) {
    AxisymTensor ric(bg.lmax());
    ric.c(0) = 0.5;
    const double ratio = inner(bg, ric, h) / (0.5 * bg.n());  // int R e^{-f} = n/2
    return apply_Ntilde(bg, h) - 2.0 * ratio * ric;
}

/// 1/2 <P_ess h, L P_ess h> from the spectral decomposition.
inline double second_variation(const SphereBackground& bg, const SpectralDecomposition& sd, const AxisymTensor& h) {
    const AxisymTensor pe = project(sd, h, Selector::ess());
    return 0.5 * inner(bg, pe, apply_L(bg, pe));
}

/// 1/2 <h, N~ h>, independent of the decomposition.
inline double second_variation_direct(const SphereBackground& bg, const AxisymTensor& h) {
    return 0.5 * inner(bg, h, apply_Ntilde(bg, h));
}

struct FdSecondVariation {
    std::vector<double> s;
    std::vector<double> values;  // central second differences
    double extrapolated = 0.0;   // least-squares intercept in s^2
};

/// Central second difference of s -> mu(g_bar + s h, 1) at 0.
inline FdSecondVariation fd_second_variation(const SphereBackground& bg, const AxisymTensor& h,
                                             const std::vector<double>& s_list, const EntropyOptions& opt = {}) {
    FdSecondVariation out;
    const double mu0 = mu_entropy_value(bg, AxisymTensor(bg.lmax()), opt);
    for (double s : s_list) {
        if (s < 1e-4 || s > 1e-2) throw ParameterError("fd_second_variation: s must lie in [1e-4, 1e-2]");
        const double mp = mu_entropy_value(bg, s * h, opt);
        const double mm = mu_entropy_value(bg, -s * h, opt);
        out.s.push_back(s);
        out.values.push_back((mp - 2.0 * mu0 + mm) / (s * s));
    }
    if (out.s.size() == 1) {
        out.extrapolated = out.values[0];
    } else {
        Mat A(out.s.size(), 2);
        Vec y(out.s.size());
        for (std::size_t i = 0; i < out.s.size(); ++i) {
            A(i, 0) = 1.0;
            A(i, 1) = out.s[i] * out.s[i];
            y(i) = out.values[i];
        }
        out.extrapolated = A.colPivHouseholderQr().solve(y)(0);
    }
    return out;
}

}  // namespace riccilab
