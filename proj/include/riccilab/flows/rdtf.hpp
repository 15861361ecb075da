#pragma once

/** @file
 * Rescaled Ricci-DeTurck flow of zonal perturbations of the round shrinker:
 *   d/dtau h = -2 Ric(g) + g + L_W g,  g = g_bar + h,
 * with W the DeTurck field relative to g_bar. Its linearization at h = 0 is L.
 */

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "riccilab/entropy/entropy.hpp"
#include "riccilab/flows/imex.hpp"

namespace riccilab {

/// Grid values (a, b) of the nonlinear right-hand side. The quotient q is not
/// formed; callers project with analyze(a, b).
inline TensorGrid rdtf_rhs_grid(const SphereBackground& bg, const TensorJet& h) {
    const CurvatureData cd = curvature(bg, h);
    const TensorGrid lw = grid_lie_derivative(bg, VectorJet{cd.w, cd.w_u, Vec()}, h);
    TensorGrid out;
    // (1 - 2 ric) is O(h); form it first so the O(1) parts cancel exactly.
    out.a = (1.0 - 2.0 * cd.ric_a.array()).matrix() + h.a + lw.a;
    out.b = (1.0 - 2.0 * cd.ric_b.array()).matrix() + h.b + lw.b;
    return out;
}

/// Galerkin projection of the nonlinear right-hand side.
inline AxisymTensor rdtf_rhs(const SphereBackground& bg, const AxisymTensor& h) {
    const TensorGrid g = rdtf_rhs_grid(bg, bg.synthesize(h));
    return bg.analyze(g.a, g.b);
}

/// Q(h) = rhs(h) - L h.
inline AxisymTensor rdtf_nonlinearity(const SphereBackground& bg, const AxisymTensor& h) {
    return rdtf_rhs(bg, h) - apply_L(bg, h);
}

/// Implicit solve (I - gdt A) x = r block by block.
inline Vec block_implicit_solve(const DiscreteOperator& op, double gdt, const Vec& r) {
    Vec x(r.size());
    for (const auto& b : op.blocks) {
        const int m = static_cast<int>(b.A.rows());
        const Mat M = Mat::Identity(m, m) - gdt * b.A;
        x.segment(b.offset, m) = M.partialPivLu().solve(r.segment(b.offset, m));
    }
    return x;
}

inline Vec block_apply(const DiscreteOperator& op, const Vec& x) {
    Vec y(x.size());
    for (const auto& b : op.blocks) {
        const int m = static_cast<int>(b.A.rows());
        y.segment(b.offset, m) = b.A * x.segment(b.offset, m);
    }
    return y;
}

struct FlowTrace {
    int n = 0;
    int lmax = 0;
    std::vector<double> tau;
    std::vector<Vec> coeffs;       // flat basis coefficients
    std::vector<Vec> modes;        // L^2_f coordinates in the eigenbasis
    std::vector<double> l2f_norm;  // from the Gram matrix
    std::vector<double> hw_norm;
    std::vector<double> c0_est, c2_est;
    std::vector<double> mu;  // NaN when entropy is not tracked
    std::vector<double> dt;
    Vec eigenvalues;
    std::vector<ModeClass> classes;
    bool nonlinear = true;
    bool halted = false;
    std::string halt_reason;
    int accepted_steps = 0, rejected_steps = 0;

    std::size_t size() const { return tau.size(); }
};

struct FlowOptions {
    double sample_dt = 0.1;
    bool nonlinear = true;
    bool track_entropy = true;
    double validity_threshold = 0.2;
    StepControl control{};
};

namespace detail {

inline void record_sample(const SphereBackground& bg, const SpectralDecomposition& sd, FlowTrace& tr, double tau,
                          const Vec& x, double dt, bool entropy) {
    const AxisymTensor h(bg.lmax(), x);
    const TensorJet j = bg.synthesize(h);
    tr.tau.push_back(tau);
    tr.coeffs.push_back(x);
    tr.modes.push_back(sd.coordinates(x));
    tr.l2f_norm.push_back(std::sqrt(std::max(0.0, x.dot(sd.gram * x))));
    tr.hw_norm.push_back(std::sqrt(hw_norm_squared(sd, x)));
    tr.c0_est.push_back(c0_estimate(bg, j.values()));
    tr.c2_est.push_back(c2_estimate(bg, j));
    double mu = std::numeric_limits<double>::quiet_NaN();
    if (entropy) {
        EntropyOptions eo;
        eo.c2_guard = std::numeric_limits<double>::infinity();
        try {
            mu = mu_entropy_value(bg, h, eo);
        } catch (const std::exception&) {
        }
    }
    tr.mu.push_back(mu);
    tr.dt.push_back(dt);
}

}  // namespace detail

/// Sample times t0, t0 + dt, ..., t1 (t1 always included).
inline std::vector<double> sample_grid(double t0, double t1, double dt) {
    std::vector<double> s;
    const int m = std::max(1, static_cast<int>(std::llround((t1 - t0) / dt)));
    for (int i = 0; i <= m; ++i) s.push_back(t0 + (t1 - t0) * i / m);
    return s;
}

/// Evolves h0 over [tau0, tau1]; halts (reported in the trace) if the C^2
/// estimate leaves the validity region.
inline FlowTrace evolve_rdtf(const SphereBackground& bg, const AxisymTensor& h0, double tau0, double tau1,
                             const FlowOptions& opt = {}) {
    const TensorJet j0 = bg.synthesize(h0);
    if (c2_estimate(bg, j0) > opt.validity_threshold)
        throw ParameterError("evolve_rdtf: initial data exceeds the validity threshold");
    const DiscreteOperator op = assemble_operator(bg, OperatorKind::L_tensor);
    const SpectralDecomposition sd = classify_modes(bg, eigendecompose(op));
    const int L = bg.lmax();

    ImexProblem p;
    if (opt.nonlinear)
        p.explicit_rhs = [&](double, const Vec& x) { return rdtf_nonlinearity(bg, AxisymTensor(L, x)).coeffs(); };
    else
        p.explicit_rhs = [](double, const Vec& x) { return Vec(Vec::Zero(x.size())); };
    p.implicit_apply = [&](const Vec& x) { return block_apply(op, x); };
    p.implicit_solve = [&](double gdt, const Vec& r) { return block_implicit_solve(op, gdt, r); };

    const double thr = opt.validity_threshold;
    const ValidityCheck valid = [&](double, const Vec& x, std::string& why) {
        const double c2 = c2_estimate(bg, bg.synthesize(AxisymTensor(L, x)));
        if (c2 > thr) {
            why = "C^2 estimate " + std::to_string(c2) + " exceeds validity threshold " + std::to_string(thr);
            return false;
        }
        return true;
    };
    const ImexResult r = integrate_imex(p, h0.coeffs(), tau0, sample_grid(tau0, tau1, opt.sample_dt), opt.control, valid);

    FlowTrace tr;
    tr.n = bg.n();
    tr.lmax = L;
    tr.eigenvalues = sd.eigenvalues();
    for (const auto& m : sd.modes) tr.classes.push_back(m.cls);
    tr.nonlinear = opt.nonlinear;
    tr.halted = r.halted;
    tr.halt_reason = r.halt_reason;
    tr.accepted_steps = r.accepted;
    tr.rejected_steps = r.rejected;
    for (std::size_t i = 0; i < r.t.size(); ++i)
        detail::record_sample(bg, sd, tr, r.t[i], r.x[i], r.dt[i], opt.track_entropy);
    return tr;
}

/// Column names of the flat tensor coefficients.
inline std::vector<std::string> coefficient_names(int lmax) {
    std::vector<std::string> names;
    for (int j = 0; j < TensorLayout::size(lmax); ++j) {
        const int l = TensorLayout::degree(j);
        names.push_back("coeff_l" + std::to_string(l) + (TensorLayout::is_hessian(j) ? "_d" : "_c"));
    }
    return names;
}

inline void write_trace_csv(std::ostream& os, const FlowTrace& tr) {
    os << "tau";
    for (const auto& c : coefficient_names(tr.lmax)) os << ',' << c;
    os << ",l2f_norm,hw_norm,c0_est,c2_est,mu_entropy,dt\n";
    os.precision(15);
    for (std::size_t i = 0; i < tr.size(); ++i) {
        os << tr.tau[i];
        for (int k = 0; k < tr.coeffs[i].size(); ++k) os << ',' << tr.coeffs[i](k);
        os << ',' << tr.l2f_norm[i] << ',' << tr.hw_norm[i] << ',' << tr.c0_est[i] << ',' << tr.c2_est[i] << ','
           << tr.mu[i] << ',' << tr.dt[i] << '\n';
    }
}

}  // namespace riccilab
