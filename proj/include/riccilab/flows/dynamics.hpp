#pragma once

/** @file
 * Diagnostics that evaluate the weighted-growth, ratio-preservation and
 * entropy-dominance inequalities along a recorded flow trace. Constants are
 * fitted from the data; a check fails only if the fitted constant exceeds its
 * configured ceiling or a sample breaks the inequality beyond tolerance.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "riccilab/flows/rdtf.hpp"

namespace riccilab {

/// Selector plus an optional eigenvalue window, parsed from strings such as
/// "ess&eig>=-1.5&eig<=-0.5". An empty string selects everything.
struct Subspace {
    std::string text;
    Selector sel = Selector::all();
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    bool accepts(const Mode& m) const { return sel.accepts(m) && m.eigenvalue >= lo && m.eigenvalue <= hi; }

    static Subspace parse(const std::string& text) {
        Subspace s;
        s.text = text.empty() ? "all" : text;
        std::stringstream ss(text);
        std::string tok, rest;
        while (std::getline(ss, tok, '&')) {
            if (tok.rfind("eig>=", 0) == 0) s.lo = std::max(s.lo, std::stod(tok.substr(5)));
            else if (tok.rfind("eig<=", 0) == 0) s.hi = std::min(s.hi, std::stod(tok.substr(5)));
            else if (!tok.empty() && tok != "all") rest += (rest.empty() ? "" : "&") + tok;
        }
        if (!rest.empty()) s.sel = Selector::parse(rest);
        return s;
    }
};

struct CheckEntry {
    std::string name;
    std::string status;  // pass | violation | hypothesis unmet | skipped
    double measured = 0.0;  // fitted constant or worst discrepancy
    double bound = 0.0;
    int samples = 0;
    int violations = 0;
    std::string note;
};

struct DynamicsReport {
    std::vector<CheckEntry> entries;

    int violations() const {
        int v = 0;
        for (const auto& e : entries) v += e.status == "violation";
        return v;
    }
    const CheckEntry* find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }
};

struct DynamicsOptions {
    double delta = 0.1;
    /// (V1, V2) pairs for the ratio inequality; each V also gets the growth check.
    std::vector<std::pair<std::string, std::string>> pairs = {
        {"-", "+"}, {"Lie", "ess"}, {"ess&eig<=-2", "ess&eig>=-1.5&eig<=-0.5"}};
    double hw_tolerance = 1e-9;
    double monotonicity_C = 1.0;  // allowed entropy decrease C * dt^2 per sample
    double growth_C_max = 100.0;
    double error_C_max = 100.0;
    double dominance_C_max = 10.0;
    double ratio_A_floor = 1e-3;   // A used when the initial V1 share vanishes
    double ratio_eps_gate = 0.05;  // C^2 size cap for the ratio inequality
    double ratio_rel_tol = 1e-6;
};

namespace detail {

struct SubspaceInfo {
    Vec weights;  // H_W weight on accepted modes, 0 elsewhere
    double lam_min = std::numeric_limits<double>::infinity();
    double lam_max = -std::numeric_limits<double>::infinity();
    bool empty() const { return !(lam_min <= lam_max); }
};

inline SubspaceInfo subspace_info(const SpectralDecomposition& sd, const Subspace& V) {
    SubspaceInfo s;
    const Vec w = hw_weights(sd);
    s.weights = Vec::Zero(sd.size());
    for (int i = 0; i < sd.size(); ++i)
        if (V.accepts(sd.modes[i])) {
            s.weights(i) = w(i);
            s.lam_min = std::min(s.lam_min, sd.modes[i].eigenvalue);
            s.lam_max = std::max(s.lam_max, sd.modes[i].eigenvalue);
        }
    return s;
}

inline double weighted(const Vec& a, const Vec& w) { return a.cwiseProduct(a).dot(w); }
inline double pos(double x) { return std::max(0.0, x); }

inline double mode_norm2(const SpectralDecomposition& sd, const Vec& a, const Selector& sel) {
    double s = 0.0;
    for (int i = 0; i < sd.size(); ++i)
        if (sel.accepts(sd.modes[i])) s += a(i) * a(i);
    return s;
}

/// H^1 norm squared of the part of h selected by sel.
inline double h1_part(const SphereBackground& bg, const SpectralDecomposition& sd, const Vec& x, const Selector& sel) {
    return h1_norm_squared(bg, AxisymTensor(bg.lmax(), project(sd, x, sel)));
}

inline CheckEntry finish(CheckEntry e, double C, double Cmax) {
    e.measured = C;
    e.bound = Cmax;
    if (e.samples == 0) {
        if (e.status.empty()) e.status = "skipped";
        return e;
    }
    if (!(C <= Cmax)) ++e.violations;
    e.status = e.violations ? "violation" : "pass";
    return e;
}

}  // namespace detail

/// Norm bookkeeping: stored L^2_f and H_W norms against direct recomputation.
inline CheckEntry check_hw_consistency(const SphereBackground& bg, const SpectralDecomposition& sd,
                                       const FlowTrace& tr, double tol) {
    CheckEntry e;
    e.name = "hw_consistency";
    double worst = 0.0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const AxisymTensor h(bg.lmax(), tr.coeffs[i]);
        const double l2 = inner(bg, h, h);
        const double scale = std::max(l2, 1e-300);
        const double d1 = std::abs(tr.hw_norm[i] * tr.hw_norm[i] - hw_norm_squared_direct(bg, sd, h)) / scale;
        const double d2 = std::abs(tr.l2f_norm[i] * tr.l2f_norm[i] - l2) / scale;
        const double d = l2 > 0 ? std::max(d1, d2) : 0.0;
        worst = std::max(worst, d);
        e.violations += d > tol;
        ++e.samples;
    }
    e.note = "relative to ||h||^2";
    return detail::finish(e, worst, tol);
}

/// mu(g_tau) must not decrease by more than C dt^2 between samples.
inline CheckEntry check_entropy_monotone(const FlowTrace& tr, double C) {
    CheckEntry e;
    e.name = "entropy_monotone";
    double worst = 0.0;
    for (std::size_t i = 1; i < tr.size(); ++i) {
        if (std::isnan(tr.mu[i]) || std::isnan(tr.mu[i - 1])) continue;
        const double drop = tr.mu[i - 1] - tr.mu[i];
        const double tol = C * tr.dt[i] * tr.dt[i] + 1e-13;
        e.violations += drop > tol;
        worst = std::max(worst, drop);
        ++e.samples;
    }
    if (e.samples == 0) e.note = "no entropy samples";
    else e.note = "largest decrease between samples";
    e.measured = worst;
    e.bound = C;
    e.status = e.samples == 0 ? "skipped" : (e.violations ? "violation" : "pass");
    return e;
}

/// Integrated form of the two weighted-growth inequalities on V:
///   F(t1) - F(t0) >= -C eps int e^{-2k tau} ||h||^2_{H_W}  (lower, k from lambda_min)
///   G(t1) - G(t0) <=  C eps int e^{-2k tau} ||h||^2_{H_W}  (upper, k from lambda_max)
/// with eps the sup of the C^2 estimate over the interval. Returns the smallest
/// C that makes every interval pass.
inline CheckEntry check_weighted_growth(const SpectralDecomposition& sd, const FlowTrace& tr, const Subspace& V,
                                        double delta, double Cmax) {
    CheckEntry e;
    e.name = "growth[" + V.text + "]";
    const auto info = detail::subspace_info(sd, V);
    if (info.empty()) {
        e.status = "skipped";
        e.note = "empty subspace";
        return e;
    }
    const double kmin = (1 + delta) * info.lam_min - delta * detail::pos(info.lam_min);
    const double kmax = (1 - delta) * info.lam_max + delta * detail::pos(info.lam_max);
    const Vec wall = hw_weights(sd);
    double C = 0.0;
    for (std::size_t i = 1; i < tr.size(); ++i) {
        const double t0 = tr.tau[i - 1], t1 = tr.tau[i];
        const double p0 = detail::weighted(tr.modes[i - 1], info.weights);
        const double p1 = detail::weighted(tr.modes[i], info.weights);
        const double h0 = detail::weighted(tr.modes[i - 1], wall);
        const double h1 = detail::weighted(tr.modes[i], wall);
        const double eps = std::max(tr.c2_est[i - 1], tr.c2_est[i]);
        // slack for the time stepper's relative error
        const double slack = 1e-8 * std::max(p0, p1);
        for (const double k : {kmin, kmax}) {
            const double e0 = std::exp(-2 * k * t0), e1 = std::exp(-2 * k * t1);
            const double dF = e1 * p1 - e0 * p0;
            const double rhs = eps * 0.5 * (t1 - t0) * (e0 * h0 + e1 * h1);
            const double need = (k == kmin ? -dF : dF) - slack * std::max(e0, e1);
            if (need > 0) C = std::max(C, rhs > 0 ? need / rhs : std::numeric_limits<double>::infinity());
        }
        ++e.samples;
    }
    std::ostringstream os;
    os << "lambda_min=" << info.lam_min << " lambda_max=" << info.lam_max;
    e.note = os.str();
    return detail::finish(e, C, Cmax);
}

/// Ratio conclusion between V1 and V2 with A and C0 read off the initial sample.
/// The smallness threshold follows the comparison argument: with Q bounded by
/// CQ*eps*||h||_HW, both comparison functions stay monotone on [0, T] while
/// eps <= eps_req(T). The conclusion is checked on the longest prefix where the
/// observed C^2 size stays below that threshold. CQ = 0 (linear flow) gives no
/// restriction.
inline CheckEntry check_ratio(const SpectralDecomposition& sd, const FlowTrace& tr, const Subspace& V1,
                              const Subspace& V2, const DynamicsOptions& opt, double CQ = 0.0) {
    CheckEntry e;
    e.name = "ratio[" + V1.text + " / " + V2.text + "]";
    const auto i1 = detail::subspace_info(sd, V1);
    const auto i2 = detail::subspace_info(sd, V2);
    if (tr.size() == 0 || i1.empty() || i2.empty()) {
        e.status = "skipped";
        e.note = "empty subspace or trace";
        return e;
    }
    const Vec wall = hw_weights(sd);
    const double q2 = detail::weighted(tr.modes[0], i2.weights);
    const double q1 = detail::weighted(tr.modes[0], i1.weights);
    const double total = detail::weighted(tr.modes[0], wall);
    if (!(q2 > 1e-24 * std::max(total, 1e-300))) {
        e.status = "hypothesis unmet";
        e.note = "no initial V2 component";
        return e;
    }
    const double A = std::max(q1 / q2, opt.ratio_A_floor);
    const double C0 = std::max(total / q2, 1.0);
    const double d = opt.delta;
    const double lam1 = sd.modes.front().eigenvalue;
    const double L1 = (1 - d) * i1.lam_max + d * detail::pos(i1.lam_max);
    const double L2 = (1 + d) * i2.lam_min - d * detail::pos(i2.lam_min) - d;
    const double L2w = (1 + d) * i2.lam_min - d * detail::pos(i2.lam_min);
    const double rate = 2 * (L1 - L2);

    // Longest prefix [tau0, tau0 + T*] with sup eps <= eps_req(T*).
    std::size_t last = 0;
    double eps_sup = 0.0, req = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const double t = tr.tau[i] - tr.tau[0];
        eps_sup = std::max(eps_sup, tr.c2_est[i]);
        if (CQ > 0) {
            const double grow = C0 * std::exp(2 * (lam1 + d - L2w) * t);
            const double ra = 2 * d / (CQ * (grow + 1));
            const double rb = 2 * A * d / (CQ * (1 + std::exp(2 * (L2 - L1) * t)) * grow);
            req = std::min({req, ra, rb});
        }
        if (eps_sup > opt.ratio_eps_gate || eps_sup > req) break;
        last = i + 1;
    }
    std::ostringstream os;
    os << "A=" << A << " C0=" << C0 << " exponent=" << rate;
    if (last < 2) {
        e.status = "hypothesis unmet";
        os << "; C^2 size " << eps_sup << " above the small-data threshold " << std::min(req, opt.ratio_eps_gate);
        e.note = os.str();
        return e;
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < last; ++i) {
        const double p1 = detail::weighted(tr.modes[i], i1.weights);
        const double p2 = detail::weighted(tr.modes[i], i2.weights);
        const double bound = A * std::exp(rate * (tr.tau[i] - tr.tau[0])) * p2;
        const double r = bound > 0 ? p1 / bound : (p1 > 0 ? std::numeric_limits<double>::infinity() : 0.0);
        worst = std::max(worst, r);
        e.violations += p1 > bound * (1 + opt.ratio_rel_tol) + 1e-300;
        ++e.samples;
    }
    if (last < tr.size()) os << "; checked on tau <= " << tr.tau[last - 1];
    e.note = os.str();
    e.measured = worst;
    e.bound = 1.0;
    e.status = e.violations ? "violation" : "pass";
    return e;
}

/// |<phi, Q(h)>| <= C ||phi|| ||h||_{C^2} ||h||_{H_W}; the sup over phi is ||Q(h)||.
inline CheckEntry check_error_estimate(const SphereBackground& bg, const FlowTrace& tr, double Cmax) {
    CheckEntry e;
    e.name = "error_estimate";
    double C = 0.0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const double denom = tr.c2_est[i] * tr.hw_norm[i];
        if (!(denom > 1e-300)) continue;
        const AxisymTensor h(bg.lmax(), tr.coeffs[i]);
        C = std::max(C, norm(bg, rdtf_nonlinearity(bg, h)) / denom);
        ++e.samples;
    }
    if (e.samples == 0) e.note = "trace identically zero";
    return detail::finish(e, C, Cmax);
}

/// Entropy-dominance inequalities. Each sample is classified by its hypotheses; the
/// conclusion constant is fitted over samples where they hold. The smallness
/// parameter eps is the sample's C^2 estimate.
inline std::vector<CheckEntry> check_entropy_dominance(const SphereBackground& bg, const SpectralDecomposition& sd,
                                                       const FlowTrace& tr, double Cmax) {
    const double mu_bar = bg.f_const() - 0.5 * bg.n();
    CheckEntry u, s, b;
    u.name = "dominance_unstable";
    s.name = "dominance_stable";
    b.name = "entropy_upper_bound";
    double Cu = 0, Cs = 0, Cb = 0;
    int unmet_u = 0, unmet_s = 0, unmet_b1 = 0, unmet_b2 = 0, no_mu = 0;
    const Selector lie = Selector::lie(), ess = Selector::ess();
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const Vec& x = tr.coeffs[i];
        const Vec& a = tr.modes[i];
        const double eps = tr.c2_est[i];
        const double h1 = h1_norm_squared(bg, AxisymTensor(bg.lmax(), x));
        if (!(h1 > 1e-300) || !(eps > 0)) continue;
        if (std::isnan(tr.mu[i])) {
            ++no_mu;
            continue;
        }
        const double dmu = tr.mu[i] - mu_bar;
        const double lie_h1 = detail::h1_part(bg, sd, x, lie);
        const double ess0 = detail::mode_norm2(sd, a, ess & Selector::zero());
        const double ess_plus = detail::mode_norm2(sd, a, ess & Selector::plus());
        const double minus_h1 = detail::h1_part(bg, sd, x, Selector::minus());
        double hLm = 0.0;  // <h, L P^- h>
        for (int k = 0; k < sd.size(); ++k)
            if (Selector::minus().accepts(sd.modes[k])) hLm += sd.modes[k].eigenvalue * a(k) * a(k);
        const double l2 = a.squaredNorm();

        // dominance of the essential unstable mode
        if (lie_h1 + ess0 <= eps * h1 && dmu >= 0) {
            const double lhs = (lie_h1 + ess0) / eps + minus_h1;
            Cu = std::max(Cu, ess_plus > 0 ? lhs / ess_plus : (lhs > 0 ? INFINITY : 0.0));
            ++u.samples;
        } else {
            ++unmet_u;
        }
        // dominance of the stable modes
        const double zero = detail::mode_norm2(sd, a, Selector::zero());
        const double lie_plus = detail::mode_norm2(sd, a, lie & Selector::plus());
        if (zero + lie_plus <= eps * h1 && dmu <= 0) {
            const double lhs = (zero + lie_plus) / eps + ess_plus;
            Cs = std::max(Cs, hLm != 0 ? lhs / std::abs(hLm) : (lhs > 0 ? INFINITY : 0.0));
            ++s.samples;
        } else {
            ++unmet_s;
        }
        // upper bound by entropy, squared form
        const double lie_l2 = detail::mode_norm2(sd, a, lie);
        const bool hyp1 = lie_l2 + std::abs(hLm) + ess0 <= eps * l2;
        const bool hyp2 = dmu >= 0;
        if (hyp1 && hyp2) {
            Cb = std::max(Cb, dmu > 0 ? l2 / dmu : INFINITY);
            ++b.samples;
        } else {
            unmet_b1 += !hyp1;
            unmet_b2 += !hyp2;
        }
    }
    auto label = [](CheckEntry& e, int unmet, const std::string& which) {
        if (e.samples == 0 && unmet > 0) {
            e.status = "hypothesis unmet";
            e.note = "hypothesis " + which + " unmet on every sample";
        } else if (unmet > 0) {
            e.note = std::to_string(unmet) + " samples outside the hypotheses";
        }
    };
    label(u, unmet_u, "(1) or (2)");
    label(s, unmet_s, "(1) or (2)");
    if (b.samples == 0 && (unmet_b1 || unmet_b2)) {
        b.status = "hypothesis unmet";
        b.note = unmet_b2 ? "hypothesis (2) unmet" : "hypothesis (1) unmet";
        if (unmet_b2 && unmet_b1) b.note += "; dominance hypothesis (1) also unmet";
    } else if (unmet_b1 + unmet_b2 > 0) {
        b.note = std::to_string(unmet_b1 + unmet_b2) + " hypothesis misses";
    }
    if (no_mu) {
        for (auto* e : {&u, &s, &b}) e->note += (e->note.empty() ? "" : "; ") + std::string("entropy missing");
    }
    return {detail::finish(u, Cu, Cmax), detail::finish(s, Cs, Cmax), detail::finish(b, Cb, INFINITY)};
}

inline DynamicsReport dynamics_report(const SphereBackground& bg, const SpectralDecomposition& sd,
                                      const FlowTrace& tr, const DynamicsOptions& opt = {}) {
    DynamicsReport r;
    r.entries.push_back(check_hw_consistency(bg, sd, tr, opt.hw_tolerance));
    r.entries.push_back(check_entropy_monotone(tr, opt.monotonicity_C));
    std::vector<std::string> seen;
    auto growth = [&](const std::string& v) {
        if (std::find(seen.begin(), seen.end(), v) != seen.end()) return;
        seen.push_back(v);
        r.entries.push_back(check_weighted_growth(sd, tr, Subspace::parse(v), opt.delta, opt.growth_C_max));
    };
    growth("");
    for (const auto& [v1, v2] : opt.pairs) {
        growth(v1);
        growth(v2);
    }
    const CheckEntry err = check_error_estimate(bg, tr, opt.error_C_max);
    const double CQ = tr.nonlinear ? err.measured : 0.0;
    for (const auto& [v1, v2] : opt.pairs)
        r.entries.push_back(check_ratio(sd, tr, Subspace::parse(v1), Subspace::parse(v2), opt, CQ));
    r.entries.push_back(err);
    for (auto& e : check_entropy_dominance(bg, sd, tr, opt.dominance_C_max)) r.entries.push_back(e);
    return r;
}

inline void write_dynamics_csv(std::ostream& os, const DynamicsReport& r) {
    os << "check,status,measured,bound,samples,violations,note\n";
    os.precision(10);
    for (const auto& e : r.entries)
        os << '"' << e.name << "\"," << e.status << ',' << e.measured << ',' << e.bound << ',' << e.samples << ','
           << e.violations << ",\"" << e.note << "\"\n";
}

}  // namespace riccilab
