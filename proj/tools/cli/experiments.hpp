#pragma once

// Experiment pipelines. Params arrive schema-checked. Each runner fills an
// Artifacts bundle of file contents and checks; the driver writes it out.

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli/config.hpp"
#include "cli/svg.hpp"
#include "riccilab/construction/strata.hpp"
#include "riccilab/entropy/entropy.hpp"
#include "riccilab/flows/dynamics.hpp"
#include "riccilab/flows/rates.hpp"
#include "riccilab/spectral/commutators.hpp"

namespace riccilab::cli {

struct Check {
    std::string name;
    double measured = 0.0;
    double bound = 0.0;
    std::string relation;  // "<=", ">=", ">", "in [lo,hi]", "info"
    std::string status;    // PASS, FAIL, N/A, INFO
    std::string note;
};

struct Artifacts {
    std::map<std::string, std::string> files;  // sorted, so manifests are stable
    std::vector<Check> checks;

    void add(const std::string& name, const std::string& content) { files[name] = content; }

    void le(const std::string& name, double v, double bound, const std::string& note = "") {
        checks.push_back({name, v, bound, "<=", v <= bound ? "PASS" : "FAIL", note});
    }
    void ge(const std::string& name, double v, double bound, const std::string& note = "") {
        checks.push_back({name, v, bound, ">=", v >= bound ? "PASS" : "FAIL", note});
    }
    void gt(const std::string& name, double v, double bound, const std::string& note = "") {
        checks.push_back({name, v, bound, ">", v > bound ? "PASS" : "FAIL", note});
    }
    void within(const std::string& name, double v, double lo, double hi, const std::string& note = "") {
        checks.push_back({name, v, hi, "in [" + fmt(lo) + "," + fmt(hi) + "]", lo <= v && v <= hi ? "PASS" : "FAIL",
                          note});
    }
    void info(const std::string& name, double v, const std::string& note = "") {
        checks.push_back({name, v, 0.0, "info", "INFO", note});
    }

    static std::string fmt(double v) {
        std::ostringstream o;
        o.precision(6);
        o << v;
        return o.str();
    }
};

struct RunContext {
    std::string name;
    std::string kind;
    int n = 3;
    int lmax = 12;
    std::uint64_t seed = 1;
};

// --- shared parsing --------------------------------------------------------------

/// Mode list entries: {"l": 2, "class": "essential", "a": 1e-3} or {"index": 5, "a": ...}.
inline std::vector<std::pair<int, double>> parse_modes(const Node& list, const SpectralDecomposition& sd) {
    std::vector<std::pair<int, double>> out;
    for (const Node& m : list.items()) {
        m.allow({"l", "class", "index", "a"});
        const double a = m.number("a");
        int idx = -1;
        if (m.has("index")) {
            if (m.has("l") || m.has("class")) m.fail("give either index or (l, class)");
            idx = m.integer("index");
            if (idx < 0 || idx >= sd.size()) m.fail("mode index out of range");
        } else {
            const int l = m.integer("l");
            const std::string c = m.choice("class", "essential", {"essential", "generic"});
            idx = sd.find(l, c == "essential" ? ModeClass::essential : ModeClass::generic);
            if (idx < 0) m.fail("no " + c + " mode of degree " + std::to_string(l) + " at this truncation");
        }
        out.emplace_back(idx, a);
    }
    return out;
}

inline AxisymTensor combine(const SphereBackground& bg, const SpectralDecomposition& sd,
                            const std::vector<std::pair<int, double>>& modes) {
    Vec y = Vec::Zero(sd.size());
    for (const auto& [i, a] : modes) y(i) += a;
    return AxisymTensor(bg.lmax(), sd.synthesize(y));
}

inline std::string trace_csv(const FlowTrace& tr) {
    std::ostringstream o;
    write_trace_csv(o, tr);
    return o.str();
}

inline std::string norm_plot(const std::string& title, const std::vector<std::pair<std::string, const FlowTrace*>>& runs) {
    std::vector<Series> s;
    int k = 0;
    for (const auto& [label, tr] : runs) {
        Series a;
        a.label = label;
        a.color = palette(k++);
        a.x = tr->tau;
        a.y = tr->l2f_norm;
        s.push_back(a);
    }
    return svg_plot(title, "tau", "||h||_{L2_f}", s, true);
}

// --- spectrum ----------------------------------------------------------------------

inline void run_spectrum(const RunContext& ctx, const Node& p, Artifacts& out) {
    const std::string op = p.choice("operator", "L", {"L", "frakL"});
    const double tol = p.number("tolerance", 1e-8);
    const SphereBackground bg(ctx.n, ctx.lmax);
    const SpectralDecomposition sd = spectrum(bg, op == "L" ? OperatorKind::L_tensor : OperatorKind::frakL_vector);
    std::ostringstream csv;
    write_spectrum_csv(csv, sd);
    out.add("spectrum.csv", csv.str());

    if (op == "L") {
        const double n = ctx.n;
        auto closest = [&](double target, ModeClass cls) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& m : sd.modes)
                if (m.cls == cls) best = std::min(best, std::abs(m.eigenvalue - target));
            return best;
        };
        out.le("eigenvalue_ric_1", closest(1.0, ModeClass::essential), tol, "essential unstable");
        out.le("eigenvalue_generic_l1", closest(1.0 - n / (2 * (n - 1)), ModeClass::generic), tol,
               "1 - n/(2(n-1))");
        double neg = -std::numeric_limits<double>::infinity();
        for (const auto& m : sd.modes)
            if (m.cls == ModeClass::essential && m.eigenvalue < -kNeutralTol) neg = std::max(neg, m.eigenvalue);
        out.le("largest_negative_essential", std::abs(neg + 2.0 / (n - 1)), tol, "-2/(n-1)");
        out.info("essential_index", sd.I_ess);
    }
    if (p.boolean("plot", true)) {
        Series ess, gen, vec;
        ess.label = "essential";
        gen.label = "generic";
        vec.label = "vector";
        gen.color = palette(1);
        vec.color = palette(2);
        for (const auto& m : sd.modes) {
            Series& s = m.cls == ModeClass::essential ? ess : (m.cls == ModeClass::generic ? gen : vec);
            s.x.push_back(m.degree);
            s.y.push_back(m.eigenvalue);
        }
        std::vector<Series> all;
        for (Series* s : {&ess, &gen, &vec})
            if (!s->x.empty()) {
                s->dots = true;
                all.push_back(*s);
            }
        out.add("spectrum.svg", svg_plot("spectrum of " + op, "degree l", "eigenvalue", all, false));
    }
}

// --- commutators -------------------------------------------------------------------

inline void run_commutators(const RunContext& ctx, const Node& p, Artifacts& out) {
    const int samples = p.integer("samples", 100);
    const double tol = p.number("tolerance", 1e-7);
    const std::string fault = p.choice("inject_fault", "none", {"none", "rm_sign"});
    if (samples < 1) p.at("samples").fail("must be positive");
    const SphereBackground bg(ctx.n, ctx.lmax);
    const CommutatorReport r = commutator_report(bg, samples, ctx.seed);
    out.le("lie_div_zero", r.lie_div_zero, tol, "div_0(L_Z g) = (Delta + Ric) Z");
    out.le("L_intertwines_div_star", r.L_intertwines, tol, "L div* = div* frakL");
    out.le("L_on_image_div_star", r.L_on_image, tol, "L = -2 div* div_0 on Im div*");
    out.le("isomorphism", r.isomorphism, tol, "(-2 div*) div_0 = lambda id");
    out.le("div_zero_onto_frakL", r.onto_frakL, tol);

    // Curvature action: 2 Rm*g_bar = 2 Ric = g_bar, and the coefficient route
    // agrees with the grid closed form on random fields.
    const double sgn = fault == "rm_sign" ? -1.0 : 1.0;
    AxisymTensor g(ctx.lmax);
    g.c(0) = 1.0;
    out.le("rm_action_contraction", norm(bg, sgn * rm_action(bg, g) - g) / norm(bg, g), 1e-12, "2 Rm*g = g");
    std::mt19937_64 rng(ctx.seed + 1);
    std::normal_distribution<double> nd;
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        AxisymTensor h(ctx.lmax);
        for (int i = 0; i < h.coeffs().size(); ++i) h.coeffs()(i) = nd(rng);
        const TensorJet j = bg.synthesize(h);
        const AxisymTensor grid = bg.analyze(grid_rm_action(bg, j.values()));
        worst = std::max(worst, norm(bg, grid - sgn * rm_action(bg, h)) / norm(bg, h));
    }
    out.le("rm_action_grid_agreement", worst, 1e-10);
    const IndexReport idx = index_report(bg);
    out.checks.push_back({"generic_index_equals_frakL_index", double(idx.gen_index), double(idx.index_frakL), "==",
                          idx.gen_index == idx.index_frakL ? "PASS" : "FAIL", ""});
    std::ostringstream csv;
    csv.precision(10);
    csv << "identity,residual\n";
    for (const auto& c : out.checks) csv << c.name << ',' << c.measured << '\n';
    out.add("commutators.csv", csv.str());
}

// --- entropy -----------------------------------------------------------------------

inline void run_entropy(const RunContext& ctx, const Node& p, Artifacts& out) {
    const SphereBackground bg(ctx.n, ctx.lmax);
    const SpectralDecomposition sd = spectrum(bg);
    std::vector<double> s_list{1e-3};
    if (p.has("s")) {
        s_list.clear();
        for (const Node& v : p.at("s").items()) s_list.push_back(v.as_number());
    }
    const double rtol = p.number("relative_tolerance", 0.01);
    const double gtol = p.number("generic_tolerance", 1e-4);
    std::vector<std::pair<int, double>> modes;
    if (p.has("modes")) {
        modes = parse_modes(p.at("modes"), sd);
    } else {
        modes = {{sd.find(0, ModeClass::essential), 1.0}, {sd.find(2, ModeClass::essential), 1.0},
                 {sd.find(2, ModeClass::generic), 1.0}};
    }
    const double mu = mu_entropy_value(bg, AxisymTensor(ctx.lmax));
    const double closed = bg.f_const() - 0.5 * ctx.n;
    out.le("mu_shrinker_closed_form", std::abs(mu - closed), 1e-8, "mu = f - n/2");

    std::ostringstream csv;
    csv.precision(12);
    csv << "mode,degree,class,eigenvalue,fd_second_variation,spectral_second_variation,relative_error\n";
    for (const auto& [i, a] : modes) {
        const Mode& m = sd.modes[i];
        const AxisymTensor h = a * AxisymTensor(ctx.lmax, m.coeffs);
        const FdSecondVariation fd = fd_second_variation(bg, h, s_list);
        const double spectral = second_variation(bg, sd, h);
        const double rel = spectral != 0.0 ? std::abs(fd.extrapolated - spectral) / std::abs(spectral) : 0.0;
        const std::string tag = std::string(to_string(m.cls)) + "_l" + std::to_string(m.degree);
        if (m.cls == ModeClass::essential) out.le("second_variation_" + tag, rel, rtol, "relative to spectral value");
        else out.le("second_variation_" + tag, std::abs(fd.extrapolated), gtol, "vanishes on Im div*");
        csv << i << ',' << m.degree << ',' << to_string(m.cls) << ',' << m.eigenvalue << ',' << fd.extrapolated << ','
            << spectral << ',' << rel << '\n';
    }
    out.add("entropy.csv", csv.str());
}

// --- flows -------------------------------------------------------------------------

struct FlowSetup {
    std::vector<std::pair<int, double>> initial;
    std::string initial_from = "direct";
    double t0 = 0, t1 = 6;
    FlowOptions opt;
    bool plot = true;
};

inline FlowSetup parse_flow(const Node& p, const SpectralDecomposition& sd) {
    FlowSetup f;
    if (p.has("initial")) f.initial = parse_modes(p.at("initial"), sd);
    f.initial_from = p.choice("initial_from", "direct", {"direct", "construction"});
    std::tie(f.t0, f.t1) = p.interval("tau", {0.0, 6.0});
    f.opt.sample_dt = p.number("sample_dt", 0.05);
    f.opt.control.rtol = p.number("rtol", 1e-10);
    f.opt.control.atol = p.number("atol", 1e-16);
    if (p.has("dt0")) f.opt.control.dt0 = p.number("dt0");
    f.opt.control.fixed = p.boolean("fixed_step", false);
    f.opt.nonlinear = p.boolean("nonlinear", true);
    f.opt.track_entropy = p.boolean("entropy", false);
    f.opt.validity_threshold = p.number("validity_threshold", 0.2);
    f.plot = p.boolean("plot", true);
    if (!(f.opt.sample_dt > 0)) p.at("sample_dt").fail("must be positive");
    return f;
}

/// Initial data: the mode combination itself, or the point at t0 of the
/// constructed solution whose leading modes are that combination.
inline AxisymTensor initial_data(const SphereBackground& bg, const SpectralDecomposition& sd, const FlowSetup& f) {
    if (f.initial_from == "direct" || f.initial.empty()) return combine(bg, sd, f.initial);
    BuildOptions b;
    b.horizon = f.t0;
    const StrataSolution S = build_S_forward(bg, sd, f.initial, b);
    return AxisymTensor(bg.lmax(), sd.synthesize(S.solution.at(f.t0)));
}

inline FlowTrace run_flow_core(const RunContext& ctx, const SphereBackground& bg, const SpectralDecomposition& sd,
                               const FlowSetup& f, Artifacts& out) {
    const FlowTrace tr = evolve_rdtf(bg, initial_data(bg, sd, f), f.t0, f.t1, f.opt);
    out.add("trace.csv", trace_csv(tr));
    if (f.plot) out.add("norms.svg", norm_plot(ctx.name + ": log-norm vs tau", {{"L2_f norm", &tr}}));
    double finite = 1.0;
    for (double v : tr.l2f_norm) finite = std::isfinite(v) ? finite : 0.0;
    out.ge("trace_finite", finite, 1.0);
    out.info("samples", double(tr.size()));
    out.info("accepted_steps", tr.accepted_steps);
    if (tr.halted) out.info("halted_at_tau", tr.tau.back(), tr.halt_reason);
    return tr;
}

inline void run_flow(const RunContext& ctx, const Node& p, Artifacts& out) {
    const SphereBackground bg(ctx.n, ctx.lmax);
    const SpectralDecomposition sd = spectrum(bg);
    const FlowSetup f = parse_flow(p, sd);
    const FlowTrace tr = run_flow_core(ctx, bg, sd, f, out);
    const CheckEntry hw = check_hw_consistency(bg, sd, tr, 1e-9);
    out.le("hw_consistency", hw.measured, 1e-9, hw.note);
    if (f.initial.empty()) {
        double m = 0.0;
        for (double v : tr.l2f_norm) m = std::max(m, v);
        out.le("zero_data_stays_flat", m, 0.0);
    }
}

// --- rates -------------------------------------------------------------------------

inline void run_rates(const RunContext& ctx, const Node& p, Artifacts& out) {
    const SphereBackground bg(ctx.n, ctx.lmax);
    const SpectralDecomposition sd = spectrum(bg);
    const FlowSetup f = parse_flow(p, sd);
    const auto [a, b] = p.interval("fit", {f.t0, f.t1});
    const std::string q = p.choice("quantity", "l2f_norm", {"l2f_norm", "hw_norm", "c0_est", "c2_est"});
    const FlowTrace tr = run_flow_core(ctx, bg, sd, f, out);

    std::ostringstream csv;
    csv.precision(12);
    csv << "run,quantity,fit_t0,fit_t1,exponent,r2,samples\n";
    const RateFit fit = rate_fit(tr, a, b, q);
    csv << "main," << q << ',' << a << ',' << b << ',' << fit.exponent << ',' << fit.r2 << ',' << fit.samples << '\n';
    if (p.has("expect")) {
        const auto [lo, hi] = p.interval("expect", {0, 1});
        out.within("fitted_exponent", fit.exponent, lo, hi, "r2=" + Artifacts::fmt(fit.r2));
    } else {
        out.info("fitted_exponent", fit.exponent, "r2=" + Artifacts::fmt(fit.r2));
    }
    if (p.boolean("compare_direct", false) && f.initial_from != "direct") {
        FlowSetup d = f;
        d.initial_from = "direct";
        const FlowTrace td = evolve_rdtf(bg, initial_data(bg, sd, d), d.t0, d.t1, d.opt);
        const RateFit fd = rate_fit(td, a, b, q);
        csv << "direct," << q << ',' << a << ',' << b << ',' << fd.exponent << ',' << fd.r2 << ',' << fd.samples
            << '\n';
        out.info("direct_data_exponent", fd.exponent,
                 "uncorrected mode data; the quadratic term seeds the unstable mode");
        out.add("trace_direct.csv", trace_csv(td));
        if (f.plot)
            out.add("norms.svg", norm_plot(ctx.name + ": log-norm vs tau", {{"constructed data", &tr}, {"direct data", &td}}));
    }
    out.add("rates.csv", csv.str());
}

// --- dynamics ----------------------------------------------------------------------

inline void run_dynamics(const RunContext& ctx, const Node& p, Artifacts& out) {
    const SphereBackground bg(ctx.n, ctx.lmax);
    const SpectralDecomposition sd = spectrum(bg);
    FlowSetup f = parse_flow(p, sd);
    if (!p.has("entropy")) f.opt.track_entropy = true;
    DynamicsOptions d;
    d.delta = p.number("delta", d.delta);
    if (!(d.delta > 0 && d.delta < 1)) p.at("delta").fail("must lie in (0,1)");
    if (p.has("pairs")) {
        d.pairs.clear();
        for (const Node& pr : p.at("pairs").items()) {
            const auto v = pr.items();
            if (v.size() != 2) pr.fail("expected [V1, V2]");
            d.pairs.emplace_back(v[0].as_string(), v[1].as_string());
        }
    }
    const FlowTrace tr = run_flow_core(ctx, bg, sd, f, out);
    const DynamicsReport r = dynamics_report(bg, sd, tr, d);
    std::ostringstream csv;
    write_dynamics_csv(csv, r);
    out.add("dynamics.csv", csv.str());
    for (const auto& e : r.entries) {
        Check c{e.name, e.measured, e.bound, "<=", "PASS", e.note};
        if (e.status == "violation") c.status = "FAIL";
        else if (e.status != "pass") c.status = "N/A", c.note = e.status + (e.note.empty() ? "" : "; " + e.note);
        out.checks.push_back(c);
    }
}

// --- construction ------------------------------------------------------------------

inline void run_construct(const RunContext& ctx, const Node& p, Artifacts& out) {
    const SphereBackground bg(ctx.n, ctx.lmax);
    const SpectralDecomposition sd = spectrum(bg);
    const bool anc = p.choice("direction", "ancient", {"ancient", "immortal"}) == "ancient";
    const auto a = parse_modes(p.at("prescribed"), sd);
    BuildOptions b;
    b.horizon = p.number("horizon", 0.0);
    b.span = p.number("span", 6.0);
    b.step = p.number("step", 0.01);
    if (!(b.span > 0 && b.step > 0 && b.step < b.span)) p.fail("need 0 < step < span");
    auto build = [&](const std::vector<std::pair<int, double>>& x, const BuildOptions& o) {
        return anc ? build_S(bg, sd, x, o) : build_S_forward(bg, sd, x, o);
    };
    const auto t_start = std::chrono::steady_clock::now();
    const StrataSolution S = build(a, b);
    const ConstructedSolution& s = S.solution;
    out.info("build_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count());

    out.ge("converged", s.converged ? 1 : 0, 1);
    out.le("smallness_gate", s.gate, 0.25, "2 C0 C1 sup|X0|");
    double cf = 0.0;
    for (const auto& st : S.stages) {
        const std::size_t m = st.contraction_factors.size() - (st.stagnated && !st.contraction_factors.empty());
        for (std::size_t k = 1; k < m; ++k) cf = std::max(cf, st.contraction_factors[k]);
    }
    out.le("contraction_factor_from_iteration_2", cf, 0.5);
    out.le("tail_bound", s.tail_bound, 1e-10);
    out.info("picard_residual", s.residual);
    out.info("iterations", s.iterations, s.stagnated ? "stopped at the roundoff floor" : "");

    // Closed form when only the Ric mode is prescribed: a e^tau in that coordinate.
    const int ric = sd.find(0, ModeClass::essential);
    if (anc && a.size() == 1 && a[0].first == ric) {
        double err = 0.0;
        for (std::size_t k = 0; k < s.size(); ++k) {
            Vec y = Vec::Zero(sd.size());
            y(ric) = a[0].second * std::exp(s.tau[k]);
            err = std::max(err, (s.coords[k] - y).norm());
        }
        out.le("conformal_closed_form_error", err, 1e-8);
        const double sh = 0.7;
        const StrataSolution B = build({{ric, std::exp(sh) * a[0].second}}, b);
        double e2 = 0.0;
        for (double t = b.horizon - b.span + 1; t <= b.horizon - sh; t += 0.05)
            e2 = std::max(e2, (s.at(t + sh) - B.solution.at(t)).norm());
        out.le("time_shift_identity", e2, 1e-8, "shift 0.7");
    }

    const FlowTrace tr = to_trace(bg, sd, s, b.span);
    out.add("construction.csv", trace_csv(tr));
    std::ostringstream cc;
    for (std::size_t k = 0; k < S.stages.size(); ++k) {
        cc << "# stage " << k + 1 << " eigenvalue " << S.strata[k] << '\n';
        write_contraction_csv(cc, S.stages[k]);
    }
    out.add("contraction.csv", cc.str());

    std::vector<std::pair<std::string, const FlowTrace*>> plots{{"S(a)", &tr}};
    FlowTrace trb;
    if (p.has("compare")) {
        const auto bb = parse_modes(p.at("compare"), sd);
        const ConstructedSolution sb = build(bb, b).solution;
        // Leading stratum of the difference: first prescribed eigenvalue where a and b differ.
        Vec diff = Vec::Zero(sd.size());
        for (const auto& [i, c] : a) diff(i) += c;
        for (const auto& [i, c] : bb) diff(i) -= c;
        double lam = anc ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        for (int i = 0; i < diff.size(); ++i)
            if (diff(i) != 0.0) lam = anc ? std::min(lam, sd.modes[i].eigenvalue) : std::max(lam, sd.modes[i].eigenvalue);
        Vec expected = Vec::Zero(sd.size());
        for (int i = 0; i < diff.size(); ++i)
            if (std::abs(sd.modes[i].eigenvalue - lam) < kEigenspaceTol) expected(i) = diff(i);
        if (std::isfinite(lam)) {
            const StrataReport r = strata_verify(s, sb, lam, expected, b.span);
            out.le("strata_coefficient_error", r.coefficient_error, 1e-6);
            out.gt("strata_decay_exponent", r.delta_prime, 0.0, r.note);
            std::ostringstream sc;
            sc.precision(12);
            sc << "tau,residual\n";
            for (std::size_t k = 0; k < r.tau.size(); ++k) sc << r.tau[k] << ',' << r.residual[k] << '\n';
            out.add("strata.csv", sc.str());
            if (p.boolean("plot", true)) {
                Series rs;
                rs.label = "strata residual";
                rs.x = r.tau;
                rs.y = r.residual;
                out.add("strata.svg", svg_plot(ctx.name + ": strata residual", "tau", "residual", {rs}, true));
            }
            const DominantMode dm = dominant_mode_extract(s, sb, sd.eigenvalues(), b.span);
            out.le("dominant_mode_rate_error", dm.relative_error, 0.02,
                   "eigenvalue " + Artifacts::fmt(dm.eigenvalue) + ", fitted " + Artifacts::fmt(dm.fitted_rate));
        }
        trb = to_trace(bg, sd, sb, b.span);
        plots.push_back({"S(b)", &trb});
    }
    if (p.has("second_horizon")) {
        BuildOptions b2 = b;
        b2.horizon = p.number("second_horizon");
        b2.span = b.span + std::abs(b2.horizon - b.horizon);
        const ConstructedSolution s2 = build(a, b2).solution;
        double e = 0.0;
        const auto [i0, i1] = s.window(b.span);
        for (std::size_t k = i0; k < i1; ++k) e = std::max(e, (s.coords[k] - s2.at(s.tau[k])).norm());
        out.le("horizon_independence", e, 1e-7);
    }
    if (p.boolean("plot", true)) out.add("construction.svg", norm_plot(ctx.name + ": log-norm vs tau", plots));
}

}  // namespace riccilab::cli
