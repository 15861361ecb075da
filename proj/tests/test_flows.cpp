#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "riccilab/flows/dynamics.hpp"
#include "riccilab/flows/gauge.hpp"
#include "riccilab/flows/rates.hpp"

using namespace riccilab;

namespace {

constexpr int kL = 12;

const SphereBackground& bg3() {
    static const SphereBackground bg(3, kL);
    return bg;
}
const SpectralDecomposition& sd3() {
    static const SpectralDecomposition sd = spectrum(bg3());
    return sd;
}
AxisymTensor mode(int i) { return AxisymTensor(kL, sd3().modes.at(i).coeffs); }
int essential(int l) { return sd3().find(l, ModeClass::essential); }
int generic(int l) { return sd3().find(l, ModeClass::generic); }

FlowOptions quiet(double rtol = 1e-10) {
    FlowOptions o;
    o.track_entropy = false;
    o.control.rtol = rtol;
    o.control.atol = 1e-16;
    return o;
}

double max_diff(const FlowTrace& a, const FlowTrace& b) {
    double m = 0;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, (a.coeffs[i] - b.coeffs[i]).norm());
    return m;
}

}  // namespace

// --- right-hand side -------------------------------------------------------------

TEST(RdtfRhs, ZeroAndConstantConformal) {
    const auto& bg = bg3();
    EXPECT_LT(rdtf_rhs(bg, AxisymTensor(kL)).coeffs().norm(), 1e-14);
    for (double s : {1e-3, 0.05, 0.3}) {
        AxisymTensor h(kL);
        h.c(0) = s;  // s * g_bar
        EXPECT_LT((rdtf_rhs(bg, h) - h).coeffs().norm(), 1e-12 * (1 + s)) << s;
    }
}

TEST(RdtfRhs, LinearizationMatchesSpectrum) {
    const auto& bg = bg3();
    const auto& sd = sd3();
    const double eps = 1e-6;
    for (int i : {essential(0), generic(1), essential(2), generic(2), essential(4), generic(5)}) {
        const AxisymTensor h = eps * mode(i);
        const AxisymTensor err = rdtf_rhs(bg, h) - sd.modes[i].eigenvalue * h;
        EXPECT_LT(norm(bg, err), 1e3 * eps * eps) << "mode " << i;
    }
}

// --- evolution -----------------------------------------------------------------

TEST(EvolveRdtf, ZeroDataStaysFlat) {
    const FlowTrace tr = evolve_rdtf(bg3(), AxisymTensor(kL), 0, 2, quiet());
    for (const auto& x : tr.coeffs) EXPECT_EQ(x.norm(), 0.0);
    EXPECT_FALSE(tr.halted);
}

TEST(EvolveRdtf, ConformalSolutionIsExact) {
    AxisymTensor h0(kL);
    h0.c(0) = 1e-3;
    const FlowTrace tr = evolve_rdtf(bg3(), h0, 0, 3, quiet());
    for (std::size_t i = 0; i < tr.size(); ++i) {
        AxisymTensor exact(kL);
        exact.c(0) = 1e-3 * std::exp(tr.tau[i]);
        EXPECT_LT((tr.coeffs[i] - exact.coeffs()).norm(), 1e-6);
    }
    const RateFit f = rate_fit(tr, 0, 3);
    EXPECT_NEAR(f.exponent, 1.0, 1e-6);
}

TEST(EvolveRdtf, HaltsCleanlyAtValidityThreshold) {
    AxisymTensor h0(kL);
    h0.c(0) = 1e-3;
    const FlowTrace tr = evolve_rdtf(bg3(), h0, 0, 8, quiet());
    EXPECT_TRUE(tr.halted);
    EXPECT_NE(tr.halt_reason.find("validity"), std::string::npos);
    EXPECT_LT(tr.tau.back(), 8.0);
    // The breaching state is the final sample; every earlier one is valid.
    EXPECT_GT(tr.c2_est.back(), 0.2);
    for (std::size_t i = 0; i + 1 < tr.size(); ++i) EXPECT_LE(tr.c2_est[i], 0.2);
}

TEST(EvolveRdtf, RejectsOversizedInitialData) {
    AxisymTensor h0(kL);
    h0.c(0) = 0.5;
    EXPECT_THROW(evolve_rdtf(bg3(), h0, 0, 1, quiet()), ParameterError);
}

TEST(EvolveRdtf, ConsistencyOrder) {
    // Fixed steps on a nonlinear trajectory against a quadruple-resolution reference.
    const AxisymTensor h0 = 1e-2 * (mode(essential(2)) + mode(generic(3)) + 0.5 * mode(essential(0)));
    auto run = [&](double dt) {
        FlowOptions o = quiet();
        o.control.fixed = true;
        o.control.dt0 = dt;
        o.sample_dt = 0.5;
        return evolve_rdtf(bg3(), h0, 0, 1, o);
    };
    const FlowTrace ref = run(0.025 / 4), a = run(0.1), b = run(0.05);
    const double ea = max_diff(a, ref), eb = max_diff(b, ref);
    EXPECT_GE(std::log2(ea / eb), 2.0) << ea << " " << eb;

    // Conformal solution against the closed form.
    AxisymTensor c0(kL);
    c0.c(0) = 1e-2;
    auto conf = [&](double dt) {
        FlowOptions o = quiet();
        o.control.fixed = true;
        o.control.dt0 = dt;
        o.sample_dt = 1.0;
        const FlowTrace t = evolve_rdtf(bg3(), c0, 0, 1, o);
        return std::abs(t.coeffs.back()(0) - 1e-2 * std::exp(1.0));
    };
    EXPECT_GE(std::log2(conf(0.2) / conf(0.1)), 2.0);
}

TEST(EvolveRdtf, QuadraticDeviationFromLinearFlow) {
    const AxisymTensor dir = mode(essential(2)) + mode(generic(1)) - mode(essential(3)) + mode(essential(0));
    std::vector<double> dev;
    for (double eps : {1e-4, 1e-5}) {
        const AxisymTensor h0 = eps * dir;
        FlowOptions lin = quiet();
        lin.nonlinear = false;
        const double d = max_diff(evolve_rdtf(bg3(), h0, 0, 1, quiet()), evolve_rdtf(bg3(), h0, 0, 1, lin));
        EXPECT_LE(d, 100 * eps * eps);
        dev.push_back(d);
    }
    EXPECT_NEAR(std::log10(dev[0] / dev[1]), 2.0, 0.1);
}

TEST(EvolveRdtf, TraceNormsConsistentAndCsv) {
    const AxisymTensor h0 = 1e-3 * (mode(essential(2)) + mode(generic(2)));
    const FlowTrace tr = evolve_rdtf(bg3(), h0, 0, 1, quiet());
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const AxisymTensor h(kL, tr.coeffs[i]);
        EXPECT_NEAR(tr.l2f_norm[i], norm(bg3(), h), 1e-9 * tr.l2f_norm[i]);
        EXPECT_NEAR(tr.l2f_norm[i], tr.modes[i].norm(), 1e-9 * tr.l2f_norm[i]);
        if (i) {
            EXPECT_GT(tr.tau[i], tr.tau[i - 1]);
        }
    }
    std::ostringstream os;
    write_trace_csv(os, tr);
    const std::string head = os.str().substr(0, os.str().find('\n'));
    EXPECT_EQ(head.rfind("tau,coeff_l0_c,coeff_l1_c,coeff_l2_c,coeff_l2_d,", 0), 0u);
    EXPECT_NE(head.find(",l2f_norm,hw_norm,c0_est,c2_est,mu_entropy,dt"), std::string::npos);
}

TEST(EvolveRdtf, EntropyIsMonotone) {
    FlowOptions o = quiet();
    o.track_entropy = true;
    const FlowTrace tr = evolve_rdtf(bg3(), 1e-3 * mode(essential(2)), 0, 3, o);
    const double mu_bar = bg3().f_const() - 1.5;
    for (std::size_t i = 1; i < tr.size(); ++i) {
        EXPECT_GE(tr.mu[i] - tr.mu[i - 1], -tr.dt[i] * tr.dt[i]);
        EXPECT_LE(tr.mu[i], mu_bar + 1e-12);
    }
}

TEST(Entropy, DiffeomorphismInvariance) {
    AxisymVector X(kL);
    X.e(1) = 0.01;
    X.e(2) = -0.004;
    const AxisymTensor h = gauge_pullback(bg3(), {X}, AxisymTensor(kL));
    EXPECT_GT(norm(bg3(), h), 1e-3);
    EXPECT_NEAR(mu_entropy_value(bg3(), h), bg3().f_const() - 1.5, 1e-8);
}

// --- rates ---------------------------------------------------------------------

TEST(RateFit, ExactSequences) {
    std::vector<double> t, e, c;
    for (int i = 0; i <= 20; ++i) {
        t.push_back(0.1 * i);
        e.push_back(std::exp(-0.1 * i));
        c.push_back(3.0);
    }
    const RateFit f = fit_log_linear(t, e);
    EXPECT_NEAR(f.exponent, -1.0, 1e-12);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
    EXPECT_NEAR(fit_log_linear(t, c).exponent, 0.0, 1e-14);
    EXPECT_THROW(fit_log_linear({0, 1, 2}, {1, 2, 3}), ParameterError);
    EXPECT_THROW(fit_log_linear(t, std::vector<double>(21, -1.0)), ParameterError);
}

// --- harmonic map heat flow ------------------------------------------------------

TEST(Hmhf, IdentityStaysIdentity) {
    const auto zero = [](double) { return AxisymTensor(kL); };
    const HmhfTrace tr = evolve_hmhf(bg3(), zero, GaugeMap::identity(kL), 0, 1);
    for (const auto& X : tr.X) EXPECT_EQ(X.coeffs().norm(), 0.0);
}

TEST(Hmhf, LinearizationDefectIsQuadratic) {
    const auto zero = [](double) { return AxisymTensor(kL); };
    for (double eps : {1e-4, 1e-3}) {
        AxisymVector X0(kL);
        X0.e(1) = eps;
        const HmhfTrace tr = evolve_hmhf(bg3(), zero, {X0}, 0, 1);
        double worst = 0;
        for (double d : tr.linear_defect) worst = std::max(worst, d);
        EXPECT_LE(worst, 100 * eps * eps) << eps;
        // The l = 1 coefficient grows like e^{tau / 4}.
        EXPECT_NEAR(tr.X.back().e(1) / eps, std::exp(0.25), 10 * eps);
    }
}

TEST(Hmhf, SecondDegreeDecaysAtUnitRate) {
    const auto zero = [](double) { return AxisymTensor(kL); };
    AxisymVector X0(kL);
    X0.e(2) = 1e-5;
    const HmhfTrace tr = evolve_hmhf(bg3(), zero, {X0}, 0, 2);
    std::vector<double> y;
    for (const auto& X : tr.X) y.push_back(norm(bg3(), X));
    EXPECT_NEAR(fit_log_linear(tr.tau, y).exponent, -1.0, 1e-3);
}

TEST(Hmhf, IsometryHasZeroTension) {
    // phi_Y is an isometry from (M, phi_Y^* g_bar) to (M, g_bar), hence harmonic.
    const auto& bg = bg3();
    AxisymVector Y(kL);
    Y.e(1) = 0.02;
    Y.e(2) = -0.01;
    Y.e(3) = 0.004;
    const AxisymTensor h = gauge_pullback(bg, {Y}, AxisymTensor(kL));
    const Vec rate = hmhf_rate_grid(bg, bg.synthesize(Y), bg.synthesize(h));
    const Vec moving = hmhf_rate_grid(bg, bg.synthesize(Y), bg.synthesize(AxisymTensor(kL)));
    EXPECT_LT(rate.cwiseAbs().maxCoeff(), 1e-3 * moving.cwiseAbs().maxCoeff());
}

TEST(Hmhf, GaugeEquivarianceOfPureGaugeData) {
    // Pure-gauge data L_X g_bar evolves, to first order, as the pullback by the
    // HMHF-transported gauge.
    const auto& bg = bg3();
    const auto zero = [](double) { return AxisymTensor(kL); };
    for (double eps : {1e-3, 1e-4}) {
        AxisymVector X(kL);
        X.e(1) = eps;
        X.e(2) = 0.5 * eps;
        const AxisymTensor h0 = gauge_pullback(bg, {X}, AxisymTensor(kL));
        FlowOptions o = quiet();
        o.sample_dt = 0.5;
        const FlowTrace tr = evolve_rdtf(bg, h0, 0, 0.5, o);
        HmhfOptions ho;
        ho.sample_dt = 0.5;
        ho.control.rtol = 1e-10;
        const HmhfTrace ht = evolve_hmhf(bg, zero, {X}, 0, 0.5, ho);
        const AxisymTensor pulled = gauge_pullback(bg, {ht.X.back()}, AxisymTensor(kL));
        EXPECT_LT((AxisymTensor(kL, tr.coeffs.back()) - pulled).coeffs().norm(), 50 * eps * eps) << eps;
    }
}

// --- gauge maps ----------------------------------------------------------------

TEST(Gauge, IdentityPullbackAndComposition) {
    const auto& bg = bg3();
    AxisymTensor h(kL);
    h.c(2) = 0.01;
    h.d(3) = 0.003;
    EXPECT_LT((gauge_pullback(bg, GaugeMap::identity(kL), h) - h).coeffs().norm(), 1e-14);

    AxisymVector X(kL), Y(kL);
    X.e(1) = 0.02;
    X.e(3) = 0.01;
    Y.e(2) = -0.015;
    Y.e(1) = 0.01;
    const AxisymTensor lhs = gauge_pullback(bg, {Y}, gauge_pullback(bg, {X}, h));
    const AxisymTensor rhs = gauge_pullback(bg, compose(bg, {X}, {Y}), h);
    EXPECT_LT((lhs - rhs).coeffs().norm(), 1e-9);
}

TEST(Gauge, PullbackTaylorRemainderIsQuadratic) {
    const auto& bg = bg3();
    std::vector<double> size, rem;
    for (double e : {1e-2, 1e-3, 1e-4}) {
        AxisymVector X(kL);
        X.e(1) = e;
        X.e(2) = 0.5 * e;
        X.e(3) = -0.3 * e;
        const AxisymTensor p = gauge_pullback(bg, {X}, AxisymTensor(kL));
        size.push_back(norm(bg, X));
        rem.push_back(norm(bg, p - lie_derivative(bg, X)));
    }
    const RateFit f = fit_log_linear(std::vector<double>{std::log(size[0]), std::log(size[1]), std::log(size[2]),
                                                         std::log(size[0]), std::log(size[1]), std::log(size[2]),
                                                         std::log(size[0]), std::log(size[1]), std::log(size[2]),
                                                         std::log(size[1])},
                                     std::vector<double>{rem[0], rem[1], rem[2], rem[0], rem[1], rem[2], rem[0],
                                                         rem[1], rem[2], rem[1]});
    EXPECT_NEAR(f.exponent, 2.0, 0.1);
}

TEST(Gauge, RejectsDegenerateMaps) {
    AxisymVector X(kL);
    X.e(1) = 5.0;
    EXPECT_THROW(gauge_pullback(bg3(), {X}, AxisymTensor(kL)), std::exception);
}

TEST(LieReduction, CancelsLieMode) {
    const auto& bg = bg3();
    for (double eps : {1e-3, 1e-4}) {
        AxisymVector X(kL);
        X.e(1) = eps;
        const AxisymTensor h = lie_derivative(bg, X);
        const LieReduction r = lie_reduction(bg, sd3(), h, 0.0);
        EXPECT_TRUE(r.converged);
        EXPECT_LE(r.iterations, 30);
        EXPECT_LE(norm(bg, project(sd3(), r.h, Selector::lie_at_least(0.0))), 1e-9);
        EXPECT_LE(norm(bg, r.h), 10 * eps * eps);
    }
}

TEST(LieReduction, EssentialInputNeedsOnlyQuadraticGauge) {
    const auto& bg = bg3();
    for (double eps : {1e-3, 1e-4}) {
        const AxisymTensor h = eps * (mode(essential(2)) + mode(essential(0)));
        const LieReduction r = lie_reduction(bg, sd3(), h, -2.0);
        EXPECT_LE(norm(bg, r.gauge.X), 10 * eps * eps);
        EXPECT_LE(norm(bg, r.h - h), 10 * eps * eps);
    }
    const LieReduction z = lie_reduction(bg, sd3(), AxisymTensor(kL), -2.0);
    EXPECT_EQ(z.gauge.X.coeffs().norm(), 0.0);
    EXPECT_EQ(z.h.coeffs().norm(), 0.0);
}

TEST(SliceProjection, GaugeOrbitCollapsesToZero) {
    const auto& bg = bg3();
    AxisymVector X(kL);
    X.e(1) = 3e-4;
    X.e(2) = -1.5e-4;
    X.e(3) = 7.5e-5;
    const AxisymTensor h = gauge_pullback(bg, {X}, AxisymTensor(kL));
    ASSERT_LE(c2_estimate(bg, bg.synthesize(h)), 1e-2);
    const LieReduction r = slice_projection(bg, sd3(), h);
    EXPECT_LE(r.iterations, 30);
    EXPECT_LT(norm(bg, r.h), 1e-8);
}

TEST(SliceProjection, MixedInputKeepsRicComponent) {
    const auto& bg = bg3();
    const double eps = 1e-3;
    AxisymVector X(kL);
    X.e(1) = eps;
    X.e(2) = eps;
    const AxisymTensor ric = mode(essential(0));
    const AxisymTensor h = eps * ric + lie_derivative(bg, X);
    const LieReduction r = slice_projection(bg, sd3(), h);
    EXPECT_LT(norm(bg, project(sd3(), r.h, Selector::lie())), 1e-8);
    EXPECT_NEAR(inner(bg, r.h, ric), eps, 10 * eps * eps);

    const AxisymTensor e = eps * mode(essential(2));
    const LieReduction re = slice_projection(bg, sd3(), e);
    EXPECT_LT(norm(bg, re.h - e), 10 * eps * eps);
}

TEST(SliceProjection, RefusesEssentialNeutralModes) {
    SpectralDecomposition sd = sd3();
    sd.modes[essential(2)].sign = ModeSign::neutral;
    EXPECT_THROW(slice_projection(bg3(), sd, AxisymTensor(kL)), CapabilityError);
}

// --- dynamics diagnostics ---------------------------------------------------------

TEST(Dynamics, LinearFlowNeedsNoConstant) {
    FlowOptions o = quiet();
    o.nonlinear = false;
    const AxisymTensor h0 = 1e-3 * (mode(essential(0)) + mode(essential(2)) + mode(generic(1)) + mode(essential(3)));
    const FlowTrace tr = evolve_rdtf(bg3(), h0, 0, 2, o);
    const DynamicsReport r = dynamics_report(bg3(), sd3(), tr);
    EXPECT_EQ(r.violations(), 0);
    for (const auto& e : r.entries) {
        if (e.name.rfind("growth", 0) == 0 && e.status == "pass") {
            EXPECT_EQ(e.measured, 0.0) << e.name;
        }
    }
}

TEST(Dynamics, StableEssentialRunReportsEntropyHypothesisUnmet) {
    FlowOptions o = quiet();
    o.track_entropy = true;
    const FlowTrace tr = evolve_rdtf(bg3(), 1e-3 * mode(essential(2)), 0, 3, o);
    const DynamicsReport r = dynamics_report(bg3(), sd3(), tr);
    EXPECT_EQ(r.violations(), 0);
    const CheckEntry* ub = r.find("entropy_upper_bound");
    ASSERT_NE(ub, nullptr);
    EXPECT_EQ(ub->status, "hypothesis unmet");
    EXPECT_EQ(ub->note.rfind("hypothesis (2) unmet", 0), 0u);
    EXPECT_EQ(r.find("hw_consistency")->status, "pass");
    EXPECT_EQ(r.find("entropy_monotone")->status, "pass");
}

TEST(Dynamics, RicDominatedRun) {
    FlowOptions o = quiet();
    o.track_entropy = true;
    const FlowTrace tr = evolve_rdtf(bg3(), 1e-3 * mode(essential(0)), 0, 2, o);
    const DynamicsReport r = dynamics_report(bg3(), sd3(), tr);
    EXPECT_EQ(r.violations(), 0);
    const CheckEntry* du = r.find("dominance_unstable");
    ASSERT_NE(du, nullptr);
    EXPECT_EQ(du->status, "pass");
    EXPECT_LE(du->measured, 2.0);
    EXPECT_EQ(r.find("ratio[- / +]")->status, "pass");
}

TEST(Dynamics, DetectsBrokenInequality) {
    // A forged trace whose stable part grows breaks the weighted-growth bound.
    FlowOptions o = quiet();
    o.nonlinear = false;
    FlowTrace tr = evolve_rdtf(bg3(), 1e-3 * mode(essential(2)), 0, 1, o);
    const int i = essential(2);
    for (std::size_t k = 0; k < tr.size(); ++k) tr.modes[k](i) = 1e-3 * std::exp(2.0 * tr.tau[k]);
    const CheckEntry e = check_weighted_growth(sd3(), tr, Subspace::parse("ess&eig>=-1.5&eig<=-0.5"), 0.1, 100.0);
    EXPECT_EQ(e.status, "violation");
}

TEST(Dynamics, SubspaceParsing) {
    const Subspace s = Subspace::parse("ess&eig>=-1.5&eig<=-0.5");
    int count = 0;
    for (const auto& m : sd3().modes) count += s.accepts(m);
    EXPECT_EQ(count, 1);
    EXPECT_THROW(Subspace::parse("bogus"), ParameterError);
}
