#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "riccilab/construction/strata.hpp"

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
int ric() { return sd3().find(0, ModeClass::essential); }
int essential(int l) { return sd3().find(l, ModeClass::essential); }
int generic(int l) { return sd3().find(l, ModeClass::generic); }

Vec lam3() {
    Vec l(3);
    l << 1.0, 0.25, -1.0;
    return l;
}

Vec unit(int n, int i, double v = 1.0) {
    Vec e = Vec::Zero(n);
    e(i) = v;
    return e;
}

/// Fitted exponent of |x| over the reported window.
double window_rate(const ConstructedSolution& s, double span) {
    const auto [i0, i1] = s.window(span);
    std::vector<double> t, y;
    for (std::size_t k = i0; k < i1; ++k) {
        t.push_back(s.tau[k]);
        y.push_back(s.coords[k].norm());
    }
    return fit_log_linear(t, y).exponent;
}

}  // namespace

// --- single-mode Duhamel oracles ---------------------------------------------------

TEST(Duhamel, AncientExponentialForcing) {
    // (d/dtau - l) x = e^{2 tau}  =>  x = e^{2 tau} / (2 - l)
    ConstructionProblem p;
    p.eigenvalues = lam3();
    p.direction = Direction::ancient;
    p.forcing = [](double t) { return Vec(Vec::Constant(3, std::exp(2 * t))); };
    p.forcing_rate = 2.0;
    p.forcing_budget = std::sqrt(3.0);
    const ConstructedSolution s = duhamel_solve(p);
    // Default split: midway between the forcing rate and twice it.
    EXPECT_NEAR(s.theta, 3.0, 1e-12);
    EXPECT_LE(s.tail_bound, 1e-10);
    const auto [i0, i1] = s.window(6);
    for (std::size_t k = i0; k < i1; ++k)
        for (int i = 0; i < 3; ++i)
            EXPECT_NEAR(s.coords[k](i), std::exp(2 * s.tau[k]) / (2 - lam3()(i)), 1e-10) << s.tau[k];
}

TEST(Duhamel, ImmortalExponentialForcing) {
    ConstructionProblem p;
    p.eigenvalues = lam3();
    p.direction = Direction::immortal;
    p.forcing = [](double t) { return unit(3, 1, std::exp(-2 * t)); };
    p.forcing_rate = -2.0;
    p.forcing_budget = 1.0;
    const ConstructedSolution s = duhamel_solve(p);
    EXPECT_NEAR(s.theta, -3.0, 1e-12);
    for (std::size_t k = 0; k < s.size(); ++k) {
        EXPECT_NEAR(s.coords[k](1), std::exp(-2 * s.tau[k]) / -2.25, 1e-11);
        EXPECT_EQ(s.coords[k](0), 0.0);
    }
}

TEST(Duhamel, ZeroForcingAndPrescribedData) {
    ConstructionProblem p;
    p.eigenvalues = lam3();
    const ConstructedSolution z = duhamel_solve(p);
    for (const auto& x : z.coords) EXPECT_EQ(x.norm(), 0.0);

    p.prescribed = {{0, 0.3}};
    const ConstructedSolution s = duhamel_solve(p);
    for (std::size_t k = 0; k < s.size(); ++k)
        EXPECT_NEAR(s.coords[k](0), 0.3 * std::exp(s.tau[k]), 1e-15);
}

TEST(Duhamel, MixedSplitAgainstOdeOracle) {
    // Forcing with two rates: modes above theta take the far anchor. A sum of
    // exponentials is only interpolated to second order in the step.
    auto run = [](double step) {
        ConstructionProblem p;
        p.eigenvalues = lam3();
        p.theta = 0.5;
        p.step = step;
        p.forcing = [](double t) { return Vec(Vec::Constant(3, std::exp(2 * t) + 0.5 * std::exp(3 * t))); };
        p.forcing_rate = 2.0;
        p.forcing_budget = 1.5 * std::sqrt(3.0);
        const ConstructedSolution s = duhamel_solve(p);
        double err = 0.0;
        const auto [i0, i1] = s.window(6);
        for (std::size_t k = i0; k < i1; ++k)
            for (int i = 0; i < 3; ++i) {
                const double l = lam3()(i);
                auto part = [&](double t) { return std::exp(2 * t) / (2 - l) + 0.5 * std::exp(3 * t) / (3 - l); };
                // Modes above theta start from zero at T, which removes a homogeneous piece.
                const double exact = part(s.tau[k]) - (l > 0.5 ? part(0.0) * std::exp(l * s.tau[k]) : 0.0);
                err = std::max(err, std::abs(s.coords[k](i) - exact) / std::max(std::abs(part(s.tau[k])), std::abs(exact)));
            }
        return err;
    };
    const double e1 = run(0.02), e2 = run(0.01);
    EXPECT_LT(e2, 1e-5);
    EXPECT_NEAR(std::log2(e1 / e2), 2.0, 0.1);
}

TEST(Duhamel, ThetaClearanceEnforced) {
    ConstructionProblem p;
    p.eigenvalues = lam3();
    p.theta = 0.25 + 1e-8;
    EXPECT_THROW(duhamel_solve(p), NumericalError);
    p.theta = 0.25 + 1e-3;
    EXPECT_NO_THROW(duhamel_solve(p));
}

TEST(Picard, ZeroNonlinearityReproducesDuhamel) {
    ConstructionProblem p;
    p.eigenvalues = lam3();
    p.prescribed = {{0, 0.1}};
    p.forcing = [](double t) { return unit(3, 2, std::exp(2 * t)); };
    p.forcing_rate = 2.0;
    p.forcing_budget = 1.0;
    const ConstructedSolution lin = duhamel_solve(p);
    p.nonlinearity = [](double, const Vec& x) { return Vec(Vec::Zero(x.size())); };
    const ConstructedSolution pic = picard_solve(p);
    EXPECT_TRUE(pic.converged);
    EXPECT_EQ(pic.gate, 0.0);
    ASSERT_EQ(pic.tau.size(), lin.tau.size());
    for (std::size_t k = 0; k < lin.size(); ++k) EXPECT_LT((pic.coords[k] - lin.coords[k]).norm(), 1e-15);
}

TEST(Picard, RiccatiModeAgainstClosedForm) {
    // x' = x + |X| x with X = (x, 0, 0): x = a e^t / (1 - a e^t) for x > 0.
    ConstructionProblem p;
    p.eigenvalues = lam3();
    p.prescribed = {{0, 0.02}};
    p.nonlinearity = [](double, const Vec& x) { return Vec(x.norm() * x); };
    const ConstructedSolution s = picard_solve(p);
    ASSERT_TRUE(s.converged);
    EXPECT_LE(s.gate, 0.25);
    for (std::size_t k = 1; k < s.contraction_factors.size(); ++k) EXPECT_LE(s.contraction_factors[k], 0.5) << k;
    double err = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double e = 0.02 * std::exp(s.tau[k]);
        err = std::max(err, std::abs(s.coords[k](0) - e / (1 - e)));
        EXPECT_EQ(s.coords[k](1), 0.0);
    }
    // Limited by the interpolation of the quadratic forcing on a 0.01 grid.
    EXPECT_LT(err, 1e-8);
}

TEST(Picard, HorizonShrinksUntilGateHolds) {
    ConstructionProblem p;
    p.eigenvalues = lam3();
    p.prescribed = {{0, 1.0}};
    p.nonlinearity = [](double, const Vec& x) { return Vec(x.norm() * x); };
    const ConstructedSolution s = picard_solve(p);
    EXPECT_LT(s.horizon, 0.0);
    EXPECT_LE(s.gate, 0.25);
    p.shrink_horizon = false;
    p.max_iterations = 3;
    EXPECT_THROW(picard_solve(p), NumericalError);
}

// --- ancient solutions of the flow ---------------------------------------------------

TEST(BuildS, RicStratumIsTheConformalFamily) {
    const double a = 1e-3;
    const StrataSolution S = build_S(bg3(), sd3(), {{ric(), a}});
    ASSERT_TRUE(S.solution.converged);
    ASSERT_EQ(S.strata.size(), 1u);
    EXPECT_NEAR(S.strata[0], 1.0, 1e-8);
    double err = 0.0;
    for (std::size_t k = 0; k < S.solution.size(); ++k)
        err = std::max(err, (S.solution.coords[k] - unit(sd3().size(), ric(), a * std::exp(S.solution.tau[k]))).norm());
    EXPECT_LE(err, 1e-8);
    // The Ric mode is a constant multiple of g_bar.
    const AxisymTensor h0(kL, sd3().synthesize(S.solution.at(0.0)));
    EXPECT_NEAR(h0.c(0), a * sd3().modes[ric()].coeffs(0), 1e-12);
    for (double c : S.solution.contraction_factors) EXPECT_LE(c, 0.5);
}

TEST(BuildS, TimeShiftIdentity) {
    const double a = 1e-3, s = 0.7;
    const ConstructedSolution A = build_S(bg3(), sd3(), {{ric(), a}}).solution;
    const ConstructedSolution B = build_S(bg3(), sd3(), {{ric(), std::exp(s) * a}}).solution;
    double err = 0.0;
    for (double t = -5.0; t <= -s; t += 0.1) err = std::max(err, (A.at(t + s) - B.at(t)).norm());
    EXPECT_LE(err, 1e-8);
}

TEST(BuildS, RejectsNonUnstableOrGenericModes) {
    EXPECT_THROW(build_S(bg3(), sd3(), {{essential(2), 1e-3}}), ParameterError);
    EXPECT_THROW(build_S(bg3(), sd3(), {{generic(1), 1e-3}}), ParameterError);
}

TEST(BuildS, ZeroDataIsTheShrinker) {
    const StrataSolution S = build_S(bg3(), sd3(), {});
    EXPECT_TRUE(S.strata.empty());
    for (const auto& x : S.solution.coords) EXPECT_EQ(x.norm(), 0.0);
}

TEST(BuildSForward, StableEssentialModeDecaysAtItsEigenvalue) {
    const StrataSolution S = build_S_forward(bg3(), sd3(), {{essential(2), 1e-3}});
    const ConstructedSolution& s = S.solution;
    ASSERT_TRUE(s.converged);
    EXPECT_LE(s.gate, 0.25);
    const std::size_t n = s.contraction_factors.size() - (s.stagnated ? 1 : 0);
    for (std::size_t k = 1; k < n; ++k) EXPECT_LE(s.contraction_factors[k], 0.5);
    const double r = window_rate(s, 6);
    EXPECT_GE(r, -1.05);
    EXPECT_LE(r, -0.95);
    // Leading coefficient is the prescribed one, corrected at second order.
    EXPECT_NEAR(s.at(0.0)(essential(2)), 1e-3, 1e-5);
    EXPECT_LT(s.residual, 1e-8 * 1e-3);
}

TEST(BuildSForward, AgreesWithForwardFlow) {
    const ConstructedSolution s = build_S_forward(bg3(), sd3(), {{essential(2), 1e-3}}).solution;
    FlowOptions o;
    o.track_entropy = false;
    o.control.rtol = 1e-10;
    o.control.atol = 1e-16;
    o.sample_dt = 0.5;
    const FlowTrace tr = evolve_rdtf(bg3(), AxisymTensor(kL, sd3().synthesize(s.at(0.0))), 0, 3, o);
    for (std::size_t k = 0; k < tr.size(); ++k)
        EXPECT_LT((tr.modes[k] - s.at(tr.tau[k])).norm(), 1e-9) << tr.tau[k];
}

TEST(BuildSForward, RejectsNeutralAndWrongClass) {
    SpectralDecomposition sd = sd3();
    sd.modes[essential(2)].sign = ModeSign::neutral;
    EXPECT_THROW(build_S_forward(bg3(), sd, {{essential(2), 1e-3}}), ParameterError);
    EXPECT_THROW(build_S_forward(bg3(), sd3(), {{generic(2), 1e-3}}), ParameterError);
    EXPECT_THROW(build_S_forward(bg3(), sd3(), {{ric(), 1e-3}}), ParameterError);
}

// --- strata asymptotics ---------------------------------------------------------------

TEST(Strata, EqualDataGivesZeroDifference) {
    const ConstructedSolution A = build_S(bg3(), sd3(), {{ric(), 1e-3}}).solution;
    const StrataReport r = strata_verify(A, A, 1.0, Vec::Zero(sd3().size()), 6);
    EXPECT_EQ(r.coefficient_error, 0.0);
    EXPECT_TRUE(r.at_roundoff_floor);
}

TEST(Strata, RicStratumCoefficient) {
    const ConstructedSolution A = build_S(bg3(), sd3(), {{ric(), 2e-3}}).solution;
    const ConstructedSolution B = build_S(bg3(), sd3(), {{ric(), 1e-3}}).solution;
    const StrataReport r = strata_verify(A, B, 1.0, unit(sd3().size(), ric(), 1e-3), 6);
    EXPECT_LE(r.coefficient_error, 1e-6);
    EXPECT_GT(r.delta_prime, 0.0);
    // The family is exactly a e^tau, so only solver error is left.
    EXPECT_TRUE(r.at_roundoff_floor);
}

TEST(Strata, SubleadingModeSetsDecayExponent) {
    // Two strata: difference on the 0.25 stratum, remainder from the 1 stratum.
    Vec l(2);
    l << 1.0, 0.25;
    auto solve = [&](double a0, double a1) {
        ConstructionProblem p;
        p.eigenvalues = l;
        p.theta = 1.5;
        p.prescribed = {{0, a0}, {1, a1}};
        return duhamel_solve(p);
    };
    const ConstructedSolution A = solve(0.3, 0.2), B = solve(0.1, 0.1);
    const StrataReport r = strata_verify(A, B, 0.25, unit(2, 1, 0.1), 6);
    EXPECT_FALSE(r.at_roundoff_floor);
    EXPECT_NEAR(r.delta_prime, 0.75, 1e-9);
    EXPECT_NEAR(r.r2, 1.0, 1e-12);
    EXPECT_NEAR(r.coefficient_error, 0.2 * std::exp(-0.75 * 6), 1e-12);
}

TEST(Strata, HorizonIndependence) {
    BuildOptions o2;
    o2.horizon = 2.0;
    o2.span = 8.0;
    const ConstructedSolution A = build_S(bg3(), sd3(), {{ric(), 1e-3}}).solution;
    const ConstructedSolution B = build_S(bg3(), sd3(), {{ric(), 1e-3}}, o2).solution;
    double err = 0.0;
    for (double t = -6.0; t <= 0.0; t += 0.05) err = std::max(err, (A.at(t) - B.at(t)).norm());
    EXPECT_LE(err, 1e-7);
}

// --- dominant mode ------------------------------------------------------------------

TEST(DominantMode, SyntheticPair) {
    Vec l(3);
    l << 1.0, 0.5, -1.0;
    std::vector<double> t;
    std::vector<Vec> x1, x2;
    for (int k = 0; k <= 600; ++k) {
        const double s = -6.0 + 0.01 * k;
        t.push_back(s);
        Vec a(3), b = Vec::Zero(3);
        a << std::exp(s), 2 * std::exp(0.5 * s), 0.0;
        x1.push_back(a);
        x2.push_back(b);
    }
    const DominantMode d = dominant_mode_extract(t, x1, x2, l, Direction::ancient);
    EXPECT_EQ(d.eigenvalue, 0.5);
    ASSERT_EQ(d.modes.size(), 1u);
    EXPECT_EQ(d.modes[0], 1);
    EXPECT_NEAR(d.fitted_rate, 0.5, 1e-12);
    EXPECT_NEAR(std::abs(d.limit(1)), 1.0, 1e-12);
    EXPECT_THROW(dominant_mode_extract({0, 1}, {Vec::Zero(3), Vec::Zero(3)}, {Vec::Zero(3), Vec::Zero(3)}, l,
                                       Direction::ancient),
                 ParameterError);
}

TEST(DominantMode, RicPairAndForwardPair) {
    const ConstructedSolution A = build_S(bg3(), sd3(), {{ric(), 2e-3}}).solution;
    const ConstructedSolution B = build_S(bg3(), sd3(), {{ric(), 1e-3}}).solution;
    const DominantMode d = dominant_mode_extract(A, B, sd3().eigenvalues(), 6);
    EXPECT_NEAR(d.eigenvalue, 1.0, 1e-8);
    EXPECT_NE(std::find(d.modes.begin(), d.modes.end(), ric()), d.modes.end());
    EXPECT_NEAR(d.fitted_rate, 1.0, 1e-6);

    const ConstructedSolution F = build_S_forward(bg3(), sd3(), {{essential(2), 2e-3}}).solution;
    const ConstructedSolution G = build_S_forward(bg3(), sd3(), {{essential(2), 1e-3}}).solution;
    const DominantMode f = dominant_mode_extract(F, G, sd3().eigenvalues(), 6);
    EXPECT_NEAR(f.eigenvalue, -1.0, 1e-8);
    EXPECT_LE(f.relative_error, 0.02);
}

// --- fast decay ---------------------------------------------------------------------

TEST(FastDecay, SuperExponentialForcingCertifiesRequestedRates) {
    ConstructionProblem p;
    Vec l(4);
    l << 1.0, 0.25, -1.0, -2.75;
    p.eigenvalues = l;
    p.forcing = [](double t) { return Vec(Vec::Constant(4, std::exp(-t * t))); };
    p.forcing_rate = -6.0;
    p.forcing_budget = 2.0 * std::exp(9.0);  // e^{-t^2} <= e^{9 - 6t}
    const auto out = fast_decay_solve(p, {0.5, 1.5, 2.5});
    ASSERT_EQ(out.size(), 3u);
    for (const auto& e : out) {
        EXPECT_TRUE(e.certified) << e.target << " achieved " << e.achieved;
        EXPECT_LE(e.theta, -(e.target - 1.0));
    }
    EXPECT_LT(out[0].horizon, out[2].horizon);
}

// --- export -------------------------------------------------------------------------

TEST(Export, TraceAndContractionCsv) {
    const StrataSolution S = build_S_forward(bg3(), sd3(), {{essential(2), 1e-3}});
    const FlowTrace tr = to_trace(bg3(), sd3(), S.solution, 2.0);
    ASSERT_GT(tr.size(), 100u);
    EXPECT_NEAR(tr.tau.front(), 0.0, 1e-12);
    EXPECT_NEAR(tr.tau.back(), 2.0, 1e-9);
    EXPECT_NEAR(tr.l2f_norm[0], S.solution.at(0.0).norm(), 1e-12);

    std::ostringstream os;
    write_contraction_csv(os, S.solution);
    const std::string out = os.str();
    EXPECT_EQ(out.rfind("iteration,increment,contraction_factor\n", 0), 0u);
    EXPECT_EQ(static_cast<int>(std::count(out.begin(), out.end(), '\n')), S.solution.iterations + 1);
}

TEST(ModeNonlinearity, VanishesOnConformalAndIsQuadratic) {
    const ModeField Q = rdtf_mode_nonlinearity(bg3(), sd3());
    EXPECT_LT(Q(0, unit(sd3().size(), ric(), 1e-2)).norm(), 1e-15);
    const Vec d = unit(sd3().size(), essential(2)) + unit(sd3().size(), generic(3));
    const double q1 = Q(0, 1e-3 * d).norm(), q2 = Q(0, 1e-4 * d).norm();
    EXPECT_NEAR(std::log10(q1 / q2), 2.0, 0.02);
}
