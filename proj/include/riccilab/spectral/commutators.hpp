#pragma once

/** @file
 * Commutator identities between L, frakL, div_0 and div* on an Einstein
 * shrinker, evaluated as numerical residuals, plus index bookkeeping.
 */

#include <cstdint>
#include <ostream>
#include <random>

#include "riccilab/spectral/decomposition.hpp"

namespace riccilab {

struct CommutatorReport {
    int samples = 0;
    double lie_div_zero = 0.0;      // div_0(L_Z g) = (Delta + Ric) Z
    double L_intertwines = 0.0;     // L div* = div* frakL
    double L_on_image = 0.0;        // L h = -2 div* div_0 h on Im div*
    double isomorphism = 0.0;       // (-2 div*) div_0 = lambda id on generic eigenspaces
    double onto_frakL = 0.0;        // div_0 e is a frakL eigenvector with the same eigenvalue
    double max() const { return std::max({lie_div_zero, L_intertwines, L_on_image, isomorphism, onto_frakL}); }
};

namespace detail {
inline double rel(double num, double den) { return den > 0 ? num / den : num; }
}  // namespace detail

/// Residuals are relative to the input norm. Z is drawn from a seeded normal
/// distribution over vector coefficients.
inline CommutatorReport commutator_report(const SphereBackground& bg, int n_samples, std::uint64_t seed = 1) {
    if (bg.has_potential()) throw CapabilityError("commutator_report: requires an Einstein background");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    const int L = bg.lmax();
    CommutatorReport rep;
    rep.samples = n_samples;
    for (int s = 0; s < n_samples; ++s) {
        AxisymVector Z(L);
        for (int i = 0; i < L; ++i) Z.coeffs()(i) = nd(rng);
        const double nz = norm(bg, Z);

        // Lie derivative taken on the grid, then projected.
        const AxisymTensor lz = bg.analyze(grid_lie_derivative(bg, bg.synthesize(Z), bg.synthesize(AxisymTensor(L))));
        const AxisymVector lhs1 = div_zero(bg, lz);
        const AxisymVector rhs1 = rough_laplacian_f(bg, Z) + 0.5 * Z;
        rep.lie_div_zero = std::max(rep.lie_div_zero, detail::rel(norm(bg, lhs1 - rhs1), nz));

        const AxisymTensor lhs2 = apply_L(bg, div_star_f(bg, Z));
        const AxisymTensor rhs2 = div_star_f(bg, apply_frakL(bg, Z));
        rep.L_intertwines = std::max(rep.L_intertwines, detail::rel(norm(bg, lhs2 - rhs2), nz));

        const AxisymTensor h = div_star_f(bg, Z);
        const AxisymTensor lhs3 = apply_L(bg, h);
        const AxisymTensor rhs3 = -2.0 * div_star_f(bg, div_zero(bg, h));
        rep.L_on_image = std::max(rep.L_on_image, detail::rel(norm(bg, lhs3 - rhs3), norm(bg, h)));
    }
    const SpectralDecomposition sd = spectrum(bg);
    for (const auto& m : sd.modes) {
        if (m.cls != ModeClass::generic || std::abs(m.eigenvalue) <= kNeutralTol) continue;
        const AxisymTensor e(L, m.coeffs);
        const AxisymVector d0 = div_zero(bg, e);
        const AxisymTensor back = -2.0 * div_star_f(bg, d0);
        rep.isomorphism = std::max(rep.isomorphism, norm(bg, back - m.eigenvalue * e));
        const double nd0 = norm(bg, d0);
        if (nd0 == 0.0) {
            rep.onto_frakL = std::max(rep.onto_frakL, 1.0);  // div_0 must be injective here
            continue;
        }
        rep.onto_frakL = std::max(rep.onto_frakL, norm(bg, apply_frakL(bg, d0) - m.eigenvalue * d0) / nd0);
    }
    return rep;
}

struct IndexReport {
    int gen_index = 0;
    int ess_index = 0;
    int index_frakL = 0;
};

inline IndexReport index_report(const SphereBackground& bg) {
    IndexReport r;
    for (const auto& m : spectrum(bg).modes) {
        if (m.sign != ModeSign::unstable) continue;
        (m.cls == ModeClass::generic ? r.gen_index : r.ess_index)++;
    }
    for (const auto& m : spectrum(bg, OperatorKind::frakL_vector).modes)
        if (m.sign == ModeSign::unstable) ++r.index_frakL;
    return r;
}

/// Spectrum CSV with columns l,eigenvalue,class,sign,residual.
inline void write_spectrum_csv(std::ostream& os, const SpectralDecomposition& sd) {
    os << "l,eigenvalue,class,sign,residual\n";
    os.precision(15);
    for (const auto& m : sd.modes)
        os << m.degree << ',' << m.eigenvalue << ',' << to_string(m.cls) << ',' << to_string(m.sign) << ','
           << m.residual << '\n';
}

}  // namespace riccilab
