#pragma once

/** @file
 * Eigendecomposition, generic/essential classification and mode projections.
 */

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "riccilab/core/errors.hpp"
#include "riccilab/spectral/operator.hpp"

namespace riccilab {

enum class ModeSign { unstable, neutral, stable };
enum class ModeClass { generic, essential, vector };

inline const char* to_string(ModeSign s) {
    switch (s) {
        case ModeSign::unstable: return "unstable";
        case ModeSign::neutral: return "neutral";
        default: return "stable";
    }
}

inline const char* to_string(ModeClass c) {
    switch (c) {
        case ModeClass::generic: return "generic";
        case ModeClass::essential: return "essential";
        default: return "vector";
    }
}

struct Mode {
    double eigenvalue = 0.0;
    Vec coeffs;  // flat coefficients, L^2_f-normalized
    int degree = 0;
    ModeSign sign = ModeSign::neutral;
    ModeClass cls = ModeClass::vector;
    double residual = 0.0;
};

struct SpectralDecomposition {
    OperatorKind kind = OperatorKind::L_tensor;
    int n = 0;
    int lmax = 0;
    Mat gram;
    std::vector<Mode> modes;  // eigenvalues non-increasing
    int I = 0;                // # unstable
    int K = 0;                // # neutral
    int I_ess = 0;            // # essential unstable
    double lambda_plus = 0.0;   // smallest positive eigenvalue
    double lambda_minus = 0.0;  // minus the largest negative eigenvalue

    int size() const { return static_cast<int>(modes.size()); }

    /// L^2_f coordinates <x, e_i> of a flat coefficient vector.
    Vec coordinates(const Vec& x) const {
        Vec a(size());
        const Vec Gx = gram * x;
        for (int i = 0; i < size(); ++i) a(i) = modes[i].coeffs.dot(Gx);
        return a;
    }

    Vec synthesize(const Vec& coords) const {
        Vec x = Vec::Zero(gram.rows());
        for (int i = 0; i < size(); ++i) x += coords(i) * modes[i].coeffs;
        return x;
    }

    Vec eigenvalues() const {
        Vec v(size());
        for (int i = 0; i < size(); ++i) v(i) = modes[i].eigenvalue;
        return v;
    }

    /// First mode of the given degree and class, or -1.
    int find(int degree, ModeClass cls) const {
        for (int i = 0; i < size(); ++i)
            if (modes[i].degree == degree && modes[i].cls == cls) return i;
        return -1;
    }
};

inline constexpr double kNeutralTol = 1e-10;
inline constexpr double kEigenspaceTol = 1e-8;

// --- P_Lie ---------------------------------------------------------------------

/// Solves div div* X = -1/2 div h per degree (the vector field whose Lie
/// derivative is the generic part of h).
inline AxisymVector lie_generator(const SphereBackground& bg, const AxisymTensor& h) {
    const AxisymVector dv = div_f(bg, h);
    AxisymVector X(bg.lmax());
    for (int l = 1; l <= bg.lmax(); ++l) {
        const double k = bg.laplace_eigenvalue(l) - 0.5;  // div div* grad(phi_l) = k grad(phi_l)
        if (std::abs(k) < 1e-12)
            throw NumericalError("P_Lie: singular solve at degree " + std::to_string(l) + " (Killing field)");
        X.e(l) = -0.5 * dv.e(l) / k;
    }
    return X;
}

/// L^2_f projection onto Im div* (Lie derivatives of the background).
inline AxisymTensor project_lie(const SphereBackground& bg, const AxisymTensor& h) {
    return lie_derivative(bg, lie_generator(bg, h));
}

// --- Decomposition -------------------------------------------------------------

namespace detail {

inline void fix_sign(Vec& v) {
    Eigen::Index i;
    v.cwiseAbs().maxCoeff(&i);
    if (v(i) < 0) v = -v;
}

inline ModeSign sign_of(double lam) {
    if (lam > kNeutralTol) return ModeSign::unstable;
    if (lam < -kNeutralTol) return ModeSign::stable;
    return ModeSign::neutral;
}

}  // namespace detail

/// Full spectrum of the truncated operator, solved block by block with the
/// generalized symmetric eigensolver (G A symmetric, G positive definite).
/// Tensor modes are left unclassified; see classify_modes.
inline SpectralDecomposition eigendecompose(const DiscreteOperator& op) {
    if (op.self_adjoint_residual() > 1e-10)
        throw NumericalError("eigendecompose: operator is not L^2_f self-adjoint (residual " +
                             std::to_string(op.self_adjoint_residual()) + ")");
    SpectralDecomposition sd;
    sd.kind = op.kind;
    sd.n = op.n;
    sd.lmax = op.lmax;
    sd.gram = op.gram();
    const int N = op.size();
    for (const auto& b : op.blocks) {
        const Mat S = 0.5 * (b.G * b.A + (b.G * b.A).transpose());
        Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(S, b.G);
        if (es.info() != Eigen::Success)
            throw NumericalError("eigendecompose: eigensolver failed on degree-" + std::to_string(b.degree) + " block");
        for (int j = 0; j < es.eigenvalues().size(); ++j) {
            Mode m;
            m.eigenvalue = es.eigenvalues()(j);
            m.coeffs = Vec::Zero(N);
            m.coeffs.segment(b.offset, b.A.rows()) = es.eigenvectors().col(j);
            m.degree = b.degree;
            m.sign = detail::sign_of(m.eigenvalue);
            const Vec r = b.A * es.eigenvectors().col(j) - m.eigenvalue * es.eigenvectors().col(j);
            m.residual = std::sqrt(std::max(0.0, r.dot(b.G * r)));
            sd.modes.push_back(std::move(m));
        }
    }
    std::stable_sort(sd.modes.begin(), sd.modes.end(),
                     [](const Mode& a, const Mode& b) { return a.eigenvalue > b.eigenvalue; });
    return sd;
}

namespace detail {

inline void finalize_indices(SpectralDecomposition& sd) {
    sd.I = sd.K = sd.I_ess = 0;
    sd.lambda_plus = 0.0;
    sd.lambda_minus = 0.0;
    for (const auto& m : sd.modes) {
        if (m.sign == ModeSign::unstable) {
            ++sd.I;
            if (m.cls == ModeClass::essential) ++sd.I_ess;
            sd.lambda_plus = m.eigenvalue;
        } else if (m.sign == ModeSign::neutral) {
            ++sd.K;
        } else if (sd.lambda_minus == 0.0) {
            sd.lambda_minus = -m.eigenvalue;
        }
    }
}

}  // namespace detail

/// Splits every eigenspace into its generic (Im div*) and essential (Ker div_f)
/// parts by diagonalizing P_Lie restricted to the eigenspace, then fixes the
/// remaining freedom by (eigenvalue desc, class, degree, (c,d) angle).
inline SpectralDecomposition classify_modes(const SphereBackground& bg, SpectralDecomposition sd) {
    if (sd.kind == OperatorKind::frakL_vector) {
        for (auto& m : sd.modes) m.cls = ModeClass::vector;
        detail::finalize_indices(sd);
        return sd;
    }
    const Mat& G = sd.gram;
    const int L = bg.lmax();
    std::vector<Mode> out;
    std::size_t i = 0;
    while (i < sd.modes.size()) {
        std::size_t j = i + 1;
        const double lam = sd.modes[i].eigenvalue;
        while (j < sd.modes.size() &&
               std::abs(sd.modes[j].eigenvalue - lam) <= kEigenspaceTol * (1.0 + std::abs(lam)))
            ++j;
        const int dim = static_cast<int>(j - i);
        Mat V(G.rows(), dim);
        for (int k = 0; k < dim; ++k) V.col(k) = sd.modes[i + k].coeffs;
        Mat PV(G.rows(), dim);
        for (int k = 0; k < dim; ++k) PV.col(k) = project_lie(bg, AxisymTensor(L, V.col(k))).coeffs();
        Mat M = V.transpose() * G * PV;
        M = 0.5 * (M + M.transpose());
        Eigen::SelfAdjointEigenSolver<Mat> es(M);
        for (int k = 0; k < dim; ++k) {
            const double p = es.eigenvalues()(k);
            if (p > 1e-7 && p < 1 - 1e-7)
                throw NumericalError("classify_modes: eigenspace at " + std::to_string(lam) +
                                     " is not split by P_Lie (overlap " + std::to_string(p) + ")");
            Mode m;
            m.eigenvalue = lam;
            m.coeffs = V * es.eigenvectors().col(k);
            // Re-orthonormalize against G.
            m.coeffs /= std::sqrt(m.coeffs.dot(G * m.coeffs));
            detail::fix_sign(m.coeffs);
            m.cls = p > 0.5 ? ModeClass::generic : ModeClass::essential;
            m.sign = detail::sign_of(lam);
            // Dominant degree by block L^2_f mass.
            double best = -1;
            for (int l = 0; l <= L; ++l) {
                const int o = TensorLayout::c_index(l), w = l >= 2 ? 2 : 1;
                const Vec seg = m.coeffs.segment(o, w);
                const double mass = seg.dot(G.block(o, o, w, w) * seg);
                if (mass > best) best = mass, m.degree = l;
            }
            const AxisymTensor e(L, m.coeffs);
            const Vec r = (apply_L(bg, e) - lam * e).coeffs();
            m.residual = std::sqrt(std::max(0.0, r.dot(G * r)));
            out.push_back(std::move(m));
        }
        i = j;
    }
    const auto angle = [](const Mode& m) {
        const int o = TensorLayout::c_index(m.degree);
        return m.degree >= 2 ? std::atan2(m.coeffs(o + 1), m.coeffs(o)) : 0.0;
    };
    std::stable_sort(out.begin(), out.end(), [&](const Mode& a, const Mode& b) {
        if (std::abs(a.eigenvalue - b.eigenvalue) > kEigenspaceTol * (1.0 + std::abs(a.eigenvalue)))
            return a.eigenvalue > b.eigenvalue;
        if (a.cls != b.cls) return a.cls == ModeClass::essential;
        if (a.degree != b.degree) return a.degree < b.degree;
        return angle(a) < angle(b);
    });
    sd.modes = std::move(out);
    detail::finalize_indices(sd);
    return sd;
}

/// assemble + eigendecompose + classify.
inline SpectralDecomposition spectrum(const SphereBackground& bg, OperatorKind kind = OperatorKind::L_tensor) {
    return classify_modes(bg, eigendecompose(assemble_operator(bg, kind)));
}

// --- Projections ---------------------------------------------------------------

/// Mode selector: sign set, class set and an optional eigenvalue floor.
struct Selector {
    bool unstable = false, neutral = false, stable = false;
    bool generic = true, essential = true;
    double min_eigenvalue = -std::numeric_limits<double>::infinity();

    bool accepts(const Mode& m) const {
        const bool s = (m.sign == ModeSign::unstable && unstable) || (m.sign == ModeSign::neutral && neutral) ||
                       (m.sign == ModeSign::stable && stable);
        const bool c = m.cls == ModeClass::vector || (m.cls == ModeClass::generic && generic) ||
                       (m.cls == ModeClass::essential && essential);
        return s && c && m.eigenvalue >= min_eigenvalue;
    }

    static Selector all() { return {true, true, true}; }
    static Selector plus() { return {true, false, false}; }
    static Selector minus() { return {false, false, true}; }
    static Selector zero() { return {false, true, false}; }
    static Selector lie() { return {true, true, true, true, false}; }
    static Selector ess() { return {true, true, true, false, true}; }
    /// Generic modes with eigenvalue >= lam.
    static Selector lie_at_least(double lam) { return {true, true, true, true, false, lam}; }

    Selector operator&(const Selector& o) const {
        return {unstable && o.unstable, neutral && o.neutral, stable && o.stable, generic && o.generic,
                essential && o.essential, std::max(min_eigenvalue, o.min_eigenvalue)};
    }

    /// Parses "+", "-", "0", "Lie", "ess", "Lie>=x" and '&'-joined combinations.
    static Selector parse(const std::string& text) {
        Selector s = all();
        std::stringstream ss(text);
        std::string tok;
        while (std::getline(ss, tok, '&')) {
            if (tok == "+") s = s & plus();
            else if (tok == "-") s = s & minus();
            else if (tok == "0") s = s & zero();
            else if (tok == "Lie") s = s & lie();
            else if (tok == "ess") s = s & ess();
            else if (tok.rfind("Lie>=", 0) == 0) s = s & lie_at_least(std::stod(tok.substr(5)));
            else throw ParameterError("project: unknown selector '" + tok + "'");
        }
        return s;
    }
};

inline Vec project(const SpectralDecomposition& sd, const Vec& x, const Selector& sel) {
    Vec out = Vec::Zero(x.size());
    const Vec Gx = sd.gram * x;
    for (const auto& m : sd.modes)
        if (sel.accepts(m)) out += m.coeffs.dot(Gx) * m.coeffs;
    return out;
}

inline AxisymTensor project(const SpectralDecomposition& sd, const AxisymTensor& h, const Selector& sel) {
    return AxisymTensor(h.lmax(), project(sd, h.coeffs(), sel));
}

inline AxisymTensor project(const SpectralDecomposition& sd, const AxisymTensor& h, const std::string& sel) {
    return project(sd, h, Selector::parse(sel));
}

/// H_W weights 1 + max(0, -lambda_i).
inline Vec hw_weights(const SpectralDecomposition& sd) {
    Vec w(sd.size());
    for (int i = 0; i < sd.size(); ++i) w(i) = 1.0 + std::max(0.0, -sd.modes[i].eigenvalue);
    return w;
}

/// ||h||^2_{H_W} from mode coordinates.
inline double hw_norm_squared(const SpectralDecomposition& sd, const Vec& x) {
    const Vec a = sd.coordinates(x);
    return a.cwiseProduct(a).dot(hw_weights(sd));
}

/// ||h||^2 - <P^- h, L P^- h> evaluated with the operator itself.
inline double hw_norm_squared_direct(const SphereBackground& bg, const SpectralDecomposition& sd,
                                     const AxisymTensor& h) {
    const AxisymTensor pm = project(sd, h, Selector::minus());
    return inner(bg, h, h) - inner(bg, pm, apply_L(bg, pm));
}

}  // namespace riccilab
