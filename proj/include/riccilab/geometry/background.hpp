#pragma once

/** @file
 * The round shrinker S^n(r), r^2 = 2(n-1), with its zonal basis tables.
 */

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "riccilab/core/errors.hpp"
#include "riccilab/geometry/fields.hpp"
#include "riccilab/geometry/quadrature.hpp"

namespace riccilab {

class SphereBackground {
public:
    /// Builds S^n at the shrinker radius with spectral truncation `lmax`.
    /// `extra_nodes` oversamples the quadrature beyond the 3*lmax rule.
    SphereBackground(int n, int lmax, int extra_nodes = 0) : n_(n), lmax_(lmax) {
        if (n < 2) throw ParameterError("build_background: dimension n must be >= 2, got " + std::to_string(n));
        if (lmax < 4) throw ParameterError("build_background: L_max must be >= 4, got " + std::to_string(lmax));
        if (extra_nodes < 0) throw ParameterError("build_background: extra_nodes must be >= 0");
        r2_ = 2.0 * (n - 1);
        const double half = 0.5 * (n + 1);
        const double log_vol = 0.5 * n * std::log(r2_) + std::log(2.0) + half * std::log(std::numbers::pi) -
                               std::lgamma(half);
        f_const_ = log_vol - 0.5 * n * std::log(4.0 * std::numbers::pi);

        const int count = (3 * lmax + 2) / 2 + extra_nodes;
        grid_ = QuadratureGrid::gauss(n, count);
        rec_ = GegenbauerRecurrence(n, lmax + 2);
        tabulate();
        weights_f_ = Eigen::Map<const Vec>(grid_.weights.data(), grid_.size());
        potential_ = Vec::Zero(grid_.size());
        potential_u_ = Vec::Zero(grid_.size());
    }

    int n() const { return n_; }
    int lmax() const { return lmax_; }
    double radius() const { return std::sqrt(r2_); }
    double r2() const { return r2_; }
    double sectional_curvature() const { return 1.0 / r2_; }
    double scalar_curvature() const { return n_ * (n_ - 1) / r2_; }
    double f_const() const { return f_const_; }
    const QuadratureGrid& grid() const { return grid_; }
    int nodes() const { return static_cast<int>(grid_.size()); }
    const Vec& u() const { return u_; }
    /// 1 - u^2 = sin^2(theta) at the nodes.
    const Vec& s2() const { return s2_; }
    const Vec& weights() const { return w_; }

    /// Positive Laplace eigenvalue l(l+n-1)/r^2 of phi_l.
    double laplace_eigenvalue(int l) const { return l * (l + n_ - 1) / r2_; }

    /// d^m phi_l/du^m at the nodes, m = 0..4.
    const Vec& phi(int l, int m = 0) const { return phi_[m][l]; }

    /// phi_l^{(m)} at an arbitrary point; out[m][l].
    void phi_at(double u, std::array<std::vector<double>, 5>& out) const { rec_.evaluate<4>(u, lmax_, out); }

    /// Weighted-measure weights w_k e^{-(f - f_const)} at the nodes. Equal to
    /// weights() unless a synthetic potential was injected.
    const Vec& weights_f() const { return weights_f_; }
    const Vec& potential() const { return potential_; }
    const Vec& potential_u() const { return potential_u_; }
    bool has_potential() const { return has_potential_; }

    /// Injects a non-constant zonal potential f = f_const + psi(u) used only by
    /// the grid-level weighted operators. No shrinker identity holds afterwards.
    SphereBackground with_potential(const std::function<double(double)>& psi,
                                    const std::function<double(double)>& psi_u) const {
        SphereBackground out = *this;
        out.has_potential_ = true;
        for (int k = 0; k < nodes(); ++k) {
            out.potential_(k) = psi(u_(k));
            out.potential_u_(k) = psi_u(u_(k));
            out.weights_f_(k) = w_(k) * std::exp(-out.potential_(k));
        }
        return out;
    }

    // --- Tensor synthesis / analysis -------------------------------------

    TensorJet synthesize(const AxisymTensor& h) const {
        check_lmax(h.lmax());
        const int N = nodes();
        TensorJet j{Vec::Zero(N), Vec::Zero(N), Vec::Zero(N), Vec::Zero(N),
                    Vec::Zero(N), Vec::Zero(N), Vec::Zero(N), Vec::Zero(N)};
        const double ir2 = 1.0 / r2_;
        for (int l = 0; l <= lmax_; ++l) {
            const double c = h.c(l);
            if (c != 0.0) {
                j.a += c * phi(l, 0);
                j.b += c * phi(l, 0);
                j.a_u += c * phi(l, 1);
                j.b_u += c * phi(l, 1);
                j.a_uu += c * phi(l, 2);
                j.b_uu += c * phi(l, 2);
            }
            if (l < 2) continue;
            const double d = h.d(l) * ir2;
            if (d == 0.0) continue;
            const Vec& p1 = phi(l, 1);
            const Vec& p2 = phi(l, 2);
            const Vec& p3 = phi(l, 3);
            const Vec& p4 = phi(l, 4);
            j.a += d * (s2_.cwiseProduct(p2) - u_.cwiseProduct(p1));
            j.b += d * (-u_.cwiseProduct(p1));
            j.q += d * p2;
            j.a_u += d * (s2_.cwiseProduct(p3) - 3.0 * u_.cwiseProduct(p2) - p1);
            j.b_u += d * (-p1 - u_.cwiseProduct(p2));
            j.q_u += d * p3;
            j.a_uu += d * (s2_.cwiseProduct(p4) - 5.0 * u_.cwiseProduct(p3) - 4.0 * p2);
            j.b_uu += d * (-2.0 * p2 - u_.cwiseProduct(p3));
        }
        return j;
    }

    /// L^2 projection of grid values (a, b) onto the truncated sector.
    AxisymTensor analyze(const Vec& a, const Vec& b) const {
        AxisymTensor h(lmax_);
        const double ir2 = 1.0 / r2_;
        const Vec tr = a + (n_ - 1) * b;
        for (int l = 0; l <= lmax_; ++l) {
            const double rc = w_.dot(tr.cwiseProduct(phi(l, 0)));
            if (l < 2) {
                h.c(l) = rc / n_;
                continue;
            }
            const Vec A = ir2 * (s2_.cwiseProduct(phi(l, 2)) - u_.cwiseProduct(phi(l, 1)));
            const Vec B = -ir2 * u_.cwiseProduct(phi(l, 1));
            const double rd = w_.dot(a.cwiseProduct(A) + (n_ - 1) * b.cwiseProduct(B));
            const double lam = laplace_eigenvalue(l);
            const double g11 = n_, g12 = -lam, g22 = lam * lam - 0.5 * lam;
            const double det = g11 * g22 - g12 * g12;
            h.c(l) = (g22 * rc - g12 * rd) / det;
            h.d(l) = (g11 * rd - g12 * rc) / det;
        }
        return h;
    }

    AxisymTensor analyze(const TensorGrid& g) const { return analyze(g.a, g.b); }

    /// Grid values (a, b) of a tensor at arbitrary points u.
    std::pair<double, double> evaluate(const AxisymTensor& h, double u) const {
        std::array<std::vector<double>, 5> p;
        phi_at(u, p);
        double a = 0.0, b = 0.0;
        const double s2 = 1.0 - u * u;
        for (int l = 0; l <= lmax_; ++l) {
            a += h.c(l) * p[0][l];
            b += h.c(l) * p[0][l];
            if (l >= 2) {
                const double d = h.d(l) / r2_;
                a += d * (s2 * p[2][l] - u * p[1][l]);
                b += d * (-u * p[1][l]);
            }
        }
        return {a, b};
    }

    // --- Vector synthesis / analysis -------------------------------------

    VectorJet synthesize(const AxisymVector& X) const {
        check_lmax(X.lmax());
        const int N = nodes();
        VectorJet j{Vec::Zero(N), Vec::Zero(N), Vec::Zero(N)};
        for (int l = 1; l <= lmax_; ++l) {
            const double e = X.e(l) / r2_;
            if (e == 0.0) continue;
            j.xi -= e * phi(l, 1);
            j.xi_u -= e * phi(l, 2);
            j.xi_uu -= e * phi(l, 3);
        }
        return j;
    }

    AxisymVector analyze_vector(const Vec& xi) const {
        AxisymVector X(lmax_);
        const Vec sx = s2_.cwiseProduct(xi);
        for (int l = 1; l <= lmax_; ++l) X.e(l) = -w_.dot(sx.cwiseProduct(phi(l, 1))) / laplace_eigenvalue(l);
        return X;
    }

    /// xi(u) of a vector field at an arbitrary point.
    double evaluate_xi(const AxisymVector& X, double u) const {
        std::array<std::vector<double>, 5> p;
        phi_at(u, p);
        double xi = 0.0;
        for (int l = 1; l <= lmax_; ++l) xi -= X.e(l) * p[1][l] / r2_;
        return xi;
    }

    // --- Scalars ---------------------------------------------------------

    ScalarJet synthesize(const ScalarField& s) const {
        const int N = nodes();
        ScalarJet j{Vec::Zero(N), Vec::Zero(N), Vec::Zero(N)};
        for (int l = 0; l <= std::min(lmax_, s.lmax()); ++l) {
            const double c = s.coeffs()(l);
            j.s += c * phi(l, 0);
            j.s_u += c * phi(l, 1);
            j.s_uu += c * phi(l, 2);
        }
        return j;
    }

    ScalarField analyze_scalar(const Vec& values) const {
        ScalarField s(lmax_);
        for (int l = 0; l <= lmax_; ++l) s.coeffs()(l) = w_.dot(values.cwiseProduct(phi(l, 0)));
        return s;
    }

    /// Closed-form L^2_f Gram block of the degree-l tensor basis.
    Eigen::Matrix2d tensor_gram_closed_form(int l) const {
        const double lam = laplace_eigenvalue(l);
        Eigen::Matrix2d g;
        g << n_, -lam, -lam, lam * lam - 0.5 * lam;
        return g;
    }

private:
    void check_lmax(int l) const {
        if (l != lmax_) throw ParameterError("field truncation degree does not match the background");
    }

    void tabulate() {
        const int N = static_cast<int>(grid_.size());
        u_ = Eigen::Map<const Vec>(grid_.nodes.data(), N);
        w_ = Eigen::Map<const Vec>(grid_.weights.data(), N);
        s2_ = (1.0 - u_.array().square()).matrix();
        for (auto& m : phi_) m.assign(lmax_ + 1, Vec::Zero(N));
        std::array<std::vector<double>, 5> p;
        for (int k = 0; k < N; ++k) {
            rec_.evaluate<4>(u_(k), lmax_, p);
            for (int m = 0; m < 5; ++m)
                for (int l = 0; l <= lmax_; ++l) phi_[m][l](k) = p[m][l];
        }
    }

    int n_;
    int lmax_;
    double r2_ = 0.0;
    double f_const_ = 0.0;
    QuadratureGrid grid_;
    GegenbauerRecurrence rec_;
    Vec u_, w_, s2_;
    std::array<std::vector<Vec>, 5> phi_;
    bool has_potential_ = false;
    Vec weights_f_, potential_, potential_u_;
};

inline SphereBackground build_background(int n, int lmax, int extra_nodes = 0) {
    return SphereBackground(n, lmax, extra_nodes);
}

}  // namespace riccilab
