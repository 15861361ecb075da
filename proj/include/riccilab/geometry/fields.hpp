#pragma once

/** @file
 * Axisymmetric fields on the round S^n in the scalar-derived sector.
 *
 * Coefficient representation (Galerkin):
 *   tensors  h = sum_l c_l phi_l g + sum_{l>=2} d_l Hess(phi_l)
 *   vectors  X = sum_{l>=1} e_l grad(phi_l)
 *   scalars  s = sum_l s_l phi_l
 * where phi_l is the L^2_f-normalized zonal eigenfunction of degree l. At
 * l = 1 the Hessian is a multiple of phi_1 g on the round sphere, so the
 * degree-1 tensor block is one-dimensional.
 *
 * Grid representation: h = a r^2 dtheta^2 + b r^2 sin^2(theta) g_{S^{n-1}},
 * X = sin(theta) xi(u) d/dtheta, all as functions of u = cos(theta). The
 * regular quotient q = (a - b)/(1 - u^2) is carried explicitly.
 */

#include <cassert>
#include <utility>

#include "riccilab/core/types.hpp"

namespace riccilab {

/// Flat index layout of tensor coefficients: [c0, c1, c2, d2, c3, d3, ...].
struct TensorLayout {
    static int size(int lmax) { return 2 * lmax; }
    static int c_index(int l) { return l <= 1 ? l : 2 * l - 2; }
    static int d_index(int l) {
        assert(l >= 2);
        return 2 * l - 1;
    }
    /// Degree of flat index j.
    static int degree(int j) { return j <= 1 ? j : (j + 2) / 2; }
    static bool is_hessian(int j) { return j >= 2 && (j % 2 == 1); }
};

class AxisymTensor {
public:
    AxisymTensor() = default;
    explicit AxisymTensor(int lmax) : lmax_(lmax), coeffs_(Vec::Zero(TensorLayout::size(lmax))) {}
    AxisymTensor(int lmax, Vec coeffs) : lmax_(lmax), coeffs_(std::move(coeffs)) {
        assert(coeffs_.size() == TensorLayout::size(lmax));
    }

    int lmax() const { return lmax_; }
    const Vec& coeffs() const { return coeffs_; }
    Vec& coeffs() { return coeffs_; }

    double c(int l) const { return coeffs_(TensorLayout::c_index(l)); }
    double& c(int l) { return coeffs_(TensorLayout::c_index(l)); }
    double d(int l) const { return l >= 2 ? coeffs_(TensorLayout::d_index(l)) : 0.0; }
    double& d(int l) { return coeffs_(TensorLayout::d_index(l)); }

    AxisymTensor& operator+=(const AxisymTensor& o) { coeffs_ += o.coeffs_; return *this; }
    AxisymTensor& operator-=(const AxisymTensor& o) { coeffs_ -= o.coeffs_; return *this; }
    AxisymTensor& operator*=(double s) { coeffs_ *= s; return *this; }
    friend AxisymTensor operator+(AxisymTensor a, const AxisymTensor& b) { return a += b; }
    friend AxisymTensor operator-(AxisymTensor a, const AxisymTensor& b) { return a -= b; }
    friend AxisymTensor operator*(double s, AxisymTensor a) { return a *= s; }

private:
    int lmax_ = 0;
    Vec coeffs_;
};

/// Vector coefficients, flat index l-1 holds e_l.
class AxisymVector {
public:
    AxisymVector() = default;
    explicit AxisymVector(int lmax) : lmax_(lmax), coeffs_(Vec::Zero(lmax)) {}
    AxisymVector(int lmax, Vec coeffs) : lmax_(lmax), coeffs_(std::move(coeffs)) {
        assert(coeffs_.size() == lmax);
    }

    int lmax() const { return lmax_; }
    const Vec& coeffs() const { return coeffs_; }
    Vec& coeffs() { return coeffs_; }
    double e(int l) const { return coeffs_(l - 1); }
    double& e(int l) { return coeffs_(l - 1); }

    AxisymVector& operator+=(const AxisymVector& o) { coeffs_ += o.coeffs_; return *this; }
    AxisymVector& operator-=(const AxisymVector& o) { coeffs_ -= o.coeffs_; return *this; }
    AxisymVector& operator*=(double s) { coeffs_ *= s; return *this; }
    friend AxisymVector operator+(AxisymVector a, const AxisymVector& b) { return a += b; }
    friend AxisymVector operator-(AxisymVector a, const AxisymVector& b) { return a -= b; }
    friend AxisymVector operator*(double s, AxisymVector a) { return a *= s; }

private:
    int lmax_ = 0;
    Vec coeffs_;
};

/// Zonal scalar, flat index l holds s_l.
class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(int lmax) : coeffs_(Vec::Zero(lmax + 1)) {}
    explicit ScalarField(Vec coeffs) : coeffs_(std::move(coeffs)) {}

    int lmax() const { return static_cast<int>(coeffs_.size()) - 1; }
    const Vec& coeffs() const { return coeffs_; }
    Vec& coeffs() { return coeffs_; }

private:
    Vec coeffs_;
};

struct TensorGrid {
    Vec a, b, q;
};

/// Grid values with u-derivatives, enough for second-order operators.
struct TensorJet {
    Vec a, b, q;
    Vec a_u, b_u, q_u;
    Vec a_uu, b_uu;

    TensorGrid values() const { return {a, b, q}; }
};

struct VectorGrid {
    Vec xi;
};

struct VectorJet {
    Vec xi, xi_u;
    Vec xi_uu;  // filled by synthesis, optional elsewhere
};

struct ScalarJet {
    Vec s, s_u, s_uu;
};

}  // namespace riccilab
