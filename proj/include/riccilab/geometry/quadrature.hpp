#pragma once

/** @file
 * Gauss quadrature in u = cos(theta) for the normalized zonal measure on S^n.
 *
 * The volume form of the round S^n restricted to axisymmetric integrands is
 * proportional to sin^{n-1}(theta) d(theta) = (1-u^2)^{(n-2)/2} du. The nodes
 * below are Gauss-Gegenbauer nodes for that weight (Gauss-Legendre when
 * n = 2), and the weights are normalized to sum to one, so that a weighted sum
 * equals (4 pi)^{-n/2} int F e^{-f} dvol at the shrinker normalization.
 */

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "riccilab/core/errors.hpp"

namespace riccilab {

/// Three-term recurrence of the orthonormal Gegenbauer family with parameter
/// lambda = (n-1)/2 under the normalized measure: u p_k = b_{k+1} p_{k+1} + b_k p_{k-1}.
class GegenbauerRecurrence {
public:
    GegenbauerRecurrence() = default;
    GegenbauerRecurrence(int n, int max_degree) : lambda_(0.5 * (n - 1)), b_(max_degree + 2, 0.0) {
        for (int k = 1; k < static_cast<int>(b_.size()); ++k) {
            const double kk = k;
            const double beta =
                kk * (kk + 2.0 * lambda_ - 1.0) / (4.0 * (kk + lambda_) * (kk + lambda_ - 1.0));
            b_[k] = std::sqrt(beta);
        }
    }

    double b(int k) const { return b_[k]; }
    int max_degree() const { return static_cast<int>(b_.size()) - 2; }

    /// Values and derivatives up to order `Order` of p_0..p_degree at u.
    /// out[m][k] = d^m p_k / du^m.
    template <int Order>
    void evaluate(double u, int degree, std::array<std::vector<double>, Order + 1>& out) const {
        for (auto& row : out) row.assign(degree + 1, 0.0);
        out[0][0] = 1.0;
        if (degree == 0) return;
        for (int k = 0; k < degree; ++k) {
            for (int m = 0; m <= Order; ++m) {
                double v = u * out[m][k];
                if (m > 0) v += m * out[m - 1][k];
                if (k > 0) v -= b_[k] * out[m][k - 1];
                out[m][k + 1] = v / b_[k + 1];
            }
        }
    }

private:
    double lambda_ = 0.5;
    std::vector<double> b_;
};

/// Nodes u_k in (-1, 1) and positive weights summing to one.
struct QuadratureGrid {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const { return nodes.size(); }

    /// Gauss rule with `count` nodes for the weight (1-u^2)^{(n-2)/2}; exact
    /// for polynomials of degree <= 2*count - 1.
    static QuadratureGrid gauss(int n, int count) {
        if (count < 1) throw ParameterError("quadrature: node count must be positive");
        GegenbauerRecurrence rec(n, count + 1);
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(count, count);
        for (int k = 1; k < count; ++k) {
            jac(k, k - 1) = rec.b(k);
            jac(k - 1, k) = rec.b(k);
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac, Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) throw NumericalError("quadrature: Jacobi matrix eigensolve failed");

        QuadratureGrid grid;
        grid.nodes.resize(count);
        grid.weights.resize(count);
        std::array<std::vector<double>, 2> vals;
        for (int j = 0; j < count; ++j) {
            double u = es.eigenvalues()(j);
            // Newton polish on p_count.
            for (int it = 0; it < 4; ++it) {
                rec.evaluate<1>(u, count, vals);
                const double step = vals[0][count] / vals[1][count];
                u -= step;
                if (std::abs(step) < 1e-17) break;
            }
            rec.evaluate<1>(u, count, vals);
            double s = 0.0;
            for (int k = 0; k < count; ++k) s += vals[0][k] * vals[0][k];
            grid.nodes[j] = u;
            grid.weights[j] = 1.0 / s;
        }
        return grid;
    }

    template <class F>
    double integrate(F&& f) const {
        double acc = 0.0;
        for (std::size_t k = 0; k < nodes.size(); ++k) acc += weights[k] * f(nodes[k]);
        return acc;
    }
};

}  // namespace riccilab
