#pragma once

/** @file
 * Block assembly of the stability operators L = Delta_f + 2Rm* (tensors) and
 * frakL = Delta_f + 1/2 (vectors) in the Galerkin basis.
 */

#include <cmath>
#include <vector>

#include "riccilab/geometry/operators.hpp"

namespace riccilab {

enum class OperatorKind { L_tensor, frakL_vector };

/// Per-degree blocks A_l (coefficient action) and G_l (L^2_f Gram).
struct DiscreteOperator {
    struct Block {
        int degree = 0;
        int offset = 0;  // first flat index
        Mat A, G;
    };

    OperatorKind kind = OperatorKind::L_tensor;
    int n = 0;
    int lmax = 0;
    std::vector<Block> blocks;

    int size() const {
        int s = 0;
        for (const auto& b : blocks) s += static_cast<int>(b.A.rows());
        return s;
    }

    Mat matrix() const { return assemble(&Block::A); }
    Mat gram() const { return assemble(&Block::G); }

    /// max_l ||G A - (G A)^T|| / ||G A||: zero for an L^2_f self-adjoint operator.
    double self_adjoint_residual() const {
        double r = 0.0;
        for (const auto& b : blocks) {
            const Mat S = b.G * b.A;
            const double s = S.norm();
            if (s > 0) r = std::max(r, (S - S.transpose()).norm() / s);
        }
        return r;
    }

private:
    Mat assemble(Mat Block::*m) const {
        const int s = size();
        Mat out = Mat::Zero(s, s);
        for (const auto& b : blocks) out.block(b.offset, b.offset, b.A.rows(), b.A.cols()) = b.*m;
        return out;
    }
};

/// Builds the blocks column by column from the operator action on basis elements.
inline DiscreteOperator assemble_operator(const SphereBackground& bg, OperatorKind kind) {
    DiscreteOperator op;
    op.kind = kind;
    op.n = bg.n();
    op.lmax = bg.lmax();
    const int L = bg.lmax();
    if (kind == OperatorKind::L_tensor) {
        const Mat G = tensor_gram(bg);
        for (int l = 0; l <= L; ++l) {
            DiscreteOperator::Block b;
            b.degree = l;
            b.offset = TensorLayout::c_index(l);
            const int m = l >= 2 ? 2 : 1;
            b.A.resize(m, m);
            for (int j = 0; j < m; ++j) {
                AxisymTensor e(L);
                e.coeffs()(b.offset + j) = 1.0;
                b.A.col(j) = apply_L(bg, e).coeffs().segment(b.offset, m);
            }
            b.G = G.block(b.offset, b.offset, m, m);
            op.blocks.push_back(std::move(b));
        }
    } else {
        for (int l = 1; l <= L; ++l) {
            DiscreteOperator::Block b;
            b.degree = l;
            b.offset = l - 1;
            AxisymVector e(L);
            e.e(l) = 1.0;
            b.A = Mat::Constant(1, 1, apply_frakL(bg, e).e(l));
            b.G = Mat::Constant(1, 1, bg.laplace_eigenvalue(l));
            op.blocks.push_back(std::move(b));
        }
    }
    return op;
}

}  // namespace riccilab
