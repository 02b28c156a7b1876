// SPDX-License-Identifier: MIT
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "ntdseg/error.hpp"
#include "ntdseg/tensor.hpp"

namespace ntdseg {

/// min_{Z >= 0} ||Y - A Z||_F^2 held in normal-equation form.
struct NnlsProblem {
    Matrix gram;   // A^T A
    Matrix cross;  // A^T Y
    double scale = 0.0;  // ||Y||_F^2
    // Work spent building gram and cross, in flops. Sets the accelerated-HALS inner budget;
    // zero leaves the inner loop bounded by max_inner_iters alone.
    double setup_flops = 0.0;
};

struct SolverConfig {
    int max_inner_iters = 100;
    double inner_tolerance = 1e-8;
    double acceleration_budget = 0.5;
    // Replace a factor column that collapses to zero by 1e-12 times its previous maximum.
    bool guard_rank_collapse = false;

    void validate() const {
        if (max_inner_iters < 1) {
            throw Error(ErrorKind::invalid_argument, "max_inner_iters must be positive");
        }
        if (!(inner_tolerance >= 0.0 && inner_tolerance < 1.0)) {
            throw Error(ErrorKind::invalid_argument, "inner_tolerance must lie in [0, 1)");
        }
        if (!(acceleration_budget > 0.0)) {
            throw Error(ErrorKind::invalid_argument, "acceleration_budget must be positive");
        }
    }
};

inline NnlsProblem make_nnls_problem(const Matrix& a, const Matrix& y) {
    if (a.rows() != y.rows()) {
        throw Error(ErrorKind::dimension_mismatch, "A and Y must have the same number of rows");
    }
    NnlsProblem p;
    p.gram = a.transpose() * a;
    p.cross = a.transpose() * y;
    p.scale = y.squaredNorm();
    return p;  // setup_flops stays 0: a standalone solve is not sweep-capped
}

/// ||Y - A Z||_F^2 evaluated from the Gram form.
inline double nnls_objective(const NnlsProblem& p, const Matrix& z) {
    return p.scale - 2.0 * p.cross.cwiseProduct(z).sum() + z.cwiseProduct(p.gram * z).sum();
}

/// Gradient of 0.5 ||Y - A Z||_F^2 with respect to Z.
inline Matrix nnls_gradient(const NnlsProblem& p, const Matrix& z) { return p.gram * z - p.cross; }

namespace detail {

inline void check_problem(const NnlsProblem& p, const Matrix& z0) {
    if (p.gram.rows() != p.gram.cols()) {
        throw Error(ErrorKind::dimension_mismatch, "gram must be square");
    }
    if (p.cross.rows() != p.gram.rows()) {
        throw Error(ErrorKind::dimension_mismatch, "cross must have as many rows as gram");
    }
    if (z0.rows() != p.cross.rows() || z0.cols() != p.cross.cols()) {
        throw Error(ErrorKind::dimension_mismatch,
                    "z0 is " + std::to_string(z0.rows()) + "x" + std::to_string(z0.cols()) +
                        ", expected " + std::to_string(p.cross.rows()) + "x" +
                        std::to_string(p.cross.cols()));
    }
    if (!p.gram.allFinite() || !p.cross.allFinite() || !z0.allFinite() || !std::isfinite(p.scale)) {
        throw Error(ErrorKind::non_finite, "NNLS inputs contain NaN or infinity");
    }
    if ((z0.array() < 0.0).any()) {
        throw Error(ErrorKind::invalid_argument, "z0 must be nonnegative");
    }
}

}  // namespace detail

/// Accelerated hierarchical alternating least squares. Each sweep updates the rows of Z (the
/// columns of the factor being solved for) one at a time by exact clamped coordinate minimization.
/// Sweeps repeat until the change between sweeps drops below inner_tolerance times the change of
/// the first sweep, the inner budget is spent, or max_inner_iters is reached.
inline Matrix hals_nnls(const NnlsProblem& problem, Matrix z, const SolverConfig& cfg = {}) {
    cfg.validate();
    detail::check_problem(problem, z);

    const Eigen::Index rank = problem.gram.rows();
    const Eigen::Index cols = problem.cross.cols();
    if (rank == 0 || cols == 0) return z;

    int sweeps = cfg.max_inner_iters;
    if (problem.setup_flops > 0.0) {
        const double sweep_flops = static_cast<double>(rank) * static_cast<double>(rank) *
                                   static_cast<double>(cols);
        const double budget = 1.0 + cfg.acceleration_budget * problem.setup_flops / sweep_flops;
        sweeps = static_cast<int>(std::min<double>(sweeps, std::floor(budget)));
    }

    double first_change = 0.0;
    Eigen::RowVectorXd row;
    for (int it = 0; it < sweeps; ++it) {
        double change = 0.0;
        for (Eigen::Index k = 0; k < rank; ++k) {
            const double diag = problem.gram(k, k);
            if (diag <= 0.0) continue;  // zero column of A: Z row does not affect the objective
            row = z.row(k) + (problem.cross.row(k) - problem.gram.row(k) * z) / diag;
            row = row.cwiseMax(0.0);
            if (cfg.guard_rank_collapse && row.maxCoeff() == 0.0) {
                const double previous = z.row(k).maxCoeff();
                if (previous > 0.0) row.setConstant(1e-12 * previous);
            }
            change += (row - z.row(k)).squaredNorm();
            z.row(k) = row;
        }
        change = std::sqrt(change);
        if (change == 0.0) break;
        if (it == 0) {
            first_change = change;
        } else if (change <= cfg.inner_tolerance * first_change) {
            break;
        }
    }
    return z;
}

/// 0.5 ||x - g x_1 w x_2 h x_3 q||_F^2 expressed through precomputed quantities.
struct CoreObjective {
    double half_scale = 0.0;  // 0.5 ||x||^2
    Tensor3 projected;        // x x_1 w^T x_2 h^T x_3 q^T
    Matrix wtw, hth, qtq;

    double operator()(const Tensor3& g) const {
        const Tensor3 hg = reconstruct(g, wtw, hth, qtq);
        return half_scale - inner_product(g, projected) + 0.5 * inner_product(g, hg);
    }
};

inline double largest_eigenvalue(const Matrix& symmetric) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetric, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().maxCoeff();
}

/// Projected gradient on the core with constant step 1/L, where
/// L = lambda_max(W^T W) * lambda_max(H^T H) * lambda_max(Q^T Q) bounds the Hessian of the
/// Kronecker-structured quadratic. Stops on relative objective improvement below inner_tolerance.
inline Tensor3 core_prox_gradient(const Tensor3& x, const Matrix& w, const Matrix& h, const Matrix& q,
                                  Tensor3 g, const SolverConfig& cfg = {}) {
    cfg.validate();
    const Dims3 core_dims{static_cast<std::size_t>(w.cols()), static_cast<std::size_t>(h.cols()),
                          static_cast<std::size_t>(q.cols())};
    if (static_cast<std::size_t>(w.rows()) != x.dim(0) ||
        static_cast<std::size_t>(h.rows()) != x.dim(1) ||
        static_cast<std::size_t>(q.rows()) != x.dim(2)) {
        throw Error(ErrorKind::dimension_mismatch, "core_prox_gradient: factor rows do not match x");
    }
    if (g.dims() != core_dims) {
        throw Error(ErrorKind::dimension_mismatch, "core_prox_gradient: g0 dims do not match ranks");
    }
    if (!g.is_nonnegative()) {
        throw Error(ErrorKind::invalid_argument, "core_prox_gradient: g0 must be nonnegative");
    }
    if (!x.all_finite() || !g.all_finite() || !w.allFinite() || !h.allFinite() || !q.allFinite()) {
        throw Error(ErrorKind::non_finite, "core_prox_gradient: inputs contain NaN or infinity");
    }

    CoreObjective f;
    f.wtw = w.transpose() * w;
    f.hth = h.transpose() * h;
    f.qtq = q.transpose() * q;
    const double lipschitz =
        largest_eigenvalue(f.wtw) * largest_eigenvalue(f.hth) * largest_eigenvalue(f.qtq);
    if (!(lipschitz > 0.0)) {
        throw Error(ErrorKind::degenerate_input,
                    "core_prox_gradient: a factor matrix is zero (Lipschitz constant 0)");
    }
    f.half_scale = 0.5 * squared_norm(x);
    f.projected = reconstruct(x, w.transpose(), h.transpose(), q.transpose());

    const double step = 1.0 / lipschitz;
    double previous = f(g);
    Tensor3 next(core_dims);
    for (int it = 0; it < cfg.max_inner_iters; ++it) {
        const Tensor3 hg = reconstruct(g, f.wtw, f.hth, f.qtq);
        bool moved = false;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double grad = hg.values()[i] - f.projected.values()[i];
            const double v = std::max(0.0, g.values()[i] - step * grad);
            moved = moved || v != g.values()[i];
            next.values()[i] = v;
        }
        if (!moved) break;
        const double current = f(next);
        if (current > previous) break;  // rounding floor reached
        std::swap(g, next);
        // Objective values below ~1e-14 of ||x||^2 are at the Gram-form rounding floor.
        const double denom = std::max(previous, 1e-14 * f.half_scale);
        const bool converged = (previous - current) <= cfg.inner_tolerance * denom;
        previous = current;
        if (converged) break;
    }
    return g;
}

}  // namespace ntdseg
