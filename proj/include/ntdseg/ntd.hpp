// SPDX-License-Identifier: MIT
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ntdseg/error.hpp"
#include "ntdseg/nnls.hpp"
#include "ntdseg/tensor.hpp"

namespace ntdseg {

/// Core dimensions (F', T', B').
struct NtdRanks {
    std::size_t f_rank = 1;
    std::size_t t_rank = 1;
    std::size_t b_rank = 1;

    Dims3 as_dims() const { return {f_rank, t_rank, b_rank}; }

    void validate(const Dims3& dims) const {
        const Dims3 r = as_dims();
        static constexpr const char* names[] = {"f_rank", "t_rank", "b_rank"};
        for (std::size_t a = 0; a < 3; ++a) {
            if (r[a] == 0 || r[a] > dims[a]) {
                throw Error(ErrorKind::invalid_argument,
                            std::string(names[a]) + " = " + std::to_string(r[a]) +
                                " must lie in [1, " + std::to_string(dims[a]) + "]");
            }
        }
    }

    friend bool operator==(const NtdRanks&, const NtdRanks&) = default;
};

struct NtdConfig {
    int max_outer_iters = 100;
    double outer_tolerance = 1e-8;
    bool fix_w_to_identity = false;
    std::uint64_t seed = 0;
    // Adds uniform noise in [0, 1e-10] drawn from `seed` to the HOSVD initialization.
    bool perturb_init = false;
    SolverConfig factor_solver{.guard_rank_collapse = true};
    SolverConfig core_solver{};

    void validate(const Dims3& dims, const NtdRanks& ranks) const {
        if (max_outer_iters < 1) {
            throw Error(ErrorKind::invalid_argument, "max_outer_iters must be positive");
        }
        if (!(outer_tolerance >= 0.0)) {
            throw Error(ErrorKind::invalid_argument, "outer_tolerance must be nonnegative");
        }
        if (fix_w_to_identity && ranks.f_rank != dims[0]) {
            throw Error(ErrorKind::invalid_argument,
                        "fixing W to the identity requires f_rank == " + std::to_string(dims[0]));
        }
        factor_solver.validate();
        core_solver.validate();
    }
};

struct NtdModel {
    Matrix w;  // F x F'
    Matrix h;  // T x T'
    Matrix q;  // B x B'
    Tensor3 core;  // F' x T' x B'
    NtdRanks ranks;
    // Value of ||X - G x1 W x2 H x3 Q||_F^2 after initialization and after every full cycle.
    std::vector<double> objective_trace;

    Tensor3 reconstruct() const { return ntdseg::reconstruct(core, w, h, q); }
};

inline double ntd_objective(const Tensor3& x, const NtdModel& model) {
    return squared_distance(x, model.reconstruct());
}

struct ParameterCount {
    std::size_t tensor_size = 0;
    std::size_t ntd_size = 0;

    friend bool operator==(const ParameterCount&, const ParameterCount&) = default;
};

/// F*T*B values for the tensor against F*F' + T*T' + B*B' + F'*T'*B' for the decomposition.
inline ParameterCount parameter_count(const Dims3& dims, const NtdRanks& ranks) {
    ranks.validate(dims);
    return {dims[0] * dims[1] * dims[2],
            dims[0] * ranks.f_rank + dims[1] * ranks.t_rank + dims[2] * ranks.b_rank +
                ranks.f_rank * ranks.t_rank * ranks.b_rank};
}

/// Nonnegative HOSVD initialization. With fix_w_to_identity, W is the F x F identity and
/// the mode-1 SVD is skipped.
inline NtdModel initialize(const Tensor3& x, const NtdRanks& ranks, const NtdConfig& cfg = {}) {
    ranks.validate(x.dims());
    cfg.validate(x.dims(), ranks);
    if (!x.all_finite()) {
        throw Error(ErrorKind::non_finite, "input tensor contains NaN or infinity");
    }

    NtdModel model;
    model.ranks = ranks;
    if (cfg.fix_w_to_identity) {
        model.w = Matrix::Identity(static_cast<Eigen::Index>(x.dim(0)),
                                   static_cast<Eigen::Index>(x.dim(0)));
        const Matrix uh = leading_left_singular_vectors(x, 2, ranks.t_rank);
        const Matrix uq = leading_left_singular_vectors(x, 3, ranks.b_rank);
        model.core = abs(mode_product(mode_product(x, uh.transpose(), 2), uq.transpose(), 3));
        model.h = uh.cwiseAbs();
        model.q = uq.cwiseAbs();
    } else {
        TuckerFactors f = truncated_hosvd(x, ranks.as_dims(), /*absolute=*/true);
        model.w = std::move(f.w);
        model.h = std::move(f.h);
        model.q = std::move(f.q);
        model.core = std::move(f.core);
    }

    if (cfg.perturb_init) {
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> jitter(0.0, 1e-10);
        auto perturb = [&](Matrix& m) {
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) += jitter(rng);
        };
        if (!cfg.fix_w_to_identity) perturb(model.w);
        perturb(model.h);
        perturb(model.q);
        for (double& v : model.core.values()) v += jitter(rng);
    }

    model.objective_trace.push_back(ntd_objective(x, model));
    return model;
}

/// Rescales each column of H and each frontal core slice G(:, :, b') to unit l2 norm. The
/// H scales are pushed into the core along mode 2 and the slice scales into the columns of Q,
/// so the reconstruction is unchanged. Zero columns and slices are left as they are.
inline NtdModel normalize(NtdModel model) {
    Tensor3& g = model.core;
    const Dims3 d = g.dims();
    for (std::size_t j = 0; j < d[1]; ++j) {
        const double n = model.h.col(static_cast<Eigen::Index>(j)).norm();
        if (n == 0.0) continue;
        model.h.col(static_cast<Eigen::Index>(j)) /= n;
        for (std::size_t i = 0; i < d[0]; ++i)
            for (std::size_t k = 0; k < d[2]; ++k) g(i, j, k) *= n;
    }
    for (std::size_t k = 0; k < d[2]; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d[0]; ++i)
            for (std::size_t j = 0; j < d[1]; ++j) acc += g(i, j, k) * g(i, j, k);
        const double n = std::sqrt(acc);
        if (n == 0.0) continue;
        for (std::size_t i = 0; i < d[0]; ++i)
            for (std::size_t j = 0; j < d[1]; ++j) g(i, j, k) /= n;
        model.q.col(static_cast<Eigen::Index>(k)) *= n;
    }
    return model;
}

namespace detail {

// Subproblem for factor `mode`: X_(n) ~ A_n M with M = unfold(G x_other factors, n), solved
// for Z = A_n^T as min ||X_(n)^T - M^T Z||.
inline NnlsProblem factor_subproblem(const Matrix& x_unfolded, double x_scale, const NtdModel& m,
                                     int mode) {
    Tensor3 partial = m.core;
    if (mode != 1) partial = mode_product(partial, m.w, 1);
    if (mode != 2) partial = mode_product(partial, m.h, 2);
    if (mode != 3) partial = mode_product(partial, m.q, 3);
    const Matrix mm = unfold(partial, mode);
    NnlsProblem p;
    p.gram = mm * mm.transpose();
    p.cross = mm * x_unfolded.transpose();
    p.scale = x_scale;
    p.setup_flops = static_cast<double>(mm.rows()) * static_cast<double>(mm.cols()) *
                    static_cast<double>(mm.rows() + x_unfolded.rows());
    return p;
}

}  // namespace detail

/// Alternating NTD from a given starting model. Each cycle updates W (unless fixed), H and Q
/// by accelerated HALS on their normal equations, then the core by projected gradient. The
/// objective is appended after every cycle; the loop stops once the relative improvement
/// drops below outer_tolerance or after max_outer_iters cycles. The result is normalized.
inline NtdModel decompose(const Tensor3& x, NtdModel model, const NtdConfig& cfg = {}) {
    const Dims3 dims = x.dims();
    model.ranks.validate(dims);
    cfg.validate(dims, model.ranks);
    if (!x.is_nonnegative()) {
        throw Error(ErrorKind::invalid_argument, "decompose: input tensor must be nonnegative");
    }
    if (!x.all_finite()) {
        throw Error(ErrorKind::non_finite, "decompose: input tensor contains NaN or infinity");
    }
    if (static_cast<std::size_t>(model.w.rows()) != dims[0] ||
        static_cast<std::size_t>(model.h.rows()) != dims[1] ||
        static_cast<std::size_t>(model.q.rows()) != dims[2] ||
        model.core.dims() != model.ranks.as_dims() ||
        static_cast<std::size_t>(model.w.cols()) != model.ranks.f_rank ||
        static_cast<std::size_t>(model.h.cols()) != model.ranks.t_rank ||
        static_cast<std::size_t>(model.q.cols()) != model.ranks.b_rank) {
        throw Error(ErrorKind::dimension_mismatch, "decompose: starting model does not match x");
    }
    if (model.objective_trace.empty()) model.objective_trace.push_back(ntd_objective(x, model));

    const double scale = squared_norm(x);
    const Matrix x1 = unfold(x, 1);
    const Matrix x2 = unfold(x, 2);
    const Matrix x3 = unfold(x, 3);

    auto update_factor = [&](Matrix& factor, const Matrix& xn, int mode) {
        const NnlsProblem p = detail::factor_subproblem(xn, scale, model, mode);
        factor = hals_nnls(p, factor.transpose(), cfg.factor_solver).transpose();
    };

    for (int it = 1; it <= cfg.max_outer_iters; ++it) {
        if (!cfg.fix_w_to_identity) update_factor(model.w, x1, 1);
        update_factor(model.h, x2, 2);
        update_factor(model.q, x3, 3);
        model.core = core_prox_gradient(x, model.w, model.h, model.q, std::move(model.core),
                                        cfg.core_solver);

        const double current = ntd_objective(x, model);
        if (!std::isfinite(current) || !model.w.allFinite() || !model.h.allFinite() ||
            !model.q.allFinite() || !model.core.all_finite()) {
            throw Error(ErrorKind::non_finite,
                        "decompose: non-finite values at outer iteration " + std::to_string(it));
        }
        const double previous = model.objective_trace.back();
        model.objective_trace.push_back(current);
        if (previous <= 0.0 || (previous - current) < cfg.outer_tolerance * previous) break;
    }
    return normalize(std::move(model));
}

inline NtdModel decompose(const Tensor3& x, const NtdRanks& ranks, const NtdConfig& cfg = {}) {
    return decompose(x, initialize(x, ranks, cfg), cfg);
}

}  // namespace ntdseg
