// SPDX-License-Identifier: MIT
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ntdseg/error.hpp"

namespace ntdseg {

/// Dense real matrix used for the factor matrices W (F x F'), H (T x T') and Q (B x B').
using Matrix = Eigen::MatrixXd;

using Dims3 = std::array<std::size_t, 3>;

/// Dense order-3 tensor stored row-major over (mode-1, mode-2, mode-3):
/// entry (i, j, k) lives at (i * d2 + j) * d3 + k.
class Tensor3 {
public:
    Tensor3() = default;

    explicit Tensor3(const Dims3& dims, double fill = 0.0)
        : dims_(dims), values_(dims[0] * dims[1] * dims[2], fill) {
        check_dims(dims);
    }

    Tensor3(const Dims3& dims, std::vector<double> values)
        : dims_(dims), values_(std::move(values)) {
        check_dims(dims);
        if (values_.size() != dims[0] * dims[1] * dims[2]) {
            throw Error(ErrorKind::dimension_mismatch,
                        "tensor value count " + std::to_string(values_.size()) +
                            " does not match dims product " +
                            std::to_string(dims[0] * dims[1] * dims[2]));
        }
    }

    const Dims3& dims() const noexcept { return dims_; }
    std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
    std::size_t size() const noexcept { return values_.size(); }

    double& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept {
        return values_[(i * dims_[1] + j) * dims_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return values_[(i * dims_[1] + j) * dims_[2] + k];
    }

    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }

    bool is_nonnegative() const noexcept {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return v >= 0.0; });
    }

    bool all_finite() const noexcept {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor3&, const Tensor3&) = default;

private:
    static void check_dims(const Dims3& dims) {
        for (std::size_t d : dims) {
            if (d == 0) {
                throw Error(ErrorKind::invalid_argument, "tensor dimensions must be positive");
            }
        }
    }

    Dims3 dims_{0, 0, 0};
    std::vector<double> values_;
};

namespace detail {

inline std::size_t axis_of(int mode) {
    if (mode < 1 || mode > 3) {
        throw Error(ErrorKind::invalid_argument,
                    "mode must be 1, 2 or 3, got " + std::to_string(mode));
    }
    return static_cast<std::size_t>(mode - 1);
}

// Column of entry (i, j, k) in the mode-n unfolding. Kolda-Bader ordering: the
// remaining indices are combined with the lower mode varying fastest.
inline std::size_t unfold_column(const Dims3& d, std::size_t axis, std::size_t i, std::size_t j,
                                 std::size_t k) {
    switch (axis) {
        case 0: return j + k * d[1];
        case 1: return i + k * d[0];
        default: return i + j * d[0];
    }
}

inline std::size_t unfold_row(std::size_t axis, std::size_t i, std::size_t j, std::size_t k) {
    return axis == 0 ? i : (axis == 1 ? j : k);
}

}  // namespace detail

/// Mode-n unfolding (n in {1, 2, 3}): d_n rows, product of the other two dims as columns.
inline Matrix unfold(const Tensor3& t, int mode) {
    const std::size_t axis = detail::axis_of(mode);
    const Dims3& d = t.dims();
    const std::size_t cols = t.size() / d[axis];
    Matrix m(static_cast<Eigen::Index>(d[axis]), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < d[0]; ++i)
        for (std::size_t j = 0; j < d[1]; ++j)
            for (std::size_t k = 0; k < d[2]; ++k)
                m(static_cast<Eigen::Index>(detail::unfold_row(axis, i, j, k)),
                  static_cast<Eigen::Index>(detail::unfold_column(d, axis, i, j, k))) = t(i, j, k);
    return m;
}

/// Inverse of unfold for a tensor of the given dims.
inline Tensor3 fold(const Matrix& m, int mode, const Dims3& dims) {
    const std::size_t axis = detail::axis_of(mode);
    Tensor3 t(dims);
    if (static_cast<std::size_t>(m.rows()) != dims[axis] ||
        static_cast<std::size_t>(m.cols()) * dims[axis] != t.size()) {
        throw Error(ErrorKind::dimension_mismatch, "fold: matrix shape does not match dims");
    }
    for (std::size_t i = 0; i < dims[0]; ++i)
        for (std::size_t j = 0; j < dims[1]; ++j)
            for (std::size_t k = 0; k < dims[2]; ++k)
                t(i, j, k) = m(static_cast<Eigen::Index>(detail::unfold_row(axis, i, j, k)),
                               static_cast<Eigen::Index>(detail::unfold_column(dims, axis, i, j, k)));
    return t;
}

/// t x_n m: contracts mode n of t with the columns of m. Uses (t x_n m)_(n) = m t_(n).
inline Tensor3 mode_product(const Tensor3& t, const Matrix& m, int mode) {
    const std::size_t axis = detail::axis_of(mode);
    if (static_cast<std::size_t>(m.cols()) != t.dim(axis)) {
        throw Error(ErrorKind::dimension_mismatch,
                    "mode_product: matrix has " + std::to_string(m.cols()) +
                        " columns but tensor mode " + std::to_string(mode) + " has size " +
                        std::to_string(t.dim(axis)));
    }
    if (m.rows() == 0) {
        throw Error(ErrorKind::dimension_mismatch, "mode_product: matrix has no rows");
    }
    Dims3 out_dims = t.dims();
    out_dims[axis] = static_cast<std::size_t>(m.rows());
    const Matrix product = m * unfold(t, mode);
    return fold(product, mode, out_dims);
}

/// core x_1 w x_2 h x_3 q.
inline Tensor3 reconstruct(const Tensor3& core, const Matrix& w, const Matrix& h, const Matrix& q) {
    return mode_product(mode_product(mode_product(core, w, 1), h, 2), q, 3);
}

inline double squared_norm(const Tensor3& t) {
    double acc = 0.0;
    for (double v : t.values()) acc += v * v;
    return acc;
}

inline double frobenius_norm(const Tensor3& t) { return std::sqrt(squared_norm(t)); }

inline double inner_product(const Tensor3& a, const Tensor3& b) {
    if (a.dims() != b.dims()) {
        throw Error(ErrorKind::dimension_mismatch, "inner_product: dims differ");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.values()[i] * b.values()[i];
    return acc;
}

/// ||a - b||_F^2, accumulated entrywise.
inline double squared_distance(const Tensor3& a, const Tensor3& b) {
    if (a.dims() != b.dims()) {
        throw Error(ErrorKind::dimension_mismatch, "squared_distance: dims differ");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.values()[i] - b.values()[i];
        acc += d * d;
    }
    return acc;
}

inline Tensor3 abs(Tensor3 t) {
    for (double& v : t.values()) v = std::abs(v);
    return t;
}

/// Leading `rank` left singular vectors of the mode-n unfolding.
inline Matrix leading_left_singular_vectors(const Tensor3& t, int mode, std::size_t rank) {
    const std::size_t axis = detail::axis_of(mode);
    if (rank == 0 || rank > t.dim(axis)) {
        throw Error(ErrorKind::invalid_argument,
                    "rank " + std::to_string(rank) + " invalid for mode " + std::to_string(mode) +
                        " of size " + std::to_string(t.dim(axis)));
    }
    const Matrix unfolded = unfold(t, mode);
    Eigen::BDCSVD<Matrix> svd(unfolded, Eigen::ComputeThinU);
    Matrix u = svd.matrixU();
    // A wide unfolding may have fewer columns than rows; pad with an orthonormal complement.
    if (static_cast<std::size_t>(u.cols()) < rank) {
        Eigen::BDCSVD<Matrix> full(unfolded, Eigen::ComputeFullU);
        u = full.matrixU();
    }
    return u.leftCols(static_cast<Eigen::Index>(rank));
}

struct TuckerFactors {
    Matrix w;
    Matrix h;
    Matrix q;
    Tensor3 core;
};

/// Truncated higher-order SVD. With `absolute` set (the default), all four outputs are replaced
/// by their entrywise absolute values, which is the nonnegative NTD initialization.
inline TuckerFactors truncated_hosvd(const Tensor3& t, const Dims3& ranks, bool absolute = true) {
    TuckerFactors out;
    out.w = leading_left_singular_vectors(t, 1, ranks[0]);
    out.h = leading_left_singular_vectors(t, 2, ranks[1]);
    out.q = leading_left_singular_vectors(t, 3, ranks[2]);
    out.core = reconstruct(t, out.w.transpose(), out.h.transpose(), out.q.transpose());
    if (absolute) {
        out.w = out.w.cwiseAbs();
        out.h = out.h.cwiseAbs();
        out.q = out.q.cwiseAbs();
        out.core = abs(std::move(out.core));
    }
    return out;
}

}  // namespace ntdseg
