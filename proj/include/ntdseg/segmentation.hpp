// SPDX-License-Identifier: MIT
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ntdseg/error.hpp"
#include "ntdseg/ingest.hpp"
#include "ntdseg/tensor.hpp"

namespace ntdseg {

/// B x B bar-to-bar similarity.
struct Autosimilarity {
    Matrix values;

    std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
    double operator()(std::size_t i, std::size_t j) const {
        return values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
};

struct SegmentationConfig {
    double lambda = 1.0;
    std::size_t max_segment_bars = 32;
    std::size_t kernel_band = 4;

    void validate() const {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
            throw Error(ErrorKind::invalid_argument, "lambda must be finite and nonnegative");
        }
        if (max_segment_bars < 2) throw Error(ErrorKind::invalid_argument, "max_segment_bars must be >= 2");
        if (kernel_band < 1) throw Error(ErrorKind::invalid_argument, "kernel_band must be >= 1");
    }
};

struct Segmentation {
    std::vector<std::size_t> bar_boundaries;  // 0 = b_0 < b_1 < ... < b_n = B
    std::vector<double> boundary_times;       // filled when a bar grid is known
    double total_score = 0.0;
};

/// Rows scaled to unit l2 norm (zero rows stay zero), then F F^T: cosine similarity of bars.
inline Autosimilarity autosimilarity_from_features(const Matrix& features) {
    if (!features.allFinite()) throw Error(ErrorKind::non_finite, "features contain NaN or infinity");
    if ((features.array() < 0.0).any()) throw Error(ErrorKind::invalid_argument, "features must be nonnegative");
    Matrix normalized = features;
    for (Eigen::Index r = 0; r < normalized.rows(); ++r) {
        const double n = normalized.row(r).norm();
        if (n > 0.0) normalized.row(r) /= n;
    }
    return {normalized * normalized.transpose()};
}

/// Each bar slice X(:, :, b) flattened into row b (pitch-class major).
inline Matrix barwise_features(const Tensor3& x) {
    Matrix m(static_cast<Eigen::Index>(x.dim(2)), static_cast<Eigen::Index>(x.dim(0) * x.dim(1)));
    for (std::size_t i = 0; i < x.dim(0); ++i)
        for (std::size_t j = 0; j < x.dim(1); ++j)
            for (std::size_t k = 0; k < x.dim(2); ++k)
                m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i * x.dim(1) + j)) = x(i, j, k);
    return m;
}

/// Binary n x n kernel, ones where 1 <= |i - j| <= band.
inline Matrix make_kernel(std::size_t n, std::size_t band) {
    Matrix k = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t d = i > j ? i - j : j - i;
            if (d >= 1 && d <= band) k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
        }
    return k;
}

/// (1/n) sum_{i,j} k_ij a(b1 + i, b1 + j) over the segment [b1, b2], n = b2 - b1 + 1.
inline double raw_score(const Autosimilarity& a, std::size_t b1, std::size_t b2, std::size_t band) {
    if (b1 > b2 || b2 >= a.size()) {
        throw Error(ErrorKind::invalid_argument, "raw_score: segment [" + std::to_string(b1) + ", " +
                                                     std::to_string(b2) + "] out of range for " +
                                                     std::to_string(a.size()) + " bars");
    }
    const std::size_t n = b2 - b1 + 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i > band ? i - band : 0;
        const std::size_t hi = std::min(n - 1, i + band);
        for (std::size_t j = lo; j <= hi; ++j) {
            if (j != i) acc += a(b1 + i, b1 + j);
        }
    }
    return acc / static_cast<double>(n);
}

/// Segment-length prior: 0 for 8 bars, 1/4 for other multiples of 4, 1/2 for other even
/// lengths, 1 for odd lengths.
inline double penalty(std::size_t n) {
    if (n == 0) throw Error(ErrorKind::invalid_argument, "penalty: segment length must be positive");
    if (n == 8) return 0.0;
    if (n % 4 == 0) return 0.25;
    if (n % 2 == 0) return 0.5;
    return 1.0;
}

/// Largest raw score over all 8-bar windows; a song shorter than 8 bars uses its whole span.
inline double max_eight_bar_score(const Autosimilarity& a, std::size_t band) {
    const std::size_t n_bars = a.size();
    if (n_bars == 0) throw Error(ErrorKind::invalid_argument, "empty autosimilarity");
    if (n_bars < 8) return raw_score(a, 0, n_bars - 1, band);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b + 8 <= n_bars; ++b) best = std::max(best, raw_score(a, b, b + 7, band));
    return best;
}

inline double modified_score(const Autosimilarity& a, std::size_t b1, std::size_t b2,
                             const SegmentationConfig& cfg, double c_max8) {
    const double raw = raw_score(a, b1, b2, cfg.kernel_band);
    return raw - cfg.lambda * penalty(b2 - b1 + 1) * c_max8;
}

/// Partition of [0, B) into segments of at most max_segment_bars bars that maximizes the sum
/// of modified scores. Exact dynamic programming over segment end bars. Ties prefer fewer
/// segments, then the lexicographically smallest boundary list.
inline Segmentation segment(const Autosimilarity& a, const SegmentationConfig& cfg = {}) {
    cfg.validate();
    const std::size_t n_bars = a.size();
    if (n_bars == 0 || a.values.cols() != a.values.rows()) {
        throw Error(ErrorKind::invalid_argument, "segment: autosimilarity must be square and nonempty");
    }
    if (!a.values.allFinite()) throw Error(ErrorKind::non_finite, "segment: autosimilarity is not finite");
    const double c_max8 = max_eight_bar_score(a, cfg.kernel_band);

    std::vector<double> best(n_bars + 1, -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> count(n_bars + 1, 0);
    std::vector<std::size_t> prev(n_bars + 1, 0);
    best[0] = 0.0;

    auto path_to = [&](std::size_t end, std::size_t last_start) {
        std::vector<std::size_t> path{end};
        for (std::size_t b = last_start;; b = prev[b]) {
            path.push_back(b);
            if (b == 0) break;
        }
        std::reverse(path.begin(), path.end());
        return path;
    };

    for (std::size_t e = 1; e <= n_bars; ++e) {
        const std::size_t first = e > cfg.max_segment_bars ? e - cfg.max_segment_bars : 0;
        for (std::size_t s = first; s < e; ++s) {
            const double cand = best[s] + modified_score(a, s, e - 1, cfg, c_max8);
            const std::size_t cand_count = count[s] + 1;
            bool take = false;
            if (cand > best[e]) {
                take = true;
            } else if (cand == best[e]) {
                if (cand_count < count[e]) {
                    take = true;
                } else if (cand_count == count[e]) {
                    take = path_to(e, s) < path_to(e, prev[e]);
                }
            }
            if (take) {
                best[e] = cand;
                count[e] = cand_count;
                prev[e] = s;
            }
        }
    }

    Segmentation seg;
    seg.bar_boundaries = path_to(n_bars, prev[n_bars]);
    seg.total_score = best[n_bars];
    return seg;
}

/// Downbeat time of every boundary bar index.
inline std::vector<double> boundaries_to_times(const Segmentation& seg, const BarGrid& bars) {
    std::vector<double> times;
    times.reserve(seg.bar_boundaries.size());
    for (std::size_t b : seg.bar_boundaries) {
        if (b >= bars.downbeats.size()) {
            throw Error(ErrorKind::invalid_argument, "boundary bar " + std::to_string(b) +
                                                         " outside a grid of " +
                                                         std::to_string(bars.downbeats.size()) + " downbeats");
        }
        times.push_back(bars.downbeats[b]);
    }
    return times;
}

inline Segmentation segment(const Autosimilarity& a, const SegmentationConfig& cfg, const BarGrid& bars) {
    Segmentation seg = segment(a, cfg);
    seg.boundary_times = boundaries_to_times(seg, bars);
    return seg;
}

/// Boundary times as MIREX-style segments labelled S0, S1, ...
inline ReferenceSegmentation to_annotation(const std::vector<double>& boundary_times) {
    ReferenceSegmentation out;
    for (std::size_t k = 0; k + 1 < boundary_times.size(); ++k) {
        out.segments.push_back({boundary_times[k], boundary_times[k + 1], "S" + std::to_string(k)});
    }
    return out;
}

/// Comma-separated rows, shortest round-trip formatting.
inline std::string format_matrix_csv(const Matrix& m) {
    std::string text;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c > 0) text += ',';
            text += detail::format_double(m(r, c));
        }
        text += '\n';
    }
    return text;
}

inline Matrix parse_matrix_csv(std::istream& in) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream fields(line);
        std::string tok;
        while (std::getline(fields, tok, ',')) {
            double v = 0.0;
            if (!detail::parse_double(tok, v)) {
                throw Error(ErrorKind::parse_error, "matrix line " + std::to_string(line_no) + ": '" + tok +
                                                        "' is not a number");
            }
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw Error(ErrorKind::parse_error, "matrix line " + std::to_string(line_no) + " has a different width");
        }
        rows.push_back(std::move(row));
    }
    Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return m;
}

}  // namespace ntdseg
