// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "ntdseg/error.hpp"
#include "ntdseg/ingest.hpp"
#include "ntdseg/ntd.hpp"
#include "ntdseg/segmentation.hpp"

namespace ntdseg {

inline const std::vector<double>& default_tolerances() {
    static const std::vector<double> tolerances{0.5, 3.0};
    return tolerances;
}

struct HitRateScore {
    double tolerance = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
    std::size_t matched = 0;
    std::size_t n_ref = 0;
    std::size_t n_est = 0;
};

namespace detail {

inline void require_sorted(const std::vector<double>& v, const char* name) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw Error(ErrorKind::non_finite, std::string(name) + " boundary " + std::to_string(i) + " is not finite");
        }
        if (i > 0 && v[i] < v[i - 1]) {
            throw Error(ErrorKind::invalid_argument,
                        std::string(name) + " boundaries are not sorted at index " + std::to_string(i));
        }
    }
}

// Kuhn's augmenting-path maximum bipartite matching; edges join boundaries within `window`.
inline std::size_t max_matching(const std::vector<double>& ref, const std::vector<double>& est, double window) {
    std::vector<std::vector<std::size_t>> adj(ref.size());
    for (std::size_t r = 0; r < ref.size(); ++r)
        for (std::size_t e = 0; e < est.size(); ++e)
            if (std::abs(ref[r] - est[e]) <= window) adj[r].push_back(e);

    constexpr std::size_t unmatched = static_cast<std::size_t>(-1);
    std::vector<std::size_t> owner(est.size(), unmatched);
    std::vector<char> seen;
    std::function<bool(std::size_t)> augment = [&](std::size_t r) {
        for (std::size_t e : adj[r]) {
            if (seen[e]) continue;
            seen[e] = 1;
            if (owner[e] == unmatched || augment(owner[e])) {
                owner[e] = r;
                return true;
            }
        }
        return false;
    };
    std::size_t matched = 0;
    for (std::size_t r = 0; r < ref.size(); ++r) {
        seen.assign(est.size(), 0);
        if (augment(r)) ++matched;
    }
    return matched;
}

}  // namespace detail

/// Boundary hit rate: matched is the size of a maximum one-to-one pairing of reference and
/// estimated boundaries lying within `tolerance` seconds of each other.
inline HitRateScore hit_rate(const std::vector<double>& reference, const std::vector<double>& estimate,
                             double tolerance) {
    if (!(tolerance > 0.0) || !std::isfinite(tolerance)) {
        throw Error(ErrorKind::invalid_argument, "tolerance must be positive and finite");
    }
    detail::require_sorted(reference, "reference");
    detail::require_sorted(estimate, "estimate");
    HitRateScore s;
    s.tolerance = tolerance;
    s.n_ref = reference.size();
    s.n_est = estimate.size();
    s.matched = detail::max_matching(reference, estimate, tolerance);
    s.precision = s.n_est > 0 ? static_cast<double>(s.matched) / static_cast<double>(s.n_est) : 0.0;
    s.recall = s.n_ref > 0 ? static_cast<double>(s.matched) / static_cast<double>(s.n_ref) : 0.0;
    const double pr = s.precision + s.recall;
    s.f_measure = pr > 0.0 ? 2.0 * s.precision * s.recall / pr : 0.0;
    return s;
}

/// Moves every boundary to its nearest downbeat (ties to the earlier one), sorted, without duplicates.
inline std::vector<double> snap_to_downbeats(const std::vector<double>& boundaries, const BarGrid& bars) {
    if (bars.downbeats.empty()) throw Error(ErrorKind::invalid_argument, "bar grid is empty");
    std::vector<double> out;
    out.reserve(boundaries.size());
    for (double t : boundaries) out.push_back(bars.downbeats[detail::nearest_frame(bars.downbeats, t)]);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// ---------------------------------------------------------------------------------------------
// Experiment harnesses

struct RankPair {
    std::size_t t_rank = 0;
    std::size_t b_rank = 0;

    friend bool operator==(const RankPair&, const RankPair&) = default;
};

/// Ranks used for odd- and even-numbered songs in the two-fold protocol.
inline constexpr RankPair kOddSongRanks{40, 28};
inline constexpr RankPair kEvenSongRanks{48, 24};

/// T' and B' each from 12 to 48 in steps of 4 (100 pairs), T' outer.
inline std::vector<RankPair> default_rank_grid() {
    std::vector<RankPair> grid;
    for (std::size_t t = 12; t <= 48; t += 4)
        for (std::size_t b = 12; b <= 48; b += 4) grid.push_back({t, b});
    return grid;
}

struct PipelineConfig {
    NtdConfig ntd{.fix_w_to_identity = true};
    SegmentationConfig segmentation{};
    std::vector<double> tolerances = default_tolerances();
    // Worker threads for independent evaluations; 0 picks the hardware concurrency.
    unsigned threads = 0;
};

struct SweepEntry {
    RankPair ranks;
    double objective = 0.0;
    std::vector<HitRateScore> scores;  // one per tolerance, in PipelineConfig order
};

struct RankSweepResult {
    std::vector<double> tolerances;
    std::vector<SweepEntry> entries;  // grid order
};

namespace detail {

// Runs fn(0..n-1) on up to `threads` workers. Exceptions are rethrown for the lowest index.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    std::vector<std::exception_ptr> errors(n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        for (unsigned w = 0; w < threads; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : workers) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::vector<double> estimated_boundaries(const Autosimilarity& a, const SegmentationConfig& cfg,
                                                const BarGrid& bars) {
    return segment(a, cfg, bars).boundary_times;
}

}  // namespace detail

struct SongAnalysis {
    NtdModel model;
    Autosimilarity autosimilarity;
};

/// Decomposes x at (F, T', B') and builds the autosimilarity of the row-normalized Q.
inline SongAnalysis analyze_song(const Tensor3& x, const RankPair& ranks, const NtdConfig& cfg) {
    const NtdRanks r{x.dim(0), ranks.t_rank, ranks.b_rank};
    SongAnalysis out;
    out.model = decompose(x, r, cfg);
    out.autosimilarity = autosimilarity_from_features(out.model.q);
    return out;
}

/// For each rank pair: decompose, segment on the Q autosimilarity, score against the
/// reference at each tolerance.
inline RankSweepResult rank_sweep(const Tensor3& x, const BarGrid& bars, const ReferenceSegmentation& reference,
                                  const std::vector<RankPair>& grid, const PipelineConfig& cfg = {}) {
    if (grid.empty()) throw Error(ErrorKind::invalid_argument, "rank grid is empty");
    bars.validate();
    reference.validate();
    if (bars.bar_count() != x.dim(2)) {
        throw Error(ErrorKind::dimension_mismatch, "bar grid has " + std::to_string(bars.bar_count()) +
                                                       " bars but the tensor has " + std::to_string(x.dim(2)));
    }
    const std::vector<double> ref = reference.boundaries();
    RankSweepResult result;
    result.tolerances = cfg.tolerances;
    result.entries.resize(grid.size());
    detail::parallel_for(grid.size(), cfg.threads, [&](std::size_t i) {
        const RankPair rp = grid[i];
        try {
            const SongAnalysis song = analyze_song(x, rp, cfg.ntd);
            const std::vector<double> est = detail::estimated_boundaries(song.autosimilarity, cfg.segmentation, bars);
            SweepEntry entry{rp, song.model.objective_trace.back(), {}};
            for (double tol : cfg.tolerances) entry.scores.push_back(hit_rate(ref, est, tol));
            result.entries[i] = std::move(entry);
        } catch (const Error& e) {
            throw Error(e.kind(), "rank pair (t_rank=" + std::to_string(rp.t_rank) +
                                      ", b_rank=" + std::to_string(rp.b_rank) + "): " + e.what());
        }
    });
    return result;
}

inline std::size_t tolerance_index(const std::vector<double>& tolerances, double tolerance) {
    for (std::size_t i = 0; i < tolerances.size(); ++i)
        if (std::abs(tolerances[i] - tolerance) <= 1e-12) return i;
    throw Error(ErrorKind::invalid_argument, "tolerance " + detail::format_double(tolerance) + " was not evaluated");
}

struct OracleChoice {
    RankPair ranks;
    HitRateScore score;
};

/// Grid point with the best F-measure at `tolerance`; ties go to the smaller t_rank, then b_rank.
inline OracleChoice oracle_select(const RankSweepResult& sweep, double tolerance) {
    if (sweep.entries.empty()) throw Error(ErrorKind::invalid_argument, "sweep is empty");
    const std::size_t ti = tolerance_index(sweep.tolerances, tolerance);
    const SweepEntry* best = nullptr;
    for (const SweepEntry& e : sweep.entries) {
        if (best == nullptr) {
            best = &e;
            continue;
        }
        const double f = e.scores[ti].f_measure;
        const double bf = best->scores[ti].f_measure;
        if (f > bf || (f == bf && (e.ranks.t_rank < best->ranks.t_rank ||
                                   (e.ranks.t_rank == best->ranks.t_rank && e.ranks.b_rank < best->ranks.b_rank)))) {
            best = &e;
        }
    }
    return {best->ranks, best->scores[ti]};
}

struct AnnotatedSong {
    Tensor3 tensor;
    BarGrid bars;
    ReferenceSegmentation reference;
};

struct LambdaFit {
    double lambda = 0.0;                // best mean F over the whole corpus
    std::array<double, 2> fold_lambda{};  // tuned on even-index songs, on odd-index songs
    std::array<double, 2> fold_test_f{};  // mean F on the held-out half with that lambda
    double mean_test_f = 0.0;
    std::vector<std::vector<double>> f_table;  // f_table[song][lambda index]
};

/// Two-fold selection of lambda. Songs split by index parity; each half tunes lambda (largest
/// mean F, ties to the earlier grid value) and the other half is scored with it. Each song is
/// decomposed once at the fixed ranks.
inline LambdaFit fit_lambda(const std::vector<AnnotatedSong>& corpus, const std::vector<double>& lambda_grid,
                            const RankPair& ranks, double tolerance, const PipelineConfig& cfg = {}) {
    if (corpus.size() < 2) throw Error(ErrorKind::invalid_argument, "fit_lambda needs at least 2 songs");
    if (lambda_grid.empty()) throw Error(ErrorKind::invalid_argument, "lambda grid is empty");

    LambdaFit fit;
    fit.f_table.assign(corpus.size(), std::vector<double>(lambda_grid.size(), 0.0));
    detail::parallel_for(corpus.size(), cfg.threads, [&](std::size_t s) {
        const AnnotatedSong& song = corpus[s];
        try {
            const SongAnalysis analysis = analyze_song(song.tensor, ranks, cfg.ntd);
            const std::vector<double> ref = song.reference.boundaries();
            for (std::size_t l = 0; l < lambda_grid.size(); ++l) {
                SegmentationConfig seg = cfg.segmentation;
                seg.lambda = lambda_grid[l];
                const auto est = detail::estimated_boundaries(analysis.autosimilarity, seg, song.bars);
                fit.f_table[s][l] = hit_rate(ref, est, tolerance).f_measure;
            }
        } catch (const Error& e) {
            throw Error(e.kind(), "song " + std::to_string(s) + ": " + e.what());
        }
    });

    auto mean_f = [&](std::size_t l, int parity) {
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t s = 0; s < corpus.size(); ++s) {
            if (parity >= 0 && static_cast<int>(s % 2) != parity) continue;
            acc += fit.f_table[s][l];
            ++n;
        }
        return acc / static_cast<double>(n);
    };
    auto argmax = [&](int parity) {
        std::size_t best = 0;
        for (std::size_t l = 1; l < lambda_grid.size(); ++l)
            if (mean_f(l, parity) > mean_f(best, parity)) best = l;
        return best;
    };

    for (int fold = 0; fold < 2; ++fold) {
        const std::size_t l = argmax(fold);
        fit.fold_lambda[static_cast<std::size_t>(fold)] = lambda_grid[l];
        fit.fold_test_f[static_cast<std::size_t>(fold)] = mean_f(l, 1 - fold);
    }
    fit.mean_test_f = 0.5 * (fit.fold_test_f[0] + fit.fold_test_f[1]);
    fit.lambda = lambda_grid[argmax(-1)];
    return fit;
}

// ---------------------------------------------------------------------------------------------
// Reports

inline std::string format_scores_csv(const std::vector<HitRateScore>& scores) {
    std::string text = "tolerance,precision,recall,f_measure,matched,n_ref,n_est\n";
    for (const HitRateScore& s : scores) {
        text += detail::format_double(s.tolerance) + ',' + detail::format_double(s.precision) + ',' +
                detail::format_double(s.recall) + ',' + detail::format_double(s.f_measure) + ',' +
                std::to_string(s.matched) + ',' + std::to_string(s.n_ref) + ',' + std::to_string(s.n_est) + '\n';
    }
    return text;
}

inline std::string format_sweep_csv(const RankSweepResult& sweep) {
    std::string text = "t_rank,b_rank,objective";
    for (double tol : sweep.tolerances) {
        const std::string t = detail::format_double(tol);
        text += ",precision@" + t + ",recall@" + t + ",f_measure@" + t;
    }
    text += '\n';
    for (const SweepEntry& e : sweep.entries) {
        text += std::to_string(e.ranks.t_rank) + ',' + std::to_string(e.ranks.b_rank) + ',' +
                detail::format_double(e.objective);
        for (const HitRateScore& s : e.scores) {
            text += ',' + detail::format_double(s.precision) + ',' + detail::format_double(s.recall) + ',' +
                    detail::format_double(s.f_measure);
        }
        text += '\n';
    }
    return text;
}

}  // namespace ntdseg
