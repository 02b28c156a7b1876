// SPDX-License-Identifier: MIT
#include "ntdseg/eval.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"

namespace ntdseg {
namespace {

std::vector<double> random_boundaries(std::mt19937_64& rng, std::size_t max_len) {
    const std::size_t n = oracle::random_size(rng, 0, max_len);
    std::uniform_real_distribution<double> u(0.0, 20.0);
    std::vector<double> v(n);
    for (double& x : v) x = std::round(u(rng) * 4.0) / 4.0;  // quarter-second grid forces near ties
    std::sort(v.begin(), v.end());
    return v;
}

BarGrid uniform_grid(std::size_t bars, double bar_seconds = 2.0) {
    BarGrid g;
    for (std::size_t b = 0; b <= bars; ++b) g.downbeats.push_back(bar_seconds * static_cast<double>(b));
    return g;
}

TEST(HitRateTest, ExactMatch) {
    const HitRateScore s = hit_rate({0.0, 10.0, 20.0}, {0.0, 10.0, 20.0}, 0.5);
    EXPECT_EQ(s.precision, 1.0);
    EXPECT_EQ(s.recall, 1.0);
    EXPECT_EQ(s.f_measure, 1.0);
}

TEST(HitRateTest, OneMiss) {
    const HitRateScore s = hit_rate({0.0, 10.0, 20.0}, {0.0, 11.0, 20.0}, 0.5);
    EXPECT_EQ(s.matched, 2u);
    EXPECT_DOUBLE_EQ(s.precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(s.recall, 2.0 / 3.0);
}

TEST(HitRateTest, OneToOne) {
    const HitRateScore s = hit_rate({0.0, 10.0}, {9.8, 10.2}, 0.5);
    EXPECT_EQ(s.matched, 1u);
    EXPECT_DOUBLE_EQ(s.precision, 0.5);
    EXPECT_DOUBLE_EQ(s.recall, 0.5);
}

TEST(HitRateTest, EmptyEstimate) {
    const HitRateScore s = hit_rate({0.0, 10.0}, {}, 3.0);
    EXPECT_EQ(s.precision, 0.0);
    EXPECT_EQ(s.recall, 0.0);
    EXPECT_EQ(s.f_measure, 0.0);
}

TEST(HitRateTest, Errors) {
    EXPECT_THROW(hit_rate({1.0, 0.0}, {0.0}, 0.5), Error);
    EXPECT_THROW(hit_rate({0.0}, {0.0}, 0.0), Error);
}

TEST(HitRateTest, MatchesExhaustiveAndInvariants) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 300; ++trial) {
        const auto ref = random_boundaries(rng, 6);
        const auto est = random_boundaries(rng, 6);
        for (double tol : {0.5, 3.0}) {
            const HitRateScore s = hit_rate(ref, est, tol);
            EXPECT_EQ(s.matched, oracle::exhaustive_matching(ref, est, tol));
            EXPECT_LE(s.matched, std::min(s.n_ref, s.n_est));
            const double pr = s.precision + s.recall;
            EXPECT_EQ(s.f_measure, pr > 0 ? 2.0 * s.precision * s.recall / pr : 0.0);
            const HitRateScore swapped = hit_rate(est, ref, tol);
            EXPECT_EQ(swapped.precision, s.recall);
            EXPECT_EQ(swapped.recall, s.precision);
            EXPECT_EQ(swapped.matched, s.matched);
        }
    }
}

TEST(SnapTest, Cases) {
    const BarGrid g = uniform_grid(10);
    EXPECT_EQ(snap_to_downbeats({4.0}, g), (std::vector<double>{4.0}));
    EXPECT_EQ(snap_to_downbeats({3.2}, g), (std::vector<double>{4.0}));
    EXPECT_EQ(snap_to_downbeats({1.9, 2.1}, g), (std::vector<double>{2.0}));
    EXPECT_EQ(snap_to_downbeats({3.0}, g), (std::vector<double>{2.0}));  // tie goes earlier
    EXPECT_EQ(snap_to_downbeats({-5.0, 100.0}, g), (std::vector<double>{0.0, 20.0}));
}

TEST(SnapTest, Idempotent) {
    std::mt19937_64 rng(2);
    const BarGrid g = uniform_grid(12, 1.7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(oracle::random_size(rng, 0, 10));
        for (double& x : v) x = std::uniform_real_distribution<double>(-1.0, 25.0)(rng);
        const auto once = snap_to_downbeats(v, g);
        EXPECT_EQ(snap_to_downbeats(once, g), once);
    }
}

TEST(SnapTest, SegmentationTimesAlreadyAligned) {
    const BarGrid g = uniform_grid(16);
    Segmentation s;
    s.bar_boundaries = {0, 5, 12, 16};
    const auto times = boundaries_to_times(s, g);
    EXPECT_EQ(snap_to_downbeats(times, g), times);
}

TEST(RankGridTest, DefaultGrid) {
    const auto grid = default_rank_grid();
    EXPECT_EQ(grid.size(), 100u);
    EXPECT_EQ(grid.front(), (RankPair{12, 12}));
    EXPECT_EQ(grid.back(), (RankPair{48, 48}));
    EXPECT_NE(std::find(grid.begin(), grid.end(), kOddSongRanks), grid.end());
    EXPECT_NE(std::find(grid.begin(), grid.end(), kEvenSongRanks), grid.end());
}

SyntheticSong two_pattern_song(double noise, std::uint64_t seed, std::size_t fpb = 16) {
    const auto patterns = make_patterns(2, 12, fpb, seed);
    std::vector<std::size_t> assign;
    for (std::size_t p : {0, 1, 0, 1}) assign.insert(assign.end(), 8, p);
    return synth_song(patterns, assign, noise, seed);
}

TEST(RankSweepTest, SinglePair) {
    const SyntheticSong song = two_pattern_song(0.0, 1);
    PipelineConfig cfg;
    cfg.ntd.max_outer_iters = 20;
    const RankSweepResult r = rank_sweep(song.tensor, song.bars, song.reference, {{4, 2}}, cfg);
    ASSERT_EQ(r.entries.size(), 1u);
    EXPECT_EQ(r.entries[0].scores.size(), 2u);
    EXPECT_EQ(r.tolerances, default_tolerances());
}

TEST(RankSweepTest, TruePatternCountReachesPerfectScore) {
    const SyntheticSong song = two_pattern_song(0.0, 2);
    PipelineConfig cfg;
    cfg.ntd.max_outer_iters = 50;
    const std::vector<RankPair> grid{{4, 2}, {8, 2}, {4, 3}};
    const RankSweepResult r = rank_sweep(song.tensor, song.bars, song.reference, grid, cfg);
    ASSERT_EQ(r.entries.size(), grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_EQ(r.entries[i].ranks, grid[i]);
    const OracleChoice best = oracle_select(r, 0.5);
    EXPECT_EQ(best.score.f_measure, 1.0);
}

TEST(RankSweepTest, ParallelMatchesSequential) {
    const SyntheticSong song = two_pattern_song(0.05, 3);
    PipelineConfig cfg;
    cfg.ntd.max_outer_iters = 10;
    const std::vector<RankPair> grid{{4, 2}, {6, 3}, {8, 4}, {5, 2}};
    cfg.threads = 1;
    const RankSweepResult seq = rank_sweep(song.tensor, song.bars, song.reference, grid, cfg);
    cfg.threads = 4;
    const RankSweepResult par = rank_sweep(song.tensor, song.bars, song.reference, grid, cfg);
    EXPECT_EQ(format_sweep_csv(seq), format_sweep_csv(par));
}

TEST(RankSweepTest, ErrorNamesRankPair) {
    const SyntheticSong song = two_pattern_song(0.0, 4);
    try {
        rank_sweep(song.tensor, song.bars, song.reference, {{4, 2}, {40, 2}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("t_rank=40"), std::string::npos) << e.what();
    }
    EXPECT_THROW(rank_sweep(song.tensor, song.bars, song.reference, {}), Error);
}

RankSweepResult fake_sweep(const std::vector<std::pair<RankPair, double>>& points) {
    RankSweepResult r;
    r.tolerances = {0.5};
    for (const auto& [rp, f] : points) {
        HitRateScore s;
        s.tolerance = 0.5;
        s.f_measure = f;
        r.entries.push_back({rp, 0.0, {s}});
    }
    return r;
}

TEST(OracleSelectTest, Cases) {
    EXPECT_EQ(oracle_select(fake_sweep({{{12, 16}, 0.3}}), 0.5).ranks, (RankPair{12, 16}));
    EXPECT_EQ(oracle_select(fake_sweep({{{12, 16}, 0.5}, {{20, 12}, 0.7}}), 0.5).ranks, (RankPair{20, 12}));
    EXPECT_EQ(oracle_select(fake_sweep({{{20, 12}, 0.7}, {{16, 40}, 0.7}, {{16, 20}, 0.7}}), 0.5).ranks,
              (RankPair{16, 20}));
    EXPECT_THROW(oracle_select(fake_sweep({{{12, 16}, 0.3}}), 3.0), Error);
}

TEST(OracleSelectTest, DominatesEveryGridPoint) {
    const SyntheticSong song = two_pattern_song(0.1, 5);
    PipelineConfig cfg;
    cfg.ntd.max_outer_iters = 10;
    const RankSweepResult r = rank_sweep(song.tensor, song.bars, song.reference, {{4, 2}, {8, 3}, {12, 4}}, cfg);
    for (double tol : cfg.tolerances) {
        const OracleChoice best = oracle_select(r, tol);
        const std::size_t ti = tolerance_index(r.tolerances, tol);
        for (const SweepEntry& e : r.entries) EXPECT_GE(best.score.f_measure, e.scores[ti].f_measure);
    }
}

std::vector<AnnotatedSong> corpus(std::size_t n, double noise) {
    std::vector<AnnotatedSong> songs;
    for (std::size_t i = 0; i < n; ++i) {
        const auto patterns = make_patterns(3, 12, 16, 100 + i);
        std::vector<std::size_t> assign;
        for (std::size_t p : {0, 1, 2, 1}) assign.insert(assign.end(), 8, p);
        SyntheticSong s = synth_song(patterns, assign, noise, 200 + i);
        songs.push_back({std::move(s.tensor), std::move(s.bars), std::move(s.reference)});
    }
    return songs;
}

TEST(FitLambdaTest, SingleLambda) {
    PipelineConfig cfg;
    cfg.ntd.max_outer_iters = 10;
    const LambdaFit fit = fit_lambda(corpus(2, 0.0), {0.7}, {4, 3}, 0.5, cfg);
    EXPECT_EQ(fit.lambda, 0.7);
    EXPECT_EQ(fit.fold_lambda[0], 0.7);
    EXPECT_EQ(fit.fold_lambda[1], 0.7);
}

TEST(FitLambdaTest, Errors) {
    EXPECT_THROW(fit_lambda(corpus(1, 0.0), {1.0}, {4, 3}, 0.5), Error);
    EXPECT_THROW(fit_lambda(corpus(2, 0.0), {}, {4, 3}, 0.5), Error);
}

TEST(FitLambdaTest, SelectionMatchesIndependentEvaluation) {
    const auto songs = corpus(4, 0.05);
    const std::vector<double> grid{0.0, 0.5, 1.0, 2.0};
    PipelineConfig cfg;
    cfg.ntd.max_outer_iters = 20;
    const RankPair ranks{4, 3};
    const LambdaFit fit = fit_lambda(songs, grid, ranks, 0.5, cfg);

    // Independent evaluation: rebuild every F value through the public pipeline pieces.
    std::vector<std::vector<double>> f(songs.size(), std::vector<double>(grid.size()));
    for (std::size_t s = 0; s < songs.size(); ++s) {
        const NtdModel m = decompose(songs[s].tensor, NtdRanks{12, ranks.t_rank, ranks.b_rank}, cfg.ntd);
        const Autosimilarity a = autosimilarity_from_features(m.q);
        for (std::size_t l = 0; l < grid.size(); ++l) {
            SegmentationConfig seg;
            seg.lambda = grid[l];
            const auto est = boundaries_to_times(segment(a, seg), songs[s].bars);
            f[s][l] = hit_rate(songs[s].reference.boundaries(), est, 0.5).f_measure;
        }
    }
    EXPECT_EQ(fit.f_table, f);
    auto pick = [&](int parity) {
        std::size_t best = 0;
        double best_f = -1.0;
        for (std::size_t l = 0; l < grid.size(); ++l) {
            double acc = 0.0;
            int n = 0;
            for (std::size_t s = 0; s < songs.size(); ++s)
                if (parity < 0 || static_cast<int>(s % 2) == parity) {
                    acc += f[s][l];
                    ++n;
                }
            if (acc / n > best_f) {
                best_f = acc / n;
                best = l;
            }
        }
        return grid[best];
    };
    EXPECT_EQ(fit.fold_lambda[0], pick(0));
    EXPECT_EQ(fit.fold_lambda[1], pick(1));
    EXPECT_EQ(fit.lambda, pick(-1));
}

TEST(FitLambdaTest, DominantZeroLambda) {
    // A similarity where lambda = 0 already scores F = 1 everywhere keeps lambda = 0 first in
    // the grid as the tie-broken winner.
    PipelineConfig cfg;
    cfg.ntd.max_outer_iters = 30;
    const auto songs = corpus(2, 0.0);
    const LambdaFit fit = fit_lambda(songs, {0.0}, {4, 3}, 3.0, cfg);
    EXPECT_EQ(fit.lambda, 0.0);
}

}  // namespace
}  // namespace ntdseg
