// SPDX-License-Identifier: MIT
// ntdseg: decompose, segment and evaluate bar-synchronized chromagrams from the command line.
#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "ntdseg/eval.hpp"
#include "ntdseg/serialize.hpp"

namespace fs = std::filesystem;
using namespace ntdseg;

namespace {

struct DecomposeOptions {
    std::size_t frames_per_bar = 96;
    std::size_t t_rank = 12;
    std::size_t b_rank = 10;
    std::size_t f_rank = 0;  // 0 = pitch-class count
    bool free_w = false;
    std::size_t max_iters = 100;
    double outer_tolerance = 1e-8;
    std::uint64_t seed = 0;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--frames-per-bar", frames_per_bar, "Frames per bar in the tensor")->capture_default_str();
        cmd.add_option("--t-rank", t_rank, "Rank of the within-bar time mode")->capture_default_str();
        cmd.add_option("--b-rank", b_rank, "Rank of the bar mode")->capture_default_str();
        cmd.add_option("--f-rank", f_rank, "Rank of the pitch-class mode (with --free-w)");
        cmd.add_flag("--free-w", free_w, "Learn W instead of fixing it to the identity");
        cmd.add_option("--max-iters", max_iters, "Outer iteration cap")->capture_default_str();
        cmd.add_option("--outer-tolerance", outer_tolerance, "Relative objective decrease to stop at")
            ->capture_default_str();
        cmd.add_option("--seed", seed, "Seed for the initialization jitter")->capture_default_str();
    }

    NtdConfig config() const {
        NtdConfig cfg;
        cfg.fix_w_to_identity = !free_w;
        cfg.max_outer_iters = max_iters;
        cfg.outer_tolerance = outer_tolerance;
        cfg.seed = seed;
        return cfg;
    }

    NtdRanks ranks(const Tensor3& x) const {
        const std::size_t f = (free_w && f_rank > 0) ? f_rank : x.dim(0);
        return {f, t_rank, b_rank};
    }
};

struct SegmentOptions {
    double lambda = 1.0;
    std::size_t max_segment_bars = 32;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--lambda", lambda, "Weight of the segment length prior")->capture_default_str();
        cmd.add_option("--max-segment-bars", max_segment_bars, "Longest segment considered")->capture_default_str();
    }

    SegmentationConfig config() const {
        SegmentationConfig cfg;
        cfg.lambda = lambda;
        cfg.max_segment_bars = max_segment_bars;
        cfg.validate();
        return cfg;
    }
};

Tensor3 load_song_tensor(const std::string& chroma_path, const std::string& bars_path, std::size_t fpb) {
    const Chromagram chroma = load_chromagram(chroma_path);
    return tensorize(chroma, load_bars(bars_path), fpb);
}

void write_or_print(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
    } else {
        detail::write_text_file(path, text);
    }
}

std::string trace_csv(const std::vector<double>& trace) {
    std::string text = "iteration,objective\n";
    for (std::size_t i = 0; i < trace.size(); ++i) text += std::to_string(i) + ',' + detail::format_double(trace[i]) + '\n';
    return text;
}

std::vector<std::size_t> parse_sequence(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size()) {
            throw Error(ErrorKind::parse_error, "pattern sequence entry '" + tok + "' is not a nonnegative integer");
        }
        out.push_back(v);
    }
    if (out.empty()) throw Error(ErrorKind::invalid_argument, "pattern sequence is empty");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonnegative Tucker decomposition of bar-synchronized chromagrams and structural segmentation"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic song: chromagram, bar grid, reference annotation");
    std::size_t n_patterns = 0, block_bars = 8, pitch_classes = 12, synth_fpb = 96;
    std::string sequence = "0,1,0,1";
    double noise = 0.0;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    synth->add_option("--patterns", n_patterns, "Number of distinct patterns (default: largest index in --sequence + 1)");
    synth->add_option("--sequence", sequence, "Comma-separated pattern index per block")->capture_default_str();
    synth->add_option("--block-bars", block_bars, "Bars per block")->capture_default_str();
    synth->add_option("--pitch-classes", pitch_classes)->capture_default_str();
    synth->add_option("--frames-per-bar", synth_fpb)->capture_default_str();
    synth->add_option("--noise", noise, "Uniform noise level added to every entry")->capture_default_str();
    synth->add_option("--seed", synth_seed)->capture_default_str();
    synth->add_option("-o,--out-dir", synth_out, "Directory for chroma.json, bars.json, reference.txt")->required();

    // decompose
    auto* dec = app.add_subcommand("decompose", "Fit an NTD model to a song");
    DecomposeOptions dec_opts;
    std::string dec_chroma, dec_bars, dec_out, dec_trace;
    dec->add_option("--chroma", dec_chroma, "Chromagram JSON")->required();
    dec->add_option("--bars", dec_bars, "Bar grid JSON")->required();
    dec->add_option("-o,--output", dec_out, "Model JSON to write")->required();
    dec->add_option("--trace", dec_trace, "Objective trace CSV to write");
    dec_opts.add_to(*dec);

    // segment
    auto* seg = app.add_subcommand("segment", "Segment a song into structural sections");
    DecomposeOptions seg_dec;
    SegmentOptions seg_opts;
    std::string seg_chroma, seg_bars, seg_model, seg_out, seg_autosim, seg_features = "ntd";
    seg->add_option("--chroma", seg_chroma, "Chromagram JSON")->required();
    seg->add_option("--bars", seg_bars, "Bar grid JSON")->required();
    seg->add_option("--model", seg_model, "Previously fitted model (otherwise decomposed here)");
    seg->add_option("--features", seg_features, "Bar descriptors: ntd (rows of Q) or chroma")
        ->check(CLI::IsMember({"ntd", "chroma"}))
        ->capture_default_str();
    seg->add_option("-o,--output", seg_out, "MIREX-style boundary file")->required();
    seg->add_option("--autosimilarity", seg_autosim, "Autosimilarity CSV (default: <output>.autosimilarity.csv)");
    seg_dec.add_to(*seg);
    seg_opts.add_to(*seg);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Score estimated boundaries against a reference");
    std::string ev_ref, ev_est, ev_bars, ev_out;
    std::vector<double> ev_tol = default_tolerances();
    ev->add_option("--reference", ev_ref, "Reference annotation")->required();
    ev->add_option("--estimate", ev_est, "Estimated annotation")->required();
    ev->add_option("--bars", ev_bars, "Snap estimated boundaries to this bar grid first");
    ev->add_option("--tolerance", ev_tol, "Tolerance window in seconds (repeatable)")->capture_default_str();
    ev->add_option("-o,--output", ev_out, "Scores CSV (stdout if omitted)");

    // sweep
    auto* sw = app.add_subcommand("sweep", "Score every (t_rank, b_rank) pair of a grid on one song");
    DecomposeOptions sw_dec;
    SegmentOptions sw_seg;
    std::string sw_chroma, sw_bars, sw_ref, sw_out;
    std::vector<std::size_t> sw_t, sw_b;
    std::vector<double> sw_tol = default_tolerances();
    unsigned sw_threads = 0;
    sw->add_option("--chroma", sw_chroma)->required();
    sw->add_option("--bars", sw_bars)->required();
    sw->add_option("--reference", sw_ref)->required();
    sw->add_option("--t-ranks", sw_t, "t_rank values (default 12..48 step 4)");
    sw->add_option("--b-ranks", sw_b, "b_rank values (default 12..48 step 4)");
    sw->add_option("--tolerance", sw_tol)->capture_default_str();
    sw->add_option("--threads", sw_threads, "Worker threads (0 = hardware)")->capture_default_str();
    sw->add_option("-o,--output", sw_out, "Sweep CSV (stdout if omitted)");
    sw_dec.add_to(*sw);
    sw_seg.add_to(*sw);

    // fit-lambda
    auto* fl = app.add_subcommand("fit-lambda", "Two-fold selection of lambda over a corpus of song directories");
    DecomposeOptions fl_dec;
    std::vector<std::string> fl_songs;
    std::vector<double> fl_grid{0.0, 0.25, 0.5, 1.0, 2.0, 4.0};
    double fl_tol = 3.0;
    unsigned fl_threads = 0;
    std::string fl_out;
    fl->add_option("--songs", fl_songs, "Directories holding chroma.json, bars.json, reference.txt")->required();
    fl->add_option("--lambdas", fl_grid, "Lambda grid")->capture_default_str();
    fl->add_option("--tolerance", fl_tol)->capture_default_str();
    fl->add_option("--threads", fl_threads)->capture_default_str();
    fl->add_option("-o,--output", fl_out, "Result JSON (stdout if omitted)");
    fl_dec.add_to(*fl);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: kind=invalid_argument message=" << e.what() << '\n';
        return 2;
    }

    try {
        if (*synth) {
            const auto order = parse_sequence(sequence);
            std::vector<std::size_t> assign;
            for (std::size_t p : order) assign.insert(assign.end(), block_bars, p);
            if (n_patterns == 0) n_patterns = *std::max_element(order.begin(), order.end()) + 1;
            const auto patterns = make_patterns(n_patterns, pitch_classes, synth_fpb, synth_seed);
            const SyntheticSong song = synth_song(patterns, assign, noise, synth_seed);
            fs::create_directories(synth_out);
            const fs::path dir(synth_out);
            save_chromagram((dir / "chroma.json").string(), tensor_to_chromagram(song.tensor, song.bars));
            save_bars((dir / "bars.json").string(), song.bars);
            save_annotation((dir / "reference.txt").string(), song.reference);
        } else if (*dec) {
            const Tensor3 x = load_song_tensor(dec_chroma, dec_bars, dec_opts.frames_per_bar);
            const NtdConfig cfg = dec_opts.config();
            const NtdModel m = decompose(x, dec_opts.ranks(x), cfg);
            save_model(dec_out, m, x.dims(), cfg);
            if (!dec_trace.empty()) detail::write_text_file(dec_trace, trace_csv(m.objective_trace));
        } else if (*seg) {
            const Chromagram chroma = load_chromagram(seg_chroma);
            const BarGrid bars = load_bars(seg_bars);
            const Tensor3 x = tensorize(chroma, bars, seg_dec.frames_per_bar);
            Autosimilarity a;
            if (seg_features == "chroma") {
                a = autosimilarity_from_features(barwise_features(x));
            } else if (!seg_model.empty()) {
                const LoadedModel lm = load_model(seg_model);
                if (lm.model.q.rows() != static_cast<Eigen::Index>(bars.bar_count())) {
                    throw Error(ErrorKind::dimension_mismatch,
                                seg_model + ": model has " + std::to_string(lm.model.q.rows()) +
                                    " bars but the bar grid has " + std::to_string(bars.bar_count()));
                }
                a = autosimilarity_from_features(lm.model.q);
            } else {
                a = autosimilarity_from_features(decompose(x, seg_dec.ranks(x), seg_dec.config()).q);
            }
            const Segmentation s = segment(a, seg_opts.config(), bars);
            save_annotation(seg_out, to_annotation(s.boundary_times));
            detail::write_text_file(seg_autosim.empty() ? seg_out + ".autosimilarity.csv" : seg_autosim,
                                    format_matrix_csv(a.values));
        } else if (*ev) {
            const auto ref = load_annotation(ev_ref).boundaries();
            auto est = load_annotation(ev_est).boundaries();
            if (!ev_bars.empty()) est = snap_to_downbeats(est, load_bars(ev_bars));
            std::vector<HitRateScore> scores;
            for (double tol : ev_tol) scores.push_back(hit_rate(ref, est, tol));
            write_or_print(ev_out, format_scores_csv(scores));
        } else if (*sw) {
            const Chromagram chroma = load_chromagram(sw_chroma);
            const BarGrid bars = load_bars(sw_bars);
            const Tensor3 x = tensorize(chroma, bars, sw_dec.frames_per_bar);
            const ReferenceSegmentation ref = load_annotation(sw_ref);
            std::vector<RankPair> grid;
            if (sw_t.empty() && sw_b.empty()) {
                grid = default_rank_grid();
            } else {
                const std::vector<std::size_t> def{12, 16, 20, 24, 28, 32, 36, 40, 44, 48};
                for (std::size_t t : sw_t.empty() ? def : sw_t)
                    for (std::size_t b : sw_b.empty() ? def : sw_b) grid.push_back({t, b});
            }
            PipelineConfig cfg;
            cfg.ntd = sw_dec.config();
            cfg.segmentation = sw_seg.config();
            cfg.tolerances = sw_tol;
            cfg.threads = sw_threads;
            write_or_print(sw_out, format_sweep_csv(rank_sweep(x, bars, ref, grid, cfg)));
        } else if (*fl) {
            std::vector<AnnotatedSong> corpus;
            for (const std::string& d : fl_songs) {
                const fs::path dir(d);
                const BarGrid bars = load_bars((dir / "bars.json").string());
                Tensor3 x = tensorize(load_chromagram((dir / "chroma.json").string()), bars, fl_dec.frames_per_bar);
                corpus.push_back({std::move(x), bars, load_annotation((dir / "reference.txt").string())});
            }
            PipelineConfig cfg;
            cfg.ntd = fl_dec.config();
            cfg.threads = fl_threads;
            const LambdaFit fit = fit_lambda(corpus, fl_grid, {fl_dec.t_rank, fl_dec.b_rank}, fl_tol, cfg);
            nlohmann::json j;
            j["lambda"] = fit.lambda;
            j["fold_lambda"] = fit.fold_lambda;
            j["fold_test_f"] = fit.fold_test_f;
            j["mean_test_f"] = fit.mean_test_f;
            j["lambda_grid"] = fl_grid;
            j["f_table"] = fit.f_table;
            write_or_print(fl_out, j.dump(1) + '\n');
        }
    } catch (const Error& e) {
        std::cerr << "error: kind=" << to_string(e.kind()) << " message=" << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: kind=internal message=" << e.what() << '\n';
        return 1;
    }
    return 0;
}
