// SPDX-License-Identifier: MIT
#pragma once

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ntdseg/error.hpp"
#include "ntdseg/tensor.hpp"

namespace ntdseg {

/// Pitch-class energy over time: values(c, n) is the energy of pitch class c in frame n.
struct Chromagram {
    std::size_t n_pitch_classes = 12;
    std::vector<double> frame_times;  // seconds, strictly increasing
    Matrix values;                    // n_pitch_classes x n_frames

    std::size_t frame_count() const { return frame_times.size(); }

    void validate() const {
        if (n_pitch_classes == 0) {
            throw Error(ErrorKind::invalid_argument, "chromagram needs at least one pitch class");
        }
        if (static_cast<std::size_t>(values.rows()) != n_pitch_classes ||
            static_cast<std::size_t>(values.cols()) != frame_times.size()) {
            throw Error(ErrorKind::dimension_mismatch,
                        "chromagram values must be " + std::to_string(n_pitch_classes) + " x " +
                            std::to_string(frame_times.size()));
        }
        for (std::size_t n = 0; n < frame_times.size(); ++n) {
            if (!std::isfinite(frame_times[n])) {
                throw Error(ErrorKind::non_finite, "frame_times[" + std::to_string(n) + "] is not finite");
            }
            if (n > 0 && !(frame_times[n] > frame_times[n - 1])) {
                throw Error(ErrorKind::invalid_argument,
                            "frame_times not strictly increasing at index " + std::to_string(n));
            }
        }
        for (Eigen::Index n = 0; n < values.cols(); ++n) {
            for (Eigen::Index c = 0; c < values.rows(); ++c) {
                const double v = values(c, n);
                if (!std::isfinite(v)) {
                    throw Error(ErrorKind::non_finite, "chroma value at frame " + std::to_string(n) +
                                                           ", pitch class " + std::to_string(c) +
                                                           " is not finite");
                }
                if (v < 0.0) {
                    throw Error(ErrorKind::invalid_argument,
                                "negative chroma value at frame " + std::to_string(n) +
                                    ", pitch class " + std::to_string(c));
                }
            }
        }
    }

    friend bool operator==(const Chromagram& a, const Chromagram& b) {
        return a.n_pitch_classes == b.n_pitch_classes && a.frame_times == b.frame_times &&
               a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols() &&
               a.values == b.values;
    }
};

/// Downbeat times; bar b spans [downbeats[b], downbeats[b + 1]).
struct BarGrid {
    std::vector<double> downbeats;

    std::size_t bar_count() const { return downbeats.empty() ? 0 : downbeats.size() - 1; }

    void validate() const {
        if (downbeats.size() < 2) {
            throw Error(ErrorKind::invalid_argument, "bar grid needs at least 2 downbeats");
        }
        for (std::size_t i = 0; i < downbeats.size(); ++i) {
            if (!std::isfinite(downbeats[i])) {
                throw Error(ErrorKind::non_finite, "downbeats[" + std::to_string(i) + "] is not finite");
            }
            if (i > 0 && !(downbeats[i] > downbeats[i - 1])) {
                throw Error(ErrorKind::invalid_argument,
                            "downbeats not strictly increasing at index " + std::to_string(i));
            }
        }
    }

    friend bool operator==(const BarGrid&, const BarGrid&) = default;
};

struct Segment {
    double start = 0.0;
    double end = 0.0;
    std::string label;

    friend bool operator==(const Segment&, const Segment&) = default;
};

/// Contiguous labelled segments, MIREX style.
struct ReferenceSegmentation {
    std::vector<Segment> segments;

    void validate() const {
        for (std::size_t k = 0; k < segments.size(); ++k) {
            if (!(segments[k].start < segments[k].end)) {
                throw Error(ErrorKind::invalid_argument,
                            "segment " + std::to_string(k) + " has start >= end");
            }
            if (k > 0 && segments[k].start != segments[k - 1].end) {
                throw Error(ErrorKind::invalid_argument,
                            "segment " + std::to_string(k) + " does not start where segment " +
                                std::to_string(k - 1) + " ends");
            }
        }
    }

    /// Segment start times followed by the final end time.
    std::vector<double> boundaries() const {
        std::vector<double> out;
        out.reserve(segments.size() + 1);
        for (const Segment& s : segments) out.push_back(s.start);
        if (!segments.empty()) out.push_back(segments.back().end);
        return out;
    }

    friend bool operator==(const ReferenceSegmentation&, const ReferenceSegmentation&) = default;
};

// ---------------------------------------------------------------------------------------------
// File formats

namespace detail {

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io_error, "cannot open '" + path + "'");
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse_error, path + ": " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io_error, "cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw Error(ErrorKind::io_error, "failed writing '" + path + "'");
}

inline double json_number(const nlohmann::json& j, const std::string& where) {
    if (!j.is_number()) throw Error(ErrorKind::parse_error, where + " is not a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw Error(ErrorKind::non_finite, where + " is not finite");
    return v;
}

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline bool parse_double(const std::string& token, double& out) {
    const char* first = token.data();
    const char* last = first + token.size();
    if (first != last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last;
}

}  // namespace detail

inline nlohmann::json chromagram_to_json(const Chromagram& c) {
    nlohmann::json frames = nlohmann::json::array();
    for (Eigen::Index n = 0; n < c.values.cols(); ++n) {
        std::vector<double> col(static_cast<std::size_t>(c.values.rows()));
        for (Eigen::Index p = 0; p < c.values.rows(); ++p) col[static_cast<std::size_t>(p)] = c.values(p, n);
        frames.push_back(col);
    }
    return {{"pitch_classes", c.n_pitch_classes}, {"frame_times", c.frame_times}, {"chroma", frames}};
}

inline Chromagram chromagram_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorKind::parse_error, "chromagram document must be an object");
    for (const char* key : {"pitch_classes", "frame_times", "chroma"}) {
        if (!j.contains(key)) {
            throw Error(ErrorKind::parse_error, std::string("chromagram missing field '") + key + "'");
        }
    }
    Chromagram c;
    const auto& pc = j.at("pitch_classes");
    if (!pc.is_number_integer() || pc.get<long long>() <= 0) {
        throw Error(ErrorKind::parse_error, "pitch_classes must be a positive integer");
    }
    c.n_pitch_classes = pc.get<std::size_t>();
    const auto& times = j.at("frame_times");
    const auto& chroma = j.at("chroma");
    if (!times.is_array() || !chroma.is_array()) {
        throw Error(ErrorKind::parse_error, "frame_times and chroma must be arrays");
    }
    if (times.size() != chroma.size()) {
        throw Error(ErrorKind::parse_error, "frame_times has " + std::to_string(times.size()) +
                                                " entries but chroma has " +
                                                std::to_string(chroma.size()) + " frames");
    }
    c.frame_times.reserve(times.size());
    for (std::size_t n = 0; n < times.size(); ++n) {
        c.frame_times.push_back(detail::json_number(times[n], "frame_times[" + std::to_string(n) + "]"));
    }
    c.values.resize(static_cast<Eigen::Index>(c.n_pitch_classes), static_cast<Eigen::Index>(chroma.size()));
    for (std::size_t n = 0; n < chroma.size(); ++n) {
        const auto& frame = chroma[n];
        if (!frame.is_array() || frame.size() != c.n_pitch_classes) {
            throw Error(ErrorKind::parse_error, "chroma frame " + std::to_string(n) + " must hold " +
                                                    std::to_string(c.n_pitch_classes) + " values");
        }
        for (std::size_t p = 0; p < c.n_pitch_classes; ++p) {
            c.values(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n)) = detail::json_number(
                frame[p], "chroma[" + std::to_string(n) + "][" + std::to_string(p) + "]");
        }
    }
    c.validate();
    return c;
}

inline Chromagram load_chromagram(const std::string& path) {
    const nlohmann::json j = detail::read_json_file(path);
    try {
        return chromagram_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse_error, path + ": " + e.what());
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

inline void save_chromagram(const std::string& path, const Chromagram& c) {
    c.validate();
    detail::write_text_file(path, chromagram_to_json(c).dump() + "\n");
}

inline BarGrid bars_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("downbeats") || !j.at("downbeats").is_array()) {
        throw Error(ErrorKind::parse_error, "bar document needs a 'downbeats' array");
    }
    BarGrid g;
    const auto& d = j.at("downbeats");
    for (std::size_t i = 0; i < d.size(); ++i) {
        g.downbeats.push_back(detail::json_number(d[i], "downbeats[" + std::to_string(i) + "]"));
    }
    g.validate();
    return g;
}

inline BarGrid load_bars(const std::string& path) {
    const nlohmann::json j = detail::read_json_file(path);
    try {
        return bars_from_json(j);
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

inline void save_bars(const std::string& path, const BarGrid& bars) {
    bars.validate();
    detail::write_text_file(path, nlohmann::json{{"downbeats", bars.downbeats}}.dump() + "\n");
}

/// Parses "start end label" lines separated by tabs or spaces. Blank lines are skipped; the
/// label is the remainder of the line after the two times.
inline ReferenceSegmentation parse_annotation(std::istream& in, const std::string& source = "annotation") {
    ReferenceSegmentation ref;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::istringstream fields(line);
        std::string start_tok, end_tok;
        fields >> start_tok >> end_tok;
        Segment s;
        const std::string where = source + " line " + std::to_string(line_no);
        if (!detail::parse_double(start_tok, s.start)) {
            throw Error(ErrorKind::parse_error, where + ": start '" + start_tok + "' is not a number");
        }
        if (!detail::parse_double(end_tok, s.end)) {
            throw Error(ErrorKind::parse_error, where + ": end '" + end_tok + "' is not a number");
        }
        if (!std::isfinite(s.start) || !std::isfinite(s.end)) {
            throw Error(ErrorKind::non_finite, where + ": times must be finite");
        }
        std::getline(fields, s.label);
        const auto first = s.label.find_first_not_of(" \t");
        s.label = first == std::string::npos ? std::string() : s.label.substr(first);
        if (s.label.empty()) throw Error(ErrorKind::parse_error, where + ": missing label");
        ref.segments.push_back(std::move(s));
    }
    try {
        ref.validate();
    } catch (const Error& e) {
        throw Error(e.kind(), source + ": " + e.what());
    }
    return ref;
}

inline ReferenceSegmentation load_annotation(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io_error, "cannot open '" + path + "'");
    return parse_annotation(in, path);
}

inline std::string format_annotation(const ReferenceSegmentation& ref) {
    std::string text;
    for (const Segment& s : ref.segments) {
        text += detail::format_double(s.start) + '\t' + detail::format_double(s.end) + '\t' + s.label + '\n';
    }
    return text;
}

inline void save_annotation(const std::string& path, const ReferenceSegmentation& ref) {
    ref.validate();
    detail::write_text_file(path, format_annotation(ref));
}

// ---------------------------------------------------------------------------------------------
// Tensorization

namespace detail {

// Index of the frame closest to t; ties go to the earlier frame.
inline std::size_t nearest_frame(const std::vector<double>& times, double t) {
    const auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 0;
    if (it == times.end()) return times.size() - 1;
    const std::size_t hi = static_cast<std::size_t>(it - times.begin());
    return (t - times[hi - 1] <= times[hi] - t) ? hi - 1 : hi;
}

}  // namespace detail

/// Pitch-class x frames_per_bar x bars tensor. Each bar is cut into frames_per_bar equal
/// sub-intervals; an output frame is the mean of the chroma frames whose time falls in its
/// sub-interval, or the frame nearest to the sub-interval centre when none does.
inline Tensor3 tensorize(const Chromagram& chroma, const BarGrid& bars, std::size_t frames_per_bar = 96) {
    chroma.validate();
    bars.validate();
    if (frames_per_bar == 0) throw Error(ErrorKind::invalid_argument, "frames_per_bar must be positive");
    if (chroma.frame_count() == 0) throw Error(ErrorKind::degenerate_input, "chromagram has no frames");

    const std::size_t pcs = chroma.n_pitch_classes;
    const std::size_t n_bars = bars.bar_count();
    const auto& times = chroma.frame_times;
    Tensor3 out({pcs, frames_per_bar, n_bars});
    std::vector<double> sums(pcs * frames_per_bar);
    std::vector<std::size_t> counts(frames_per_bar);

    for (std::size_t b = 0; b < n_bars; ++b) {
        const double start = bars.downbeats[b];
        const double end = bars.downbeats[b + 1];
        const double span = end - start;
        const auto first = std::lower_bound(times.begin(), times.end(), start);
        const auto last = std::lower_bound(times.begin(), times.end(), end);
        if (first == last) {
            throw Error(ErrorKind::degenerate_input,
                        "bar " + std::to_string(b) + " [" + detail::format_double(start) + ", " +
                            detail::format_double(end) + ") contains no chroma frames");
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (auto it = first; it != last; ++it) {
            const auto n = static_cast<Eigen::Index>(it - times.begin());
            const double pos = (*it - start) * static_cast<double>(frames_per_bar) / span;
            const std::size_t s = std::min(frames_per_bar - 1, static_cast<std::size_t>(std::max(0.0, std::floor(pos))));
            ++counts[s];
            for (std::size_t p = 0; p < pcs; ++p) sums[s * pcs + p] += chroma.values(static_cast<Eigen::Index>(p), n);
        }
        for (std::size_t s = 0; s < frames_per_bar; ++s) {
            if (counts[s] > 0) {
                for (std::size_t p = 0; p < pcs; ++p) out(p, s, b) = sums[s * pcs + p] / static_cast<double>(counts[s]);
            } else {
                const double centre = start + (static_cast<double>(s) + 0.5) * span / static_cast<double>(frames_per_bar);
                const auto n = static_cast<Eigen::Index>(detail::nearest_frame(times, centre));
                for (std::size_t p = 0; p < pcs; ++p) out(p, s, b) = chroma.values(static_cast<Eigen::Index>(p), n);
            }
        }
    }
    return out;
}

/// Inverse of tensorize for a tensor: one chroma frame at the centre of every sub-interval.
inline Chromagram tensor_to_chromagram(const Tensor3& t, const BarGrid& bars) {
    bars.validate();
    if (bars.bar_count() != t.dim(2)) {
        throw Error(ErrorKind::dimension_mismatch, "bar grid has " + std::to_string(bars.bar_count()) +
                                                       " bars but the tensor has " + std::to_string(t.dim(2)));
    }
    const std::size_t fpb = t.dim(1);
    Chromagram c;
    c.n_pitch_classes = t.dim(0);
    c.values.resize(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(fpb * t.dim(2)));
    for (std::size_t b = 0; b < t.dim(2); ++b) {
        const double start = bars.downbeats[b];
        const double span = bars.downbeats[b + 1] - start;
        for (std::size_t s = 0; s < fpb; ++s) {
            c.frame_times.push_back(start + (static_cast<double>(s) + 0.5) * span / static_cast<double>(fpb));
            for (std::size_t p = 0; p < t.dim(0); ++p) {
                c.values(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(b * fpb + s)) = t(p, s, b);
            }
        }
    }
    return c;
}

// ---------------------------------------------------------------------------------------------
// Synthetic songs

struct SyntheticSong {
    Tensor3 tensor;
    BarGrid bars;
    ReferenceSegmentation reference;
};

inline constexpr double kSyntheticBarSeconds = 2.0;

/// Bar b of the tensor is patterns[bar_assignment[b]] plus uniform noise in [0, noise_level].
/// Bars last 2 s; reference segments change exactly where the assigned pattern changes.
inline SyntheticSong synth_song(const std::vector<Matrix>& patterns,
                                const std::vector<std::size_t>& bar_assignment, double noise_level,
                                std::uint64_t seed) {
    if (bar_assignment.empty()) throw Error(ErrorKind::invalid_argument, "bar assignment is empty");
    if (patterns.empty()) throw Error(ErrorKind::invalid_argument, "no patterns given");
    if (!(noise_level >= 0.0) || !std::isfinite(noise_level)) {
        throw Error(ErrorKind::invalid_argument, "noise_level must be finite and nonnegative");
    }
    const Eigen::Index pcs = patterns.front().rows();
    const Eigen::Index fpb = patterns.front().cols();
    for (std::size_t p = 0; p < patterns.size(); ++p) {
        if (patterns[p].rows() != pcs || patterns[p].cols() != fpb || pcs == 0 || fpb == 0) {
            throw Error(ErrorKind::dimension_mismatch, "pattern " + std::to_string(p) + " has a different shape");
        }
        if ((patterns[p].array() < 0.0).any() || !patterns[p].allFinite()) {
            throw Error(ErrorKind::invalid_argument, "pattern " + std::to_string(p) + " must be finite and nonnegative");
        }
    }
    for (std::size_t b = 0; b < bar_assignment.size(); ++b) {
        if (bar_assignment[b] >= patterns.size()) {
            throw Error(ErrorKind::invalid_argument, "bar " + std::to_string(b) + " assigned to missing pattern " +
                                                         std::to_string(bar_assignment[b]));
        }
    }

    const std::size_t n_bars = bar_assignment.size();
    SyntheticSong song;
    song.tensor = Tensor3({static_cast<std::size_t>(pcs), static_cast<std::size_t>(fpb), n_bars});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(0.0, noise_level);
    for (std::size_t b = 0; b < n_bars; ++b) {
        const Matrix& pat = patterns[bar_assignment[b]];
        for (Eigen::Index p = 0; p < pcs; ++p) {
            for (Eigen::Index s = 0; s < fpb; ++s) {
                double v = pat(p, s);
                if (noise_level > 0.0) v += noise(rng);
                song.tensor(static_cast<std::size_t>(p), static_cast<std::size_t>(s), b) = std::max(0.0, v);
            }
        }
    }

    for (std::size_t b = 0; b <= n_bars; ++b) song.bars.downbeats.push_back(kSyntheticBarSeconds * static_cast<double>(b));

    std::size_t start = 0;
    for (std::size_t b = 1; b <= n_bars; ++b) {
        if (b == n_bars || bar_assignment[b] != bar_assignment[start]) {
            song.reference.segments.push_back({song.bars.downbeats[start], song.bars.downbeats[b],
                                               "P" + std::to_string(bar_assignment[start])});
            start = b;
        }
    }
    return song;
}

/// Random patterns with disjoint pitch-class supports (pitch class c belongs to pattern
/// c mod count) when count <= pitch_classes; dense random patterns otherwise.
inline std::vector<Matrix> make_patterns(std::size_t count, std::size_t pitch_classes,
                                         std::size_t frames_per_bar, std::uint64_t seed) {
    if (count == 0 || pitch_classes == 0 || frames_per_bar == 0) {
        throw Error(ErrorKind::invalid_argument, "pattern count and shape must be positive");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> level(0.2, 1.0);
    std::vector<Matrix> out;
    for (std::size_t k = 0; k < count; ++k) {
        Matrix m = Matrix::Zero(static_cast<Eigen::Index>(pitch_classes), static_cast<Eigen::Index>(frames_per_bar));
        for (std::size_t c = 0; c < pitch_classes; ++c) {
            if (count <= pitch_classes && c % count != k) continue;
            for (std::size_t s = 0; s < frames_per_bar; ++s) {
                m(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(s)) = level(rng);
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace ntdseg
