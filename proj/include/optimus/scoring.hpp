#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "image.hpp"
#include "model.hpp"
#include "sampler.hpp"

namespace optimus {

/// Anything that maps ((A1,Q), (A2,Q)) to the probability that Q is closer to A2.
template <class C>
concept Classifier = requires(const C& c, const PairTensor<float>& t) {
    { c.context() } -> std::convertible_to<int>;
    { c.predict(t, t) } -> std::convertible_to<double>;
};

enum class Measure { pivot, spearman };

inline const char* to_string(Measure m) { return m == Measure::pivot ? "pivot" : "spearman"; }

inline Measure measure_from_string(const std::string& s) {
    if (s == "pivot")
        return Measure::pivot;
    if (s == "spearman")
        return Measure::spearman;
    throw Error("unknown measure '" + s + "' (expected pivot or spearman)");
}

/// `context` anchors are the first and last c images; `single` uses only the
/// first and last image, repeated to fill the model's context.
enum class AnchorMode { context, single };

struct ScoreSeries {
    std::string parent_id;
    std::vector<double> values;
    std::vector<int> query_indices;
    std::vector<int> timestamps;  // month of each query
};

struct ChangeResult {
    std::string series_id;
    Measure measure = Measure::pivot;
    double score = 0.0;
    std::optional<int> pivot_index;  // length of the prefix before the split, in [1, m-1]
    std::optional<int> pivot_month;  // month of the first query after the split
};

template <Classifier C>
ScoreSeries score_series(const C& model, const TimeSeries& series, AnchorMode mode = AnchorMode::context) {
    const int c = model.context();
    const int n = static_cast<int>(series.size());
    if (n < 2 * c + 1)
        throw Error("series '" + series.id + "' has " + std::to_string(n) + " images; scoring with context " +
                    std::to_string(c) + " needs at least " + std::to_string(2 * c + 1));
    const std::span<const Image> imgs(series.images);
    std::vector<Image> first_anchor, last_anchor;
    int lo = c, hi = n - c;  // queries in [lo, hi)
    if (mode == AnchorMode::context) {
        first_anchor.assign(imgs.begin(), imgs.begin() + c);
        last_anchor.assign(imgs.end() - c, imgs.end());
    } else {
        first_anchor.assign(static_cast<std::size_t>(c), imgs.front());
        last_anchor.assign(static_cast<std::size_t>(c), imgs.back());
        lo = 1;
        hi = n - 1;
    }
    ScoreSeries out;
    out.parent_id = series.id;
    for (int j = lo; j < hi; ++j) {
        const Image& q = imgs[static_cast<std::size_t>(j)];
        out.values.push_back(model.predict(assemble_pair_tensor<float>(first_anchor, q), assemble_pair_tensor<float>(last_anchor, q)));
        out.query_indices.push_back(j);
        out.timestamps.push_back(series.timestamps[static_cast<std::size_t>(j)]);
    }
    return out;
}

/// Largest absolute gap between the prefix mean and suffix mean over splits
/// i = 1..m-1. Returns (score, i*) with the earliest i* on ties.
inline std::pair<double, int> pivot_split(std::span<const double> s) {
    const std::size_t m = s.size();
    if (m < 2)
        throw Error("pivot score needs at least two values");
    // Sums are taken relative to s[0] so a constant series gives exactly zero.
    const double ref = s[0];
    double total = 0.0;
    for (double v : s)
        total += v - ref;
    double prefix = 0.0, best = -1.0;
    int best_i = 1;
    for (std::size_t i = 1; i < m; ++i) {
        prefix += s[i - 1] - ref;
        const double gap = std::abs(prefix / static_cast<double>(i) - (total - prefix) / static_cast<double>(m - i));
        if (gap > best) {
            best = gap;
            best_i = static_cast<int>(i);
        }
    }
    return {best, best_i};
}

/// Average (fractional) ranks, 1-based.
inline std::vector<double> average_ranks(std::span<const double> s) {
    std::vector<std::size_t> order(s.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
    std::vector<double> ranks(s.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && s[order[j + 1]] == s[order[i]])
            ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

/// rho = 1 - 6 sum (rank(s_i) - i)^2 / (m (m^2 - 1)).
inline double spearman_rho(std::span<const double> s) {
    const std::size_t m = s.size();
    if (m < 2)
        throw Error("spearman measure needs at least two values");
    const auto ranks = average_ranks(s);
    double d2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double d = ranks[i] - static_cast<double>(i + 1);
        d2 += d * d;
    }
    const double md = static_cast<double>(m);
    return 1.0 - 6.0 * d2 / (md * (md * md - 1.0));
}

inline ChangeResult pivot_score(const ScoreSeries& s) {
    auto [score, i] = pivot_split(s.values);
    ChangeResult r{s.parent_id, Measure::pivot, score, i, std::nullopt};
    if (s.timestamps.size() == s.values.size())
        r.pivot_month = s.timestamps[static_cast<std::size_t>(i)];
    return r;
}

inline ChangeResult spearman(const ScoreSeries& s) {
    return {s.parent_id, Measure::spearman, spearman_rho(s.values), std::nullopt, std::nullopt};
}

inline ChangeResult apply_measure(const ScoreSeries& s, Measure m) {
    return m == Measure::pivot ? pivot_score(s) : spearman(s);
}

template <Classifier C>
ChangeResult change_score(const C& model, const TimeSeries& series, Measure measure = Measure::pivot,
                          AnchorMode mode = AnchorMode::context) {
    return apply_measure(score_series(model, series, mode), measure);
}

/// Embedding of one image tiled across every slot of the model's input.
template <class T>
std::vector<T> single_image_embedding(const SiameseModel<T>& model, const Image& img) {
    std::vector<Image> anchor(static_cast<std::size_t>(model.context()), img);
    return model.embed(assemble_pair_tensor<T>(anchor, img));
}

/// Long-term over short-term embedding distance: three random pairs from the
/// first and last calendar years against three random adjacent same-year pairs.
/// nullopt when the short-term distance vanishes (or no same-year pair exists).
template <class T, class Rng>
std::optional<double> distance_ratio_baseline(const SiameseModel<T>& model, const TimeSeries& series, Rng& rng,
                                              int pairs = 3) {
    if (series.size() < 2)
        throw Error("series '" + series.id + "' too short for the distance-ratio baseline");
    auto year = [&](std::size_t i) { return series.timestamps[i] / 12; };
    const int first_year = year(0), last_year = year(series.size() - 1);
    if (last_year - first_year < 1)
        throw Error("series '" + series.id + "' does not span two calendar years");
    std::vector<std::size_t> first, last, adjacent;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (year(i) == first_year)
            first.push_back(i);
        if (year(i) == last_year)
            last.push_back(i);
        if (i + 1 < series.size() && year(i) == year(i + 1))
            adjacent.push_back(i);
    }
    if (adjacent.empty())
        return std::nullopt;

    std::vector<std::optional<std::vector<T>>> cache(series.size());
    auto embedding = [&](std::size_t i) -> const std::vector<T>& {
        if (!cache[i])
            cache[i] = single_image_embedding(model, series.images[i]);
        return *cache[i];
    };
    auto distance = [&](std::size_t a, std::size_t b) {
        const auto& ea = embedding(a);
        const auto& eb = embedding(b);
        double acc = 0.0;
        for (std::size_t k = 0; k < ea.size(); ++k) {
            const double d = static_cast<double>(ea[k]) - static_cast<double>(eb[k]);
            acc += d * d;
        }
        return std::sqrt(acc);
    };
    auto pick = [&](const std::vector<std::size_t>& v) {
        return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
    };
    double long_term = 0.0, short_term = 0.0;
    for (int k = 0; k < pairs; ++k)
        long_term += distance(pick(first), pick(last));
    for (int k = 0; k < pairs; ++k) {
        const std::size_t i = pick(adjacent);
        short_term += distance(i, i + 1);
    }
    long_term /= pairs;
    short_term /= pairs;
    if (short_term < 1e-12)
        return std::nullopt;
    return long_term / short_term;
}

// ---------------------------------------------------------------------------
// CSV

inline void write_score_series_csv(std::ostream& out, std::span<const ScoreSeries> all) {
    out << "series_id,query_index,timestamp_month,score\n";
    out.precision(17);
    for (const auto& s : all)
        for (std::size_t i = 0; i < s.values.size(); ++i)
            out << s.parent_id << ',' << s.query_indices[i] << ',' << s.timestamps[i] << ',' << s.values[i] << '\n';
}

inline void write_change_results_csv(std::ostream& out, std::span<const ChangeResult> all) {
    out << "series_id,measure,score,pivot_index,pivot_month\n";
    out.precision(17);
    for (const auto& r : all) {
        out << r.series_id << ',' << to_string(r.measure) << ',' << r.score << ',';
        if (r.pivot_index)
            out << *r.pivot_index;
        out << ',';
        if (r.pivot_month)
            out << *r.pivot_month;
        out << '\n';
    }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

inline std::vector<std::vector<std::string>> read_csv(std::istream& in, const std::string& expected_header,
                                                      const std::string& origin) {
    std::string line;
    if (!std::getline(in, line))
        throw Error(origin + ": empty file");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != expected_header)
        throw Error(origin + ": expected header '" + expected_header + "'");
    const std::size_t cols = split_csv_line(expected_header).size();
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        auto cells = split_csv_line(line);
        if (cells.size() != cols)
            throw Error(origin + ": malformed row '" + line + "'");
        rows.push_back(std::move(cells));
    }
    return rows;
}

inline double parse_double(const std::string& s, const std::string& origin) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size())
            throw Error("");
        return v;
    } catch (...) {
        throw Error(origin + ": not a number '" + s + "'");
    }
}

inline int parse_int(const std::string& s, const std::string& origin) {
    try {
        std::size_t used = 0;
        int v = std::stoi(s, &used);
        if (used != s.size())
            throw Error("");
        return v;
    } catch (...) {
        throw Error(origin + ": not an integer '" + s + "'");
    }
}

}  // namespace detail

inline std::vector<ChangeResult> read_change_results_csv(std::istream& in, const std::string& origin = "change csv") {
    std::vector<ChangeResult> out;
    for (const auto& row : detail::read_csv(in, "series_id,measure,score,pivot_index,pivot_month", origin)) {
        ChangeResult r;
        r.series_id = row[0];
        r.measure = measure_from_string(row[1]);
        r.score = detail::parse_double(row[2], origin);
        if (!row[3].empty())
            r.pivot_index = detail::parse_int(row[3], origin);
        if (!row[4].empty())
            r.pivot_month = detail::parse_int(row[4], origin);
        out.push_back(std::move(r));
    }
    return out;
}

/// Rows grouped by series id in order of first appearance.
inline std::vector<ScoreSeries> read_score_series_csv(std::istream& in, const std::string& origin = "score csv") {
    std::vector<ScoreSeries> out;
    for (const auto& row : detail::read_csv(in, "series_id,query_index,timestamp_month,score", origin)) {
        if (out.empty() || out.back().parent_id != row[0]) {
            out.emplace_back();
            out.back().parent_id = row[0];
        }
        auto& s = out.back();
        s.query_indices.push_back(detail::parse_int(row[1], origin));
        s.timestamps.push_back(detail::parse_int(row[2], origin));
        s.values.push_back(detail::parse_double(row[3], origin));
    }
    return out;
}

}  // namespace optimus
