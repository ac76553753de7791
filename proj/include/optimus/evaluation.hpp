#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "common.hpp"
#include "scoring.hpp"
#include "train.hpp"

namespace optimus {

struct LabeledScore {
    std::string id;
    double score = 0.0;
    int label = 0;  // 1 = persistent change
};

struct CurvePoint {
    double threshold = 0.0;
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    double tpr = 0.0;
    double fpr = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
};

struct EvalReport {
    double auroc = 0.0;
    double max_f1 = 0.0;
    double best_threshold = 0.0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    std::vector<CurvePoint> curve;  // one point per distinct score, descending threshold
};

namespace detail {

inline std::pair<std::size_t, std::size_t> class_counts(std::span<const LabeledScore> items) {
    std::size_t pos = 0;
    for (const auto& it : items) {
        if (it.label != 0 && it.label != 1)
            throw Error("label of '" + it.id + "' is not 0 or 1");
        pos += static_cast<std::size_t>(it.label);
    }
    return {pos, items.size() - pos};
}

}  // namespace detail

/// Mann-Whitney form: P(pos > neg) + 0.5 P(pos == neg), via average ranks.
inline double auroc(std::span<const LabeledScore> items) {
    const auto [pos, neg] = detail::class_counts(items);
    if (pos == 0 || neg == 0)
        throw Error("AUROC needs at least one positive and one negative item");
    std::vector<double> scores;
    scores.reserve(items.size());
    for (const auto& it : items)
        scores.push_back(it.score);
    const auto ranks = average_ranks(scores);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].label == 1)
            rank_sum += ranks[i];
    const double p = static_cast<double>(pos), n = static_cast<double>(neg);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

/// Thresholds sweep the distinct scores; an item is predicted positive when score >= threshold.
inline std::vector<CurvePoint> threshold_curve(std::span<const LabeledScore> items) {
    const auto [pos, neg] = detail::class_counts(items);
    std::vector<LabeledScore> sorted(items.begin(), items.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    std::vector<CurvePoint> curve;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < sorted.size();) {
        const double t = sorted[i].score;
        for (; i < sorted.size() && sorted[i].score == t; ++i)
            (sorted[i].label ? tp : fp) += 1;
        CurvePoint c;
        c.threshold = t;
        c.true_positives = tp;
        c.false_positives = fp;
        c.tpr = pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
        c.fpr = neg ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0;
        c.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        c.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + (pos - tp));
        curve.push_back(c);
    }
    return curve;
}

/// Best F1 over all thresholds and the threshold achieving it (larger threshold on ties).
inline std::pair<double, double> max_f1(std::span<const LabeledScore> items) {
    const auto [pos, neg] = detail::class_counts(items);
    (void)neg;
    if (pos == 0)
        throw Error("max F1 needs at least one positive item");
    double best = -1.0, threshold = 0.0;
    for (const auto& c : threshold_curve(items))
        if (c.f1 > best) {
            best = c.f1;
            threshold = c.threshold;
        }
    return {best, threshold};
}

inline EvalReport evaluate(std::span<const LabeledScore> items) {
    EvalReport r;
    std::tie(r.n_pos, r.n_neg) = detail::class_counts(items);
    r.auroc = auroc(items);
    std::tie(r.max_f1, r.best_threshold) = max_f1(items);
    r.curve = threshold_curve(items);
    return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& c : r.curve)
        curve.push_back({{"threshold", c.threshold},
                         {"tp", c.true_positives},
                         {"fp", c.false_positives},
                         {"tpr", c.tpr},
                         {"fpr", c.fpr},
                         {"precision", c.precision},
                         {"f1", c.f1}});
    return {{"auroc", r.auroc},   {"max_f1", r.max_f1}, {"best_threshold", r.best_threshold},
            {"n_pos", r.n_pos},   {"n_neg", r.n_neg},   {"curve", std::move(curve)}};
}

struct BenchmarkResult {
    EvalReport report;
    std::vector<ChangeResult> results;
    std::vector<LabeledScore> items;
};

/// Change score for every series, then AUROC and max F1 against `labels`.
template <Classifier C>
BenchmarkResult run_benchmark(const C& model, std::span<const TimeSeries> series, std::span<const int> labels,
                              Measure measure = Measure::pivot, AnchorMode mode = AnchorMode::context) {
    if (series.size() != labels.size())
        throw Error("benchmark needs one label per series");
    BenchmarkResult out;
    for (std::size_t i = 0; i < series.size(); ++i) {
        out.results.push_back(change_score(model, series[i], measure, mode));
        out.items.push_back({series[i].id, out.results.back().score, labels[i]});
    }
    out.report = evaluate(out.items);
    return out;
}

/// Scores the same series under several measures with one pass of the classifier.
template <Classifier C>
std::vector<EvalReport> evaluate_measures(const C& model, std::span<const TimeSeries> series, std::span<const int> labels,
                                          std::span<const Measure> measures, AnchorMode mode = AnchorMode::context) {
    if (series.size() != labels.size())
        throw Error("benchmark needs one label per series");
    std::vector<std::vector<LabeledScore>> items(measures.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto s = score_series(model, series[i], mode);
        for (std::size_t m = 0; m < measures.size(); ++m)
            items[m].push_back({series[i].id, apply_measure(s, measures[m]).score, labels[i]});
    }
    std::vector<EvalReport> out;
    for (const auto& it : items)
        out.push_back(evaluate(it));
    return out;
}

struct AblationRow {
    int context = 0;
    Measure measure = Measure::pivot;
    double auroc = 0.0;
    double max_f1 = 0.0;
};

/// Retrains once per context size (seeded from `master_seed`) and evaluates
/// every measure on the held-out series.
inline std::vector<AblationRow> run_ablation(std::span<const TimeSeries> train_series, std::span<const TimeSeries> eval_series,
                                             std::span<const int> eval_labels, std::span<const int> contexts,
                                             std::span<const Measure> measures, TrainConfig base, std::uint64_t master_seed,
                                             const EpochCallback& on_epoch = {}) {
    std::vector<AblationRow> rows;
    for (int c : contexts) {
        TrainConfig cfg = base;
        cfg.context = c;
        cfg.seed = derive_seed(master_seed, static_cast<std::uint64_t>(c));
        const auto trained = train(train_series, cfg, on_epoch);
        const auto reports = evaluate_measures(trained.model, eval_series, eval_labels, measures);
        for (std::size_t m = 0; m < measures.size(); ++m)
            rows.push_back({c, measures[m], reports[m].auroc, reports[m].max_f1});
    }
    return rows;
}

inline void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
    out << "context,measure,auroc,max_f1\n";
    out.precision(17);
    for (const auto& r : rows)
        out << r.context << ',' << to_string(r.measure) << ',' << r.auroc << ',' << r.max_f1 << '\n';
}

}  // namespace optimus
