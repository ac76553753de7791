#pragma once

#include <algorithm>
#include <cmath>
#include <iterator>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "evaluation.hpp"
#include "image.hpp"
#include "scene.hpp"
#include "scoring.hpp"
#include "train.hpp"

namespace optimus {

struct ScoredItem {
    std::string id;
    double score = 0.0;
};

/// The ceil(fraction * N) highest-scoring items, best first; equal scores are ordered by id.
inline std::vector<ScoredItem> filter_top_fraction(std::span<const ScoredItem> items, double fraction = 0.5) {
    if (items.empty())
        throw Error("cannot filter an empty list");
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw Error("fraction must lie in (0, 1]");
    std::vector<ScoredItem> sorted(items.begin(), items.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(items.size()) - 1e-9));
    sorted.resize(std::clamp<std::size_t>(keep, 1, sorted.size()));
    return sorted;
}

struct PatchGrid {
    std::string parent_id;
    int rows = 0;
    int cols = 0;
    int patch_edge = 0;
    std::vector<std::string> patch_ids;  // row-major
};

inline PatchGrid make_patch_grid(const std::string& parent_id, int height, int width, int patch_edge) {
    if (patch_edge <= 0 || height % patch_edge != 0 || width % patch_edge != 0)
        throw Error("image size " + std::to_string(height) + "x" + std::to_string(width) +
                    " not divisible by patch edge " + std::to_string(patch_edge));
    PatchGrid g{parent_id, height / patch_edge, width / patch_edge, patch_edge, {}};
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c)
            g.patch_ids.push_back(patch_id(parent_id, r, c));
    return g;
}

/// Per-cell binary change labels (and scores, when produced by a model).
struct PatchLabelMap {
    int rows = 0;
    int cols = 0;
    std::vector<int> labels;     // row-major
    std::vector<double> scores;  // row-major, empty for ground truth
    double threshold = 0.0;

    int label(int r, int c) const { return labels[static_cast<std::size_t>(r) * cols + c]; }
};

/// Ground-truth cell labels from a parent label: all zero for an unchanged
/// parent; for a changed parent a cell is 1 iff it intersects the event region.
inline PatchLabelMap propagate_parent_labels(int parent_label, const PatchGrid& grid, const std::optional<ChangeEvent>& event) {
    PatchLabelMap m;
    m.rows = grid.rows;
    m.cols = grid.cols;
    m.labels.assign(static_cast<std::size_t>(grid.rows) * grid.cols, 0);
    if (parent_label == 0)
        return m;
    if (parent_label != 1)
        throw Error("parent label must be 0 or 1");
    if (!event)
        throw Error("changed parent '" + grid.parent_id + "' has no event geometry to label patches from");
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            const Rect cell{r * grid.patch_edge, c * grid.patch_edge, grid.patch_edge, grid.patch_edge};
            m.labels[static_cast<std::size_t>(r) * grid.cols + c] = cell.intersects(event->region) ? 1 : 0;
        }
    return m;
}

/// Change score per patch; label = score >= threshold.
template <Classifier C>
PatchLabelMap patch_change_map(const C& model, const TimeSeries& series, int patch_edge, double threshold,
                               Measure measure = Measure::pivot) {
    const auto grid = make_patch_grid(series.id, series.height(), series.width(), patch_edge);
    const auto patches = split_patches(series, patch_edge);
    PatchLabelMap m;
    m.rows = grid.rows;
    m.cols = grid.cols;
    m.threshold = threshold;
    for (const auto& p : patches) {
        const double s = change_score(model, p, measure).score;
        m.scores.push_back(s);
        m.labels.push_back(s >= threshold ? 1 : 0);
    }
    return m;
}

/// Every patch of every series, in series order.
inline std::vector<TimeSeries> patch_dataset(std::span<const TimeSeries> series, int patch_edge) {
    std::vector<TimeSeries> out;
    for (const auto& s : series) {
        auto p = split_patches(s, patch_edge);
        std::move(p.begin(), p.end(), std::back_inserter(out));
    }
    return out;
}

struct IterativeResult {
    TrainResult full_image;
    std::vector<ScoredItem> kept;  // series retained for patch training, best first
    TrainResult patch;
};

inline std::uint64_t patch_stage_seed(std::uint64_t seed) { return derive_seed(seed, 0x9a7c4); }

/// Second stage: score every series with the full-image model, keep the top
/// `fraction`, and train a fresh model on their patches.
inline IterativeResult retrain_on_top_patches(TrainResult full_image, std::span<const TimeSeries> dataset, const TrainConfig& config,
                                              int patch_edge, double fraction = 0.5, const EpochCallback& on_epoch = {}) {
    std::vector<ScoredItem> scored;
    for (const auto& s : dataset)
        scored.push_back({s.id, change_score(full_image.model, s, Measure::pivot).score});
    IterativeResult out;
    out.kept = filter_top_fraction(scored, fraction);
    std::vector<TimeSeries> patches;
    for (const auto& k : out.kept) {
        auto it = std::find_if(dataset.begin(), dataset.end(), [&](const auto& s) { return s.id == k.id; });
        auto p = split_patches(*it, patch_edge);
        std::move(p.begin(), p.end(), std::back_inserter(patches));
    }
    TrainConfig cfg = config;
    cfg.seed = patch_stage_seed(config.seed);
    out.patch = train(patches, cfg, on_epoch);
    out.full_image = std::move(full_image);
    return out;
}

/// Train on full images, keep the top half of series by change score, retrain on their patches.
inline IterativeResult iterative_train(std::span<const TimeSeries> dataset, const TrainConfig& config, int patch_edge,
                                       double fraction = 0.5, const EpochCallback& on_epoch = {}) {
    for (const auto& s : dataset)
        make_patch_grid(s.id, s.height(), s.width(), patch_edge);
    auto full = train(dataset, config, on_epoch);
    return retrain_on_top_patches(std::move(full), dataset, config, patch_edge, fraction, on_epoch);
}

/// Baseline: train directly on all patches of all series.
inline TrainResult direct_patch_train(std::span<const TimeSeries> dataset, const TrainConfig& config, int patch_edge,
                                      const EpochCallback& on_epoch = {}) {
    TrainConfig cfg = config;
    cfg.seed = patch_stage_seed(config.seed);
    return train(patch_dataset(dataset, patch_edge), cfg, on_epoch);
}

/// Patch-level scores paired with ground-truth cell labels.
template <Classifier C>
std::vector<LabeledScore> patch_labeled_scores(const C& model, std::span<const TimeSeries> series, std::span<const int> parent_labels,
                                               std::span<const std::optional<ChangeEvent>> events, int patch_edge,
                                               Measure measure = Measure::pivot) {
    if (series.size() != parent_labels.size() || series.size() != events.size())
        throw Error("patch evaluation needs one label and event slot per series");
    std::vector<LabeledScore> out;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto grid = make_patch_grid(series[i].id, series[i].height(), series[i].width(), patch_edge);
        const auto truth = propagate_parent_labels(parent_labels[i], grid, events[i]);
        const auto predicted = patch_change_map(model, series[i], patch_edge, 0.0, measure);
        for (std::size_t k = 0; k < grid.patch_ids.size(); ++k)
            out.push_back({grid.patch_ids[k], predicted.scores[k], truth.labels[k]});
    }
    return out;
}

inline void write_patch_map_csv(std::ostream& out, const PatchLabelMap& m) {
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c)
            out << (c ? "," : "") << m.label(r, c);
        out << '\n';
    }
}

inline void write_patch_scores_csv(std::ostream& out, const PatchLabelMap& m) {
    out.precision(17);
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c)
            out << (c ? "," : "") << m.scores.at(static_cast<std::size_t>(r) * m.cols + c);
        out << '\n';
    }
}

/// Red (changed) / green (unchanged) cells composited at 50% over `frame`.
inline Image overlay_change_map(const Image& frame, const PatchLabelMap& m) {
    if (m.rows <= 0 || m.cols <= 0 || frame.height % m.rows != 0 || frame.width % m.cols != 0)
        throw Error("change map does not tile the frame");
    const int ch_h = frame.height / m.rows, ch_w = frame.width / m.cols;
    Image out = frame;
    out.cloud_mask.reset();
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x) {
            const bool changed = m.label(y / ch_h, x / ch_w) == 1;
            const Rgb tint = changed ? Rgb{1.0f, 0.0f, 0.0f} : Rgb{0.0f, 1.0f, 0.0f};
            for (int ch = 0; ch < 3; ++ch)
                out.at(y, x, ch) = 0.5f * frame.at(y, x, ch) + 0.5f * tint[static_cast<std::size_t>(ch)];
        }
    return out;
}

}  // namespace optimus
