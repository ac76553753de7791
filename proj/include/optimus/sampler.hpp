#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "image.hpp"

namespace optimus {

/// Training example layout within one series: two anchor windows of `context`
/// consecutive images and a query outside them. `label` is 0 when the query
/// precedes the first anchor and 1 when it follows the second.
struct Triplet {
    std::string source_id;
    int context = 0;
    int a1_start = 0;
    int a2_start = 0;
    int query = 0;
    int label = 0;

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

inline int min_series_length(int context) { return 2 * context + 2; }

inline bool triplet_valid(const Triplet& t, int n) {
    if (t.context < 1 || t.a1_start < 0 || t.a1_start + t.context > t.a2_start || t.a2_start + t.context > n)
        return false;
    if (t.query < 0 || t.query >= n)
        return false;
    return t.label == 0 ? t.query < t.a1_start : (t.label == 1 && t.query >= t.a2_start + t.context);
}

/// Draws the label uniformly, then a layout uniformly among all valid
/// (a1_start, a2_start, query) placements for that label.
template <class Rng>
Triplet sample_triplet(const TimeSeries& series, int context, Rng& rng) {
    const int n = static_cast<int>(series.size());
    if (context < 1)
        throw Error("context must be at least 1");
    if (n < min_series_length(context))
        throw Error("series '" + series.id + "' has " + std::to_string(n) + " images; context " +
                    std::to_string(context) + " needs at least " + std::to_string(min_series_length(context)));
    Triplet t;
    t.source_id = series.id;
    t.context = context;
    t.label = std::uniform_int_distribution<int>(0, 1)(rng);
    std::uniform_int_distribution<int> pos(0, n - 1);
    // Rejection from the cube is exactly uniform over the valid set.
    do {
        t.query = pos(rng);
        t.a1_start = pos(rng);
        t.a2_start = pos(rng);
    } while (!triplet_valid(t, n));
    return t;
}

/// Channel-stacked input: planar (channels, height, width) with the query in
/// channels 0..2 and anchor image k in channels 3(k+1)..3(k+1)+2.
template <class T = float>
struct PairTensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<T> data;

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    T at(int ch, int r, int c) const { return data[static_cast<std::size_t>(ch) * plane() + static_cast<std::size_t>(r) * width + c]; }

    friend bool operator==(const PairTensor&, const PairTensor&) = default;
};

template <class T = float>
PairTensor<T> assemble_pair_tensor(std::span<const Image> anchor, const Image& query) {
    if (anchor.empty())
        throw Error("anchor must hold at least one image");
    PairTensor<T> t;
    t.channels = 3 * (static_cast<int>(anchor.size()) + 1);
    t.height = query.height;
    t.width = query.width;
    t.data.resize(static_cast<std::size_t>(t.channels) * t.plane());
    auto put = [&](const Image& img, int slot) {
        if (img.height != t.height || img.width != t.width)
            throw Error("pair tensor images differ in size");
        for (int ch = 0; ch < 3; ++ch) {
            T* dst = &t.data[static_cast<std::size_t>(3 * slot + ch) * t.plane()];
            for (std::size_t p = 0; p < t.plane(); ++p)
                dst[p] = static_cast<T>(img.pixels[p * 3 + static_cast<std::size_t>(ch)]);
        }
    };
    put(query, 0);
    for (std::size_t k = 0; k < anchor.size(); ++k)
        put(anchor[k], static_cast<int>(k) + 1);
    return t;
}

/// Recovers the RGB image stored in `slot` (0 = query, k = anchor image k-1).
template <class T>
Image extract_slot(const PairTensor<T>& t, int slot) {
    if (slot < 0 || 3 * slot + 3 > t.channels)
        throw Error("pair tensor slot out of range");
    Image img(t.height, t.width);
    for (int ch = 0; ch < 3; ++ch)
        for (std::size_t p = 0; p < t.plane(); ++p)
            img.pixels[p * 3 + static_cast<std::size_t>(ch)] =
                static_cast<float>(t.data[static_cast<std::size_t>(3 * slot + ch) * t.plane() + p]);
    return img;
}

template <class T = float>
struct TrainingExample {
    PairTensor<T> first;   // (A1, Q)
    PairTensor<T> second;  // (A2, Q)
    int label = 0;
};

template <class T = float>
TrainingExample<T> make_example(const TimeSeries& s, const Triplet& t) {
    const std::span<const Image> imgs(s.images);
    const Image& q = s.images.at(static_cast<std::size_t>(t.query));
    return {assemble_pair_tensor<T>(imgs.subspan(static_cast<std::size_t>(t.a1_start), static_cast<std::size_t>(t.context)), q),
            assemble_pair_tensor<T>(imgs.subspan(static_cast<std::size_t>(t.a2_start), static_cast<std::size_t>(t.context)), q),
            t.label};
}

/// Indices of series long enough to sample from with the given context.
inline std::vector<std::size_t> eligible_series(std::span<const TimeSeries> dataset, int context) {
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (static_cast<int>(dataset[i].size()) >= min_series_length(context))
            ok.push_back(i);
    return ok;
}

/// Samples `batch_size` examples from a pool of eligible series, each drawn with replacement.
template <class T = float, class Rng>
std::vector<TrainingExample<T>> sample_batch(std::span<const TimeSeries* const> pool, int batch_size, int context, Rng& rng) {
    if (pool.empty())
        throw Error("no series has the " + std::to_string(min_series_length(context)) +
                    " images needed for context " + std::to_string(context));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<TrainingExample<T>> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (int b = 0; b < batch_size; ++b) {
        const TimeSeries& s = *pool[pick(rng)];
        batch.push_back(make_example<T>(s, sample_triplet(s, context, rng)));
    }
    return batch;
}

template <class T = float, class Rng>
std::vector<TrainingExample<T>> make_training_batch(std::span<const TimeSeries> dataset, int batch_size, int context, Rng& rng) {
    if (dataset.empty())
        throw Error("cannot build a batch from an empty dataset");
    std::vector<const TimeSeries*> pool;
    for (auto i : eligible_series(dataset, context))
        pool.push_back(&dataset[i]);
    return sample_batch<T>(pool, batch_size, context, rng);
}

}  // namespace optimus
