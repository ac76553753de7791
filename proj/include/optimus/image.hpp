#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace optimus {

/// RGB image, row-major interleaved (r, g, b per pixel), every channel in [0, 1].
///
/// Images produced by the simulator carry the ground-truth cloud mask used to
/// render them; images from other sources may not.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;
    std::optional<std::vector<std::uint8_t>> cloud_mask;

    Image() = default;
    Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0.0f) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

    float& at(int r, int c, int ch) { return pixels[(static_cast<std::size_t>(r) * width + c) * 3 + ch]; }
    float at(int r, int c, int ch) const { return pixels[(static_cast<std::size_t>(r) * width + c) * 3 + ch]; }

    friend bool operator==(const Image&, const Image&) = default;
};

struct TimeSeries {
    std::string id;
    std::vector<Image> images;
    std::vector<int> timestamps;  // months since January 2016

    std::size_t size() const { return images.size(); }
    int height() const { return images.empty() ? 0 : images.front().height; }
    int width() const { return images.empty() ? 0 : images.front().width; }

    friend bool operator==(const TimeSeries&, const TimeSeries&) = default;
};

inline void validate_image(const Image& img) {
    if (img.height <= 0 || img.width <= 0)
        throw Error("image has non-positive dimensions");
    if (img.pixels.size() != img.pixel_count() * 3)
        throw Error("image pixel buffer does not match height x width x 3");
    for (float v : img.pixels)
        if (!(v >= 0.0f && v <= 1.0f))
            throw Error("image channel value outside [0,1]");
    if (img.cloud_mask && img.cloud_mask->size() != img.pixel_count())
        throw Error("cloud mask size does not match image");
}

/// Checks the series invariants. `min_gap` is the minimum spacing in months.
inline void validate_series(const TimeSeries& s, int min_gap = 2) {
    if (s.images.size() != s.timestamps.size())
        throw Error("series '" + s.id + "': image and timestamp counts differ");
    for (std::size_t i = 0; i < s.images.size(); ++i) {
        validate_image(s.images[i]);
        if (s.images[i].height != s.height() || s.images[i].width != s.width())
            throw Error("series '" + s.id + "': images differ in size");
        if (i > 0 && s.timestamps[i] - s.timestamps[i - 1] < min_gap)
            throw Error("series '" + s.id + "': timestamps not increasing by at least " +
                        std::to_string(min_gap) + " months");
    }
}

/// Fraction of pixels under the recorded cloud mask; nullopt when no mask was recorded.
inline std::optional<double> cloud_fraction(const Image& img) {
    if (!img.cloud_mask)
        return std::nullopt;
    const auto& m = *img.cloud_mask;
    if (m.empty())
        return 0.0;
    auto covered = std::count_if(m.begin(), m.end(), [](std::uint8_t v) { return v != 0; });
    return static_cast<double>(covered) / static_cast<double>(m.size());
}

/// Drops images whose cloud fraction exceeds `max_cloud`. Images without a
/// recorded mask cannot be judged and are rejected.
inline TimeSeries filter_series(const TimeSeries& series, double max_cloud = 0.2, std::size_t min_length = 1) {
    if (!(max_cloud >= 0.0 && max_cloud <= 1.0))
        throw Error("max_cloud must lie in [0,1]");
    TimeSeries out;
    out.id = series.id;
    for (std::size_t i = 0; i < series.images.size(); ++i) {
        auto frac = cloud_fraction(series.images[i]);
        if (!frac)
            throw Error("series '" + series.id + "' image " + std::to_string(i) + " has no cloud mask");
        if (*frac > max_cloud)
            continue;
        out.images.push_back(series.images[i]);
        out.timestamps.push_back(series.timestamps[i]);
    }
    if (out.images.size() < min_length)
        throw Error("series '" + series.id + "' has " + std::to_string(out.images.size()) +
                    " images after cloud filtering, need at least " + std::to_string(min_length));
    return out;
}

inline std::string patch_id(const std::string& parent, int grid_row, int grid_col) {
    return parent + "_r" + std::to_string(grid_row) + "c" + std::to_string(grid_col);
}

inline Image crop(const Image& img, const Rect& r) {
    if (!r.fits_in(img.height, img.width))
        throw Error("crop rectangle outside image");
    Image out(r.height, r.width);
    for (int y = 0; y < r.height; ++y) {
        const float* src = &img.pixels[((static_cast<std::size_t>(r.row + y)) * img.width + r.col) * 3];
        std::copy(src, src + static_cast<std::size_t>(r.width) * 3, &out.pixels[static_cast<std::size_t>(y) * r.width * 3]);
    }
    if (img.cloud_mask) {
        std::vector<std::uint8_t> m(out.pixel_count());
        for (int y = 0; y < r.height; ++y)
            for (int x = 0; x < r.width; ++x)
                m[static_cast<std::size_t>(y) * r.width + x] =
                    (*img.cloud_mask)[static_cast<std::size_t>(r.row + y) * img.width + r.col + x];
        out.cloud_mask = std::move(m);
    }
    return out;
}

/// Splits every image of the series on a square grid. Patches are returned in
/// row-major grid order; ids are `<parent>_r<row>c<col>`.
inline std::vector<TimeSeries> split_patches(const TimeSeries& series, int patch_edge) {
    if (patch_edge <= 0)
        throw Error("patch edge must be positive");
    const int h = series.height(), w = series.width();
    if (h % patch_edge != 0 || w % patch_edge != 0)
        throw Error("series '" + series.id + "' dimensions " + std::to_string(h) + "x" + std::to_string(w) +
                    " not divisible by patch edge " + std::to_string(patch_edge));
    const int rows = h / patch_edge, cols = w / patch_edge;
    std::vector<TimeSeries> out;
    out.reserve(static_cast<std::size_t>(rows) * cols);
    for (int gr = 0; gr < rows; ++gr) {
        for (int gc = 0; gc < cols; ++gc) {
            TimeSeries p;
            p.id = patch_id(series.id, gr, gc);
            p.timestamps = series.timestamps;
            const Rect cell{gr * patch_edge, gc * patch_edge, patch_edge, patch_edge};
            for (const auto& img : series.images)
                p.images.push_back(crop(img, cell));
            out.push_back(std::move(p));
        }
    }
    return out;
}

/// Inverse of split_patches for a single frame index.
inline Image stitch_patches(const std::vector<TimeSeries>& patches, int rows, int cols, std::size_t frame) {
    if (patches.size() != static_cast<std::size_t>(rows) * cols || patches.empty())
        throw Error("patch count does not match grid");
    const int edge = patches.front().height();
    Image out(rows * edge, cols * edge);
    for (int gr = 0; gr < rows; ++gr)
        for (int gc = 0; gc < cols; ++gc) {
            const Image& p = patches[static_cast<std::size_t>(gr) * cols + gc].images.at(frame);
            for (int y = 0; y < edge; ++y)
                for (int x = 0; x < edge; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        out.at(gr * edge + y, gc * edge + x, ch) = p.at(y, x, ch);
        }
    return out;
}

}  // namespace optimus
