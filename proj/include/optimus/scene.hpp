#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "common.hpp"
#include "image.hpp"

namespace optimus {

using Rgb = std::array<float, 3>;

enum class ChangeKind { step, ramp };

inline const char* to_string(ChangeKind k) { return k == ChangeKind::step ? "step" : "ramp"; }

inline ChangeKind change_kind_from_string(const std::string& s) {
    if (s == "step")
        return ChangeKind::step;
    if (s == "ramp")
        return ChangeKind::ramp;
    throw Error("unknown change kind '" + s + "'");
}

/// A persistent change: from `onset_month` on, pixels inside `region` shift by
/// `delta`. Ramps reach the full shift `ramp_duration` months after onset.
struct ChangeEvent {
    ChangeKind kind = ChangeKind::step;
    int onset_month = 0;
    Rect region;
    Rgb delta{0.0f, 0.0f, 0.0f};
    int ramp_duration = 0;

    /// Fraction of `delta` applied at `month`.
    double weight(int month) const {
        if (month < onset_month)
            return 0.0;
        if (kind == ChangeKind::step || ramp_duration <= 0)
            return 1.0;
        return std::min(1.0, static_cast<double>(month - onset_month + 1) / ramp_duration);
    }

    friend bool operator==(const ChangeEvent&, const ChangeEvent&) = default;
};

struct ColorRegion {
    Rect rect;
    Rgb color{0.5f, 0.5f, 0.5f};
};

/// Static scene content: a background color, overlaid rectangles of uniform
/// color (later rectangles win), and a smooth texture of given amplitude.
struct BaseField {
    Rgb background{0.4f, 0.45f, 0.35f};
    std::vector<ColorRegion> regions;
    float texture_amplitude = 0.0f;
};

struct SceneSpec {
    std::string id = "scene";
    int height = 64;
    int width = 64;
    int n_images = 32;
    int span_months = 96;
    int min_gap_months = 2;
    BaseField base_field;
    double seasonal_amplitude = 0.0;
    double seasonal_phase = 0.0;
    double noise_sigma = 0.0;
    double cloud_probability = 0.0;
    std::optional<ChangeEvent> change;
    std::uint64_t seed = 0;
};

namespace detail {

/// Sorted months in [0, span) with consecutive gaps >= min_gap, uniform over all such sets.
inline std::vector<int> sample_timestamps(int n, int span, int min_gap, std::mt19937_64& rng) {
    const int free_slots = span - (n - 1) * (min_gap - 1);
    if (n < 1 || free_slots < n)
        throw Error("cannot place " + std::to_string(n) + " images in " + std::to_string(span) +
                    " months with gap " + std::to_string(min_gap));
    std::vector<int> pool(static_cast<std::size_t>(free_slots));
    for (int i = 0; i < free_slots; ++i)
        pool[static_cast<std::size_t>(i)] = i;
    // partial Fisher-Yates keeps the draw independent of library sampling algorithms
    for (int i = 0; i < n; ++i) {
        std::uniform_int_distribution<int> pick(i, free_slots - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<int> ts(pool.begin(), pool.begin() + n);
    std::sort(ts.begin(), ts.end());
    for (int i = 0; i < n; ++i)
        ts[static_cast<std::size_t>(i)] += i * (min_gap - 1);
    return ts;
}

/// Bilinearly upsampled coarse random grid in [-1, 1].
inline std::vector<float> smooth_texture(int h, int w, std::mt19937_64& rng) {
    constexpr int grid = 9;
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::array<float, grid * grid> coarse{};
    for (auto& v : coarse)
        v = u(rng);
    std::vector<float> out(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        const float fy = (h > 1 ? static_cast<float>(y) / (h - 1) : 0.0f) * (grid - 1);
        const int y0 = std::min(static_cast<int>(fy), grid - 2);
        const float ty = fy - y0;
        for (int x = 0; x < w; ++x) {
            const float fx = (w > 1 ? static_cast<float>(x) / (w - 1) : 0.0f) * (grid - 1);
            const int x0 = std::min(static_cast<int>(fx), grid - 2);
            const float tx = fx - x0;
            const float a = coarse[y0 * grid + x0], b = coarse[y0 * grid + x0 + 1];
            const float c = coarse[(y0 + 1) * grid + x0], d = coarse[(y0 + 1) * grid + x0 + 1];
            out[static_cast<std::size_t>(y) * w + x] =
                (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d);
        }
    }
    return out;
}

}  // namespace detail

inline void validate_spec(const SceneSpec& spec) {
    if (spec.height <= 0 || spec.width <= 0)
        throw Error("scene '" + spec.id + "': non-positive image size");
    if (spec.n_images < 1)
        throw Error("scene '" + spec.id + "': n_images must be positive");
    if (spec.min_gap_months < 1)
        throw Error("scene '" + spec.id + "': min gap must be at least one month");
    if (spec.seasonal_amplitude < 0 || spec.noise_sigma < 0)
        throw Error("scene '" + spec.id + "': negative amplitude or noise");
    if (!(spec.cloud_probability >= 0 && spec.cloud_probability <= 1))
        throw Error("scene '" + spec.id + "': cloud probability outside [0,1]");
    for (const auto& r : spec.base_field.regions)
        if (!r.rect.fits_in(spec.height, spec.width))
            throw Error("scene '" + spec.id + "': base region outside image");
    if (spec.change) {
        const auto& ev = *spec.change;
        if (!ev.region.fits_in(spec.height, spec.width))
            throw Error("scene '" + spec.id + "': change region outside image bounds");
        if (ev.ramp_duration < 0 || (ev.kind == ChangeKind::step && ev.ramp_duration != 0))
            throw Error("scene '" + spec.id + "': invalid ramp duration");
        if (ev.onset_month <= 0 || ev.onset_month >= spec.span_months - 1)
            throw Error("scene '" + spec.id + "': change onset " + std::to_string(ev.onset_month) +
                        " not strictly inside the time span");
    }
}

/// Renders a time series. The result is a pure function of `spec`.
///
/// value = clamp(base + A sin(2 pi month / 12 + phase) + noise + change, 0, 1),
/// then clouded pixels are blended toward white and recorded in the mask.
inline TimeSeries generate_scene(const SceneSpec& spec) {
    validate_spec(spec);
    std::mt19937_64 rng(spec.seed);

    TimeSeries out;
    out.id = spec.id;
    out.timestamps = detail::sample_timestamps(spec.n_images, spec.span_months, spec.min_gap_months, rng);
    if (spec.change) {
        const int onset = spec.change->onset_month;
        if (onset <= out.timestamps.front() || onset >= out.timestamps.back())
            throw Error("scene '" + spec.id + "': change onset " + std::to_string(onset) +
                        " not strictly inside the sampled time span");
    }

    const int h = spec.height, w = spec.width;
    Image base(h, w);
    std::vector<float> texture;
    if (spec.base_field.texture_amplitude != 0.0f)
        texture = detail::smooth_texture(h, w, rng);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            Rgb c = spec.base_field.background;
            for (const auto& reg : spec.base_field.regions)
                if (reg.rect.contains(y, x))
                    c = reg.color;
            const float t = texture.empty() ? 0.0f
                                            : spec.base_field.texture_amplitude * texture[static_cast<std::size_t>(y) * w + x];
            for (int ch = 0; ch < 3; ++ch)
                base.at(y, x, ch) = c[static_cast<std::size_t>(ch)] + t;
        }

    std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.noise_sigma));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    constexpr float cloud_value = 0.95f;
    constexpr float cloud_opacity = 0.85f;

    for (int month : out.timestamps) {
        Image img(h, w);
        const float season = static_cast<float>(
            spec.seasonal_amplitude * std::sin(2.0 * std::numbers::pi * month / 12.0 + spec.seasonal_phase));
        const float cw = spec.change ? static_cast<float>(spec.change->weight(month)) : 0.0f;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const bool in_change = spec.change && cw != 0.0f && spec.change->region.contains(y, x);
                for (int ch = 0; ch < 3; ++ch) {
                    float v = base.at(y, x, ch) + season;
                    if (spec.noise_sigma > 0)
                        v += noise(rng);
                    if (in_change)
                        v += cw * spec.change->delta[static_cast<std::size_t>(ch)];
                    img.at(y, x, ch) = std::clamp(v, 0.0f, 1.0f);
                }
            }

        std::vector<std::uint8_t> mask(img.pixel_count(), 0);
        if (spec.cloud_probability > 0 && unit(rng) < spec.cloud_probability) {
            const double cy = unit(rng) * h, cx = unit(rng) * w;
            const double ry = (0.15 + 0.45 * unit(rng)) * h, rx = (0.15 + 0.45 * unit(rng)) * w;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
                    if (dy * dy + dx * dx > 1.0)
                        continue;
                    mask[static_cast<std::size_t>(y) * w + x] = 1;
                    for (int ch = 0; ch < 3; ++ch) {
                        float& v = img.at(y, x, ch);
                        v = std::clamp((1 - cloud_opacity) * v + cloud_opacity * cloud_value, 0.0f, 1.0f);
                    }
                }
        }
        img.cloud_mask = std::move(mask);
        out.images.push_back(std::move(img));
    }
    return out;
}

/// Parameters of a randomly drawn synthetic benchmark.
struct BenchmarkOptions {
    int num_series = 200;
    double changed_fraction = 1.0 / 3.0;
    int height = 64;
    int width = 64;
    int n_images = 32;
    int span_months = 96;
    double seasonal_amplitude_min = 0.05;
    double seasonal_amplitude_max = 0.12;
    double noise_sigma = 0.03;
    double cloud_probability = 0.1;
    float texture_amplitude = 0.08f;
    int base_regions_max = 4;
    float delta_min = 0.15f;
    float delta_max = 0.35f;
    int change_edge_min = 16;
    int change_edge_max = 40;
    double ramp_probability = 0.3;
    int ramp_max_months = 12;
    double onset_min_fraction = 0.15;
    double onset_max_fraction = 0.85;
    std::string id_prefix = "s";
    std::uint64_t seed = 0;
};

/// Draws one scene spec; `changed` decides whether a change event is attached.
inline SceneSpec random_scene_spec(const BenchmarkOptions& o, bool changed, const std::string& id, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> color(0.25f, 0.75f);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

    SceneSpec s;
    s.id = id;
    s.height = o.height;
    s.width = o.width;
    s.n_images = o.n_images;
    s.span_months = o.span_months;
    s.base_field.background = {color(rng), color(rng), color(rng)};
    s.base_field.texture_amplitude = o.texture_amplitude;
    const int n_regions = uniform_int(0, o.base_regions_max);
    for (int i = 0; i < n_regions; ++i) {
        const int rh = uniform_int(std::max(1, o.height / 8), std::max(1, o.height / 2));
        const int rw = uniform_int(std::max(1, o.width / 8), std::max(1, o.width / 2));
        s.base_field.regions.push_back(
            {{uniform_int(0, o.height - rh), uniform_int(0, o.width - rw), rh, rw}, {color(rng), color(rng), color(rng)}});
    }
    s.seasonal_amplitude = o.seasonal_amplitude_min + unit(rng) * (o.seasonal_amplitude_max - o.seasonal_amplitude_min);
    s.seasonal_phase = unit(rng) * 2.0 * std::numbers::pi;
    s.noise_sigma = o.noise_sigma;
    s.cloud_probability = o.cloud_probability;
    s.seed = derive_seed(seed, 1);

    if (changed) {
        ChangeEvent ev;
        ev.kind = unit(rng) < o.ramp_probability ? ChangeKind::ramp : ChangeKind::step;
        ev.ramp_duration = ev.kind == ChangeKind::ramp ? uniform_int(2, std::max(2, o.ramp_max_months)) : 0;
        const int eh = uniform_int(std::min(o.change_edge_min, o.height), std::min(o.change_edge_max, o.height));
        const int ew = uniform_int(std::min(o.change_edge_min, o.width), std::min(o.change_edge_max, o.width));
        ev.region = {uniform_int(0, o.height - eh), uniform_int(0, o.width - ew), eh, ew};
        for (auto& d : ev.delta) {
            const float mag = o.delta_min + static_cast<float>(unit(rng)) * (o.delta_max - o.delta_min);
            d = unit(rng) < 0.5 ? -mag : mag;
        }
        // Onset is re-drawn against the realised timestamps so it always falls strictly inside them.
        std::mt19937_64 ts_rng(s.seed);
        const auto ts = detail::sample_timestamps(s.n_images, s.span_months, s.min_gap_months, ts_rng);
        const int lo = std::max(ts.front() + 1, static_cast<int>(o.onset_min_fraction * o.span_months));
        const int hi = std::min(ts.back() - 1, static_cast<int>(o.onset_max_fraction * o.span_months));
        ev.onset_month = lo <= hi ? uniform_int(lo, hi) : (ts.front() + ts.back()) / 2;
        s.change = ev;
    }
    return s;
}

/// Scene specs for a benchmark; each series is changed independently with
/// probability `changed_fraction`.
inline std::vector<SceneSpec> benchmark_specs(const BenchmarkOptions& o) {
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<SceneSpec> specs;
    specs.reserve(static_cast<std::size_t>(o.num_series));
    for (int i = 0; i < o.num_series; ++i) {
        const bool changed = unit(rng) < o.changed_fraction;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%05d", i);
        specs.push_back(random_scene_spec(o, changed, o.id_prefix + buf, derive_seed(o.seed, static_cast<std::uint64_t>(i))));
    }
    return specs;
}

}  // namespace optimus
