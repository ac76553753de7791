#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "optimus.hpp"

namespace fixtures {

using namespace optimus;

inline Image constant_image(int h, int w, float v) {
    Image img(h, w);
    std::fill(img.pixels.begin(), img.pixels.end(), v);
    img.cloud_mask = std::vector<std::uint8_t>(img.pixel_count(), 0);
    return img;
}

/// Series whose image j is filled with values[j]; timestamps every 2 months.
inline TimeSeries valued_series(const std::string& id, const std::vector<float>& values, int h = 4, int w = 4) {
    TimeSeries s;
    s.id = id;
    for (std::size_t j = 0; j < values.size(); ++j) {
        s.images.push_back(constant_image(h, w, values[j]));
        s.timestamps.push_back(static_cast<int>(2 * j));
    }
    return s;
}

/// Always answers 0.5.
struct ConstantModel {
    int c = 3;
    int context() const { return c; }
    double predict(const PairTensor<float>&, const PairTensor<float>&) const { return 0.5; }
};

/// Knows the truth: 1 when the query pixel (channel 0, top-left) is past 0.5.
struct OracleStepModel {
    int c = 3;
    int context() const { return c; }
    double predict(const PairTensor<float>& first, const PairTensor<float>&) const {
        return first.at(0, 0, 0) >= 0.5f ? 1.0 : 0.0;
    }
};

/// Scene with only the listed effects; everything else off.
inline SceneSpec quiet_spec(const std::string& id, std::uint64_t seed, int edge = 16, int n = 16) {
    SceneSpec s;
    s.id = id;
    s.height = edge;
    s.width = edge;
    s.n_images = n;
    s.span_months = 96;
    s.seed = seed;
    return s;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("optimus_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace fixtures
