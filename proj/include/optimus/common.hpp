#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace optimus {

/// Raised for any contract violation (bad input, malformed file, shape mismatch).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Axis-aligned pixel rectangle, half-open on both axes.
struct Rect {
    int row = 0;
    int col = 0;
    int height = 0;
    int width = 0;

    int row_end() const { return row + height; }
    int col_end() const { return col + width; }

    bool contains(int r, int c) const {
        return r >= row && r < row_end() && c >= col && c < col_end();
    }

    bool intersects(const Rect& o) const {
        return row < o.row_end() && o.row < row_end() && col < o.col_end() && o.col < col_end();
    }

    bool fits_in(int h, int w) const {
        return height > 0 && width > 0 && row >= 0 && col >= 0 && row_end() <= h && col_end() <= w;
    }

    friend bool operator==(const Rect&, const Rect&) = default;
};

/// SplitMix64 finalizer; derives independent child seeds from a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace optimus
