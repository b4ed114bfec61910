#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "boxlens/image.hpp"

namespace boxlens {

/// Pixels belonging to one interpretable feature.
struct FeatureMask {
    int feature_id = 0;
    Size grid;
    std::vector<std::uint8_t> pixels;  // row-major, 0 or 1
    std::size_t pixel_count = 0;
    bool empty = true;

    bool at(int row, int col) const {
        return pixels[static_cast<std::size_t>(row) * grid.width + col] != 0;
    }
};

/// Throws std::logic_error unless the masks are pairwise disjoint and cover
/// every pixel of `grid`.
void verify_partition(std::span<const FeatureMask> masks, Size grid);

}  // namespace boxlens
