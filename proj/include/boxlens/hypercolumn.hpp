#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "boxlens/image.hpp"
#include "boxlens/model.hpp"

namespace boxlens {

struct LayerSlice {
    std::string layer_name;
    std::size_t start = 0;
    std::size_t count = 0;

    friend bool operator==(const LayerSlice&, const LayerSlice&) = default;
};

/// One row per pixel, one column per channel of every contributing layer.
/// Row r describes pixel `pixel_index()[r]` (row-major index into `grid()`).
class HypercolumnMatrix {
public:
    HypercolumnMatrix() = default;
    HypercolumnMatrix(Size grid, std::vector<LayerSlice> layers, std::vector<std::uint32_t> pixel_index,
                      std::vector<float> data);

    std::size_t rows() const noexcept { return pixel_index_.size(); }
    std::size_t cols() const noexcept { return cols_; }
    Size grid() const noexcept { return grid_; }
    const std::vector<LayerSlice>& layer_offsets() const noexcept { return layers_; }
    const std::vector<std::uint32_t>& pixel_index() const noexcept { return pixel_index_; }

    std::span<const float> row(std::size_t r) const {
        return std::span<const float>(data_).subspan(r * cols_, cols_);
    }
    std::span<const float> data() const noexcept { return data_; }

private:
    Size grid_;
    std::size_t cols_ = 0;
    std::vector<LayerSlice> layers_;
    std::vector<std::uint32_t> pixel_index_;
    std::vector<float> data_;
};

/// Bilinear resampling with aligned corners: output corner samples coincide
/// with input corner samples. A 1-pixel axis broadcasts.
ActivationVolume upsample_volume(const ActivationVolume& volume, Size target);

/// Upsamples every volume to `working` and concatenates channels in input
/// order. With `normalize`, each column is standardized to zero mean and unit
/// variance over pixels; constant columns become all zero.
HypercolumnMatrix build_hypercolumns(std::span<const ActivationVolume> volumes, Size working,
                                     bool normalize, unsigned jobs = 1);

/// Uniform sample of `max_rows` distinct rows (kept in ascending pixel order),
/// or the input unchanged when it is already small enough.
HypercolumnMatrix subsample_rows(const HypercolumnMatrix& matrix, std::size_t max_rows,
                                 std::uint64_t seed);

/// Debug dump: two little-endian uint64 (rows, cols), then float32 row-major.
void write_hypercolumns(const HypercolumnMatrix& matrix, const std::filesystem::path& path);

}  // namespace boxlens
