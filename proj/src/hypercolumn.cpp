#include "boxlens/hypercolumn.hpp"

#include "boxlens/error.hpp"
#include "boxlens/parallel.hpp"
#include "boxlens/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace boxlens {

HypercolumnMatrix::HypercolumnMatrix(Size grid, std::vector<LayerSlice> layers,
                                     std::vector<std::uint32_t> pixel_index, std::vector<float> data)
    : grid_(grid), layers_(std::move(layers)), pixel_index_(std::move(pixel_index)),
      data_(std::move(data)) {
    cols_ = 0;
    for (const auto& l : layers_) {
        if (l.start != cols_) {
            throw std::invalid_argument("layer slices must be contiguous");
        }
        cols_ += l.count;
    }
    if (data_.size() != pixel_index_.size() * cols_) {
        throw std::invalid_argument("hypercolumn data size mismatch");
    }
}

namespace {

struct AxisWeights {
    std::vector<int> lo;
    std::vector<int> hi;
    std::vector<double> frac;
};

AxisWeights axis_weights(int in, int out) {
    AxisWeights w;
    w.lo.resize(static_cast<std::size_t>(out));
    w.hi.resize(static_cast<std::size_t>(out));
    w.frac.resize(static_cast<std::size_t>(out));
    for (int i = 0; i < out; ++i) {
        const double src = (in == 1 || out == 1)
                               ? 0.0
                               : static_cast<double>(i) * (in - 1) / static_cast<double>(out - 1);
        const int lo = std::min(static_cast<int>(std::floor(src)), in - 1);
        const auto k = static_cast<std::size_t>(i);
        w.lo[k] = lo;
        w.hi[k] = std::min(lo + 1, in - 1);
        w.frac[k] = src - lo;
    }
    return w;
}

}  // namespace

ActivationVolume upsample_volume(const ActivationVolume& volume, Size target) {
    if (target.height < 1 || target.width < 1) {
        throw std::invalid_argument("upsample target must be positive");
    }
    if (volume.height == target.height && volume.width == target.width) {
        return volume;
    }
    ActivationVolume out;
    out.layer_name = volume.layer_name;
    out.source_layer_kind = volume.source_layer_kind;
    out.height = target.height;
    out.width = target.width;
    out.channels = volume.channels;
    out.data.resize(static_cast<std::size_t>(target.height) * target.width * volume.channels);

    const auto ys = axis_weights(volume.height, target.height);
    const auto xs = axis_weights(volume.width, target.width);
    for (int y = 0; y < target.height; ++y) {
        const auto yk = static_cast<std::size_t>(y);
        const double fy = ys.frac[yk];
        for (int x = 0; x < target.width; ++x) {
            const auto xk = static_cast<std::size_t>(x);
            const double fx = xs.frac[xk];
            for (int c = 0; c < volume.channels; ++c) {
                const double top = (1.0 - fx) * volume.at(ys.lo[yk], xs.lo[xk], c) +
                                   fx * volume.at(ys.lo[yk], xs.hi[xk], c);
                const double bottom = (1.0 - fx) * volume.at(ys.hi[yk], xs.lo[xk], c) +
                                      fx * volume.at(ys.hi[yk], xs.hi[xk], c);
                out.at(y, x, c) = static_cast<float>((1.0 - fy) * top + fy * bottom);
            }
        }
    }
    return out;
}

HypercolumnMatrix build_hypercolumns(std::span<const ActivationVolume> volumes, Size working,
                                     bool normalize, unsigned jobs) {
    if (volumes.empty()) {
        throw ConfigError("no activation volumes to build hypercolumns from");
    }
    if (working.height < 1 || working.width < 1) {
        throw ConfigError("working resolution must be positive");
    }
    std::vector<LayerSlice> layers;
    std::size_t cols = 0;
    for (const auto& v : volumes) {
        if (v.height < 1 || v.width < 1 || v.channels < 1) {
            throw ConfigError("activation volume " + v.layer_name + " is empty");
        }
        layers.push_back({v.layer_name, cols, static_cast<std::size_t>(v.channels)});
        cols += static_cast<std::size_t>(v.channels);
    }
    const std::size_t n = static_cast<std::size_t>(working.height) * working.width;
    std::vector<float> data(n * cols);

    parallel_for(volumes.size(), jobs, [&](std::size_t li) {
        const ActivationVolume up = upsample_volume(volumes[li], working);
        const std::size_t start = layers[li].start;
        const std::size_t count = layers[li].count;
        for (std::size_t p = 0; p < n; ++p) {
            std::copy_n(up.data.begin() + static_cast<std::ptrdiff_t>(p * count), count,
                        data.begin() + static_cast<std::ptrdiff_t>(p * cols + start));
        }
    });

    if (normalize) {
        parallel_for(cols, jobs, [&](std::size_t c) {
            double mean = 0.0;
            for (std::size_t p = 0; p < n; ++p) mean += data[p * cols + c];
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t p = 0; p < n; ++p) {
                const double d = data[p * cols + c] - mean;
                var += d * d;
            }
            var /= static_cast<double>(n);
            // Columns flat up to float round-off count as constant.
            const double floor = 1e-6 * std::max(1.0, std::abs(mean));
            const double sd = std::sqrt(var);
            for (std::size_t p = 0; p < n; ++p) {
                float& v = data[p * cols + c];
                v = sd <= floor ? 0.0f : static_cast<float>((v - mean) / sd);
            }
        });
    }

    std::vector<std::uint32_t> index(n);
    std::iota(index.begin(), index.end(), 0u);
    return HypercolumnMatrix(working, std::move(layers), std::move(index), std::move(data));
}

HypercolumnMatrix subsample_rows(const HypercolumnMatrix& matrix, std::size_t max_rows,
                                 std::uint64_t seed) {
    if (max_rows == 0) {
        throw ConfigError("sample size must be positive");
    }
    const std::size_t n = matrix.rows();
    if (n <= max_rows) {
        return matrix;
    }
    // Partial Fisher-Yates over row positions.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < max_rows; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
        std::swap(order[i], order[j]);
    }
    order.resize(max_rows);
    std::sort(order.begin(), order.end());

    const std::size_t cols = matrix.cols();
    std::vector<float> data(max_rows * cols);
    std::vector<std::uint32_t> index(max_rows);
    for (std::size_t i = 0; i < max_rows; ++i) {
        const auto src = matrix.row(order[i]);
        std::copy(src.begin(), src.end(), data.begin() + static_cast<std::ptrdiff_t>(i * cols));
        index[i] = matrix.pixel_index()[order[i]];
    }
    return HypercolumnMatrix(matrix.grid(), matrix.layer_offsets(), std::move(index), std::move(data));
}

void write_hypercolumns(const HypercolumnMatrix& matrix, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
    auto put_u64 = [&](std::uint64_t v) {
        char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out.write(bytes, 8);
    };
    put_u64(matrix.rows());
    put_u64(matrix.cols());
    for (float f : matrix.data()) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        char bytes[4];
        for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
        out.write(bytes, 4);
    }
    if (!out) {
        throw ConfigError("failed writing " + path.string());
    }
}

}  // namespace boxlens
