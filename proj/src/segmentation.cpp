#include "boxlens/segmentation.hpp"

#include "boxlens/error.hpp"
#include "boxlens/parallel.hpp"
#include "boxlens/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace boxlens {

void KMeansConfig::validate() const {
    if (k == 0) throw ConfigError("k must be at least 1");
    if (max_iterations == 0) throw ConfigError("max_iterations must be at least 1");
    if (n_init == 0) throw ConfigError("n_init must be at least 1");
    if (!(tolerance >= 0.0)) throw ConfigError("tolerance must be non-negative");
}

namespace {

// Row blocks are fixed-size so that the reduction order never depends on the
// number of worker threads.
constexpr std::size_t kChunkRows = 1024;

double squared_distance(std::span<const float> row, const double* centroid) {
    double acc = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
        const double d = static_cast<double>(row[j]) - centroid[j];
        acc += d * d;
    }
    return acc;
}

struct Assignment {
    std::vector<std::uint32_t> labels;
    std::vector<double> distances;
    double inertia = 0.0;
};

struct ChunkStats {
    std::vector<double> sums;  // k x dims
    std::vector<std::size_t> counts;
    double inertia = 0.0;
};

// Nearest centroid for every row plus per-cluster sums, reduced in chunk order.
Assignment assign(const HypercolumnMatrix& rows, const std::vector<double>& centroids, std::size_t k,
                  unsigned jobs, std::vector<double>* sums, std::vector<std::size_t>* counts) {
    const std::size_t n = rows.rows();
    const std::size_t dims = rows.cols();
    Assignment out;
    out.labels.resize(n);
    out.distances.resize(n);

    const std::size_t chunks = (n + kChunkRows - 1) / kChunkRows;
    std::vector<ChunkStats> stats(chunks);
    parallel_for(chunks, jobs, [&](std::size_t c) {
        ChunkStats& s = stats[c];
        if (sums) {
            s.sums.assign(k * dims, 0.0);
            s.counts.assign(k, 0);
        }
        const std::size_t end = std::min(n, (c + 1) * kChunkRows);
        for (std::size_t i = c * kChunkRows; i < end; ++i) {
            const auto row = rows.row(i);
            std::size_t best = 0;
            double best_d = squared_distance(row, centroids.data());
            for (std::size_t j = 1; j < k; ++j) {
                const double d = squared_distance(row, centroids.data() + j * dims);
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            out.labels[i] = static_cast<std::uint32_t>(best);
            out.distances[i] = best_d;
            s.inertia += best_d;
            if (sums) {
                double* dst = s.sums.data() + best * dims;
                for (std::size_t d = 0; d < dims; ++d) dst[d] += row[d];
                ++s.counts[best];
            }
        }
    });

    if (sums) {
        sums->assign(k * dims, 0.0);
        counts->assign(k, 0);
    }
    for (const auto& s : stats) {
        out.inertia += s.inertia;
        if (sums) {
            for (std::size_t i = 0; i < s.sums.size(); ++i) (*sums)[i] += s.sums[i];
            for (std::size_t j = 0; j < k; ++j) (*counts)[j] += s.counts[j];
        }
    }
    return out;
}

std::vector<double> seed_plus_plus(const HypercolumnMatrix& rows, std::size_t k, Rng& rng) {
    const std::size_t n = rows.rows();
    const std::size_t dims = rows.cols();
    std::vector<double> centroids(k * dims);
    auto take = [&](std::size_t slot, std::size_t row_index) {
        const auto row = rows.row(row_index);
        std::copy(row.begin(), row.end(), centroids.begin() + static_cast<std::ptrdiff_t>(slot * dims));
    };

    take(0, static_cast<std::size_t>(uniform_index(rng, n)));
    std::vector<double> nearest(n);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = squared_distance(rows.row(i), centroids.data());

    for (std::size_t slot = 1; slot < k; ++slot) {
        double total = 0.0;
        for (double d : nearest) total += d;
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = uniform_unit(rng) * total;
            double running = 0.0;
            pick = n;
            for (std::size_t i = 0; i < n; ++i) {
                running += nearest[i];
                if (running > target) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) {
                // Round-off left target at the very top: last row with mass.
                for (std::size_t i = n; i-- > 0;) {
                    if (nearest[i] > 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
        } else {
            pick = static_cast<std::size_t>(uniform_index(rng, n));
        }
        take(slot, pick);
        const double* c = centroids.data() + slot * dims;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(rows.row(i), c));
        }
    }
    return centroids;
}

KMeansResult fit_once(const HypercolumnMatrix& rows, const KMeansConfig& config, Rng& rng,
                      const IterationObserver& observer) {
    const std::size_t k = config.k;
    const std::size_t dims = rows.cols();
    KMeansResult result;
    result.k = k;
    result.dims = dims;
    result.centroids = seed_plus_plus(rows, k, rng);

    std::vector<double> sums;
    std::vector<std::size_t> counts;
    for (std::size_t iter = 1; iter <= config.max_iterations; ++iter) {
        Assignment a = assign(rows, result.centroids, k, config.jobs, &sums, &counts);
        result.iterations = iter;
        if (observer) observer(iter, a.inertia);

        std::vector<double> next(k * dims);
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == 0) continue;
            const double inv = 1.0 / static_cast<double>(counts[j]);
            for (std::size_t d = 0; d < dims; ++d) next[j * dims + d] = sums[j * dims + d] * inv;
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] != 0) continue;
            // Farthest row from its own centre; a row moved here is not reused.
            std::size_t far = 0;
            for (std::size_t i = 1; i < a.distances.size(); ++i) {
                if (a.distances[i] > a.distances[far]) far = i;
            }
            const auto row = rows.row(far);
            std::copy(row.begin(), row.end(), next.begin() + static_cast<std::ptrdiff_t>(j * dims));
            a.distances[far] = -1.0;
        }

        double shift = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (std::size_t d = 0; d < dims; ++d) {
                const double diff = next[j * dims + d] - result.centroids[j * dims + d];
                s += diff * diff;
            }
            shift = std::max(shift, std::sqrt(s));
        }
        result.centroids = std::move(next);
        if (shift <= config.tolerance) break;
    }

    Assignment final_pass = assign(rows, result.centroids, k, config.jobs, nullptr, nullptr);
    result.labels = std::move(final_pass.labels);
    result.inertia = final_pass.inertia;
    return result;
}

}  // namespace

KMeansResult kmeans_fit(const HypercolumnMatrix& rows, const KMeansConfig& config,
                        const IterationObserver& observer) {
    config.validate();
    if (rows.rows() < config.k) {
        throw ConfigError("cannot fit " + std::to_string(config.k) + " clusters to " +
                          std::to_string(rows.rows()) + " rows");
    }
    if (rows.cols() == 0) {
        throw ConfigError("hypercolumn matrix has no columns");
    }
    KMeansResult best;
    for (std::size_t r = 0; r < config.n_init; ++r) {
        Rng rng(mix_seed(config.seed, r));
        KMeansResult run = fit_once(rows, config, rng, observer);
        if (r == 0 || run.inertia < best.inertia) best = std::move(run);
    }
    return best;
}

FeatureSegmentation assign_labels(const HypercolumnMatrix& matrix, const std::vector<double>& centroids,
                                  std::size_t k, unsigned jobs) {
    if (k == 0 || centroids.size() != k * matrix.cols()) {
        throw ConfigError("centroid dimension does not match the hypercolumn matrix");
    }
    const Size grid = matrix.grid();
    const std::size_t pixels = static_cast<std::size_t>(grid.height) * grid.width;
    if (matrix.rows() != pixels) {
        throw ConfigError("labelling needs the full-resolution matrix");
    }
    const Assignment a = assign(matrix, centroids, k, jobs, nullptr, nullptr);

    FeatureSegmentation seg;
    seg.grid = grid;
    seg.k = k;
    seg.dims = matrix.cols();
    seg.centroids = centroids;
    seg.inertia = a.inertia;
    seg.label_map.assign(pixels, -1);
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        const std::uint32_t p = matrix.pixel_index()[r];
        if (p >= pixels || seg.label_map[p] != -1) {
            throw ConfigError("hypercolumn pixel index is not a bijection onto the grid");
        }
        seg.label_map[p] = static_cast<std::int32_t>(a.labels[r]);
    }
    return seg;
}

std::vector<FeatureMask> extract_masks(const FeatureSegmentation& segmentation) {
    const std::size_t pixels = segmentation.label_map.size();
    std::vector<FeatureMask> masks(segmentation.k);
    for (std::size_t j = 0; j < segmentation.k; ++j) {
        masks[j].feature_id = static_cast<int>(j);
        masks[j].grid = segmentation.grid;
        masks[j].pixels.assign(pixels, 0);
    }
    for (std::size_t p = 0; p < pixels; ++p) {
        const auto label = segmentation.label_map[p];
        if (label < 0 || static_cast<std::size_t>(label) >= segmentation.k) {
            throw std::logic_error("label out of range at pixel " + std::to_string(p));
        }
        auto& m = masks[static_cast<std::size_t>(label)];
        m.pixels[p] = 1;
        ++m.pixel_count;
    }
    for (auto& m : masks) m.empty = m.pixel_count == 0;
    return masks;
}

FeatureSegmentation resize_labels(const FeatureSegmentation& segmentation, Size target) {
    if (segmentation.grid == target) {
        return segmentation;
    }
    FeatureSegmentation out = segmentation;
    out.grid = target;
    out.label_map.resize(static_cast<std::size_t>(target.height) * target.width);
    for (int y = 0; y < target.height; ++y) {
        const int sy = static_cast<int>((static_cast<long long>(y) * segmentation.grid.height) / target.height);
        for (int x = 0; x < target.width; ++x) {
            const int sx = static_cast<int>((static_cast<long long>(x) * segmentation.grid.width) / target.width);
            out.label_map[static_cast<std::size_t>(y) * target.width + x] = segmentation.label(sy, sx);
        }
    }
    return out;
}

void verify_partition(std::span<const FeatureMask> masks, Size grid) {
    const std::size_t pixels = static_cast<std::size_t>(grid.height) * grid.width;
    std::vector<std::uint8_t> cover(pixels, 0);
    for (const auto& m : masks) {
        if (!(m.grid == grid) || m.pixels.size() != pixels) {
            throw std::logic_error("feature mask grid does not match the image");
        }
        std::size_t count = 0;
        for (std::size_t p = 0; p < pixels; ++p) {
            if (!m.pixels[p]) continue;
            ++count;
            if (cover[p]++) {
                throw std::logic_error("feature masks overlap at pixel " + std::to_string(p));
            }
        }
        if (count != m.pixel_count || m.empty != (count == 0)) {
            throw std::logic_error("feature mask pixel count is stale");
        }
    }
    for (std::size_t p = 0; p < pixels; ++p) {
        if (!cover[p]) {
            throw std::logic_error("pixel " + std::to_string(p) + " belongs to no feature");
        }
    }
}

}  // namespace boxlens
