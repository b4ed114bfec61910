#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "boxlens/feature_mask.hpp"
#include "boxlens/hypercolumn.hpp"

namespace boxlens {

struct KMeansConfig {
    std::size_t k = 10;
    std::size_t max_iterations = 300;
    double tolerance = 1e-4;  // stop once no centroid moves farther than this
    std::uint64_t seed = 0;
    std::size_t n_init = 1;
    unsigned jobs = 1;

    /// Throws ConfigError on k == 0, max_iterations == 0, n_init == 0 or tolerance < 0.
    void validate() const;
};

struct KMeansResult {
    std::size_t k = 0;
    std::size_t dims = 0;
    std::vector<double> centroids;  // k x dims, row-major
    std::vector<std::uint32_t> labels;  // one per fitted row
    double inertia = 0.0;
    std::size_t iterations = 0;
};

/// Called once per Lloyd iteration with the inertia of that iteration's
/// assignment step (before the centroid update).
using IterationObserver = std::function<void(std::size_t iteration, double inertia)>;

/// k-means with k-means++ seeding.
///
/// Each restart r draws from Rng(mix_seed(seed, r)):
///   - the first centre is row uniform_index(n);
///   - each further centre takes u = uniform_unit() * sum(D^2) and picks the
///     first row whose running D^2 sum exceeds u (uniform_index(n) if every
///     D^2 is zero), where D^2 is the squared distance to the nearest chosen
///     centre.
/// Lloyd iterations assign rows to the nearest centre (lowest index on ties),
/// recompute means, and move any empty centre onto the row farthest from its
/// own centre. Iteration stops when the largest centre shift is <= tolerance
/// or after max_iterations. The restart with the lowest final inertia wins
/// (earliest on ties). Throws ConfigError when there are fewer rows than k.
KMeansResult kmeans_fit(const HypercolumnMatrix& rows, const KMeansConfig& config,
                        const IterationObserver& observer = {});

struct FeatureSegmentation {
    Size grid;
    std::size_t k = 0;
    std::size_t dims = 0;
    std::vector<std::int32_t> label_map;  // row-major over grid
    std::vector<double> centroids;
    double inertia = 0.0;

    std::int32_t label(int row, int col) const {
        return label_map[static_cast<std::size_t>(row) * grid.width + col];
    }
};

/// Nearest-centroid labelling of every pixel of a full-resolution matrix.
/// Throws ConfigError on a dimension mismatch or when the matrix does not
/// cover its grid.
FeatureSegmentation assign_labels(const HypercolumnMatrix& matrix, const std::vector<double>& centroids,
                                  std::size_t k, unsigned jobs = 1);

/// One mask per label in [0, k), including empty ones.
std::vector<FeatureMask> extract_masks(const FeatureSegmentation& segmentation);

/// Nearest-neighbour resampling of the label map onto another grid.
FeatureSegmentation resize_labels(const FeatureSegmentation& segmentation, Size target);

}  // namespace boxlens
