#pragma once

// Slow, direct reference computations the production code is checked against.
// None of them call into the library beyond its plain data types.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "boxlens/image.hpp"

namespace boxlens::testing {

/// ir[t] over the mean of ir weighted by w, evaluated in long double.
long double brute_force_irp(const std::vector<double>& ir, const std::vector<double>& weights,
                            std::size_t true_class);

/// Full 2-D Gaussian window exp(-(dx^2 + dy^2) / 2 sigma^2), normalized over
/// the (2r+1)^2 taps, with mirrored (reflect-101) borders.
Image dense_gaussian_oracle(const Image& image, double sigma, int radius);

/// Textbook k-means++ / Lloyd with the documented seeding rule. Returns the
/// centroids after every Lloyd update; entry 0 holds the seeds.
struct ReferenceKMeans {
    std::vector<std::vector<std::vector<double>>> trajectory;
    std::vector<double> inertia_per_iteration;
};
ReferenceKMeans reference_kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                                 std::uint64_t seed, std::size_t max_iterations, double tolerance);

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace boxlens::testing
