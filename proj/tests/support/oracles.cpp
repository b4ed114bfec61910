#include "support/oracles.hpp"

#include "boxlens/rng.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace boxlens::testing {

long double brute_force_irp(const std::vector<double>& ir, const std::vector<double>& weights,
                            std::size_t true_class) {
    long double num = 0.0L;
    long double den = 0.0L;
    for (std::size_t i = 0; i < ir.size(); ++i) {
        num += static_cast<long double>(weights[i]) * ir[i];
        den += weights[i];
    }
    return static_cast<long double>(ir[true_class]) / (num / den);
}

namespace {

int mirror(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

}  // namespace

Image dense_gaussian_oracle(const Image& image, double sigma, int radius) {
    std::vector<long double> window;
    long double total = 0.0L;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            const long double w = std::exp(-static_cast<long double>(dx * dx + dy * dy) / (2.0L * sigma * sigma));
            window.push_back(w);
            total += w;
        }
    }
    Image out(image.height(), image.width(), image.channels());
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < image.channels(); ++c) {
                long double acc = 0.0L;
                std::size_t t = 0;
                for (int dy = -radius; dy <= radius; ++dy) {
                    for (int dx = -radius; dx <= radius; ++dx) {
                        acc += window[t++] * image.at(mirror(y + dy, image.height()), mirror(x + dx, image.width()), c);
                    }
                }
                out.at(y, x, c) = static_cast<float>(acc / total);
            }
        }
    }
    return out;
}

namespace {

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

}  // namespace

ReferenceKMeans reference_kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                                 std::uint64_t seed, std::size_t max_iterations, double tolerance) {
    const std::size_t n = points.size();
    Rng rng(mix_seed(seed, 0));
    std::vector<std::vector<double>> centres;
    centres.push_back(points[uniform_index(rng, n)]);
    while (centres.size() < k) {
        std::vector<double> d2(n);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::numeric_limits<double>::infinity();
            for (const auto& c : centres) d2[i] = std::min(d2[i], dist2(points[i], c));
            total += d2[i];
        }
        if (total == 0.0) {
            centres.push_back(points[uniform_index(rng, n)]);
            continue;
        }
        const double u = uniform_unit(rng) * total;
        double running = 0.0;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            running += d2[i];
            if (running > u) {
                pick = i;
                break;
            }
        }
        centres.push_back(points[pick]);
    }

    ReferenceKMeans out;
    out.trajectory.push_back(centres);
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        std::vector<std::size_t> label(n);
        std::vector<double> own(n);
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < k; ++j) {
                if (dist2(points[i], centres[j]) < dist2(points[i], centres[best])) best = j;
            }
            label[i] = best;
            own[i] = dist2(points[i], centres[best]);
            inertia += own[i];
        }
        out.inertia_per_iteration.push_back(inertia);

        std::vector<std::vector<double>> next(k, std::vector<double>(points[0].size(), 0.0));
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++count[label[i]];
            for (std::size_t d = 0; d < points[i].size(); ++d) next[label[i]][d] += points[i][d];
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (count[j] == 0) {
                // Empty cluster: farthest point from its own centre, first such point wins.
                std::size_t far = 0;
                for (std::size_t i = 1; i < n; ++i) {
                    if (own[i] > own[far]) far = i;
                }
                next[j] = points[far];
                own[far] = -1.0;
            } else {
                for (auto& v : next[j]) v /= static_cast<double>(count[j]);
            }
        }
        double shift = 0.0;
        for (std::size_t j = 0; j < k; ++j) shift = std::max(shift, std::sqrt(dist2(next[j], centres[j])));
        centres = next;
        out.trajectory.push_back(centres);
        if (shift <= tolerance) break;
    }
    return out;
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("boxlens-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

}  // namespace boxlens::testing
