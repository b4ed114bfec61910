#include "boxlens/error.hpp"
#include "boxlens/segmentation.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <random>
#include <set>

using namespace boxlens;

namespace {

HypercolumnMatrix matrix_from(const std::vector<std::vector<double>>& points, Size grid = {}) {
    const std::size_t n = points.size();
    if (grid.height == 0) grid = {1, static_cast<int>(n)};
    std::vector<float> data;
    for (const auto& p : points)
        for (double v : p) data.push_back(static_cast<float>(v));
    std::vector<std::uint32_t> index(n);
    for (std::size_t i = 0; i < n; ++i) index[i] = static_cast<std::uint32_t>(i);
    return HypercolumnMatrix(grid, {{"x", 0, points.empty() ? 0 : points[0].size()}}, index, data);
}

// Float-representable random points so the library and the oracle see identical data.
std::vector<std::vector<double>> random_points(std::mt19937& gen, std::size_t n, std::size_t dims) {
    std::uniform_real_distribution<float> u(-5.0f, 5.0f);
    std::vector<std::vector<double>> pts(n, std::vector<double>(dims));
    for (auto& p : pts)
        for (auto& v : p) v = u(gen);
    return pts;
}

double sq(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

}  // namespace

TEST(KMeansConfig, Validation) {
    KMeansConfig c;
    EXPECT_NO_THROW(c.validate());
    c.k = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.max_iterations = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.tolerance = -1.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(KMeans, FewerRowsThanK) {
    KMeansConfig c;
    c.k = 5;
    EXPECT_THROW(kmeans_fit(matrix_from({{0.0}, {1.0}}), c), ConfigError);
}

TEST(KMeans, DistinctPointsFitPerfectly) {
    const std::vector<std::vector<double>> pts{{0, 0}, {10, 0}, {0, 10}, {10, 10}};
    KMeansConfig c;
    c.k = 4;
    const auto r = kmeans_fit(matrix_from(pts), c);
    EXPECT_EQ(r.inertia, 0.0);
    std::set<std::uint32_t> labels(r.labels.begin(), r.labels.end());
    EXPECT_EQ(labels.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        const std::size_t j = r.labels[i];
        EXPECT_EQ(r.centroids[j * 2], pts[i][0]);
        EXPECT_EQ(r.centroids[j * 2 + 1], pts[i][1]);
    }
}

TEST(KMeans, IdenticalRowsSingleCluster) {
    const std::vector<std::vector<double>> pts(7, {1.5, -2.0, 3.0});
    KMeansConfig c;
    c.k = 1;
    const auto r = kmeans_fit(matrix_from(pts), c);
    EXPECT_EQ(r.inertia, 0.0);
    EXPECT_EQ(r.centroids, (std::vector<double>{1.5, -2.0, 3.0}));
}

TEST(KMeans, IdenticalRowsMoreClustersThanValues) {
    const std::vector<std::vector<double>> pts(6, {2.0});
    KMeansConfig c;
    c.k = 3;
    const auto r = kmeans_fit(matrix_from(pts), c);
    EXPECT_EQ(r.inertia, 0.0);
    EXPECT_EQ(r.labels.size(), 6u);
}

TEST(KMeans, TwoBlobsMatchBestTwoPartition) {
    std::mt19937 gen(3);
    std::normal_distribution<float> n(0.0f, 0.3f);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 20; ++i) {
        const double cx = i < 10 ? 0.0 : 20.0;
        pts.push_back({static_cast<float>(cx + n(gen)), n(gen)});
    }
    // Exhaustive minimum over all 2-partitions of the 20 points.
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 1; mask < (1u << 19); ++mask) {
        double mean[2][2] = {{0, 0}, {0, 0}};
        int count[2] = {0, 0};
        for (int i = 0; i < 20; ++i) {
            const int g = (mask >> i) & 1u;
            mean[g][0] += pts[static_cast<std::size_t>(i)][0];
            mean[g][1] += pts[static_cast<std::size_t>(i)][1];
            ++count[g];
        }
        double cost = 0.0;
        for (int i = 0; i < 20; ++i) {
            const int g = (mask >> i) & 1u;
            const double dx = pts[static_cast<std::size_t>(i)][0] - mean[g][0] / count[g];
            const double dy = pts[static_cast<std::size_t>(i)][1] - mean[g][1] / count[g];
            cost += dx * dx + dy * dy;
        }
        best = std::min(best, cost);
    }
    KMeansConfig c;
    c.k = 2;
    c.seed = 11;
    const auto r = kmeans_fit(matrix_from(pts), c);
    for (int i = 1; i < 10; ++i) EXPECT_EQ(r.labels[static_cast<std::size_t>(i)], r.labels[0]);
    for (int i = 11; i < 20; ++i) EXPECT_EQ(r.labels[static_cast<std::size_t>(i)], r.labels[10]);
    EXPECT_NE(r.labels[0], r.labels[10]);
    EXPECT_NEAR(r.inertia, best, 1e-9 * std::max(1.0, best));
}

TEST(KMeans, LloydInertiaNeverIncreases) {
    std::mt19937 gen(17);
    for (int trial = 0; trial < 30; ++trial) {
        const auto pts = random_points(gen, 60, 3);
        KMeansConfig c;
        c.k = 4;
        c.seed = static_cast<std::uint64_t>(trial);
        c.tolerance = 0.0;
        std::vector<double> seen;
        kmeans_fit(matrix_from(pts), c, [&](std::size_t, double inertia) { seen.push_back(inertia); });
        for (std::size_t i = 1; i < seen.size(); ++i) EXPECT_LE(seen[i], seen[i - 1] * (1 + 1e-12));
    }
}

TEST(KMeans, TrajectoryMatchesReferenceImplementation) {
    std::mt19937 gen(23);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 4 + static_cast<std::size_t>(trial % 9);
        const std::size_t k = 1 + static_cast<std::size_t>(trial % 3);
        const auto pts = random_points(gen, n, 2);
        const auto ref = boxlens::testing::reference_kmeans(pts, k, static_cast<std::uint64_t>(trial), 50, 1e-4);
        for (std::size_t t = 1; t < ref.trajectory.size(); ++t) {
            KMeansConfig c;
            c.k = k;
            c.seed = static_cast<std::uint64_t>(trial);
            c.max_iterations = t;
            const auto r = kmeans_fit(matrix_from(pts), c);
            for (std::size_t j = 0; j < k; ++j)
                for (std::size_t d = 0; d < 2; ++d) EXPECT_NEAR(r.centroids[j * 2 + d], ref.trajectory[t][j][d], 1e-9);
        }
    }
}

TEST(KMeans, DeterministicAcrossRunsAndThreads) {
    std::mt19937 gen(29);
    const auto pts = random_points(gen, 3000, 4);
    KMeansConfig c;
    c.k = 6;
    c.seed = 99;
    c.n_init = 2;
    const auto a = kmeans_fit(matrix_from(pts), c);
    c.jobs = 4;
    const auto b = kmeans_fit(matrix_from(pts), c);
    EXPECT_EQ(a.centroids, b.centroids);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.inertia, b.inertia);
}

TEST(KMeans, RestartsNeverWorsenInertia) {
    std::mt19937 gen(31);
    const auto pts = random_points(gen, 200, 2);
    KMeansConfig c;
    c.k = 5;
    c.seed = 4;
    const double one = kmeans_fit(matrix_from(pts), c).inertia;
    c.n_init = 5;
    EXPECT_LE(kmeans_fit(matrix_from(pts), c).inertia, one);
}

TEST(AssignLabels, TiesGoToLowestIndex) {
    // Pixel at 2 is equidistant from centroids 1 (at 0) and 3 (at 4).
    const auto m = matrix_from({{2.0}});
    const std::vector<double> centroids{-10.0, 0.0, 30.0, 4.0};
    EXPECT_EQ(assign_labels(m, centroids, 4).label(0, 0), 1);
}

TEST(AssignLabels, ExactMatchAndDimensionMismatch) {
    const auto m = matrix_from({{0.0, 1.0}, {5.0, 5.0}, {-3.0, 2.0}});
    const std::vector<double> centroids{0.0, 1.0, 5.0, 5.0, -3.0, 2.0};
    const auto seg = assign_labels(m, centroids, 3);
    EXPECT_EQ(seg.label_map, (std::vector<std::int32_t>{0, 1, 2}));
    EXPECT_EQ(seg.inertia, 0.0);
    EXPECT_THROW(assign_labels(m, {0.0, 1.0, 2.0}, 3), ConfigError);
}

TEST(AssignLabels, MatchesBruteForceScan) {
    std::mt19937 gen(37);
    const auto pts = random_points(gen, 50, 3);
    const auto cs = random_points(gen, 3, 3);
    std::vector<double> flat;
    for (const auto& c : cs) flat.insert(flat.end(), c.begin(), c.end());
    const auto seg = assign_labels(matrix_from(pts, {5, 10}), flat, 3);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < 3; ++j)
            if (sq(pts[i], cs[j]) < sq(pts[i], cs[best])) best = j;
        EXPECT_EQ(seg.label_map[i], static_cast<std::int32_t>(best));
    }
}

TEST(AssignLabels, RequiresFullMatrix) {
    const auto m = matrix_from({{0.0}, {1.0}}, {2, 2});
    EXPECT_THROW(assign_labels(m, {0.0}, 1), ConfigError);
}

TEST(Masks, AllZeroLabelMap) {
    FeatureSegmentation seg;
    seg.grid = {3, 4};
    seg.k = 3;
    seg.label_map.assign(12, 0);
    const auto masks = extract_masks(seg);
    ASSERT_EQ(masks.size(), 3u);
    EXPECT_EQ(masks[0].pixel_count, 12u);
    EXPECT_FALSE(masks[0].empty);
    EXPECT_TRUE(masks[1].empty);
    EXPECT_TRUE(masks[2].empty);
    EXPECT_NO_THROW(verify_partition(masks, seg.grid));
}

TEST(Masks, CheckerboardComplements) {
    FeatureSegmentation seg;
    seg.grid = {4, 4};
    seg.k = 2;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) seg.label_map.push_back((x + y) % 2);
    const auto masks = extract_masks(seg);
    for (std::size_t p = 0; p < 16; ++p) EXPECT_NE(masks[0].pixels[p], masks[1].pixels[p]);
    EXPECT_EQ(masks[0].pixel_count + masks[1].pixel_count, 16u);
}

TEST(Masks, VerifyPartitionDetectsViolations) {
    FeatureSegmentation seg;
    seg.grid = {2, 2};
    seg.k = 2;
    seg.label_map = {0, 1, 1, 0};
    auto masks = extract_masks(seg);
    auto overlap = masks;
    overlap[1].pixels[0] = 1;
    ++overlap[1].pixel_count;
    EXPECT_THROW(verify_partition(overlap, seg.grid), std::logic_error);
    auto hole = masks;
    hole[0].pixels[0] = 0;
    --hole[0].pixel_count;
    EXPECT_THROW(verify_partition(hole, seg.grid), std::logic_error);
}

TEST(Masks, RandomSegmentationsPartition) {
    std::mt19937 gen(41);
    for (int trial = 0; trial < 20; ++trial) {
        FeatureSegmentation seg;
        seg.grid = {7, 9};
        seg.k = 5;
        for (int i = 0; i < 63; ++i) seg.label_map.push_back(static_cast<std::int32_t>(gen() % 5));
        const auto masks = extract_masks(seg);
        EXPECT_NO_THROW(verify_partition(masks, seg.grid));
        const auto up = resize_labels(seg, {21, 18});
        EXPECT_NO_THROW(verify_partition(extract_masks(up), up.grid));
        EXPECT_EQ(up.label(20, 17), seg.label(6, 8));
        EXPECT_EQ(up.label(0, 0), seg.label(0, 0));
    }
}
