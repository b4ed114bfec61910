#include "boxlens/error.hpp"
#include "boxlens/perturbation.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace boxlens;

namespace {

Image random_image(int h, int w, int c, std::uint32_t seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<float> u(0.0f, 255.0f);
    Image img(h, w, c);
    for (auto& v : img.data()) v = u(gen);
    return img;
}

FeatureMask mask_from(Size grid, const std::function<bool(int, int)>& inside) {
    FeatureMask m;
    m.grid = grid;
    m.pixels.assign(static_cast<std::size_t>(grid.height) * grid.width, 0);
    for (int y = 0; y < grid.height; ++y)
        for (int x = 0; x < grid.width; ++x)
            if (inside(y, x)) {
                m.pixels[static_cast<std::size_t>(y) * grid.width + x] = 1;
                ++m.pixel_count;
            }
    m.empty = m.pixel_count == 0;
    return m;
}

}  // namespace

TEST(BlurConfig, DefaultsAndValidation) {
    BlurConfig c;
    EXPECT_EQ(c.sigma, 10.0);
    EXPECT_EQ(c.radius(), 30);
    c.sigma = 1.2;
    EXPECT_EQ(c.radius(), 4);
    c.kernel_radius = 2;
    EXPECT_EQ(c.radius(), 2);
    c.sigma = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c.sigma = 1.0;
    c.kernel_radius = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_DOUBLE_EQ(BlurConfig::scaled_to({224, 300}).sigma, 10.0);
    EXPECT_DOUBLE_EQ(BlurConfig::scaled_to({112, 112}).sigma, 5.0);
}

TEST(GaussianKernel, NormalizedAndSymmetric) {
    const auto k = gaussian_kernel(2.0, 6);
    ASSERT_EQ(k.size(), 13u);
    EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-15);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(k[i], k[12 - i]);
    EXPECT_NEAR(k[7] / k[6], std::exp(-1.0 / 8.0), 1e-14);
}

TEST(GaussianBlur, ConstantImageUnchanged) {
    const Image img(9, 13, 3, 77.25f);
    const auto out = gaussian_blur(img, {2.5, std::nullopt});
    for (float v : out.data()) EXPECT_NEAR(v, 77.25f, 1e-4);
}

TEST(GaussianBlur, ImpulseGivesTheKernel) {
    Image img(15, 15, 1, 0.0f);
    img.at(7, 7, 0) = 1.0f;
    const BlurConfig c{1.0, 3};
    const auto out = gaussian_blur(img, c);
    const auto oracle = boxlens::testing::dense_gaussian_oracle(img, 1.0, 3);
    for (int y = 0; y < 15; ++y)
        for (int x = 0; x < 15; ++x) EXPECT_NEAR(out.at(y, x, 0), oracle.at(y, x, 0), 1e-7);
    EXPECT_NEAR(out.at(7, 8, 0) / out.at(7, 7, 0), std::exp(-0.5), 1e-6);
}

TEST(GaussianBlur, MatchesDenseOracleWithBorders) {
    for (std::uint32_t seed = 0; seed < 3; ++seed) {
        const Image img = random_image(12, 10, 2, seed);
        const auto out = gaussian_blur(img, {1.7, std::nullopt});
        const auto oracle = boxlens::testing::dense_gaussian_oracle(img, 1.7, 6);
        for (std::size_t i = 0; i < out.data().size(); ++i) EXPECT_NEAR(out.data()[i], oracle.data()[i], 1e-3);
    }
}

TEST(GaussianBlur, RadiusLargerThanImageStillMirrors) {
    const Image img = random_image(3, 4, 1, 9);
    const auto out = gaussian_blur(img, {3.0, 9});
    const auto oracle = boxlens::testing::dense_gaussian_oracle(img, 3.0, 9);
    for (std::size_t i = 0; i < out.data().size(); ++i) EXPECT_NEAR(out.data()[i], oracle.data()[i], 1e-3);
}

TEST(GaussianBlur, SemigroupAwayFromBorders) {
    const Image img = random_image(48, 48, 1, 4);
    const double s = 1.5;
    const auto twice = gaussian_blur(gaussian_blur(img, {s, 8}), {s, 8});
    const auto once = gaussian_blur(img, {s * std::sqrt(2.0), 12});
    for (int y = 16; y < 32; ++y)
        for (int x = 16; x < 32; ++x) EXPECT_NEAR(twice.at(y, x, 0), once.at(y, x, 0), 1e-3);
}

TEST(GaussianBlur, OutputStaysWithinInputRange) {
    const Image img = random_image(20, 17, 3, 5);
    const auto out = gaussian_blur(img, {2.0, std::nullopt});
    for (int c = 0; c < 3; ++c) {
        float lo = 1e9f, hi = -1e9f;
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 17; ++x) {
                lo = std::min(lo, img.at(y, x, c));
                hi = std::max(hi, img.at(y, x, c));
            }
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 17; ++x) {
                EXPECT_GE(out.at(y, x, c), lo - 1e-3f);
                EXPECT_LE(out.at(y, x, c), hi + 1e-3f);
            }
    }
}

TEST(GaussianBlur, TinySigmaIsNearIdentity) {
    const Image img = random_image(16, 16, 3, 6);
    const auto out = gaussian_blur(img, {1e-3, std::nullopt});
    for (std::size_t i = 0; i < img.data().size(); ++i) EXPECT_LT(std::abs(out.data()[i] - img.data()[i]), 1e-2);
}

TEST(MaskedBlur, EmptyMaskIsExactIdentity) {
    const Image img = random_image(8, 8, 3, 7);
    const auto m = mask_from(img.size(), [](int, int) { return false; });
    EXPECT_EQ(apply_masked_blur(img, m, {2.0, std::nullopt}), img);
}

TEST(MaskedBlur, FullMaskIsFullBlur) {
    const Image img = random_image(8, 8, 3, 8);
    const auto m = mask_from(img.size(), [](int, int) { return true; });
    EXPECT_EQ(apply_masked_blur(img, m, {2.0, std::nullopt}), gaussian_blur(img, {2.0, std::nullopt}));
}

TEST(MaskedBlur, HalfPlaneComposite) {
    const Image img = random_image(10, 12, 1, 9);
    const auto m = mask_from(img.size(), [](int, int x) { return x < 6; });
    const auto out = apply_masked_blur(img, m, {1.5, std::nullopt});
    const auto oracle = boxlens::testing::dense_gaussian_oracle(img, 1.5, 5);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 12; ++x) {
            if (x < 6) {
                EXPECT_NEAR(out.at(y, x, 0), oracle.at(y, x, 0), 1e-3);
            } else {
                EXPECT_EQ(out.at(y, x, 0), img.at(y, x, 0));
            }
        }
}

TEST(MaskedBlur, ShapeMismatchThrows) {
    const Image img = random_image(8, 8, 1, 10);
    const auto m = mask_from({4, 4}, [](int, int) { return true; });
    EXPECT_THROW(apply_masked_blur(img, m, {1.0, std::nullopt}), ConfigError);
}
