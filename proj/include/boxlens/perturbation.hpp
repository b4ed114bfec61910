#pragma once

#include <optional>
#include <vector>

#include "boxlens/feature_mask.hpp"
#include "boxlens/image.hpp"

namespace boxlens {

struct BlurConfig {
    static constexpr double kReferenceSigma = 10.0;  // pixels at 224x224
    static constexpr int kReferenceSide = 224;

    double sigma = kReferenceSigma;
    std::optional<int> kernel_radius;  // ceil(3 * sigma) when unset

    int radius() const;
    /// Throws ConfigError unless sigma > 0 and the radius is >= 1.
    void validate() const;

    /// The reference sigma scaled by the shorter image side.
    static BlurConfig scaled_to(Size image);
};

/// Normalized 1-D Gaussian taps for offsets -radius..radius.
std::vector<double> gaussian_kernel(double sigma, int radius);

/// Separable Gaussian blur of every channel with reflect-101 borders
/// (dcb|abcd|cba).
Image gaussian_blur(const Image& image, const BlurConfig& config);

/// Takes `blurred` inside the mask and `original` elsewhere.
Image composite(const Image& original, const Image& blurred, const FeatureMask& mask);

/// Blurs the whole image once, then composites it under the mask.
Image apply_masked_blur(const Image& image, const FeatureMask& mask, const BlurConfig& config);

}  // namespace boxlens
