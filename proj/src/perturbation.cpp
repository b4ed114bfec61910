#include "boxlens/perturbation.hpp"

#include "boxlens/error.hpp"

#include <algorithm>
#include <cmath>

namespace boxlens {

int BlurConfig::radius() const {
    return kernel_radius ? *kernel_radius : std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
}

void BlurConfig::validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw ConfigError("blur sigma must be positive");
    }
    if (radius() < 1) {
        throw ConfigError("blur kernel radius must be at least 1");
    }
}

BlurConfig BlurConfig::scaled_to(Size image) {
    BlurConfig config;
    config.sigma = kReferenceSigma * std::min(image.height, image.width) / kReferenceSide;
    return config;
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        sum += taps[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    }
    for (double& t : taps) t /= sum;
    return taps;
}

namespace {

// Reflect-101 index, valid for any offset (repeats with period 2 * (n - 1)).
int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

}  // namespace

Image gaussian_blur(const Image& image, const BlurConfig& config) {
    config.validate();
    const int r = config.radius();
    const auto taps = gaussian_kernel(config.sigma, r);
    const int h = image.height();
    const int w = image.width();
    const int c = image.channels();

    std::vector<double> horizontal(static_cast<std::size_t>(h) * w * c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int t = -r; t <= r; ++t) {
                    acc += taps[static_cast<std::size_t>(t + r)] * image.at(y, reflect(x + t, w), ch);
                }
                horizontal[(static_cast<std::size_t>(y) * w + x) * c + ch] = acc;
            }

    Image out(h, w, c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int t = -r; t <= r; ++t) {
                    acc += taps[static_cast<std::size_t>(t + r)] *
                           horizontal[(static_cast<std::size_t>(reflect(y + t, h)) * w + x) * c + ch];
                }
                out.at(y, x, ch) = static_cast<float>(acc);
            }
    return out;
}

Image composite(const Image& original, const Image& blurred, const FeatureMask& mask) {
    if (original.height() != mask.grid.height || original.width() != mask.grid.width) {
        throw ConfigError("feature mask does not match the image size");
    }
    if (!(blurred.size() == original.size()) || blurred.channels() != original.channels()) {
        throw ConfigError("blurred image does not match the original");
    }
    Image out = original;
    const int c = original.channels();
    for (int y = 0; y < original.height(); ++y)
        for (int x = 0; x < original.width(); ++x) {
            if (!mask.at(y, x)) continue;
            for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) = blurred.at(y, x, ch);
        }
    return out;
}

Image apply_masked_blur(const Image& image, const FeatureMask& mask, const BlurConfig& config) {
    if (image.height() != mask.grid.height || image.width() != mask.grid.width) {
        throw ConfigError("feature mask does not match the image size");
    }
    if (mask.empty) {
        return image;
    }
    return composite(image, gaussian_blur(image, config), mask);
}

}  // namespace boxlens
