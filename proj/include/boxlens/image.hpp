#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace boxlens {

struct Size {
    int height = 0;
    int width = 0;

    friend bool operator==(const Size&, const Size&) = default;
};

/// Interleaved (row, col, channel) image with float samples.
/// Values are kept in raw space, nominally [0, 255]; colour images are RGB.
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels, float fill = 0.0f);
    Image(int height, int width, int channels, std::vector<float> data);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_; }
    Size size() const noexcept { return {height_, width_}; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
    }
    bool empty() const noexcept { return data_.empty(); }

    float& at(int row, int col, int ch) noexcept { return data_[index(row, col, ch)]; }
    float at(int row, int col, int ch) const noexcept { return data_[index(row, col, ch)]; }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int row, int col, int ch) const noexcept {
        return (static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(col)) *
                   static_cast<std::size_t>(channels_) +
               static_cast<std::size_t>(ch);
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

/// Decodes an image file into `channels` channels (1 = gray, 3 = RGB).
/// Throws ConfigError when the file is missing or cannot be decoded.
Image load_image(const std::filesystem::path& path, int channels);

/// Writes an 8-bit PNG; samples are rounded and clamped to [0, 255].
void save_png(const Image& image, const std::filesystem::path& path);

/// Bilinear resize in raw space. Returns a copy when the size already matches.
Image resize_bilinear(const Image& image, Size target);

}  // namespace boxlens
