#include "boxlens/image.hpp"

#include "boxlens/error.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace boxlens {

Image::Image(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
    if (height < 1 || width < 1 || channels < 1) {
        throw std::invalid_argument("image dimensions must be positive");
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Image::Image(int height, int width, int channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    if (height < 1 || width < 1 || channels < 1) {
        throw std::invalid_argument("image dimensions must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
        throw std::invalid_argument("image data size does not match its dimensions");
    }
}

namespace {

Image from_mat(const cv::Mat& mat) {
    cv::Mat f;
    mat.convertTo(f, CV_32F);
    const int ch = f.channels();
    Image out(f.rows, f.cols, ch);
    for (int r = 0; r < f.rows; ++r) {
        const float* src = f.ptr<float>(r);
        std::copy(src, src + static_cast<std::ptrdiff_t>(f.cols) * ch,
                  out.data().begin() + static_cast<std::ptrdiff_t>(r) * f.cols * ch);
    }
    return out;
}

cv::Mat to_mat(const Image& image) {
    cv::Mat mat(image.height(), image.width(), CV_32FC(image.channels()));
    const auto src = image.data();
    const std::size_t row_len = static_cast<std::size_t>(image.width()) * image.channels();
    for (int r = 0; r < image.height(); ++r) {
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * row_len), row_len,
                    mat.ptr<float>(r));
    }
    return mat;
}

}  // namespace

Image load_image(const std::filesystem::path& path, int channels) {
    if (channels != 1 && channels != 3) {
        throw ConfigError("unsupported channel count " + std::to_string(channels));
    }
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        throw ConfigError("image not found: " + path.string());
    }
    cv::Mat mat;
    try {
        mat = cv::imread(path.string(), channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
    } catch (const cv::Exception&) {
        mat.release();
    }
    if (mat.empty()) {
        throw ConfigError("cannot decode image: " + path.string());
    }
    if (channels == 3) {
        cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
    }
    return from_mat(mat);
}

void save_png(const Image& image, const std::filesystem::path& path) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw ConfigError("PNG export supports 1 or 3 channels");
    }
    cv::Mat mat = to_mat(image);
    cv::Mat bytes;
    mat.convertTo(bytes, CV_8U);  // saturating round
    if (image.channels() == 3) {
        cv::cvtColor(bytes, bytes, cv::COLOR_RGB2BGR);
    }
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), bytes);
    } catch (const cv::Exception&) {
        ok = false;
    }
    if (!ok) {
        throw ConfigError("cannot write PNG: " + path.string());
    }
}

Image resize_bilinear(const Image& image, Size target) {
    if (target.height < 1 || target.width < 1) {
        throw std::invalid_argument("resize target must be positive");
    }
    if (image.size() == target) {
        return image;
    }
    cv::Mat resized;
    cv::resize(to_mat(image), resized, cv::Size(target.width, target.height), 0, 0,
               cv::INTER_LINEAR);
    return from_mat(resized);
}

}  // namespace boxlens
