#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "boxlens/image.hpp"

namespace boxlens {

struct InputShape {
    int height = 0;
    int width = 0;
    int channels = 0;

    friend bool operator==(const InputShape&, const InputShape&) = default;
};

enum class ResizePolicy { Stretch, None };
enum class ChannelOrder { Rgb, Bgr };
enum class OutputKind { Probabilities, Logits };

/// How a raw image becomes the network's input tensor:
///   tensor[c] = (raw[c'] * scale - mean[c]) / stddev[c]
/// where c' follows `channel_order`. Empty mean/stddev mean 0/1.
struct Preprocessing {
    std::optional<InputShape> input_shape;  // read from the model when absent
    ResizePolicy resize = ResizePolicy::Stretch;
    ChannelOrder channel_order = ChannelOrder::Rgb;
    float scale = 1.0f;
    std::vector<float> mean;
    std::vector<float> stddev;
    OutputKind output = OutputKind::Probabilities;
};

enum class LayerKind { Convolutional, Other };

struct LayerInfo {
    std::string name;
    std::string type;  // runtime layer type, e.g. "Convolution", "ReLU", "InnerProduct"
    int height = 1;
    int width = 1;
    int channels = 1;
    bool spatial = false;      // produces an (h, w, c) map
    bool has_weights = false;  // convolution or fully connected
};

/// Class probabilities for one image.
class PredictionVector {
public:
    static constexpr double kSumTolerance = 1e-5;

    PredictionVector() = default;
    /// Validates the invariants: entries >= 0 and sum within 1e-5 of 1.
    /// Throws std::invalid_argument otherwise.
    explicit PredictionVector(std::vector<double> probabilities,
                              std::vector<std::string> class_names = {});

    /// Clamps round-off negatives and renormalizes when the sum drifts beyond
    /// the tolerance. `renormalized` reports whether that happened.
    static PredictionVector from_raw(std::vector<double> raw, std::vector<std::string> class_names,
                                     bool* renormalized = nullptr);

    std::size_t size() const noexcept { return probabilities_.size(); }
    double operator[](std::size_t i) const { return probabilities_.at(i); }
    std::span<const double> probabilities() const noexcept { return probabilities_; }
    const std::vector<std::string>& class_names() const noexcept { return class_names_; }
    std::string name_of(std::size_t i) const;

    /// Indices of the `n` most probable classes, descending; ties by lower index.
    std::vector<std::size_t> top(std::size_t n) const;

private:
    std::vector<double> probabilities_;
    std::vector<std::string> class_names_;
};

/// Activations of one layer, stored (row, col, channel).
struct ActivationVolume {
    std::string layer_name;
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;
    LayerKind source_layer_kind = LayerKind::Other;

    float at(int row, int col, int ch) const {
        return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }
    float& at(int row, int col, int ch) {
        return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }
};

/// Serialized ONNX classifier treated as a black box. Copies share one
/// underlying network; predict and activations may be called from any thread.
class ClassifierModel {
public:
    /// Throws ModelError (MissingFile, Unparseable, NoSpatialLayers, ShapeMismatch).
    static ClassifierModel load(const std::filesystem::path& source, Preprocessing preprocessing);

    const std::filesystem::path& source() const;
    const Preprocessing& preprocessing() const;
    const InputShape& input_shape() const;
    std::size_t class_count() const;
    /// Input layer first, then every runtime layer in execution order.
    const std::vector<LayerInfo>& layer_catalog() const;
    const LayerInfo* find_layer(const std::string& name) const;
    const std::string& input_layer_name() const;

    void set_class_names(std::vector<std::string> names);
    const std::vector<std::string>& class_names() const;

    /// Deterministic for a fixed model and image. Throws ModelError.
    PredictionVector predict(const Image& image) const;

    /// One volume per requested name, in request order. Non-spatial layers are
    /// rejected unless `allow_non_spatial`; they come back as 1x1xC volumes.
    std::vector<ActivationVolume> activations(const Image& image,
                                              std::span<const std::string> layers,
                                              bool allow_non_spatial = false) const;

    /// The exact input tensor handed to the network, as (h, w, c).
    ActivationVolume preprocess(const Image& image) const;

    /// Number of predict calls served so far.
    std::size_t predict_calls() const;

private:
    struct Impl;
    explicit ClassifierModel(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

    std::shared_ptr<Impl> impl_;
};

/// Default hypercolumn layers: the last `count` spatial layers with weights
/// (convolutions), in catalog order.
std::vector<std::string> default_hypercolumn_layers(const ClassifierModel& model,
                                                    std::size_t count = 10);

}  // namespace boxlens
