#include "boxlens/model.hpp"

#include "boxlens/error.hpp"
#include "boxlens/protowire.hpp"

#include <opencv2/dnn.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <iterator>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace boxlens {

// ---------------------------------------------------------------------------
// PredictionVector
// ---------------------------------------------------------------------------

PredictionVector::PredictionVector(std::vector<double> probabilities,
                                   std::vector<std::string> class_names)
    : probabilities_(std::move(probabilities)), class_names_(std::move(class_names)) {
    if (probabilities_.empty()) {
        throw std::invalid_argument("prediction vector is empty");
    }
    if (!class_names_.empty() && class_names_.size() != probabilities_.size()) {
        throw std::invalid_argument("class name count does not match probability count");
    }
    double sum = 0.0;
    for (double p : probabilities_) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw std::invalid_argument("probabilities must be finite and non-negative");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        throw std::invalid_argument("probabilities sum to " + std::to_string(sum));
    }
}

PredictionVector PredictionVector::from_raw(std::vector<double> raw,
                                            std::vector<std::string> class_names,
                                            bool* renormalized) {
    double sum = 0.0;
    for (double& p : raw) {
        if (!std::isfinite(p) || p < -1e-6) {
            throw std::invalid_argument("model emitted an invalid probability");
        }
        p = std::max(p, 0.0);
        sum += p;
    }
    const bool fix = std::abs(sum - 1.0) > kSumTolerance;
    if (fix) {
        if (!(sum > 0.0)) {
            throw std::invalid_argument("model emitted an all-zero probability vector");
        }
        for (double& p : raw) p /= sum;
    }
    if (renormalized) *renormalized = fix;
    return PredictionVector(std::move(raw), std::move(class_names));
}

std::string PredictionVector::name_of(std::size_t i) const {
    if (i < class_names_.size()) return class_names_[i];
    return "class_" + std::to_string(i);
}

std::vector<std::size_t> PredictionVector::top(std::size_t n) const {
    std::vector<std::size_t> order(probabilities_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return probabilities_[a] > probabilities_[b];
    });
    order.resize(std::min(n, order.size()));
    return order;
}

// ---------------------------------------------------------------------------
// ClassifierModel
// ---------------------------------------------------------------------------

struct ClassifierModel::Impl {
    std::filesystem::path source;
    Preprocessing preprocessing;
    InputShape input_shape;
    std::size_t class_count = 0;
    std::string input_name;
    std::string output_name;
    std::vector<LayerInfo> catalog;
    std::vector<std::string> class_names;

    mutable std::mutex net_mutex;
    mutable cv::dnn::Net net;
    mutable std::atomic<std::size_t> predict_calls{0};

    cv::Mat make_blob(const Image& image) const;
    std::vector<cv::Mat> run(const cv::Mat& blob, const std::vector<cv::String>& outputs) const;
};

namespace {

struct OnnxInput {
    std::string name;
    std::vector<std::int64_t> dims;  // -1 for symbolic dimensions
};

// Walks ModelProto.graph for the first graph input that is not an initializer.
OnnxInput read_onnx_input(std::string_view bytes) {
    using protowire::Reader;
    using protowire::WireType;

    std::string_view graph;
    Reader model(bytes);
    while (auto f = model.next()) {
        if (f->number == 7 && f->type == WireType::LengthDelimited) graph = f->payload;
    }
    if (graph.empty()) {
        throw std::runtime_error("no graph");
    }

    std::set<std::string, std::less<>> initializers;
    std::vector<std::string_view> inputs;
    Reader g(graph);
    while (auto f = g.next()) {
        if (f->type != WireType::LengthDelimited) continue;
        if (f->number == 5) {
            Reader t(f->payload);
            while (auto tf = t.next()) {
                if (tf->number == 8 && tf->type == WireType::LengthDelimited) {
                    initializers.emplace(tf->payload);
                }
            }
        } else if (f->number == 11) {
            inputs.push_back(f->payload);
        }
    }

    for (auto info : inputs) {
        OnnxInput in;
        std::string_view type;
        Reader v(info);
        while (auto f = v.next()) {
            if (f->type != WireType::LengthDelimited) continue;
            if (f->number == 1) in.name = std::string(f->payload);
            if (f->number == 2) type = f->payload;
        }
        if (initializers.count(in.name) != 0) continue;

        // TypeProto.tensor_type(1).shape(2).dim(1).dim_value(1)
        auto sub = [](std::string_view msg, std::uint32_t number) {
            std::string_view out;
            Reader r(msg);
            while (auto f = r.next()) {
                if (f->number == number && f->type == WireType::LengthDelimited) out = f->payload;
            }
            return out;
        };
        const auto shape = sub(sub(type, 1), 2);
        Reader s(shape);
        while (auto f = s.next()) {
            if (f->number != 1 || f->type != WireType::LengthDelimited) continue;
            std::int64_t value = -1;
            Reader d(f->payload);
            while (auto df = d.next()) {
                if (df->number == 1 && df->type == WireType::Varint) {
                    value = static_cast<std::int64_t>(df->scalar);
                }
            }
            in.dims.push_back(value);
        }
        return in;
    }
    throw std::runtime_error("graph declares no data input");
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ModelError(ModelError::Kind::MissingFile, "cannot open model file: " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) sum += out[i] = std::exp(logits[i] - top);
    for (double& p : out) p /= sum;
    return out;
}

ActivationVolume to_volume(const cv::Mat& blob, const LayerInfo& info) {
    ActivationVolume vol;
    vol.layer_name = info.name;
    vol.source_layer_kind = info.type == "Convolution" ? LayerKind::Convolutional : LayerKind::Other;
    const float* src = blob.ptr<float>();
    if (blob.dims == 4) {
        const int c = blob.size[1];
        const int h = blob.size[2];
        const int w = blob.size[3];
        vol.height = h;
        vol.width = w;
        vol.channels = c;
        vol.data.resize(static_cast<std::size_t>(h) * w * c);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    vol.at(y, x, ch) = src[(static_cast<std::size_t>(ch) * h + y) * w + x];
    } else {
        vol.height = 1;
        vol.width = 1;
        vol.channels = static_cast<int>(blob.total());
        vol.data.assign(src, src + blob.total());
    }
    return vol;
}

}  // namespace

cv::Mat ClassifierModel::Impl::make_blob(const Image& raw) const {
    const InputShape& shape = input_shape;
    if (raw.channels() != shape.channels) {
        throw ModelError(ModelError::Kind::ShapeMismatch,
                         "image has " + std::to_string(raw.channels()) + " channels, model expects " +
                             std::to_string(shape.channels));
    }
    const Size target{shape.height, shape.width};
    if (raw.size() != target && preprocessing.resize == ResizePolicy::None) {
        throw ModelError(ModelError::Kind::ShapeMismatch,
                         "image is " + std::to_string(raw.height()) + "x" + std::to_string(raw.width()) +
                             ", model expects " + std::to_string(shape.height) + "x" +
                             std::to_string(shape.width));
    }
    const Image image = resize_bilinear(raw, target);

    const int c = shape.channels;
    cv::Mat blob(std::vector<int>{1, c, shape.height, shape.width}, CV_32F);
    float* dst = blob.ptr<float>();
    for (int ch = 0; ch < c; ++ch) {
        const int src_ch = preprocessing.channel_order == ChannelOrder::Bgr ? c - 1 - ch : ch;
        const float mean = preprocessing.mean.empty() ? 0.0f : preprocessing.mean[static_cast<std::size_t>(ch)];
        const float sd = preprocessing.stddev.empty() ? 1.0f : preprocessing.stddev[static_cast<std::size_t>(ch)];
        for (int y = 0; y < shape.height; ++y)
            for (int x = 0; x < shape.width; ++x)
                dst[(static_cast<std::size_t>(ch) * shape.height + y) * shape.width + x] =
                    (image.at(y, x, src_ch) * preprocessing.scale - mean) / sd;
    }
    return blob;
}

std::vector<cv::Mat> ClassifierModel::Impl::run(const cv::Mat& blob,
                                                const std::vector<cv::String>& outputs) const {
    std::vector<cv::Mat> results;
    std::lock_guard lock(net_mutex);
    try {
        net.setInput(blob);
        net.forward(results, outputs);
    } catch (const cv::Exception& e) {
        throw ModelError(ModelError::Kind::Inference, std::string("inference failed: ") + e.what());
    }
    // forward() hands out views of the network's internal buffers.
    for (auto& r : results) r = r.clone();
    return results;
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& source,
                                      Preprocessing preprocessing) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(source, ec)) {
        throw ModelError(ModelError::Kind::MissingFile, "model file not found: " + source.string());
    }
    const std::string bytes = read_file(source);

    auto impl = std::make_shared<Impl>();
    impl->source = source;

    OnnxInput onnx_input;
    try {
        onnx_input = read_onnx_input(bytes);
        impl->net = cv::dnn::readNetFromONNX(bytes.data(), bytes.size());
    } catch (const std::exception& e) {
        throw ModelError(ModelError::Kind::Unparseable,
                         "not a readable ONNX model: " + source.string() + " (" + e.what() + ")");
    }
    if (impl->net.empty()) {
        throw ModelError(ModelError::Kind::Unparseable, "empty network: " + source.string());
    }
    impl->net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    impl->net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
    // Fused layers would hide the intermediate tensors we hand out.
    impl->net.enableFusion(false);
    impl->input_name = onnx_input.name;

    if (preprocessing.input_shape) {
        impl->input_shape = *preprocessing.input_shape;
    } else {
        const auto& d = onnx_input.dims;
        if (d.size() != 4 || d[1] < 1 || d[2] < 1 || d[3] < 1) {
            throw ModelError(ModelError::Kind::ShapeMismatch,
                             "model input shape is not a fixed NCHW shape; set it in the "
                             "preprocessing descriptor");
        }
        impl->input_shape = {static_cast<int>(d[2]), static_cast<int>(d[3]), static_cast<int>(d[1])};
    }
    const InputShape& in = impl->input_shape;
    if (in.height < 1 || in.width < 1 || in.channels < 1) {
        throw ModelError(ModelError::Kind::ShapeMismatch, "input shape dimensions must be positive");
    }
    for (const auto* v : {&preprocessing.mean, &preprocessing.stddev}) {
        if (!v->empty() && v->size() != static_cast<std::size_t>(in.channels)) {
            throw ModelError(ModelError::Kind::ShapeMismatch,
                             "preprocessing mean/stddev length must equal the channel count");
        }
    }
    for (float sd : preprocessing.stddev) {
        if (!(sd > 0.0f)) {
            throw ModelError(ModelError::Kind::ShapeMismatch, "preprocessing stddev must be positive");
        }
    }
    impl->preprocessing = std::move(preprocessing);
    impl->preprocessing.input_shape = in;

    const auto outputs = impl->net.getUnconnectedOutLayersNames();
    if (outputs.size() != 1) {
        throw ModelError(ModelError::Kind::Unparseable, "model must have exactly one output");
    }
    impl->output_name = outputs.front();

    const cv::dnn::MatShape net_input{1, in.channels, in.height, in.width};
    impl->catalog.push_back({impl->input_name, "Input", in.height, in.width, in.channels, true, false});
    bool any_spatial = false;
    std::set<std::string> seen{impl->input_name};
    try {
        for (const auto& name : impl->net.getLayerNames()) {
            const int id = impl->net.getLayerId(name);
            std::vector<cv::dnn::MatShape> in_shapes, out_shapes;
            impl->net.getLayerShapes(net_input, id, in_shapes, out_shapes);
            LayerInfo info;
            info.name = name;
            info.type = impl->net.getLayer(id)->type;
            info.has_weights = info.type == "Convolution" || info.type == "InnerProduct";
            if (!out_shapes.empty()) {
                const auto& s = out_shapes.front();
                if (s.size() == 4) {
                    info.channels = s[1];
                    info.height = s[2];
                    info.width = s[3];
                    info.spatial = true;
                } else {
                    int flat = 1;
                    for (std::size_t d = 1; d < s.size(); ++d) flat *= s[d];
                    info.channels = flat;
                }
            }
            if (!seen.insert(info.name).second) {
                throw ModelError(ModelError::Kind::Unparseable, "duplicate layer name " + info.name);
            }
            any_spatial = any_spatial || info.spatial;
            if (info.name == impl->output_name) {
                impl->class_count = static_cast<std::size_t>(info.channels) * info.height * info.width;
            }
            impl->catalog.push_back(std::move(info));
        }
    } catch (const cv::Exception& e) {
        throw ModelError(ModelError::Kind::ShapeMismatch,
                         std::string("cannot infer layer shapes: ") + e.what());
    }
    if (!any_spatial) {
        throw ModelError(ModelError::Kind::NoSpatialLayers,
                         "network has no spatial layers; hypercolumns need convolutional maps");
    }
    if (impl->class_count < 2) {
        throw ModelError(ModelError::Kind::Unparseable, "model must predict at least two classes");
    }
    return ClassifierModel(std::move(impl));
}

const std::filesystem::path& ClassifierModel::source() const { return impl_->source; }
const Preprocessing& ClassifierModel::preprocessing() const { return impl_->preprocessing; }
const InputShape& ClassifierModel::input_shape() const { return impl_->input_shape; }
std::size_t ClassifierModel::class_count() const { return impl_->class_count; }
const std::vector<LayerInfo>& ClassifierModel::layer_catalog() const { return impl_->catalog; }
const std::string& ClassifierModel::input_layer_name() const { return impl_->input_name; }
const std::vector<std::string>& ClassifierModel::class_names() const { return impl_->class_names; }
std::size_t ClassifierModel::predict_calls() const { return impl_->predict_calls.load(); }

const LayerInfo* ClassifierModel::find_layer(const std::string& name) const {
    for (const auto& l : impl_->catalog) {
        if (l.name == name) return &l;
    }
    return nullptr;
}

void ClassifierModel::set_class_names(std::vector<std::string> names) {
    if (!names.empty() && names.size() != impl_->class_count) {
        throw ConfigError("class names file lists " + std::to_string(names.size()) +
                          " names, model predicts " + std::to_string(impl_->class_count) + " classes");
    }
    impl_->class_names = std::move(names);
}

ActivationVolume ClassifierModel::preprocess(const Image& image) const {
    return to_volume(impl_->make_blob(image), impl_->catalog.front());
}

PredictionVector ClassifierModel::predict(const Image& image) const {
    const cv::Mat blob = impl_->make_blob(image);
    impl_->predict_calls.fetch_add(1);
    const auto out = impl_->run(blob, {impl_->output_name});
    const cv::Mat& probs = out.front();
    if (probs.total() != impl_->class_count) {
        throw ModelError(ModelError::Kind::Inference, "output size changed between calls");
    }
    std::vector<double> raw(probs.ptr<float>(), probs.ptr<float>() + probs.total());
    if (impl_->preprocessing.output == OutputKind::Logits) {
        raw = softmax(raw);
    }
    bool renormalized = false;
    try {
        auto result = PredictionVector::from_raw(std::move(raw), impl_->class_names, &renormalized);
        if (renormalized) {
            std::clog << "warning: model output did not sum to 1; renormalized\n";
        }
        return result;
    } catch (const std::invalid_argument& e) {
        throw ModelError(ModelError::Kind::Inference, e.what());
    }
}

std::vector<ActivationVolume> ClassifierModel::activations(const Image& image,
                                                           std::span<const std::string> layers,
                                                           bool allow_non_spatial) const {
    std::vector<const LayerInfo*> infos;
    std::vector<cv::String> fetch;
    for (const auto& name : layers) {
        const LayerInfo* info = find_layer(name);
        if (!info) {
            throw ModelError(ModelError::Kind::UnknownLayer, "unknown layer: " + name);
        }
        if (!info->spatial && !allow_non_spatial) {
            throw ModelError(ModelError::Kind::NonSpatialLayer,
                             "layer " + name + " has no spatial extent");
        }
        infos.push_back(info);
        if (name != impl_->input_name) fetch.push_back(name);
    }

    const cv::Mat blob = impl_->make_blob(image);
    std::vector<cv::Mat> fetched;
    if (!fetch.empty()) fetched = impl_->run(blob, fetch);

    std::vector<ActivationVolume> out;
    out.reserve(infos.size());
    std::size_t next = 0;
    for (const LayerInfo* info : infos) {
        out.push_back(info->name == impl_->input_name ? to_volume(blob, *info)
                                                      : to_volume(fetched[next++], *info));
    }
    return out;
}

std::vector<std::string> default_hypercolumn_layers(const ClassifierModel& model, std::size_t count) {
    std::vector<std::string> picked;
    for (const auto& l : model.layer_catalog()) {
        if (l.spatial && l.has_weights) picked.push_back(l.name);
    }
    if (picked.size() > count) {
        picked.erase(picked.begin(), picked.end() - static_cast<std::ptrdiff_t>(count));
    }
    if (picked.empty()) {
        picked.push_back(model.input_layer_name());
    }
    return picked;
}

}  // namespace boxlens
