#include "boxlens/pipeline.hpp"

#include "boxlens/error.hpp"
#include "boxlens/parallel.hpp"
#include "boxlens/rng.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

namespace boxlens {

// ---------------------------------------------------------------------------
// Configuration files
// ---------------------------------------------------------------------------

Preprocessing parse_preprocessing(const ordered_json& j) {
    if (!j.is_object()) {
        throw ConfigError("preprocessing descriptor must be a JSON object");
    }
    static const std::vector<std::string> known = {"input_shape", "resize", "channel_order", "scale",
                                                   "mean", "std", "output"};
    for (const auto& item : j.items()) {
        if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
            throw ConfigError("unknown preprocessing key: " + item.key());
        }
    }
    Preprocessing p;
    try {
        if (j.contains("input_shape")) {
            const auto dims = j.at("input_shape").get<std::vector<int>>();
            if (dims.size() != 3) throw ConfigError("input_shape must be [height, width, channels]");
            p.input_shape = InputShape{dims[0], dims[1], dims[2]};
        }
        if (j.contains("resize")) {
            const auto v = j.at("resize").get<std::string>();
            if (v == "stretch") p.resize = ResizePolicy::Stretch;
            else if (v == "none") p.resize = ResizePolicy::None;
            else throw ConfigError("resize must be \"stretch\" or \"none\"");
        }
        if (j.contains("channel_order")) {
            const auto v = j.at("channel_order").get<std::string>();
            if (v == "rgb") p.channel_order = ChannelOrder::Rgb;
            else if (v == "bgr") p.channel_order = ChannelOrder::Bgr;
            else throw ConfigError("channel_order must be \"rgb\" or \"bgr\"");
        }
        if (j.contains("scale")) p.scale = j.at("scale").get<float>();
        if (j.contains("mean")) p.mean = j.at("mean").get<std::vector<float>>();
        if (j.contains("std")) p.stddev = j.at("std").get<std::vector<float>>();
        if (j.contains("output")) {
            const auto v = j.at("output").get<std::string>();
            if (v == "probabilities") p.output = OutputKind::Probabilities;
            else if (v == "logits") p.output = OutputKind::Logits;
            else throw ConfigError("output must be \"probabilities\" or \"logits\"");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad preprocessing descriptor: ") + e.what());
    }
    return p;
}

Preprocessing load_preprocessing(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open preprocessing descriptor " + path.string());
    }
    try {
        return parse_preprocessing(ordered_json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("preprocessing descriptor is not valid JSON: " + std::string(e.what()));
    }
}

ordered_json preprocessing_to_json(const Preprocessing& p) {
    ordered_json j;
    if (p.input_shape) {
        j["input_shape"] = {p.input_shape->height, p.input_shape->width, p.input_shape->channels};
    }
    j["resize"] = p.resize == ResizePolicy::Stretch ? "stretch" : "none";
    j["channel_order"] = p.channel_order == ChannelOrder::Rgb ? "rgb" : "bgr";
    j["scale"] = p.scale;
    j["mean"] = p.mean;
    j["std"] = p.stddev;
    j["output"] = p.output == OutputKind::Probabilities ? "probabilities" : "logits";
    return j;
}

std::vector<std::string> load_class_names(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open class names file " + path.string());
    }
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
            line.pop_back();
        }
        names.push_back(line);
    }
    while (!names.empty() && names.back().empty()) names.pop_back();
    if (names.empty()) {
        throw ConfigError("class names file is empty: " + path.string());
    }
    return names;
}

std::size_t resolve_true_class(const std::string& label, const ClassifierModel& model) {
    if (label.empty()) {
        throw ConfigError("true class is required");
    }
    std::size_t index = 0;
    const auto* end = label.data() + label.size();
    const auto [ptr, ec] = std::from_chars(label.data(), end, index);
    if (ec == std::errc() && ptr == end) {
        if (index >= model.class_count()) {
            throw ConfigError("true class " + label + " is out of range (model has " +
                              std::to_string(model.class_count()) + " classes)");
        }
        return index;
    }
    const auto& names = model.class_names();
    const auto it = std::find(names.begin(), names.end(), label);
    if (it == names.end()) {
        throw ConfigError("unknown true class: " + label);
    }
    return static_cast<std::size_t>(it - names.begin());
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open manifest " + path.string());
    }
    std::vector<ManifestEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string image;
        std::string label;
        if (!(fields >> image)) continue;
        if (!(fields >> label)) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": missing true class");
        }
        std::string rest;
        if (fields >> rest) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": trailing fields");
        }
        std::filesystem::path p(image);
        if (p.is_relative()) p = path.parent_path() / p;
        entries.push_back({p, label});
    }
    if (entries.empty()) {
        throw ConfigError("manifest lists no images: " + path.string());
    }
    return entries;
}

std::string fnv1a_hex(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (char c : bytes) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ull;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

// ---------------------------------------------------------------------------
// Activation cache
// ---------------------------------------------------------------------------

namespace {

constexpr char kCacheMagic[8] = {'B', 'X', 'L', 'A', 'C', 'T', '0', '1'};

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
bool get(std::istream& in, T& value) {
    return static_cast<bool>(in.read(reinterpret_cast<char*>(&value), sizeof value));
}

std::optional<std::vector<ActivationVolume>> read_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kCacheMagic, 8) != 0) return std::nullopt;
    std::uint32_t count = 0;
    if (!get(in, count)) return std::nullopt;
    std::vector<ActivationVolume> vols(count);
    for (auto& v : vols) {
        std::uint32_t len = 0;
        std::uint8_t kind = 0;
        if (!get(in, len) || len > 4096) return std::nullopt;
        v.layer_name.resize(len);
        if (!in.read(v.layer_name.data(), len)) return std::nullopt;
        if (!get(in, v.height) || !get(in, v.width) || !get(in, v.channels) || !get(in, kind)) {
            return std::nullopt;
        }
        if (v.height < 1 || v.width < 1 || v.channels < 1) return std::nullopt;
        v.source_layer_kind = kind ? LayerKind::Convolutional : LayerKind::Other;
        v.data.resize(static_cast<std::size_t>(v.height) * v.width * v.channels);
        if (!in.read(reinterpret_cast<char*>(v.data.data()),
                     static_cast<std::streamsize>(v.data.size() * sizeof(float)))) {
            return std::nullopt;
        }
    }
    return vols;
}

void write_cache(const std::filesystem::path& path, const std::vector<ActivationVolume>& vols) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) return;  // caching is best effort
        out.write(kCacheMagic, 8);
        put(out, static_cast<std::uint32_t>(vols.size()));
        for (const auto& v : vols) {
            put(out, static_cast<std::uint32_t>(v.layer_name.size()));
            out.write(v.layer_name.data(), static_cast<std::streamsize>(v.layer_name.size()));
            put(out, v.height);
            put(out, v.width);
            put(out, v.channels);
            put(out, static_cast<std::uint8_t>(v.source_layer_kind == LayerKind::Convolutional));
            out.write(reinterpret_cast<const char*>(v.data.data()),
                      static_cast<std::streamsize>(v.data.size() * sizeof(float)));
        }
        if (!out) return;
    }
    std::filesystem::rename(tmp, path, ec);
}

std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string padded_index(std::size_t i) {
    std::ostringstream s;
    s << std::setw(2) << std::setfill('0') << i;
    return s.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Explainer
// ---------------------------------------------------------------------------

Explainer::Explainer(ClassifierModel model, RunConfig config)
    : model_(std::move(model)), config_(std::move(config)) {
    layers_ = config_.layers.empty() ? default_hypercolumn_layers(model_) : config_.layers;
    for (const auto& name : layers_) {
        const LayerInfo* info = model_.find_layer(name);
        if (!info) {
            throw ModelError(ModelError::Kind::UnknownLayer, "unknown layer: " + name);
        }
        if (!info->spatial && !config_.broadcast_fully_connected) {
            throw ModelError(ModelError::Kind::NonSpatialLayer,
                             "layer " + name + " has no spatial extent (enable fully connected broadcast)");
        }
    }

    const InputShape in = model_.input_shape();
    working_ = config_.resolution.value_or(Size{in.height, in.width});
    if (working_.height < 1 || working_.width < 1) {
        throw ConfigError("working resolution must be positive");
    }

    blur_ = config_.blur_sigma ? BlurConfig{*config_.blur_sigma, std::nullopt}
                               : BlurConfig::scaled_to({in.height, in.width});
    blur_.kernel_radius = config_.blur_radius;
    blur_.validate();
    blur_.kernel_radius = blur_.radius();

    config_.kmeans.seed = config_.seed;
    config_.kmeans.jobs = std::max(1u, config_.jobs);
    config_.kmeans.validate();
    config_.influence.validate();
    config_.overlay.validate();
    const std::size_t pixels = static_cast<std::size_t>(working_.height) * working_.width;
    if (config_.kmeans.k > pixels) {
        throw ConfigError("k = " + std::to_string(config_.kmeans.k) + " exceeds the " + std::to_string(pixels) +
                          " pixels of the working resolution");
    }
    if (config_.sample_pixels < config_.kmeans.k) {
        throw ConfigError("sample size must be at least k");
    }
    if (config_.top_n == 0) {
        throw ConfigError("top-N must be at least 1");
    }

    if (const char* cache = std::getenv("BOXLENS_CACHE"); cache && *cache) {
        model_digest_ = fnv1a_hex(read_bytes(model_.source()));
    }
}

ordered_json Explainer::config_echo() const {
    const RunConfig& c = config_;
    ordered_json j;
    j["model"] = c.model.string();
    j["preprocessing"] = preprocessing_to_json(model_.preprocessing());
    j["layers"] = layers_;
    j["broadcast_fully_connected"] = c.broadcast_fully_connected;
    j["normalize"] = c.normalize;
    j["k"] = c.kmeans.k;
    j["kmeans"] = {{"init", "k-means++"},
                   {"max_iterations", c.kmeans.max_iterations},
                   {"tolerance", c.kmeans.tolerance},
                   {"n_init", c.kmeans.n_init}};
    j["seed"] = c.seed;
    j["working_resolution"] = {working_.height, working_.width};
    j["sample_pixels"] = c.sample_pixels;
    j["blur"] = {{"sigma", blur_.sigma}, {"kernel_radius", blur_.radius()}, {"edge", "reflect101"}};
    j["influence"] = {{"epsilon", c.influence.epsilon},
                      {"neutral_band", {c.influence.neutral_band.lower, c.influence.neutral_band.upper}}};
    j["top_n"] = c.top_n;
    j["overlay"] = {{"alpha", c.overlay.alpha}, {"intensity_cap", c.overlay.intensity_cap}};
    j["format"] = c.write_overlay ? "json+png" : "json";
    j["class_names"] = c.class_names ? c.class_names->string() : std::string();
    return j;
}

std::vector<ActivationVolume> Explainer::fetch_activations(const Image& image) const {
    const bool broadcast = config_.broadcast_fully_connected;
    std::filesystem::path cache_file;
    if (!model_digest_.empty()) {
        const char* dir = std::getenv("BOXLENS_CACHE");
        const ActivationVolume tensor = model_.preprocess(image);
        std::string key = model_digest_;
        key.append(reinterpret_cast<const char*>(tensor.data.data()), tensor.data.size() * sizeof(float));
        for (const auto& l : layers_) key += '\0' + l;
        key += broadcast ? '\1' : '\2';
        cache_file = std::filesystem::path(dir) / (fnv1a_hex(key) + ".act");
        if (auto cached = read_cache(cache_file)) {
            bool match = cached->size() == layers_.size();
            for (std::size_t i = 0; match && i < layers_.size(); ++i) {
                match = (*cached)[i].layer_name == layers_[i];
            }
            if (match) return std::move(*cached);
        }
    }
    auto vols = model_.activations(image, layers_, broadcast);
    if (!cache_file.empty()) write_cache(cache_file, vols);
    return vols;
}

Explanation Explainer::explain(const Image& input, const std::string& image_id, std::size_t true_class) const {
    if (true_class >= model_.class_count()) {
        throw ConfigError("true class index out of range");
    }
    const InputShape in = model_.input_shape();
    if (input.channels() != in.channels) {
        throw ModelError(ModelError::Kind::ShapeMismatch, "image channel count does not match the model");
    }
    Explanation ex;
    const Size model_size{in.height, in.width};
    if (!(input.size() == model_size) && model_.preprocessing().resize == ResizePolicy::None) {
        throw ModelError(ModelError::Kind::ShapeMismatch, "image size does not match the model input");
    }
    ex.image = resize_bilinear(input, model_size);
    const std::size_t calls_before = model_.predict_calls();

    // Interpretable feature extraction.
    const PredictionVector original = model_.predict(ex.image);
    const auto volumes = fetch_activations(ex.image);
    HypercolumnMatrix matrix = build_hypercolumns(volumes, working_, config_.normalize, config_.kmeans.jobs);
    const HypercolumnMatrix sample = subsample_rows(matrix, config_.sample_pixels, mix_seed(config_.seed, 1));
    const KMeansResult fit = kmeans_fit(sample, config_.kmeans);
    const FeatureSegmentation working_seg = assign_labels(matrix, fit.centroids, fit.k, config_.kmeans.jobs);
    ex.segmentation = resize_labels(working_seg, model_size);
    ex.masks = extract_masks(ex.segmentation);
    verify_partition(ex.masks, model_size);
    if (config_.dump_hypercolumns) ex.hypercolumns = std::move(matrix);

    // Perturbation and classification, one predict per feature.
    const Image blurred = gaussian_blur(ex.image, blur_);
    const std::size_t k = ex.masks.size();
    ex.influences.resize(k);
    if (config_.dump_perturbations) ex.perturbations.resize(k);
    parallel_for(k, config_.kmeans.jobs, [&](std::size_t i) {
        ex.influences[i] = analyze_feature(model_, ex.image, blurred, ex.masks[i], true_class, original,
                                           config_.influence);
        if (config_.dump_perturbations) ex.perturbations[i] = composite(ex.image, blurred, ex.masks[i]);
    });
    ex.predict_calls = model_.predict_calls() - calls_before;

    ReportArtifacts artifacts;
    if (config_.write_overlay) artifacts.overlay = "overlay.png";
    if (config_.dump_perturbations) {
        for (std::size_t i = 0; i < k; ++i) artifacts.perturbations.push_back("perturbation_" + padded_index(i) + ".png");
    }
    ex.overlay = render_overlay(ex.image, ex.segmentation, ex.influences, config_.overlay);
    ex.report = make_report(image_id, true_class, original, config_.top_n, ex.influences, ex.segmentation,
                            config_echo(), std::move(artifacts));
    return ex;
}

Explanation Explainer::explain_to_directory(const Image& image, const std::string& image_id,
                                            std::size_t true_class, const std::filesystem::path& out_dir) const {
    Explanation ex = explain(image, image_id, true_class);
    write_report(ex.report, config_.write_overlay ? &ex.overlay : nullptr, out_dir);
    for (std::size_t i = 0; i < ex.perturbations.size(); ++i) {
        save_png(ex.perturbations[i], out_dir / ex.report.artifacts.perturbations[i]);
    }
    if (config_.dump_hypercolumns) {
        write_hypercolumns(ex.hypercolumns, out_dir / "hypercolumns.bin");
    }
    return ex;
}

}  // namespace boxlens
