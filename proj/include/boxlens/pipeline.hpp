#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "boxlens/hypercolumn.hpp"
#include "boxlens/influence.hpp"
#include "boxlens/model.hpp"
#include "boxlens/perturbation.hpp"
#include "boxlens/report.hpp"
#include "boxlens/segmentation.hpp"

namespace boxlens {

/// Effective settings for one explain run. Everything except `jobs` and the
/// input/output locations is echoed into each report.
struct RunConfig {
    std::filesystem::path model;
    std::vector<std::string> layers;  // empty: default_hypercolumn_layers
    bool broadcast_fully_connected = false;
    bool normalize = true;
    KMeansConfig kmeans;                  // kmeans.seed is derived from `seed`
    std::optional<double> blur_sigma;     // scaled from 10 px at 224 when unset
    std::optional<int> blur_radius;
    InfluenceConfig influence;
    std::optional<Size> resolution;       // working resolution; model input when unset
    std::size_t sample_pixels = 10000;
    std::uint64_t seed = 0;
    std::size_t top_n = 5;
    OverlayStyle overlay;
    bool write_overlay = true;            // --format json+png
    bool dump_perturbations = false;
    bool dump_hypercolumns = false;
    unsigned jobs = 1;
    std::filesystem::path out = "boxlens-out";
    std::optional<std::filesystem::path> class_names;
};

/// Parses a preprocessing descriptor:
///   {"input_shape": [h, w, c], "resize": "stretch"|"none",
///    "channel_order": "rgb"|"bgr", "scale": s, "mean": [...], "std": [...],
///    "output": "probabilities"|"logits"}
/// Every key is optional. Throws ConfigError.
Preprocessing parse_preprocessing(const ordered_json& json);
Preprocessing load_preprocessing(const std::filesystem::path& path);
ordered_json preprocessing_to_json(const Preprocessing& preprocessing);

/// One name per line; blank lines are kept as empty names only if the count
/// still matches. Throws ConfigError.
std::vector<std::string> load_class_names(const std::filesystem::path& path);

/// Accepts a class index or, when names are known, a class name.
std::size_t resolve_true_class(const std::string& label, const ClassifierModel& model);

struct ManifestEntry {
    std::filesystem::path image;
    std::string true_class;
};

/// Lines of "<image path> <true class>"; '#' starts a comment. Relative image
/// paths resolve against the manifest's directory.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

/// In-memory result of explaining one image.
struct Explanation {
    ExplanationReport report;
    OverlayImage overlay;
    Image image;  // the image as classified (after resizing to the model input)
    FeatureSegmentation segmentation;  // on the image grid
    std::vector<FeatureMask> masks;
    std::vector<FeatureInfluence> influences;
    std::vector<Image> perturbations;  // filled when dump_perturbations is set
    HypercolumnMatrix hypercolumns;    // filled when dump_hypercolumns is set
    std::size_t predict_calls = 0;
};

/// Runs the explanation pipeline against one loaded model:
/// predict original -> activations -> hypercolumns -> subsample -> k-means fit
/// -> label every pixel -> masks -> blur + predict per feature -> report.
class Explainer {
public:
    /// Validates `config` against the model; throws ConfigError / ModelError.
    Explainer(ClassifierModel model, RunConfig config);

    const ClassifierModel& model() const { return model_; }
    const RunConfig& config() const { return config_; }
    const std::vector<std::string>& layers() const { return layers_; }
    Size working_resolution() const { return working_; }
    BlurConfig blur() const { return blur_; }

    /// The configuration block written into every report.
    ordered_json config_echo() const;

    Explanation explain(const Image& image, const std::string& image_id, std::size_t true_class) const;

    /// explain() followed by writing report.json, overlay.png and any dumps.
    Explanation explain_to_directory(const Image& image, const std::string& image_id, std::size_t true_class,
                                     const std::filesystem::path& out_dir) const;

private:
    std::vector<ActivationVolume> fetch_activations(const Image& image) const;

    ClassifierModel model_;
    RunConfig config_;
    std::vector<std::string> layers_;
    Size working_;
    BlurConfig blur_;
    std::string model_digest_;
};

/// 64-bit FNV-1a digest, hex encoded; keys the on-disk activation cache.
std::string fnv1a_hex(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace boxlens
