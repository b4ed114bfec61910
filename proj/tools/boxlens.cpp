// boxlens command line: explain | layers | plot

#include "boxlens/error.hpp"
#include "boxlens/model.hpp"
#include "boxlens/parallel.hpp"
#include "boxlens/pipeline.hpp"
#include "boxlens/report.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace boxlens;

enum ExitCode : int {
    kOk = 0,
    kConfigError = 2,
    kModelError = 3,
    kPartialFailure = 4,
};

int exit_code_for(const ModelError& e) {
    switch (e.kind()) {
    case ModelError::Kind::MissingFile:
    case ModelError::Kind::UnknownLayer:
    case ModelError::Kind::NonSpatialLayer:
        return kConfigError;
    default:
        return kModelError;
    }
}

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, sep)) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

Size parse_resolution(const std::string& text) {
    const auto x = text.find_first_of("xX");
    try {
        if (x == std::string::npos) {
            const int side = std::stoi(text);
            return {side, side};
        }
        return {std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
    } catch (const std::exception&) {
        throw ConfigError("resolution must look like HxW, got " + text);
    }
}

NeutralBand parse_band(const std::string& text) {
    const auto parts = split_list(text, ',');
    try {
        if (parts.size() == 2) return {std::stod(parts[0]), std::stod(parts[1])};
    } catch (const std::exception&) {
    }
    throw ConfigError("neutral band must look like LOWER,UPPER, got " + text);
}

struct ExplainArgs {
    std::string model;
    std::string preprocess;
    std::string image;
    std::string manifest;
    std::string true_class;
    std::string class_names;
    std::string layers;
    std::size_t k = 10;
    std::size_t max_iterations = 300;
    double tolerance = 1e-4;
    std::size_t n_init = 1;
    std::optional<double> blur_sigma;
    std::optional<int> blur_radius;
    double epsilon = 1e-7;
    std::string neutral_band = "0.9,1.1";
    std::string resolution;
    std::size_t sample_pixels = 10000;
    std::uint64_t seed = 0;
    unsigned jobs = default_jobs();
    std::string out = "boxlens-out";
    bool dump_perturbations = false;
    bool dump_hypercolumns = false;
    bool no_normalize = false;
    bool broadcast_fc = false;
    std::string format = "json+png";
    std::size_t top = 5;
    double alpha = 0.5;
    double intensity_cap = 10.0;
};

ClassifierModel load_with_names(const std::string& model_path, const std::string& preprocess,
                                const std::string& class_names) {
    Preprocessing pre = preprocess.empty() ? Preprocessing{} : load_preprocessing(preprocess);
    ClassifierModel model = ClassifierModel::load(model_path, pre);
    if (!class_names.empty()) model.set_class_names(load_class_names(class_names));
    return model;
}

void write_batch_summary(const std::filesystem::path& out, const std::vector<std::pair<std::string, std::string>>& done,
                         const std::vector<std::pair<std::string, std::string>>& failed) {
    ordered_json j;
    j["succeeded"] = ordered_json::array();
    for (const auto& [image, dir] : done) j["succeeded"].push_back({{"image", image}, {"report_dir", dir}});
    j["failed"] = ordered_json::array();
    for (const auto& [image, error] : failed) j["failed"].push_back({{"image", image}, {"error", error}});
    std::filesystem::create_directories(out);
    std::ofstream f(out / "batch_summary.json");
    f << j.dump(2) << "\n";
}

int run_explain(const ExplainArgs& a) {
    RunConfig config;
    config.model = a.model;
    config.layers = split_list(a.layers, ',');
    config.broadcast_fully_connected = a.broadcast_fc;
    config.normalize = !a.no_normalize;
    config.kmeans.k = a.k;
    config.kmeans.max_iterations = a.max_iterations;
    config.kmeans.tolerance = a.tolerance;
    config.kmeans.n_init = a.n_init;
    config.blur_sigma = a.blur_sigma;
    config.blur_radius = a.blur_radius;
    config.influence.epsilon = a.epsilon;
    config.influence.neutral_band = parse_band(a.neutral_band);
    if (!a.resolution.empty()) config.resolution = parse_resolution(a.resolution);
    config.sample_pixels = a.sample_pixels;
    config.seed = a.seed;
    config.top_n = a.top;
    config.overlay.alpha = a.alpha;
    config.overlay.intensity_cap = a.intensity_cap;
    if (a.format != "json" && a.format != "json+png") {
        throw ConfigError("format must be json or json+png");
    }
    config.write_overlay = a.format == "json+png";
    config.dump_perturbations = a.dump_perturbations;
    config.dump_hypercolumns = a.dump_hypercolumns;
    config.jobs = std::max(1u, a.jobs);
    config.out = a.out;
    if (!a.class_names.empty()) config.class_names = a.class_names;

    if (a.image.empty() == a.manifest.empty()) {
        throw ConfigError("give exactly one of --image or --manifest");
    }
    if (!a.image.empty() && a.true_class.empty()) {
        throw ConfigError("--true-class is required with --image");
    }
    // Inputs are checked before the model so a bad invocation writes nothing.
    std::vector<ManifestEntry> entries;
    if (!a.manifest.empty()) {
        entries = load_manifest(a.manifest);
    } else {
        entries.push_back({a.image, a.true_class});
    }

    ClassifierModel model = load_with_names(a.model, a.preprocess, a.class_names);
    const Explainer explainer(model, config);
    const int channels = model.input_shape().channels;

    if (a.manifest.empty()) {
        const std::size_t true_class = resolve_true_class(a.true_class, model);
        const Image image = load_image(a.image, channels);
        const auto ex = explainer.explain_to_directory(image, std::filesystem::path(a.image).stem().string(),
                                                       true_class, config.out);
        std::cout << "wrote " << (config.out / "report.json").string() << " (" << ex.masks.size()
                  << " features, " << ex.predict_calls << " predictions)\n";
        return kOk;
    }

    std::vector<std::pair<std::string, std::string>> done;
    std::vector<std::pair<std::string, std::string>> failed;
    std::map<std::string, int> seen_ids;
    int worst = kOk;
    for (const auto& entry : entries) {
        std::string id = entry.image.stem().string();
        if (const int n = seen_ids[id]++; n > 0) id += "_" + std::to_string(n);
        try {
            const std::size_t true_class = resolve_true_class(entry.true_class, model);
            const Image image = load_image(entry.image, channels);
            const auto dir = config.out / id;
            explainer.explain_to_directory(image, id, true_class, dir);
            done.emplace_back(entry.image.string(), dir.string());
            std::cout << "wrote " << (dir / "report.json").string() << "\n";
        } catch (const ModelError& e) {
            failed.emplace_back(entry.image.string(), e.what());
            worst = std::max(worst, exit_code_for(e));
            std::cerr << "error: " << entry.image.string() << ": " << e.what() << "\n";
        } catch (const ConfigError& e) {
            failed.emplace_back(entry.image.string(), e.what());
            worst = std::max(worst, static_cast<int>(kConfigError));
            std::cerr << "error: " << entry.image.string() << ": " << e.what() << "\n";
        }
    }
    write_batch_summary(config.out, done, failed);
    if (failed.empty()) return kOk;
    std::cerr << failed.size() << " of " << entries.size() << " images failed\n";
    return done.empty() ? worst : kPartialFailure;
}

int run_layers(const std::string& model_path, const std::string& preprocess) {
    const ClassifierModel model = load_with_names(model_path, preprocess, "");
    const auto defaults = default_hypercolumn_layers(model);
    std::cout << "input " << model.input_shape().height << "x" << model.input_shape().width << "x"
              << model.input_shape().channels << ", " << model.class_count() << " classes\n";
    std::size_t weight_layers = 0;
    for (const auto& l : model.layer_catalog()) {
        const bool is_default = std::find(defaults.begin(), defaults.end(), l.name) != defaults.end();
        weight_layers += l.has_weights ? 1 : 0;
        std::printf("%-32s %-14s %5d x %5d x %5d  %s%s\n", l.name.c_str(), l.type.c_str(), l.height, l.width,
                    l.channels, l.spatial ? "spatial" : "flat", is_default ? "  [default]" : "");
    }
    std::cout << weight_layers << " weight layers\n";
    return kOk;
}

int run_plot(const std::string& report_path, const std::string& out) {
    const ExplanationReport report = read_report(report_path);
    std::vector<double> ir;
    std::vector<double> irp;
    std::vector<InfluenceCategory> categories;
    for (const auto& f : report.features) {
        ir.push_back(f.ir);
        irp.push_back(f.irp);
        categories.push_back(f.category);
    }
    const std::filesystem::path dir = out.empty() ? std::filesystem::path(report_path).parent_path() : std::filesystem::path(out);
    std::filesystem::create_directories(dir);
    save_png(render_bar_chart(ir, categories, report.image_id + ": IR per feature"), dir / "ir_chart.png");
    save_png(render_bar_chart(irp, categories, report.image_id + ": IRP per feature"), dir / "irp_chart.png");
    std::cout << "wrote " << (dir / "ir_chart.png").string() << " and " << (dir / "irp_chart.png").string()
              << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"boxlens: perturbation-based explanations for black-box image classifiers"};
    app.require_subcommand(1);

    ExplainArgs ea;
    auto* explain = app.add_subcommand("explain", "explain one image or a manifest of images");
    explain->add_option("--model", ea.model, "ONNX classifier")->required();
    explain->add_option("--preprocess", ea.preprocess, "preprocessing descriptor (JSON)");
    explain->add_option("--image", ea.image, "image to explain");
    explain->add_option("--manifest", ea.manifest, "batch file: '<image> <true class>' per line");
    explain->add_option("--true-class", ea.true_class, "true class index or name");
    explain->add_option("--class-names", ea.class_names, "class names, one per line");
    explain->add_option("--layers", ea.layers, "comma-separated hypercolumn layers");
    explain->add_option("--k", ea.k, "number of interpretable features")->capture_default_str();
    explain->add_option("--max-iter", ea.max_iterations, "k-means iteration cap")->capture_default_str();
    explain->add_option("--tolerance", ea.tolerance, "k-means centroid-shift tolerance")->capture_default_str();
    explain->add_option("--n-init", ea.n_init, "k-means restarts")->capture_default_str();
    explain->add_option("--blur-sigma", ea.blur_sigma, "Gaussian sigma in pixels (default 10 at 224 px, scaled)");
    explain->add_option("--blur-radius", ea.blur_radius, "kernel radius (default ceil(3 sigma))");
    explain->add_option("--epsilon", ea.epsilon, "floor on perturbed probabilities")->capture_default_str();
    explain->add_option("--neutral-band", ea.neutral_band, "LOWER,UPPER IR band counted as neutral")
        ->capture_default_str();
    explain->add_option("--resolution", ea.resolution, "working resolution HxW (default: model input)");
    explain->add_option("--sample-pixels", ea.sample_pixels, "rows used to fit k-means")->capture_default_str();
    explain->add_option("--seed", ea.seed, "random seed")->capture_default_str();
    explain->add_option("--jobs", ea.jobs, "worker threads")->capture_default_str();
    explain->add_option("--out", ea.out, "output directory")->capture_default_str();
    explain->add_flag("--dump-perturbations", ea.dump_perturbations, "write each perturbed image as PNG");
    explain->add_flag("--dump-hypercolumns", ea.dump_hypercolumns, "write the hypercolumn matrix");
    explain->add_flag("--no-normalize", ea.no_normalize, "skip per-channel standardization");
    explain->add_flag("--broadcast-fc", ea.broadcast_fc, "allow fully connected layers (tiled per pixel)");
    explain->add_option("--format", ea.format, "json or json+png")->capture_default_str();
    explain->add_option("--top", ea.top, "classes kept from the original prediction")->capture_default_str();
    explain->add_option("--alpha", ea.alpha, "overlay opacity")->capture_default_str();
    explain->add_option("--intensity-cap", ea.intensity_cap, "IR at which overlay colour saturates")
        ->capture_default_str();

    std::string layers_model;
    std::string layers_preprocess;
    auto* layers = app.add_subcommand("layers", "list the model's layers and hypercolumn eligibility");
    layers->add_option("--model", layers_model, "ONNX classifier")->required();
    layers->add_option("--preprocess", layers_preprocess, "preprocessing descriptor (JSON)");

    std::string plot_report;
    std::string plot_out;
    auto* plot = app.add_subcommand("plot", "draw IR and IRP bar charts from a report");
    plot->add_option("--report", plot_report, "report.json")->required();
    plot->add_option("--out", plot_out, "output directory (default: next to the report)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*explain) return run_explain(ea);
        if (*layers) return run_layers(layers_model, layers_preprocess);
        if (*plot) return run_plot(plot_report, plot_out);
    } catch (const ModelError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    }
    return kConfigError;
}
