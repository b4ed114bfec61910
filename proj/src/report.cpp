#include "boxlens/report.hpp"

#include "boxlens/error.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace boxlens {

double round_significant(double value, int digits) {
    if (value == 0.0 || !std::isfinite(value)) {
        return value;
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::scientific, digits - 1);
    double out = 0.0;
    std::from_chars(buf, res.ptr, out);
    return out;
}

// ---------------------------------------------------------------------------
// Report assembly and JSON
// ---------------------------------------------------------------------------

ExplanationReport make_report(std::string image_id, std::size_t true_class,
                              const PredictionVector& original, std::size_t top_n,
                              const std::vector<FeatureInfluence>& features,
                              const FeatureSegmentation& segmentation, ordered_json config,
                              ReportArtifacts artifacts) {
    if (features.size() != segmentation.k) {
        throw ConfigError("report needs exactly one influence record per feature");
    }
    ExplanationReport r;
    r.image_id = std::move(image_id);
    r.true_class = true_class;
    r.true_class_name = original.name_of(true_class);
    r.p_true_original = round_significant(original[true_class]);
    for (std::size_t idx : original.top(top_n)) {
        r.original_top.push_back({idx, original.name_of(idx), round_significant(original[idx])});
    }
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto& f = features[i];
        if (f.feature_id != static_cast<int>(i)) {
            throw ConfigError("feature ids must run 0..k-1 in order");
        }
        r.features.push_back({f.feature_id, f.pixel_count, round_significant(f.p_true_perturbed),
                              round_significant(f.ir), round_significant(f.irp), f.irp_degenerate,
                              f.category});
    }
    r.segmentation.height = segmentation.grid.height;
    r.segmentation.width = segmentation.grid.width;
    r.segmentation.k = segmentation.k;
    r.segmentation.inertia = round_significant(segmentation.inertia);
    for (std::int32_t label : segmentation.label_map) {
        auto& rle = r.segmentation.labels_rle;
        if (!rle.empty() && rle.back()[0] == label) {
            ++rle.back()[1];
        } else {
            rle.push_back({label, 1});
        }
    }
    r.config = std::move(config);
    r.artifacts = std::move(artifacts);
    return r;
}

ordered_json to_json(const ExplanationReport& r) {
    ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["image_id"] = r.image_id;
    j["true_class"] = {{"index", r.true_class}, {"name", r.true_class_name}};
    j["p_true_original"] = round_significant(r.p_true_original);

    ordered_json top = ordered_json::array();
    for (const auto& c : r.original_top) {
        top.push_back({{"class", c.index}, {"name", c.name}, {"p", round_significant(c.p)}});
    }
    j["original_top"] = std::move(top);

    ordered_json features = ordered_json::array();
    ordered_json ir_bars = ordered_json::array();
    ordered_json irp_bars = ordered_json::array();
    for (const auto& f : r.features) {
        features.push_back({{"id", f.id},
                            {"pixel_count", f.pixel_count},
                            {"p_true_perturbed", round_significant(f.p_true_perturbed)},
                            {"ir", round_significant(f.ir)},
                            {"irp", round_significant(f.irp)},
                            {"irp_degenerate", f.irp_degenerate},
                            {"category", std::string(to_string(f.category))}});
        ir_bars.push_back(round_significant(f.ir));
        irp_bars.push_back(round_significant(f.irp));
    }
    j["features"] = std::move(features);
    j["charts"] = {{"ir", std::move(ir_bars)}, {"irp", std::move(irp_bars)}};

    ordered_json rle = ordered_json::array();
    for (const auto& run : r.segmentation.labels_rle) rle.push_back({run[0], run[1]});
    j["segmentation"] = {{"height", r.segmentation.height},
                         {"width", r.segmentation.width},
                         {"k", r.segmentation.k},
                         {"inertia", round_significant(r.segmentation.inertia)},
                         {"labels_rle", std::move(rle)}};
    j["config"] = r.config;
    j["artifacts"] = {{"overlay", r.artifacts.overlay}, {"perturbations", r.artifacts.perturbations}};
    return j;
}

ExplanationReport report_from_json(const ordered_json& j) {
    try {
        if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
            throw ConfigError("unsupported report schema version");
        }
        ExplanationReport r;
        r.image_id = j.at("image_id").get<std::string>();
        r.true_class = j.at("true_class").at("index").get<std::size_t>();
        r.true_class_name = j.at("true_class").at("name").get<std::string>();
        r.p_true_original = j.at("p_true_original").get<double>();
        for (const auto& c : j.at("original_top")) {
            r.original_top.push_back({c.at("class").get<std::size_t>(), c.at("name").get<std::string>(),
                                      c.at("p").get<double>()});
        }
        for (const auto& f : j.at("features")) {
            r.features.push_back({f.at("id").get<int>(), f.at("pixel_count").get<std::size_t>(),
                                  f.at("p_true_perturbed").get<double>(), f.at("ir").get<double>(),
                                  f.at("irp").get<double>(), f.at("irp_degenerate").get<bool>(),
                                  category_from_string(f.at("category").get<std::string>())});
        }
        const auto& seg = j.at("segmentation");
        r.segmentation.height = seg.at("height").get<int>();
        r.segmentation.width = seg.at("width").get<int>();
        r.segmentation.k = seg.at("k").get<std::size_t>();
        r.segmentation.inertia = seg.at("inertia").get<double>();
        for (const auto& run : seg.at("labels_rle")) {
            r.segmentation.labels_rle.push_back({run.at(0).get<std::int64_t>(), run.at(1).get<std::int64_t>()});
        }
        r.config = j.at("config");
        r.artifacts.overlay = j.at("artifacts").at("overlay").get<std::string>();
        r.artifacts.perturbations = j.at("artifacts").at("perturbations").get<std::vector<std::string>>();
        if (r.features.size() != r.segmentation.k) {
            throw ConfigError("report lists " + std::to_string(r.features.size()) + " features for k = " +
                              std::to_string(r.segmentation.k));
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed report: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("malformed report: ") + e.what());
    }
}

std::string serialize_report(const ExplanationReport& report) {
    return to_json(report).dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Overlay
// ---------------------------------------------------------------------------

namespace {

constexpr Rgb kGreen{0.0, 200.0, 0.0};
constexpr Rgb kRed{220.0, 0.0, 0.0};
constexpr Rgb kYellow{255.0, 220.0, 0.0};

// Same hue, washed towards white.
Rgb faint_of(Rgb strong) {
    constexpr double wash = 0.7;
    return {strong.r + wash * (255.0 - strong.r), strong.g + wash * (255.0 - strong.g),
            strong.b + wash * (255.0 - strong.b)};
}

Rgb lerp(Rgb a, Rgb b, double t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

}  // namespace

void OverlayStyle::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("overlay alpha must lie in [0, 1]");
    if (!(intensity_cap > 1.0)) throw ConfigError("overlay intensity cap must exceed 1");
}

double overlay_intensity(double ir, double cap) {
    if (!(ir > 0.0)) return 1.0;
    return std::min(std::abs(std::log(ir)) / std::log(cap), 1.0);
}

Rgb feature_color(const FeatureInfluence& feature, const OverlayStyle& style) {
    switch (feature.category) {
    case InfluenceCategory::Positive:
        return lerp(faint_of(kGreen), kGreen, overlay_intensity(feature.ir, style.intensity_cap));
    case InfluenceCategory::Negative:
        return lerp(faint_of(kRed), kRed, overlay_intensity(feature.ir, style.intensity_cap));
    case InfluenceCategory::Neutral:
        break;
    }
    return kYellow;
}

OverlayImage render_overlay(const Image& image, const FeatureSegmentation& segmentation,
                            const std::vector<FeatureInfluence>& influences, const OverlayStyle& style) {
    style.validate();
    if (segmentation.k != influences.size()) {
        throw ConfigError("segmentation has " + std::to_string(segmentation.k) + " features but " +
                          std::to_string(influences.size()) + " influence records were given");
    }
    if (!(segmentation.grid == image.size())) {
        throw ConfigError("segmentation grid does not match the image");
    }
    if (image.channels() != 1 && image.channels() != 3) {
        throw ConfigError("overlay needs a gray or RGB image");
    }
    std::vector<Rgb> colors;
    colors.reserve(influences.size());
    for (const auto& f : influences) colors.push_back(feature_color(f, style));

    OverlayImage out;
    out.pixels = Image(image.height(), image.width(), 3);
    const double a = style.alpha;
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x) {
            const Rgb& c = colors[static_cast<std::size_t>(segmentation.label(y, x))];
            const int last = image.channels() - 1;
            const double base[3] = {image.at(y, x, 0), image.at(y, x, std::min(1, last)),
                                    image.at(y, x, std::min(2, last))};
            out.pixels.at(y, x, 0) = static_cast<float>((1.0 - a) * base[0] + a * c.r);
            out.pixels.at(y, x, 1) = static_cast<float>((1.0 - a) * base[1] + a * c.g);
            out.pixels.at(y, x, 2) = static_cast<float>((1.0 - a) * base[2] + a * c.b);
        }
    out.legend = {{InfluenceCategory::Positive, faint_of(kGreen), kGreen},
                  {InfluenceCategory::Neutral, kYellow, kYellow},
                  {InfluenceCategory::Negative, faint_of(kRed), kRed}};
    return out;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::vector<std::filesystem::path> write_report(const ExplanationReport& report, const OverlayImage* overlay,
                                                const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        throw ConfigError("cannot create output directory " + out_dir.string());
    }
    std::vector<std::filesystem::path> written;
    const auto json_path = out_dir / "report.json";
    {
        std::ofstream out(json_path, std::ios::binary);
        const std::string text = serialize_report(report);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) {
            throw ConfigError("cannot write " + json_path.string());
        }
    }
    written.push_back(json_path);
    if (overlay) {
        const auto png = out_dir / (report.artifacts.overlay.empty() ? "overlay.png" : report.artifacts.overlay);
        save_png(overlay->pixels, png);
        written.push_back(png);
    }
    return written;
}

ExplanationReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open report " + path.string());
    }
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("report is not valid JSON: " + std::string(e.what()));
    }
    return report_from_json(j);
}

// ---------------------------------------------------------------------------
// Bar charts
// ---------------------------------------------------------------------------

Image render_bar_chart(const std::vector<double>& values, const std::vector<InfluenceCategory>& categories,
                       const std::string& title) {
    if (values.size() != categories.size()) {
        throw ConfigError("bar chart needs one category per value");
    }
    constexpr int kBar = 32;
    constexpr int kGap = 8;
    constexpr int kPlotHeight = 240;
    constexpr int kTop = 36;
    constexpr int kBottom = 28;
    constexpr int kLeft = 56;
    const int n = static_cast<int>(values.size());
    const int width = kLeft + std::max(1, n) * (kBar + kGap) + kGap;
    const int height = kTop + kPlotHeight + kBottom;

    double top = 1.0;
    for (double v : values) {
        if (std::isfinite(v)) top = std::max(top, v);
    }
    top *= 1.1;
    auto y_of = [&](double v) {
        return kTop + kPlotHeight - static_cast<int>(std::lround(std::clamp(v / top, 0.0, 1.0) * kPlotHeight));
    };

    cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
    const cv::Scalar ink(40, 40, 40);
    cv::putText(canvas, title, {kLeft, 22}, cv::FONT_HERSHEY_SIMPLEX, 0.55, ink, 1, cv::LINE_AA);
    cv::line(canvas, {kLeft - 4, kTop}, {kLeft - 4, kTop + kPlotHeight}, ink, 1);
    cv::line(canvas, {kLeft - 4, kTop + kPlotHeight}, {width - kGap, kTop + kPlotHeight}, ink, 1);
    for (double tick : {0.0, 1.0, top / 1.1}) {
        std::ostringstream label;
        label.precision(3);
        label << tick;
        cv::putText(canvas, label.str(), {4, y_of(tick) + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, ink, 1,
                    cv::LINE_AA);
    }
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        Rgb c = kYellow;
        if (categories[k] == InfluenceCategory::Positive) c = kGreen;
        if (categories[k] == InfluenceCategory::Negative) c = kRed;
        const int x0 = kLeft + kGap / 2 + i * (kBar + kGap);
        const double v = std::isfinite(values[k]) ? values[k] : top;
        cv::rectangle(canvas, {x0, y_of(v)}, {x0 + kBar, kTop + kPlotHeight}, cv::Scalar(c.b, c.g, c.r),
                      cv::FILLED);
        cv::putText(canvas, std::to_string(i), {x0 + kBar / 3, kTop + kPlotHeight + 18},
                    cv::FONT_HERSHEY_SIMPLEX, 0.4, ink, 1, cv::LINE_AA);
    }
    // Neutral reference.
    cv::line(canvas, {kLeft - 4, y_of(1.0)}, {width - kGap, y_of(1.0)}, cv::Scalar(120, 120, 120), 1);

    Image out(height, width, 3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const auto& px = canvas.at<cv::Vec3b>(y, x);
            out.at(y, x, 0) = px[2];
            out.at(y, x, 1) = px[1];
            out.at(y, x, 2) = px[0];
        }
    return out;
}

}  // namespace boxlens
