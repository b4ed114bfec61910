#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "boxlens/image.hpp"
#include "boxlens/influence.hpp"
#include "boxlens/model.hpp"
#include "boxlens/segmentation.hpp"

namespace boxlens {

using ordered_json = nlohmann::ordered_json;

inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kReportSignificantDigits = 6;

/// Rounds to `digits` significant decimal digits (0, inf and nan pass through).
double round_significant(double value, int digits = kReportSignificantDigits);

struct ClassProbability {
    std::size_t index = 0;
    std::string name;
    double p = 0.0;

    friend bool operator==(const ClassProbability&, const ClassProbability&) = default;
};

struct ReportFeature {
    int id = 0;
    std::size_t pixel_count = 0;
    double p_true_perturbed = 0.0;
    double ir = 0.0;
    double irp = 0.0;
    bool irp_degenerate = false;
    InfluenceCategory category = InfluenceCategory::Neutral;

    friend bool operator==(const ReportFeature&, const ReportFeature&) = default;
};

struct SegmentationSummary {
    int height = 0;
    int width = 0;
    std::size_t k = 0;
    double inertia = 0.0;
    std::vector<std::array<std::int64_t, 2>> labels_rle;  // (label, run length), row-major

    friend bool operator==(const SegmentationSummary&, const SegmentationSummary&) = default;
};

struct ReportArtifacts {
    std::string overlay;
    std::vector<std::string> perturbations;

    friend bool operator==(const ReportArtifacts&, const ReportArtifacts&) = default;
};

/// Everything written to report.json. Reals are held at the serialized
/// precision so a parsed report compares equal to the one that was written.
struct ExplanationReport {
    std::string image_id;
    std::size_t true_class = 0;
    std::string true_class_name;
    double p_true_original = 0.0;
    std::vector<ClassProbability> original_top;
    std::vector<ReportFeature> features;
    SegmentationSummary segmentation;
    ordered_json config;
    ReportArtifacts artifacts;

    friend bool operator==(const ExplanationReport&, const ExplanationReport&) = default;
};

/// Assembles a report; `features` must hold ids 0..k-1 in order.
ExplanationReport make_report(std::string image_id, std::size_t true_class,
                              const PredictionVector& original, std::size_t top_n,
                              const std::vector<FeatureInfluence>& features,
                              const FeatureSegmentation& segmentation, ordered_json config,
                              ReportArtifacts artifacts);

ordered_json to_json(const ExplanationReport& report);
/// Throws ConfigError on schema violations.
ExplanationReport report_from_json(const ordered_json& json);

/// Canonical text: fixed key order, two-space indent, trailing newline.
std::string serialize_report(const ExplanationReport& report);

struct OverlayStyle {
    double alpha = 0.5;
    double intensity_cap = 10.0;  // IR (or 1/IR) at which colour saturates

    void validate() const;
};

struct Rgb {
    double r = 0.0;
    double g = 0.0;
    double b = 0.0;
};

struct LegendEntry {
    InfluenceCategory category;
    Rgb faint;   // intensity 0
    Rgb strong;  // intensity 1
};

struct OverlayImage {
    Image pixels;  // RGB
    std::vector<LegendEntry> legend;
};

/// min(|ln ir| / ln cap, 1); zero IR saturates.
double overlay_intensity(double ir, double cap);

/// Tint colour for a feature: yellow for neutral, otherwise the category ramp
/// evaluated at overlay_intensity.
Rgb feature_color(const FeatureInfluence& feature, const OverlayStyle& style);

/// Alpha blend of the image with per-feature tints. The segmentation grid must
/// match the image; throws ConfigError on a size or k mismatch.
OverlayImage render_overlay(const Image& image, const FeatureSegmentation& segmentation,
                            const std::vector<FeatureInfluence>& influences, const OverlayStyle& style);

/// Writes report.json (and overlay.png when `overlay` is non-null) into
/// `out_dir`, creating it if needed. Returns the written paths.
std::vector<std::filesystem::path> write_report(const ExplanationReport& report, const OverlayImage* overlay,
                                                const std::filesystem::path& out_dir);

ExplanationReport read_report(const std::filesystem::path& path);

/// Bar chart of one value per feature with a reference line at 1, bars
/// coloured by category.
Image render_bar_chart(const std::vector<double>& values, const std::vector<InfluenceCategory>& categories,
                       const std::string& title);

}  // namespace boxlens
