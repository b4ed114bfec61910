#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "boxlens/feature_mask.hpp"
#include "boxlens/model.hpp"
#include "boxlens/perturbation.hpp"

namespace boxlens {

struct NeutralBand {
    double lower = 0.9;
    double upper = 1.1;
};

struct InfluenceConfig {
    double epsilon = 1e-7;  // floor on perturbed probabilities
    NeutralBand neutral_band;

    /// Throws ConfigError unless 0 < epsilon < 1 and lower <= 1 <= upper.
    void validate() const;
};

enum class InfluenceCategory { Positive, Neutral, Negative };

std::string_view to_string(InfluenceCategory category);
InfluenceCategory category_from_string(std::string_view name);

struct FeatureInfluence {
    int feature_id = 0;
    std::size_t pixel_count = 0;
    double p_true_original = 0.0;
    double p_true_perturbed = 0.0;
    double ir = 1.0;
    std::vector<double> ir_per_class;
    double irp = 1.0;
    bool irp_degenerate = false;
    InfluenceCategory category = InfluenceCategory::Neutral;
};

/// Influence of a perturbation on one class: p_original / max(p_perturbed, floor)
/// with floor = min(epsilon, p_original). Zero when p_original is zero.
/// Both probabilities must lie in [0, 1].
double ir_index(double p_original, double p_perturbed, const InfluenceConfig& config);

struct IrpResult {
    double value = 0.0;
    bool degenerate = false;  // weighted mean IR fell below epsilon
};

/// ir_per_class[true_class] divided by the mean of ir_per_class weighted by
/// the original prediction. Throws std::invalid_argument on a length mismatch.
IrpResult irp_index(std::span<const double> ir_per_class, const PredictionVector& weights,
                    std::size_t true_class, double epsilon = 1e-7);

/// Band edges count as neutral.
InfluenceCategory categorize(double ir, const NeutralBand& band);

/// Scores a perturbed prediction against the original one.
FeatureInfluence score_feature(int feature_id, std::size_t pixel_count, const PredictionVector& original,
                               const PredictionVector& perturbed, std::size_t true_class,
                               const InfluenceConfig& config);

/// Perturbs the feature (blurred image composited under the mask), predicts,
/// and scores. Issues exactly one predict call. An empty mask scores as the
/// unperturbed image: IR = IRP = 1, neutral.
FeatureInfluence analyze_feature(const ClassifierModel& model, const Image& image, const Image& blurred,
                                 const FeatureMask& mask, std::size_t true_class,
                                 const PredictionVector& original, const InfluenceConfig& config);

FeatureInfluence analyze_feature(const ClassifierModel& model, const Image& image, const FeatureMask& mask,
                                 std::size_t true_class, const PredictionVector& original,
                                 const BlurConfig& blur, const InfluenceConfig& config);

}  // namespace boxlens
