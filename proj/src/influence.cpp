#include "boxlens/influence.hpp"

#include "boxlens/error.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace boxlens {

void InfluenceConfig::validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw ConfigError("epsilon must lie in (0, 1)");
    }
    if (!(neutral_band.lower <= 1.0 && neutral_band.upper >= 1.0)) {
        throw ConfigError("neutral band must contain 1");
    }
}

std::string_view to_string(InfluenceCategory category) {
    switch (category) {
    case InfluenceCategory::Positive: return "positive";
    case InfluenceCategory::Negative: return "negative";
    case InfluenceCategory::Neutral: break;
    }
    return "neutral";
}

InfluenceCategory category_from_string(std::string_view name) {
    if (name == "positive") return InfluenceCategory::Positive;
    if (name == "negative") return InfluenceCategory::Negative;
    if (name == "neutral") return InfluenceCategory::Neutral;
    throw std::invalid_argument("unknown influence category: " + std::string(name));
}

double ir_index(double p_original, double p_perturbed, const InfluenceConfig& config) {
    if (!(p_original >= 0.0 && p_original <= 1.0) || !(p_perturbed >= 0.0 && p_perturbed <= 1.0)) {
        throw std::invalid_argument("probabilities must lie in [0, 1]");
    }
    if (p_original == 0.0) {
        return 0.0;
    }
    const double floor = std::min(config.epsilon, p_original);
    return p_original / std::max(p_perturbed, floor);
}

IrpResult irp_index(std::span<const double> ir_per_class, const PredictionVector& weights,
                    std::size_t true_class, double epsilon) {
    if (ir_per_class.size() != weights.size()) {
        throw std::invalid_argument("IR vector length does not match the class count");
    }
    if (true_class >= weights.size()) {
        throw std::invalid_argument("true class index out of range");
    }
    const auto w = weights.probabilities();
    double weight_sum = 0.0;
    double weighted = 0.0;
    for (std::size_t c = 0; c < w.size(); ++c) {
        weight_sum += w[c];
        weighted += w[c] * ir_per_class[c];
    }
    if (weighted / weight_sum < epsilon) {
        return {0.0, true};
    }
    const double target = ir_per_class[true_class];
    if (target == 0.0) {
        return {0.0, false};
    }
    // Average IR relative to the target's, so a uniform vector gives exactly 1.
    double relative = 0.0;
    for (std::size_t c = 0; c < w.size(); ++c) relative += w[c] * (ir_per_class[c] / target);
    return {weight_sum / relative, false};
}

InfluenceCategory categorize(double ir, const NeutralBand& band) {
    if (ir > band.upper) return InfluenceCategory::Positive;
    if (ir < band.lower) return InfluenceCategory::Negative;
    return InfluenceCategory::Neutral;
}

FeatureInfluence score_feature(int feature_id, std::size_t pixel_count, const PredictionVector& original,
                               const PredictionVector& perturbed, std::size_t true_class,
                               const InfluenceConfig& config) {
    if (original.size() != perturbed.size()) {
        throw std::invalid_argument("prediction vectors differ in length");
    }
    FeatureInfluence f;
    f.feature_id = feature_id;
    f.pixel_count = pixel_count;
    f.p_true_original = original[true_class];
    f.p_true_perturbed = perturbed[true_class];
    f.ir_per_class.resize(original.size());
    for (std::size_t c = 0; c < original.size(); ++c) {
        f.ir_per_class[c] = ir_index(original[c], perturbed[c], config);
    }
    f.ir = f.ir_per_class[true_class];
    const IrpResult irp = irp_index(f.ir_per_class, original, true_class, config.epsilon);
    f.irp = irp.value;
    f.irp_degenerate = irp.degenerate;
    f.category = categorize(f.ir, config.neutral_band);
    return f;
}

FeatureInfluence analyze_feature(const ClassifierModel& model, const Image& image, const Image& blurred,
                                 const FeatureMask& mask, std::size_t true_class,
                                 const PredictionVector& original, const InfluenceConfig& config) {
    const PredictionVector perturbed = model.predict(composite(image, blurred, mask));
    return score_feature(mask.feature_id, mask.pixel_count, original, mask.empty ? original : perturbed,
                         true_class, config);
}

FeatureInfluence analyze_feature(const ClassifierModel& model, const Image& image, const FeatureMask& mask,
                                 std::size_t true_class, const PredictionVector& original,
                                 const BlurConfig& blur, const InfluenceConfig& config) {
    return analyze_feature(model, image, gaussian_blur(image, blur), mask, true_class, original, config);
}

}  // namespace boxlens
