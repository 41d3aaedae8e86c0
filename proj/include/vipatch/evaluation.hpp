#pragma once

#include <optional>

#include "vipatch/image.hpp"
#include "vipatch/metrics.hpp"
#include "vipatch/targets.hpp"

namespace vipatch {

struct GroundTruth {
  std::optional<PointAnnotations> points;
  std::optional<ClassMap> labels;
};

// Model-output and similarity metrics for one input pair.
//
// `input` is what the model sees; `clean` supplies the stealthiness and
// fusion references. Counting fills GAME(0..3) and the single-image RMSE
// against ground-truth points (left NaN without points; GAME(k>0) also
// needs a density map). Segmentation scores against ground-truth labels,
// falling back to the model's prediction on `clean`.
MetricTable evaluate_input(const ImagePair& input, const ImagePair& clean,
                           const TargetModel& model, const GroundTruth& gt);

// Gaussian-splatted point annotations; each in-bounds point contributes unit
// mass (kernel renormalized over its in-image support).
Image points_to_density(const PointAnnotations& points, int width, int height,
                        double sigma = 2.0);

}  // namespace vipatch
