#pragma once

#include <optional>

#include "vipatch/de.hpp"
#include "vipatch/image.hpp"
#include "vipatch/metrics.hpp"
#include "vipatch/patch.hpp"
#include "vipatch/targets.hpp"

namespace vipatch {

// Stealthiness and fusion-effectiveness weights.
inline constexpr double kStealthPsnrWeight = 1.0;
inline constexpr double kStealthSsimWeight = 20.0;
inline constexpr double kFusionIntensityWeight = 20.0;
inline constexpr double kFusionGradientWeight = 20.0;
inline constexpr double kFusionSsimWeight = 10.0;

struct FitnessConfig {
  Task task = Task::kCounting;
  double alpha = 1.0;
  CompressionParams compression;
  PatchTarget target = PatchTarget::kBoth;
  // Segmentation only: score against supplied ground-truth labels instead of
  // the model's clean prediction.
  bool ground_truth_reference = false;

  void validate() const;
};

struct FitnessReport {
  double e_term = 0.0;
  double s_term = 0.0;
  double j = 0.0;
  double alpha = 1.0;
  MetricTable metrics;
};

// J = alpha * E + (1 - alpha) * S.
double scalarize(double alpha, double e_term, double s_term);

// (psnr_vis + psnr_inf) * 1 + (ssim_vis + ssim_inf) * 20. Fills the
// stealthiness columns of `metrics` when given.
double stealth_term(const ImagePair& clean, const ImagePair& adversarial,
                    MetricTable* metrics = nullptr);

// Fusion effectiveness of a fused output against the clean sources.
double fusion_effectiveness(const ImagePair& clean, const Image& fused);

// Scores genomes against one clean pair. The model's clean prediction is
// computed once at construction; evaluate() is const and reentrant.
class FitnessEvaluator {
 public:
  FitnessEvaluator(const ImagePair& clean, const TargetModel& model,
                   FitnessConfig config,
                   std::optional<ClassMap> ground_truth_labels = std::nullopt);

  FitnessReport evaluate(const PatchGenome& genome) const;
  FitnessReport evaluate_pair(const ImagePair& adversarial) const;
  // J alone; equal to evaluate(genome).j.
  double objective(const PatchGenome& genome) const;
  ImagePair adversarial(const PatchGenome& genome) const;

  const ImagePair& clean() const { return clean_; }
  const FitnessConfig& config() const { return config_; }
  const TargetModel& model() const { return model_; }
  double clean_count() const { return clean_count_; }

 private:
  const ImagePair& clean_;
  const TargetModel& model_;
  FitnessConfig config_;
  double clean_count_ = 0.0;
  std::optional<ClassMap> reference_labels_;
};

FitnessReport fitness_counting(const PatchGenome& genome, const ImagePair& pair,
                               const TargetModel& model,
                               const FitnessConfig& config);
FitnessReport fitness_segmentation(const PatchGenome& genome,
                                   const ImagePair& pair,
                                   const TargetModel& model,
                                   const FitnessConfig& config);
FitnessReport fitness_fusion(const PatchGenome& genome, const ImagePair& pair,
                             const TargetModel& model,
                             const FitnessConfig& config);

// DE oracle: decode the vector with `layout`, evaluate J.
FitnessOracle make_patch_oracle(const FitnessEvaluator& evaluator,
                                const ParamLayout& layout);

}  // namespace vipatch
