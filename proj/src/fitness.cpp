#include "vipatch/fitness.hpp"

#include <cmath>

#include "vipatch/errors.hpp"
#include "vipatch/log.hpp"

namespace vipatch {

void FitnessConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha must lie in [0,1]");
  }
}

double scalarize(double alpha, double e_term, double s_term) {
  return alpha * e_term + (1.0 - alpha) * s_term;
}

double stealth_term(const ImagePair& clean, const ImagePair& adversarial,
                    MetricTable* metrics) {
  const double pv = psnr(clean.visible(), adversarial.visible());
  const double sv = ssim(clean.visible(), adversarial.visible());
  const double pi = psnr(clean.infrared(), adversarial.infrared());
  const double si = ssim(clean.infrared(), adversarial.infrared());
  if (metrics) {
    metrics->set(Metric::kPsnrVis, pv);
    metrics->set(Metric::kSsimVis, sv);
    metrics->set(Metric::kPsnrInf, pi);
    metrics->set(Metric::kSsimInf, si);
  }
  return (pv + pi) * kStealthPsnrWeight + (sv + si) * kStealthSsimWeight;
}

double fusion_effectiveness(const ImagePair& clean, const Image& fused) {
  const FusionLosses losses =
      fusion_losses(clean.visible(), clean.infrared(), fused);
  const double structural = fused_ssim(clean.visible(), clean.infrared(), fused);
  return kFusionIntensityWeight * losses.intensity +
         kFusionGradientWeight * losses.gradient +
         kFusionSsimWeight * (1.0 - structural);
}

FitnessEvaluator::FitnessEvaluator(const ImagePair& clean,
                                   const TargetModel& model,
                                   FitnessConfig config,
                                   std::optional<ClassMap> ground_truth_labels)
    : clean_(clean), model_(model), config_(config) {
  config_.validate();
  if (model.task() != config_.task) {
    throw ConfigError("target model serves " +
                      std::string(to_string(model.task())) +
                      " but the fitness task is " +
                      std::string(to_string(config_.task)));
  }
  switch (config_.task) {
    case Task::kCounting:
      clean_count_ = model_.count(clean_).count;
      break;
    case Task::kSegmentation:
      if (config_.ground_truth_reference) {
        if (!ground_truth_labels) {
          throw ConfigError(
              "ground-truth reference requested but no labels supplied");
        }
        reference_labels_ = std::move(ground_truth_labels);
      } else {
        reference_labels_ = model_.segment(clean_);
      }
      break;
    case Task::kFusion:
      if (config_.alpha != 1.0) {
        log_warning(
            "fusion fitness has no stealthiness term; alpha forced to 1");
        config_.alpha = 1.0;
      }
      break;
  }
}

ImagePair FitnessEvaluator::adversarial(const PatchGenome& genome) const {
  return apply(genome, clean_, config_.compression, config_.target);
}

FitnessReport FitnessEvaluator::evaluate(const PatchGenome& genome) const {
  return evaluate_pair(adversarial(genome));
}

double FitnessEvaluator::objective(const PatchGenome& genome) const {
  if (config_.alpha != 1.0) return evaluate(genome).j;
  // S carries zero weight; skip the similarity metrics.
  const ImagePair adv = adversarial(genome);
  switch (config_.task) {
    case Task::kCounting:
      return std::abs(model_.count(adv).count - clean_count_);
    case Task::kSegmentation: {
      ConfusionMatrix cm(model_.num_classes());
      cm.accumulate(model_.segment(adv), *reference_labels_);
      return 100.0 - cm.mean_iou() * 100.0;
    }
    case Task::kFusion:
      return fusion_effectiveness(clean_, model_.fuse(adv));
  }
  return evaluate(genome).j;
}

FitnessReport FitnessEvaluator::evaluate_pair(const ImagePair& adv) const {
  FitnessReport report;
  report.alpha = config_.alpha;
  switch (config_.task) {
    case Task::kCounting: {
      const double count = model_.count(adv).count;
      report.e_term = std::abs(count - clean_count_);
      report.s_term = stealth_term(clean_, adv, &report.metrics);
      break;
    }
    case Task::kSegmentation: {
      const ClassMap pred = model_.segment(adv);
      const int classes = model_.num_classes();
      ConfusionMatrix cm(classes);
      cm.accumulate(pred, *reference_labels_);
      const double m = cm.mean_iou();
      report.metrics.set(Metric::kMiou, m);
      report.metrics.set(Metric::kRecall, cm.mean_recall());
      report.e_term = 100.0 - m * 100.0;
      report.s_term = stealth_term(clean_, adv, &report.metrics);
      break;
    }
    case Task::kFusion: {
      const Image fused = model_.fuse(adv);
      report.e_term = fusion_effectiveness(clean_, fused);
      report.s_term = 0.0;
      break;
    }
  }
  report.j = scalarize(report.alpha, report.e_term, report.s_term);
  return report;
}

FitnessReport fitness_counting(const PatchGenome& genome, const ImagePair& pair,
                               const TargetModel& model,
                               const FitnessConfig& config) {
  FitnessConfig c = config;
  c.task = Task::kCounting;
  return FitnessEvaluator(pair, model, c).evaluate(genome);
}

FitnessReport fitness_segmentation(const PatchGenome& genome,
                                   const ImagePair& pair,
                                   const TargetModel& model,
                                   const FitnessConfig& config) {
  FitnessConfig c = config;
  c.task = Task::kSegmentation;
  return FitnessEvaluator(pair, model, c).evaluate(genome);
}

FitnessReport fitness_fusion(const PatchGenome& genome, const ImagePair& pair,
                             const TargetModel& model,
                             const FitnessConfig& config) {
  FitnessConfig c = config;
  c.task = Task::kFusion;
  return FitnessEvaluator(pair, model, c).evaluate(genome);
}

FitnessOracle make_patch_oracle(const FitnessEvaluator& evaluator,
                                const ParamLayout& layout) {
  const int w = evaluator.clean().width();
  const int h = evaluator.clean().height();
  return {[&evaluator, layout, w, h](std::span<const double> v) {
            return evaluator.objective(decode(v, layout, w, h));
          },
          evaluator.model().max_concurrency()};
}

}  // namespace vipatch
