#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vipatch/evaluation.hpp"
#include "vipatch/image.hpp"
#include "vipatch/metrics.hpp"
#include "vipatch/targets.hpp"

namespace vipatch {

enum class DefenseKind { kPassThrough, kJpeg, kMedian, kMseDetector };

struct DefenseConfig {
  DefenseKind kind = DefenseKind::kPassThrough;
  int jpeg_quality = 75;
  int median_kernel = 3;
  double mse_threshold = 0.0;

  void validate() const;
  // e.g. "jpeg", "median"; and the parameter rendered for report columns.
  std::string kind_name() const;
  std::string parameter() const;
};

// "none", "jpeg[:q]", "median[:k]", "mse[:theta]".
DefenseConfig parse_defense(const std::string& spec);

// JPEG-style round trip per channel: 8x8 DCT-II, quantization with the
// standard luminance table scaled by quality, inverse DCT. Edge blocks are
// padded by replication. No chroma subsampling or entropy coding.
Image jpeg_compress(const Image& image, int quality);

// Standard luminance table scaled with the usual quality mapping.
std::vector<int> jpeg_quant_table(int quality);

// Per-channel k x k median with replicated borders.
Image median_filter(const Image& image, int kernel);

struct Detection {
  bool flagged = false;
  double mse = 0.0;
};

Detection mse_detect(const Image& prediction, const Image& reference,
                     double threshold);

// Linear-interpolated percentile (fraction in [0,1]) of clean-sample MSEs.
double calibrate_threshold(std::span<const double> clean_mses,
                           double fraction = 0.95);

// Preprocessing applied to both modalities (jpeg/median); the identity for
// pass-through and the detector.
ImagePair apply_defense(const ImagePair& pair, const DefenseConfig& defense);

struct DefenseResult {
  MetricTable metrics;
  std::optional<Detection> detection;
};

// Re-queries the model on the defended adversarial pair and recomputes the
// metrics. The detector kind compares the model's density map against the
// ground-truth density (counting only).
DefenseResult attack_under_defense(const ImagePair& clean,
                                   const ImagePair& adversarial,
                                   const DefenseConfig& defense,
                                   const TargetModel& model,
                                   const GroundTruth& gt);

}  // namespace vipatch
