#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vipatch/image.hpp"

namespace vipatch {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

using PointAnnotations = std::vector<Point>;

// Per-pixel class labels, row-major.
class ClassMap {
 public:
  ClassMap() = default;
  ClassMap(int width, int height, std::uint8_t fill = 0);
  ClassMap(int width, int height, std::vector<std::uint8_t> labels);

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint8_t at(int x, int y) const {
    return labels_[static_cast<std::size_t>(y) * width_ + x];
  }
  std::uint8_t& at(int x, int y) {
    return labels_[static_cast<std::size_t>(y) * width_ + x];
  }
  std::span<const std::uint8_t> labels() const { return labels_; }

  friend bool operator==(const ClassMap&, const ClassMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> labels_;
};

// --- counting -------------------------------------------------------------

// Grid count error of one image over a 2^k x 2^k partition (k in 0..3).
//
// Each axis is cut into eight base cells of length floor(L / 8), the last one
// absorbing the remainder; level k merges 2^(3-k) consecutive base cells.
// Partitions are therefore nested, and cell totals are accumulated in fixed
// point so GAME(k) <= GAME(k+1) holds exactly.
double game(const Image& pred_density, std::span<const Point> gt, int k);

// Root mean squared count error over a set.
double rmse(std::span<const double> pred_counts,
            std::span<const double> gt_counts);

double mean_absolute_error(std::span<const double> pred_counts,
                           std::span<const double> gt_counts);

// --- segmentation -----------------------------------------------------------

// Entry (i, j) counts pixels of ground-truth class i predicted as class j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void accumulate(const ClassMap& pred, const ClassMap& gt);
  std::uint64_t at(int gt_class, int pred_class) const {
    return cells_[static_cast<std::size_t>(gt_class) * n_ + pred_class];
  }
  int num_classes() const { return n_; }

  // Means over the classes present in the ground truth.
  double mean_iou() const;
  double mean_recall() const;

 private:
  std::uint64_t row_sum(int i) const;
  std::uint64_t col_sum(int j) const;

  int n_;
  std::vector<std::uint64_t> cells_;
};

double miou(const ClassMap& pred, const ClassMap& gt, int num_classes);
double recall(const ClassMap& pred, const ClassMap& gt, int num_classes);

// --- image similarity -------------------------------------------------------

inline constexpr double kPsnrCap = 99.0;
inline constexpr int kSsimWindow = 8;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

double mse(const Image& a, const Image& b);

// 10 log10(1 / MSE) on [0, 1] data, capped at kPsnrCap.
double psnr(const Image& a, const Image& b);

// Mean SSIM over non-overlapping 8x8 tiles (edge tiles keep their partial
// extent), averaged across channels.
double ssim(const Image& a, const Image& b);

// --- fusion quality ---------------------------------------------------------

// Xydeas-Petrovic edge preservation with Sobel gradients.
double qabf(const Image& vis, const Image& inf, const Image& fused);

// Pixel-domain VIF of the fused image against each source, averaged.
double viff(const Image& vis, const Image& inf, const Image& fused);

// Mean of Pearson correlations corr(fused, vis_gray) and corr(fused, inf).
// A constant operand contributes 0.
double cc(const Image& vis, const Image& inf, const Image& fused);

double pearson(std::span<const double> a, std::span<const double> b);

struct FusionLosses {
  double intensity = 0.0;
  double gradient = 0.0;
};

// Intensity and gradient losses against the elementwise max of the sources.
FusionLosses fusion_losses(const Image& vis, const Image& inf,
                           const Image& fused);

// Mean of psnr/ssim of the fused image against each source.
double fused_psnr(const Image& vis, const Image& inf, const Image& fused);
double fused_ssim(const Image& vis, const Image& inf, const Image& fused);

// Sobel gradient magnitude with replicated borders, row-major.
std::vector<double> sobel_magnitude(const Image& gray);

// --- report table -----------------------------------------------------------

enum class Metric : std::size_t {
  kGame0,
  kGame1,
  kGame2,
  kGame3,
  kRmse,
  kMiou,
  kRecall,
  kPsnrVis,
  kSsimVis,
  kPsnrInf,
  kSsimInf,
  kQabf,
  kViff,
  kCc,
  kPsnrFused,
  kSsimFused,
};

inline constexpr std::size_t kMetricCount = 16;

// Named metric values; unset entries are NaN and print as "nan".
class MetricTable {
 public:
  MetricTable();

  double get(Metric m) const { return values_[static_cast<std::size_t>(m)]; }
  void set(Metric m, double v) { values_[static_cast<std::size_t>(m)] = v; }
  bool has(Metric m) const;

  static std::string_view name(Metric m);
  static const std::array<Metric, kMetricCount>& all();

  static std::string csv_header();
  std::string csv_row() const;

 private:
  std::array<double, kMetricCount> values_;
};

// Fixed-precision rendering used by every CSV the tool writes.
std::string format_csv_real(double v);

}  // namespace vipatch
