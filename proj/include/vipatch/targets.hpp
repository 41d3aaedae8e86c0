#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vipatch/image.hpp"
#include "vipatch/metrics.hpp"

namespace vipatch {

enum class Task { kCounting, kSegmentation, kFusion };

std::string_view to_string(Task task);
Task parse_task(std::string_view name);

struct CountOutput {
  double count = 0.0;
  // Absent when the model only reports a scalar (e.g. a remote counter).
  std::optional<Image> density;
};

// Black-box target: only outputs are observable. Implementations must be
// safe to call from max_concurrency() threads at once.
class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual Task task() const = 0;
  virtual CountOutput count(const ImagePair& pair) const;
  virtual ClassMap segment(const ImagePair& pair) const;
  virtual Image fuse(const ImagePair& pair) const;

  // Number of segmentation classes (0 for other tasks).
  virtual int num_classes() const { return 0; }
  virtual std::size_t max_concurrency() const;
  virtual std::string describe() const = 0;
};

struct SurrogateCountingParams {
  double blur_sigma = 2.0;
  double threshold = 0.6;
  int min_area = 9;

  void validate() const;
};

// Separable Gaussian blur, kernel truncated at 3 sigma, reflected borders
// (the edge pixel is not repeated).
Image gaussian_blur(const Image& image, double sigma);

// 4-connected component labels of a binary row-major plane; 0 is background,
// components are numbered from 1 in raster order of their first pixel.
std::vector<int> label_components(const std::vector<std::uint8_t>& binary,
                                  int width, int height, int* count = nullptr);

// Blur the infrared image, keep pixels >= threshold, count 4-connected
// components of at least min_area pixels. Each surviving component carries
// density 1 / area on its pixels so the map sums to the count.
CountOutput surrogate_count(const ImagePair& pair,
                            const SurrogateCountingParams& params = {});

// Bands of g = 0.5 gray(visible) + 0.5 infrared: min(floor(g * n), n - 1).
ClassMap surrogate_segment(const ImagePair& pair, int num_bands = 4);

// Elementwise max(gray(visible), infrared).
Image surrogate_fuse(const ImagePair& pair);

class SurrogateCounter final : public TargetModel {
 public:
  explicit SurrogateCounter(SurrogateCountingParams params = {});
  Task task() const override { return Task::kCounting; }
  CountOutput count(const ImagePair& pair) const override;
  std::string describe() const override;

 private:
  SurrogateCountingParams params_;
};

class SurrogateSegmenter final : public TargetModel {
 public:
  explicit SurrogateSegmenter(int num_bands = 4);
  Task task() const override { return Task::kSegmentation; }
  ClassMap segment(const ImagePair& pair) const override;
  int num_classes() const override { return num_bands_; }
  std::string describe() const override;

 private:
  int num_bands_;
};

class SurrogateFuser final : public TargetModel {
 public:
  Task task() const override { return Task::kFusion; }
  Image fuse(const ImagePair& pair) const override;
  std::string describe() const override;
};

}  // namespace vipatch
