#include "vipatch/targets.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "vipatch/errors.hpp"

namespace vipatch {
namespace {

// Reflect-101 style index: -1 -> 1, n -> n - 2.
int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

std::vector<double> gaussian_kernel(double sigma, int* radius) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + r)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  *radius = r;
  return k;
}

}  // namespace

std::string_view to_string(Task task) {
  switch (task) {
    case Task::kCounting:
      return "counting";
    case Task::kSegmentation:
      return "segmentation";
    case Task::kFusion:
      return "fusion";
  }
  return "unknown";
}

Task parse_task(std::string_view name) {
  if (name == "counting" || name == "count") return Task::kCounting;
  if (name == "segmentation" || name == "segment") return Task::kSegmentation;
  if (name == "fusion" || name == "fuse") return Task::kFusion;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

CountOutput TargetModel::count(const ImagePair&) const {
  throw OracleError(describe() + " does not support counting");
}

ClassMap TargetModel::segment(const ImagePair&) const {
  throw OracleError(describe() + " does not support segmentation");
}

Image TargetModel::fuse(const ImagePair&) const {
  throw OracleError(describe() + " does not support fusion");
}

std::size_t TargetModel::max_concurrency() const {
  return std::max(1u, std::thread::hardware_concurrency());
}

void SurrogateCountingParams::validate() const {
  if (!(blur_sigma > 0.0) || !(threshold > 0.0) || min_area < 1) {
    throw ConfigError("surrogate counting parameters must be positive");
  }
}

Image gaussian_blur(const Image& image, double sigma) {
  int r = 0;
  const auto kernel = gaussian_kernel(sigma, &r);
  const int w = image.width();
  const int h = image.height();
  const int ch = image.channels();
  const std::size_t taps = kernel.size();
  const std::size_t stride = static_cast<std::size_t>(w) * ch;

  // Horizontal pass, one channel line at a time.
  std::vector<double> tmp(image.data().size());
  std::vector<double> line(static_cast<std::size_t>(w + 2 * r));
  const double* src = image.data().data();
  for (int y = 0; y < h; ++y) {
    const double* row = src + y * stride;
    double* dst = tmp.data() + y * stride;
    for (int c = 0; c < ch; ++c) {
      for (int i = -r; i < w + r; ++i) {
        line[static_cast<std::size_t>(i + r)] = row[reflect(i, w) * ch + c];
      }
      for (int x = 0; x < w; ++x) {
        const double* in = line.data() + x;
        double acc = 0.0;
        for (std::size_t t = 0; t < taps; ++t) acc += kernel[t] * in[t];
        dst[x * ch + c] = acc;
      }
    }
  }

  // Vertical pass accumulates whole rows.
  Image out(w, h, ch);
  double* dst = out.data().data();
  for (int y = 0; y < h; ++y) {
    double* out_row = dst + y * stride;
    for (std::size_t t = 0; t < taps; ++t) {
      const double k = kernel[t];
      const double* in = tmp.data() +
                         reflect(y + static_cast<int>(t) - r, h) * stride;
      for (std::size_t i = 0; i < stride; ++i) out_row[i] += k * in[i];
    }
    for (std::size_t i = 0; i < stride; ++i) out_row[i] = clamp_unit(out_row[i]);
  }
  return out;
}

std::vector<int> label_components(const std::vector<std::uint8_t>& binary,
                                  int width, int height, int* count) {
  std::vector<int> labels(binary.size(), 0);
  std::vector<std::size_t> stack;
  int next = 0;
  for (std::size_t seed = 0; seed < binary.size(); ++seed) {
    if (!binary[seed] || labels[seed] != 0) continue;
    ++next;
    labels[seed] = next;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(p % width);
      const int y = static_cast<int>(p / width);
      auto visit = [&](int nx, int ny) {
        if (nx < 0 || ny < 0 || nx >= width || ny >= height) return;
        const std::size_t q = static_cast<std::size_t>(ny) * width + nx;
        if (binary[q] && labels[q] == 0) {
          labels[q] = next;
          stack.push_back(q);
        }
      };
      visit(x - 1, y);
      visit(x + 1, y);
      visit(x, y - 1);
      visit(x, y + 1);
    }
  }
  if (count) *count = next;
  return labels;
}

CountOutput surrogate_count(const ImagePair& pair,
                            const SurrogateCountingParams& params) {
  params.validate();
  const Image blurred = gaussian_blur(pair.infrared(), params.blur_sigma);
  const int w = blurred.width();
  const int h = blurred.height();
  std::vector<std::uint8_t> binary(blurred.pixel_count());
  auto d = blurred.data();
  for (std::size_t i = 0; i < binary.size(); ++i) {
    binary[i] = d[i] >= params.threshold ? 1 : 0;
  }
  int n = 0;
  const auto labels = label_components(binary, w, h, &n);
  std::vector<int> area(static_cast<std::size_t>(n) + 1, 0);
  for (int l : labels) ++area[static_cast<std::size_t>(l)];

  Image density(w, h, 1);
  int kept = 0;
  for (int l = 1; l <= n; ++l) {
    if (area[static_cast<std::size_t>(l)] >= params.min_area) ++kept;
  }
  auto out = density.data();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int a = area[static_cast<std::size_t>(labels[i])];
    if (labels[i] != 0 && a >= params.min_area) out[i] = 1.0 / a;
  }
  return {static_cast<double>(kept), std::move(density)};
}

ClassMap surrogate_segment(const ImagePair& pair, int num_bands) {
  if (num_bands < 1 || num_bands > 256) {
    throw ConfigError("band count must be in 1..256");
  }
  const int w = pair.width();
  const int h = pair.height();
  ClassMap map(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Image& v = pair.visible();
      const double g = 0.5 * luma(v.at(x, y, 0), v.at(x, y, 1), v.at(x, y, 2)) +
                       0.5 * pair.infrared().at(x, y);
      const int band = std::clamp(static_cast<int>(std::floor(g * num_bands)),
                                  0, num_bands - 1);
      map.at(x, y) = static_cast<std::uint8_t>(band);
    }
  }
  return map;
}

Image surrogate_fuse(const ImagePair& pair) {
  const Image gray = to_grayscale(pair.visible());
  Image fused(pair.width(), pair.height(), 1);
  auto g = gray.data();
  auto ir = pair.infrared().data();
  auto f = fused.data();
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::max(g[i], ir[i]);
  return fused;
}

SurrogateCounter::SurrogateCounter(SurrogateCountingParams params)
    : params_(params) {
  params_.validate();
}

CountOutput SurrogateCounter::count(const ImagePair& pair) const {
  return surrogate_count(pair, params_);
}

std::string SurrogateCounter::describe() const {
  return "surrogate_counting(sigma=" + std::to_string(params_.blur_sigma) +
         ", tau=" + std::to_string(params_.threshold) +
         ", min_area=" + std::to_string(params_.min_area) + ")";
}

SurrogateSegmenter::SurrogateSegmenter(int num_bands) : num_bands_(num_bands) {
  if (num_bands < 1 || num_bands > 256) {
    throw ConfigError("band count must be in 1..256");
  }
}

ClassMap SurrogateSegmenter::segment(const ImagePair& pair) const {
  return surrogate_segment(pair, num_bands_);
}

std::string SurrogateSegmenter::describe() const {
  return "surrogate_segmentation(bands=" + std::to_string(num_bands_) + ")";
}

Image SurrogateFuser::fuse(const ImagePair& pair) const {
  return surrogate_fuse(pair);
}

std::string SurrogateFuser::describe() const { return "surrogate_fusion"; }

}  // namespace vipatch
