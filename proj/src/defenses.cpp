#include "vipatch/defenses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "vipatch/errors.hpp"

namespace vipatch {
namespace {

constexpr std::array<int, 64> kLuminanceTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

// Orthonormal 8-point DCT-II basis: basis[u][x].
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u) {
      const double scale = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) {
        b[u][x] = scale * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
    return b;
  }();
  return basis;
}

using Block = std::array<double, 64>;

Block forward_dct(const Block& in) {
  const auto& b = dct_basis();
  Block rows{};
  for (int y = 0; y < 8; ++y) {
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int x = 0; x < 8; ++x) acc += b[u][x] * in[y * 8 + x];
      rows[y * 8 + u] = acc;
    }
  }
  Block out{};
  for (int v = 0; v < 8; ++v) {
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int y = 0; y < 8; ++y) acc += b[v][y] * rows[y * 8 + u];
      out[v * 8 + u] = acc;
    }
  }
  return out;
}

Block inverse_dct(const Block& in) {
  const auto& b = dct_basis();
  Block cols{};
  for (int y = 0; y < 8; ++y) {
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int v = 0; v < 8; ++v) acc += b[v][y] * in[v * 8 + u];
      cols[y * 8 + u] = acc;
    }
  }
  Block out{};
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int u = 0; u < 8; ++u) acc += b[u][x] * cols[y * 8 + u];
      out[y * 8 + x] = acc;
    }
  }
  return out;
}

}  // namespace

void DefenseConfig::validate() const {
  switch (kind) {
    case DefenseKind::kJpeg:
      if (jpeg_quality < 1 || jpeg_quality > 100) {
        throw ConfigError("jpeg quality must be in 1..100");
      }
      break;
    case DefenseKind::kMedian:
      if (median_kernel < 3 || median_kernel % 2 == 0) {
        throw ConfigError("median kernel must be odd and >= 3");
      }
      break;
    case DefenseKind::kMseDetector:
      if (!(mse_threshold >= 0.0)) {
        throw ConfigError("mse threshold must be >= 0");
      }
      break;
    case DefenseKind::kPassThrough:
      break;
  }
}

std::string DefenseConfig::kind_name() const {
  switch (kind) {
    case DefenseKind::kPassThrough:
      return "none";
    case DefenseKind::kJpeg:
      return "jpeg";
    case DefenseKind::kMedian:
      return "median";
    case DefenseKind::kMseDetector:
      return "mse";
  }
  return "none";
}

std::string DefenseConfig::parameter() const {
  switch (kind) {
    case DefenseKind::kJpeg:
      return std::to_string(jpeg_quality);
    case DefenseKind::kMedian:
      return std::to_string(median_kernel);
    case DefenseKind::kMseDetector:
      return format_csv_real(mse_threshold);
    case DefenseKind::kPassThrough:
      break;
  }
  return "";
}

DefenseConfig parse_defense(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string arg =
      colon == std::string::npos ? std::string() : spec.substr(colon + 1);
  DefenseConfig config;
  try {
    if (kind == "none") {
      config.kind = DefenseKind::kPassThrough;
    } else if (kind == "jpeg") {
      config.kind = DefenseKind::kJpeg;
      if (!arg.empty()) config.jpeg_quality = std::stoi(arg);
    } else if (kind == "median") {
      config.kind = DefenseKind::kMedian;
      if (!arg.empty()) config.median_kernel = std::stoi(arg);
    } else if (kind == "mse") {
      config.kind = DefenseKind::kMseDetector;
      config.mse_threshold = arg.empty() ? -1.0 : std::stod(arg);
      if (arg.empty()) return config;  // threshold calibrated later
    } else {
      throw ConfigError("unknown defense '" + spec + "'");
    }
  } catch (const std::logic_error&) {
    throw ConfigError("bad defense parameter in '" + spec + "'");
  }
  config.validate();
  return config;
}

std::vector<int> jpeg_quant_table(int quality) {
  if (quality < 1 || quality > 100) {
    throw ConfigError("jpeg quality must be in 1..100");
  }
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::vector<int> table(64);
  for (std::size_t i = 0; i < 64; ++i) {
    table[i] = std::clamp((kLuminanceTable[i] * scale + 50) / 100, 1, 255);
  }
  return table;
}

Image jpeg_compress(const Image& image, int quality) {
  const auto table = jpeg_quant_table(quality);
  const int w = image.width();
  const int h = image.height();
  Image out(w, h, image.channels());
  for (int c = 0; c < image.channels(); ++c) {
    for (int by = 0; by < h; by += 8) {
      for (int bx = 0; bx < w; bx += 8) {
        Block block{};
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) {
            const int sx = std::min(bx + x, w - 1);
            const int sy = std::min(by + y, h - 1);
            block[y * 8 + x] = image.at(sx, sy, c) * 255.0 - 128.0;
          }
        }
        Block coef = forward_dct(block);
        for (std::size_t i = 0; i < 64; ++i) {
          coef[i] = std::round(coef[i] / table[i]) * table[i];
        }
        const Block rec = inverse_dct(coef);
        for (int y = 0; y < 8 && by + y < h; ++y) {
          for (int x = 0; x < 8 && bx + x < w; ++x) {
            out.at(bx + x, by + y, c) = clamp_unit((rec[y * 8 + x] + 128.0) / 255.0);
          }
        }
      }
    }
  }
  return out;
}

Image median_filter(const Image& image, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError("median kernel must be a positive odd integer");
  }
  const int r = kernel / 2;
  const int w = image.width();
  const int h = image.height();
  Image out(w, h, image.channels());
  std::vector<double> window(static_cast<std::size_t>(kernel) * kernel);
  const auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
  for (int c = 0; c < image.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        std::size_t k = 0;
        for (int dy = -r; dy <= r; ++dy) {
          const int sy = std::clamp(y + dy, 0, h - 1);
          for (int dx = -r; dx <= r; ++dx) {
            window[k++] = image.at(std::clamp(x + dx, 0, w - 1), sy, c);
          }
        }
        std::nth_element(window.begin(), mid, window.end());
        out.at(x, y, c) = *mid;
      }
    }
  }
  return out;
}

Detection mse_detect(const Image& prediction, const Image& reference,
                     double threshold) {
  const double m = mse(prediction, reference);
  return {m > threshold, m};
}

double calibrate_threshold(std::span<const double> clean_mses,
                           double fraction) {
  if (clean_mses.empty()) throw ConfigError("no clean samples to calibrate on");
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ConfigError("percentile fraction must lie in [0,1]");
  }
  std::vector<double> sorted(clean_mses.begin(), clean_mses.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = fraction * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return sorted[lo] + t * (sorted[hi] - sorted[lo]);
}

ImagePair apply_defense(const ImagePair& pair, const DefenseConfig& defense) {
  defense.validate();
  switch (defense.kind) {
    case DefenseKind::kJpeg:
      return ImagePair(jpeg_compress(pair.visible(), defense.jpeg_quality),
                       jpeg_compress(pair.infrared(), defense.jpeg_quality));
    case DefenseKind::kMedian:
      return ImagePair(median_filter(pair.visible(), defense.median_kernel),
                       median_filter(pair.infrared(), defense.median_kernel));
    case DefenseKind::kPassThrough:
    case DefenseKind::kMseDetector:
      break;
  }
  return pair;
}

DefenseResult attack_under_defense(const ImagePair& clean,
                                   const ImagePair& adversarial,
                                   const DefenseConfig& defense,
                                   const TargetModel& model,
                                   const GroundTruth& gt) {
  DefenseResult result;
  const ImagePair defended = apply_defense(adversarial, defense);
  result.metrics = evaluate_input(defended, clean, model, gt);
  if (defense.kind == DefenseKind::kMseDetector) {
    if (model.task() != Task::kCounting || !gt.points) {
      throw ConfigError(
          "the MSE detector needs a counting model and point annotations");
    }
    const CountOutput out = model.count(adversarial);
    if (!out.density) {
      throw OracleError("the MSE detector needs a density map from the model");
    }
    const Image reference =
        points_to_density(*gt.points, clean.width(), clean.height());
    result.detection = mse_detect(*out.density, reference, defense.mse_threshold);
  }
  return result;
}

}  // namespace vipatch
