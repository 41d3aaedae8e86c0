#include "vipatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>

#include "vipatch/errors.hpp"

namespace vipatch {
namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": operand shapes differ (" +
                         std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + "x" +
                         std::to_string(a.channels()) + " vs " +
                         std::to_string(b.width()) + "x" +
                         std::to_string(b.height()) + "x" +
                         std::to_string(b.channels()) + ")");
  }
}

void require_same_size(const Image& a, const Image& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionError(std::string(what) + ": operand sizes differ");
  }
}

// Base-cell index along one axis (eight cells, last absorbs the remainder).
int base_cell(int p, int length) {
  const int unit = length / 8;
  if (unit == 0) return 7;
  return std::min(p / unit, 7);
}

constexpr double kFixedScale = 1099511627776.0;  // 2^40

double ssim_channel(const Image& a, const Image& b, int c) {
  double total = 0.0;
  std::size_t tiles = 0;
  for (int ty = 0; ty < a.height(); ty += kSsimWindow) {
    const int y_end = std::min(a.height(), ty + kSsimWindow);
    for (int tx = 0; tx < a.width(); tx += kSsimWindow) {
      const int x_end = std::min(a.width(), tx + kSsimWindow);
      const double n = static_cast<double>((y_end - ty) * (x_end - tx));
      double sa = 0.0, sb = 0.0;
      for (int y = ty; y < y_end; ++y) {
        for (int x = tx; x < x_end; ++x) {
          sa += a.at(x, y, c);
          sb += b.at(x, y, c);
        }
      }
      const double mu_a = sa / n;
      const double mu_b = sb / n;
      double vaa = 0.0, vbb = 0.0, vab = 0.0;
      for (int y = ty; y < y_end; ++y) {
        for (int x = tx; x < x_end; ++x) {
          const double da = a.at(x, y, c) - mu_a;
          const double db = b.at(x, y, c) - mu_b;
          vaa += da * da;
          vbb += db * db;
          vab += da * db;
        }
      }
      vaa /= n;
      vbb /= n;
      vab /= n;
      const double num = (2.0 * mu_a * mu_b + kSsimC1) * (2.0 * vab + kSsimC2);
      const double den =
          (mu_a * mu_a + mu_b * mu_b + kSsimC1) * (vaa + vbb + kSsimC2);
      total += num / den;
      ++tiles;
    }
  }
  return total / static_cast<double>(tiles);
}

// Plain row-major real plane used by the VIF pyramid.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> v;

  double at(int x, int y) const {
    return v[static_cast<std::size_t>(y) * width + x];
  }
};

Plane scaled_plane(const Image& gray) {
  Plane p{gray.width(), gray.height(), {}};
  p.v.resize(gray.pixel_count());
  auto d = gray.data();
  for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = d[i] * 255.0;
  return p;
}

std::vector<double> gaussian_window(int n, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(n) * n);
  const double half = (n - 1) / 2.0;
  double sum = 0.0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double dx = x - half;
      const double dy = y - half;
      const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      w[static_cast<std::size_t>(y) * n + x] = g;
      sum += g;
    }
  }
  for (double& g : w) g /= sum;
  return w;
}

// 'valid' 2-D correlation.
Plane filter_valid(const Plane& in, const std::vector<double>& w, int n) {
  Plane out{in.width - n + 1, in.height - n + 1, {}};
  out.v.assign(static_cast<std::size_t>(out.width) * out.height, 0.0);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
          acc += w[static_cast<std::size_t>(j) * n + i] * in.at(x + i, y + j);
        }
      }
      out.v[static_cast<std::size_t>(y) * out.width + x] = acc;
    }
  }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out{a.width, a.height, std::vector<double>(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

Plane downsample(const Plane& in) {
  Plane out{(in.width + 1) / 2, (in.height + 1) / 2, {}};
  out.v.resize(static_cast<std::size_t>(out.width) * out.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      out.v[static_cast<std::size_t>(y) * out.width + x] = in.at(2 * x, 2 * y);
    }
  }
  return out;
}

// Pixel-domain VIF (four scales, Gaussian windows, noise variance 2 on the
// 0..255 scale). Scales whose window no longer fits are skipped.
double vif_pixel(const Image& reference, const Image& distorted) {
  constexpr double kSigmaNsq = 2.0;
  constexpr double kEps = 1e-10;
  Plane ref = scaled_plane(reference);
  Plane dist = scaled_plane(distorted);
  double num = 0.0;
  double den = 0.0;
  for (int scale = 1; scale <= 4; ++scale) {
    const int n = (1 << (4 - scale + 1)) + 1;
    const auto win = gaussian_window(n, n / 5.0);
    if (scale > 1) {
      if (ref.width < n || ref.height < n) break;
      ref = downsample(filter_valid(ref, win, n));
      dist = downsample(filter_valid(dist, win, n));
    }
    if (ref.width < n || ref.height < n) break;
    const Plane mu1 = filter_valid(ref, win, n);
    const Plane mu2 = filter_valid(dist, win, n);
    const Plane e11 = filter_valid(product(ref, ref), win, n);
    const Plane e22 = filter_valid(product(dist, dist), win, n);
    const Plane e12 = filter_valid(product(ref, dist), win, n);
    for (std::size_t i = 0; i < mu1.v.size(); ++i) {
      double s1 = std::max(0.0, e11.v[i] - mu1.v[i] * mu1.v[i]);
      const double s2 = std::max(0.0, e22.v[i] - mu2.v[i] * mu2.v[i]);
      const double s12 = e12.v[i] - mu1.v[i] * mu2.v[i];
      double g = s12 / (s1 + kEps);
      double sv = s2 - g * s12;
      if (s1 < kEps) {
        g = 0.0;
        sv = s2;
        s1 = 0.0;
      }
      if (s2 < kEps) {
        g = 0.0;
        sv = 0.0;
      }
      if (g < 0.0) {
        sv = s2;
        g = 0.0;
      }
      sv = std::max(sv, kEps);
      num += std::log10(1.0 + g * g * s1 / (sv + kSigmaNsq));
      den += std::log10(1.0 + s1 / kSigmaNsq);
    }
  }
  if (den <= 0.0) return 0.0;
  return num / den;
}

// Edge preservation of one source in the fused image (per-pixel Q^{AF}).
struct EdgeField {
  std::vector<double> strength;
  std::vector<double> angle;
};

EdgeField edge_field(const Image& gray) {
  const int w = gray.width();
  const int h = gray.height();
  EdgeField f;
  f.strength.resize(gray.pixel_count());
  f.angle.resize(gray.pixel_count());
  auto px = [&](int x, int y) {
    return gray.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1));
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) +
                         px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2.0 * px(x - 1, y) +
                         px(x - 1, y + 1));
      const double sy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) +
                         px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2.0 * px(x, y - 1) +
                         px(x + 1, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      f.strength[i] = std::sqrt(sx * sx + sy * sy);
      f.angle[i] = sx == 0.0 ? std::numbers::pi / 2.0 : std::atan(sy / sx);
    }
  }
  return f;
}

double edge_preservation(double g_src, double a_src, double g_fused,
                         double a_fused) {
  constexpr double kTg = 0.9994, kKg = -15.0, kDg = 0.5;
  constexpr double kTa = 0.9879, kKa = -22.0, kDa = 0.8;
  const double hi = std::max(g_src, g_fused);
  const double rel_strength = hi == 0.0 ? 0.0 : std::min(g_src, g_fused) / hi;
  const double rel_angle =
      1.0 - std::abs(a_src - a_fused) / (std::numbers::pi / 2.0);
  const double qg = kTg / (1.0 + std::exp(kKg * (rel_strength - kDg)));
  const double qa = kTa / (1.0 + std::exp(kKa * (rel_angle - kDa)));
  return qg * qa;
}

}  // namespace

// --- ClassMap ---------------------------------------------------------------

ClassMap::ClassMap(int width, int height, std::uint8_t fill)
    : width_(width),
      height_(height),
      labels_(static_cast<std::size_t>(width) * height, fill) {
  if (width <= 0 || height <= 0) {
    throw DimensionError("class map dimensions must be positive");
  }
}

ClassMap::ClassMap(int width, int height, std::vector<std::uint8_t> labels)
    : width_(width), height_(height), labels_(std::move(labels)) {
  if (width <= 0 || height <= 0) {
    throw DimensionError("class map dimensions must be positive");
  }
  if (labels_.size() != static_cast<std::size_t>(width) * height) {
    throw DimensionError("class map holds " + std::to_string(labels_.size()) +
                         " labels, expected " +
                         std::to_string(static_cast<std::size_t>(width) *
                                        height));
  }
}

// --- counting ---------------------------------------------------------------

double game(const Image& pred_density, std::span<const Point> gt, int k) {
  if (k < 0 || k > 3) {
    throw ConfigError("GAME level must be in 0..3, got " + std::to_string(k));
  }
  if (pred_density.channels() != 1) {
    throw DimensionError("GAME expects a single-channel density map");
  }
  const int w = pred_density.width();
  const int h = pred_density.height();

  std::array<long double, 64> cell_density{};
  for (int y = 0; y < h; ++y) {
    const int cy = base_cell(y, h);
    for (int x = 0; x < w; ++x) {
      const double v = pred_density.at(x, y);
      if (v < 0.0) throw DimensionError("density map holds a negative value");
      cell_density[static_cast<std::size_t>(cy * 8 + base_cell(x, w))] += v;
    }
  }
  std::array<std::int64_t, 64> cell_count{};
  for (const Point& p : gt) {
    if (!(p.x >= 0.0 && p.x < w && p.y >= 0.0 && p.y < h)) {
      throw DimensionError("annotation point outside image bounds");
    }
    const int cx = base_cell(static_cast<int>(p.x), w);
    const int cy = base_cell(static_cast<int>(p.y), h);
    ++cell_count[static_cast<std::size_t>(cy * 8 + cx)];
  }

  const int cells = 1 << k;
  const int shift = 3 - k;
  std::vector<std::int64_t> pred(static_cast<std::size_t>(cells) * cells, 0);
  std::vector<std::int64_t> truth(pred.size(), 0);
  const auto scale = static_cast<std::int64_t>(kFixedScale);
  for (int cy = 0; cy < 8; ++cy) {
    for (int cx = 0; cx < 8; ++cx) {
      const std::size_t base = static_cast<std::size_t>(cy * 8 + cx);
      const std::size_t j =
          static_cast<std::size_t>((cy >> shift) * cells + (cx >> shift));
      pred[j] += std::llround(cell_density[base] * kFixedScale);
      truth[j] += cell_count[base] * scale;
    }
  }
  std::int64_t total = 0;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    total += pred[j] > truth[j] ? pred[j] - truth[j] : truth[j] - pred[j];
  }
  return static_cast<double>(total) / kFixedScale;
}

double rmse(std::span<const double> pred_counts,
            std::span<const double> gt_counts) {
  if (pred_counts.size() != gt_counts.size() || pred_counts.empty()) {
    throw DimensionError("rmse needs two non-empty lists of equal length");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred_counts.size(); ++i) {
    const double d = pred_counts[i] - gt_counts[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred_counts.size()));
}

double mean_absolute_error(std::span<const double> pred_counts,
                           std::span<const double> gt_counts) {
  if (pred_counts.size() != gt_counts.size() || pred_counts.empty()) {
    throw DimensionError("mae needs two non-empty lists of equal length");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred_counts.size(); ++i) {
    acc += std::abs(pred_counts[i] - gt_counts[i]);
  }
  return acc / static_cast<double>(pred_counts.size());
}

// --- segmentation -----------------------------------------------------------

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : n_(num_classes),
      cells_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1 || num_classes > 256) {
    throw ConfigError("class count must be in 1..256");
  }
}

void ConfusionMatrix::accumulate(const ClassMap& pred, const ClassMap& gt) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) {
    throw DimensionError("class maps differ in size");
  }
  auto p = pred.labels();
  auto g = gt.labels();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] >= n_ || g[i] >= n_) {
      throw DimensionError("class label " +
                           std::to_string(std::max(p[i], g[i])) +
                           " out of range for " + std::to_string(n_) +
                           " classes");
    }
    ++cells_[static_cast<std::size_t>(g[i]) * n_ + p[i]];
  }
}

std::uint64_t ConfusionMatrix::row_sum(int i) const {
  std::uint64_t s = 0;
  for (int j = 0; j < n_; ++j) s += at(i, j);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(int j) const {
  std::uint64_t s = 0;
  for (int i = 0; i < n_; ++i) s += at(i, j);
  return s;
}

double ConfusionMatrix::mean_iou() const {
  double total = 0.0;
  int present = 0;
  for (int i = 0; i < n_; ++i) {
    const std::uint64_t row = row_sum(i);
    if (row == 0) continue;
    const std::uint64_t uni = row + col_sum(i) - at(i, i);
    total += static_cast<double>(at(i, i)) / static_cast<double>(uni);
    ++present;
  }
  return present == 0 ? 0.0 : total / present;
}

double ConfusionMatrix::mean_recall() const {
  double total = 0.0;
  int present = 0;
  for (int i = 0; i < n_; ++i) {
    if (row_sum(i) == 0) continue;
    const std::uint64_t predicted = col_sum(i);
    if (predicted > 0) {
      total += static_cast<double>(at(i, i)) / static_cast<double>(predicted);
    }
    ++present;
  }
  return present == 0 ? 0.0 : total / present;
}

double miou(const ClassMap& pred, const ClassMap& gt, int num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.accumulate(pred, gt);
  return cm.mean_iou();
}

double recall(const ClassMap& pred, const ClassMap& gt, int num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.accumulate(pred, gt);
  return cm.mean_recall();
}

// --- image similarity -------------------------------------------------------

double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  auto da = a.data();
  auto db = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = da[i] - db[i];
    acc += d * d;
  }
  return acc / static_cast<double>(da.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) total += ssim_channel(a, b, c);
  return total / a.channels();
}

// --- fusion -----------------------------------------------------------------

std::vector<double> sobel_magnitude(const Image& gray) {
  return edge_field(gray).strength;
}

double qabf(const Image& vis, const Image& inf, const Image& fused) {
  require_same_size(vis, fused, "qabf");
  require_same_size(inf, fused, "qabf");
  const EdgeField a = edge_field(to_grayscale(vis));
  const EdgeField b = edge_field(to_grayscale(inf));
  const EdgeField f = edge_field(to_grayscale(fused));
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < f.strength.size(); ++i) {
    const double qa =
        edge_preservation(a.strength[i], a.angle[i], f.strength[i], f.angle[i]);
    const double qb =
        edge_preservation(b.strength[i], b.angle[i], f.strength[i], f.angle[i]);
    num += qa * a.strength[i] + qb * b.strength[i];
    den += a.strength[i] + b.strength[i];
  }
  return den == 0.0 ? 0.0 : num / den;
}

double viff(const Image& vis, const Image& inf, const Image& fused) {
  require_same_size(vis, fused, "viff");
  require_same_size(inf, fused, "viff");
  const Image f = to_grayscale(fused);
  return 0.5 * (vif_pixel(to_grayscale(vis), f) + vif_pixel(to_grayscale(inf), f));
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw DimensionError("pearson needs equal-length non-empty inputs");
  }
  const auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
  };
  if (constant(a) || constant(b)) return 0.0;
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double cc(const Image& vis, const Image& inf, const Image& fused) {
  require_same_size(vis, fused, "cc");
  require_same_size(inf, fused, "cc");
  const Image f = to_grayscale(fused);
  const Image v = to_grayscale(vis);
  const Image i = to_grayscale(inf);
  return 0.5 * (pearson(f.data(), v.data()) + pearson(f.data(), i.data()));
}

FusionLosses fusion_losses(const Image& vis, const Image& inf,
                           const Image& fused) {
  require_same_size(vis, fused, "fusion_losses");
  require_same_size(inf, fused, "fusion_losses");
  const Image v = to_grayscale(vis);
  const Image i = to_grayscale(inf);
  const Image f = to_grayscale(fused);
  const auto gv = sobel_magnitude(v);
  const auto gi = sobel_magnitude(i);
  const auto gf = sobel_magnitude(f);
  auto dv = v.data();
  auto di = i.data();
  auto df = f.data();
  double inten = 0.0;
  double grad = 0.0;
  for (std::size_t p = 0; p < df.size(); ++p) {
    inten += std::abs(df[p] - std::max(dv[p], di[p]));
    grad += std::abs(gf[p] - std::max(gv[p], gi[p]));
  }
  const double n = static_cast<double>(df.size());
  return {inten / n, grad / n};
}

double fused_psnr(const Image& vis, const Image& inf, const Image& fused) {
  const Image f = to_grayscale(fused);
  return 0.5 * (psnr(f, to_grayscale(vis)) + psnr(f, to_grayscale(inf)));
}

double fused_ssim(const Image& vis, const Image& inf, const Image& fused) {
  const Image f = to_grayscale(fused);
  return 0.5 * (ssim(f, to_grayscale(vis)) + ssim(f, to_grayscale(inf)));
}

// --- MetricTable ------------------------------------------------------------

MetricTable::MetricTable() {
  values_.fill(std::numeric_limits<double>::quiet_NaN());
}

bool MetricTable::has(Metric m) const { return !std::isnan(get(m)); }

std::string_view MetricTable::name(Metric m) {
  static constexpr std::array<std::string_view, kMetricCount> kNames = {
      "game0",    "game1",    "game2",    "game3",     "rmse",      "miou",
      "recall",   "psnr_vis", "ssim_vis", "psnr_inf",  "ssim_inf",  "qabf",
      "viff",     "cc",       "psnr_fused", "ssim_fused"};
  return kNames[static_cast<std::size_t>(m)];
}

const std::array<Metric, kMetricCount>& MetricTable::all() {
  static const std::array<Metric, kMetricCount> kAll = [] {
    std::array<Metric, kMetricCount> a{};
    for (std::size_t i = 0; i < kMetricCount; ++i) a[i] = static_cast<Metric>(i);
    return a;
  }();
  return kAll;
}

std::string MetricTable::csv_header() {
  std::string out;
  for (Metric m : all()) {
    if (!out.empty()) out += ',';
    out += name(m);
  }
  return out;
}

std::string MetricTable::csv_row() const {
  std::string out;
  for (Metric m : all()) {
    if (m != Metric::kGame0) out += ',';
    out += format_csv_real(get(m));
  }
  return out;
}

std::string format_csv_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace vipatch
