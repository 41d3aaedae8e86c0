#include "vipatch/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "vipatch/fitness.hpp"

namespace vipatch {

MetricTable evaluate_input(const ImagePair& input, const ImagePair& clean,
                           const TargetModel& model, const GroundTruth& gt) {
  MetricTable table;
  switch (model.task()) {
    case Task::kCounting: {
      const CountOutput out = model.count(input);
      if (gt.points) {
        const double truth = static_cast<double>(gt.points->size());
        table.set(Metric::kRmse, std::abs(out.count - truth));
        if (out.density) {
          for (int k = 0; k <= 3; ++k) {
            table.set(static_cast<Metric>(static_cast<int>(Metric::kGame0) + k),
                      game(*out.density, *gt.points, k));
          }
        } else {
          table.set(Metric::kGame0, std::abs(out.count - truth));
        }
      }
      stealth_term(clean, input, &table);
      break;
    }
    case Task::kSegmentation: {
      const ClassMap pred = model.segment(input);
      const ClassMap reference = gt.labels ? *gt.labels : model.segment(clean);
      ConfusionMatrix cm(model.num_classes());
      cm.accumulate(pred, reference);
      table.set(Metric::kMiou, cm.mean_iou());
      table.set(Metric::kRecall, cm.mean_recall());
      stealth_term(clean, input, &table);
      break;
    }
    case Task::kFusion: {
      const Image fused = model.fuse(input);
      const Image& vis = clean.visible();
      const Image& inf = clean.infrared();
      table.set(Metric::kQabf, qabf(vis, inf, fused));
      table.set(Metric::kViff, viff(vis, inf, fused));
      table.set(Metric::kCc, cc(vis, inf, fused));
      table.set(Metric::kPsnrFused, fused_psnr(vis, inf, fused));
      table.set(Metric::kSsimFused, fused_ssim(vis, inf, fused));
      stealth_term(clean, input, &table);
      break;
    }
  }
  return table;
}

Image points_to_density(const PointAnnotations& points, int width, int height,
                        double sigma) {
  std::vector<double> acc(static_cast<std::size_t>(width) * height, 0.0);
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> splat;
  for (const Point& p : points) {
    const int cx = static_cast<int>(p.x);
    const int cy = static_cast<int>(p.y);
    if (cx < 0 || cy < 0 || cx >= width || cy >= height) continue;
    double mass = 0.0;
    splat.clear();
    for (int y = cy - r; y <= cy + r; ++y) {
      for (int x = cx - r; x <= cx + r; ++x) {
        if (x < 0 || y < 0 || x >= width || y >= height) continue;
        const double dx = x - cx;
        const double dy = y - cy;
        const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        splat.push_back(v);
        mass += v;
      }
    }
    std::size_t k = 0;
    for (int y = cy - r; y <= cy + r; ++y) {
      for (int x = cx - r; x <= cx + r; ++x) {
        if (x < 0 || y < 0 || x >= width || y >= height) continue;
        acc[static_cast<std::size_t>(y) * width + x] += splat[k++] / mass;
      }
    }
  }
  for (double& v : acc) v = std::min(v, 1.0);
  return Image::from_data(width, height, 1, std::move(acc));
}

}  // namespace vipatch
