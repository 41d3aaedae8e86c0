#include "vipatch/fixtures.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "vipatch/errors.hpp"

namespace vipatch {
namespace {

double quantize(double v) { return std::round(clamp_unit(v) * 255.0) / 255.0; }

bool far_enough(const PointAnnotations& points, double x, double y,
                double spacing) {
  for (const Point& p : points) {
    const double dx = p.x - x;
    const double dy = p.y - y;
    if (dx * dx + dy * dy < spacing * spacing) return false;
  }
  return true;
}

}  // namespace

Fixture make_fixture(std::uint64_t seed, const std::string& name,
                     const FixtureOptions& o) {
  if (o.width < 4 * o.cluster_radius || o.height < 4 * o.cluster_radius) {
    throw ConfigError("fixture too small for its cluster radius");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto uniform_int = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };

  const int w = o.width;
  const int h = o.height;
  const int margin = o.body_radius + 2;

  PointAnnotations points;
  const double cx = uniform(o.cluster_radius + margin + 8.0,
                            w - o.cluster_radius - margin - 8.0);
  const double cy = uniform(o.cluster_radius + margin + 8.0,
                            h - o.cluster_radius - margin - 8.0);
  const int cluster = uniform_int(o.min_cluster, o.max_cluster);
  for (int attempt = 0; attempt < 5000 && static_cast<int>(points.size()) < cluster;
       ++attempt) {
    const double a = uniform(0.0, 2.0 * 3.14159265358979323846);
    const double d = o.cluster_radius * std::sqrt(unit(rng));
    const double x = std::round(cx + d * std::cos(a));
    const double y = std::round(cy + d * std::sin(a));
    if (far_enough(points, x, y, o.min_spacing)) points.push_back({x, y});
  }
  const int singles = uniform_int(o.min_singles, o.max_singles);
  const std::size_t target = points.size() + static_cast<std::size_t>(singles);
  for (int attempt = 0; attempt < 5000 && points.size() < target; ++attempt) {
    const double x = uniform_int(margin, w - margin - 1);
    const double y = uniform_int(margin, h - margin - 1);
    if (far_enough(points, x, y, 1.6 * o.min_spacing)) points.push_back({x, y});
  }

  // Backgrounds: a cool infrared floor with sensor noise and a mild vertical
  // gradient; a textured, muted visible scene.
  Image infrared(w, h, 1);
  Image visible(w, h, 3);
  const double base_r = uniform(0.30, 0.45);
  const double base_g = uniform(0.32, 0.48);
  const double base_b = uniform(0.25, 0.40);
  for (int y = 0; y < h; ++y) {
    const double tilt = 0.04 * (static_cast<double>(y) / h);
    for (int x = 0; x < w; ++x) {
      infrared.at(x, y) = 0.16 + tilt + uniform(-0.04, 0.04);
      const double texture = 0.06 * std::sin(0.21 * x + 0.13 * y) +
                             uniform(-0.05, 0.05);
      visible.at(x, y, 0) = base_r + texture;
      visible.at(x, y, 1) = base_g + texture;
      visible.at(x, y, 2) = base_b + texture;
    }
  }

  const int r = o.body_radius;
  for (const Point& p : points) {
    const double heat = uniform(0.85, 0.95);
    const double cr = uniform(0.45, 0.9);
    const double cg = uniform(0.3, 0.7);
    const double cb = uniform(0.2, 0.6);
    const int px = static_cast<int>(p.x);
    const int py = static_cast<int>(p.y);
    for (int y = py - r; y <= py + r; ++y) {
      for (int x = px - r; x <= px + r; ++x) {
        if (x < 0 || y < 0 || x >= w || y >= h) continue;
        if ((x - px) * (x - px) + (y - py) * (y - py) > r * r) continue;
        infrared.at(x, y) = heat + uniform(-0.02, 0.02);
        visible.at(x, y, 0) = cr;
        visible.at(x, y, 1) = cg;
        visible.at(x, y, 2) = cb;
      }
    }
  }

  for (double& v : infrared.data()) v = quantize(v);
  for (double& v : visible.data()) v = quantize(v);
  return {name, ImagePair(std::move(visible), std::move(infrared)),
          std::move(points)};
}

std::vector<Fixture> make_fixtures(std::size_t count, std::uint64_t seed,
                                   const FixtureOptions& options) {
  std::vector<Fixture> out;
  out.reserve(count);
  std::seed_seq seq{seed};
  std::vector<std::uint32_t> seeds(2 * count);
  seq.generate(seeds.begin(), seeds.end());
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s =
        (static_cast<std::uint64_t>(seeds[2 * i]) << 32) | seeds[2 * i + 1];
    char name[32];
    std::snprintf(name, sizeof(name), "fixture_%03zu", i);
    out.push_back(make_fixture(s, name, options));
  }
  return out;
}

void save_points(const PointAnnotations& points,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "x,y\n";
  for (const Point& p : points) out << p.x << ',' << p.y << '\n';
}

PointAnnotations load_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  PointAnnotations points;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "x,y") continue;
    std::istringstream is(line);
    Point p;
    char comma = 0;
    if (!(is >> p.x >> comma >> p.y) || comma != ',') {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 'x,y'");
    }
    points.push_back(p);
  }
  return points;
}

void write_fixture(const Fixture& fixture, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_image(fixture.pair.visible(), dir / (fixture.name + "_vis.png"));
  save_image(fixture.pair.infrared(), dir / (fixture.name + "_inf.png"));
  save_points(fixture.points, dir / (fixture.name + "_points.csv"));
}

}  // namespace vipatch
