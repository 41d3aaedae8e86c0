#include "vipatch/patch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "vipatch/errors.hpp"

namespace vipatch {
namespace {

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

int max_feasible_radius(int width, int height) {
  return std::min(width, height) / 2;
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Bounds param_bounds(const ParamLayout& layout, int width, int height) {
  const int limit = max_feasible_radius(width, height);
  Bounds bounds;
  bounds.reserve(layout.dimension());
  int r_low = layout.radius;
  if (layout.optimize_radius) {
    if (layout.min_radius < 1 || layout.min_radius > layout.max_radius) {
      throw ConfigError("invalid radius search range [" +
                        std::to_string(layout.min_radius) + ", " +
                        std::to_string(layout.max_radius) + "]");
    }
    r_low = layout.min_radius;
  } else if (layout.radius < 1) {
    throw ConfigError("patch radius must be >= 1");
  }
  if (r_low > limit) {
    throw FeasibilityError("radius " + std::to_string(r_low) +
                           " does not fit a " + std::to_string(width) + "x" +
                           std::to_string(height) + " image");
  }
  bounds.push_back({static_cast<double>(r_low),
                    static_cast<double>(width - r_low)});
  bounds.push_back({static_cast<double>(r_low),
                    static_cast<double>(height - r_low)});
  if (layout.optimize_radius) {
    bounds.push_back({static_cast<double>(layout.min_radius),
                      static_cast<double>(std::min(layout.max_radius, limit))});
  }
  if (layout.colors_in_vector()) {
    for (std::size_t i = 0; i < 3 * layout.color_count; ++i) {
      bounds.push_back({0.0, 1.0});
    }
  }
  return bounds;
}

PatchGenome decode(std::span<const double> values, const ParamLayout& layout,
                   int width, int height) {
  if (values.size() != layout.dimension()) {
    throw DimensionError("parameter vector has " +
                         std::to_string(values.size()) +
                         " entries, layout expects " +
                         std::to_string(layout.dimension()));
  }
  PatchGenome genome;
  const int limit = max_feasible_radius(width, height);
  if (layout.optimize_radius) {
    genome.r = std::clamp(round_half_up(values[2]), layout.min_radius,
                          std::min(layout.max_radius, limit));
  } else {
    genome.r = layout.radius;
  }
  genome.r = std::clamp(genome.r, 1, std::max(1, limit));
  genome.x = std::clamp(round_half_up(values[0]), genome.r, width - genome.r);
  genome.y = std::clamp(round_half_up(values[1]), genome.r, height - genome.r);

  if (layout.colors_in_vector()) {
    if (layout.color_count == 0) throw ConfigError("color count must be >= 1");
    const std::size_t base = layout.spatial_dims();
    genome.colors.resize(layout.color_count);
    for (std::size_t k = 0; k < layout.color_count; ++k) {
      genome.colors[k] = {clamp_unit(values[base + 3 * k]),
                          clamp_unit(values[base + 3 * k + 1]),
                          clamp_unit(values[base + 3 * k + 2])};
    }
  } else {
    genome.colors = layout.frozen_colors;
  }
  return genome;
}

std::vector<double> encode(const PatchGenome& genome,
                           const ParamLayout& layout) {
  std::vector<double> values;
  values.reserve(layout.dimension());
  values.push_back(genome.x);
  values.push_back(genome.y);
  if (layout.optimize_radius) values.push_back(genome.r);
  if (layout.colors_in_vector()) {
    if (genome.colors.size() != layout.color_count) {
      throw DimensionError("genome carries " +
                           std::to_string(genome.colors.size()) +
                           " colors, layout expects " +
                           std::to_string(layout.color_count));
    }
    for (const Color& c : genome.colors) {
      values.push_back(c.r);
      values.push_back(c.g);
      values.push_back(c.b);
    }
  }
  return values;
}

void check_feasible(const PatchGenome& genome, int width, int height) {
  if (genome.colors.empty()) {
    throw FeasibilityError("patch color list is empty");
  }
  for (const Color& c : genome.colors) {
    for (double v : {c.r, c.g, c.b}) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw FeasibilityError("patch color component outside [0,1]");
      }
    }
  }
  // disk_mask validates the center and radius.
  (void)disk_mask(genome.x, genome.y, genome.r, width, height);
}

Mask genome_mask(const PatchGenome& genome, int width, int height) {
  if (genome.colors.empty()) {
    throw FeasibilityError("patch color list is empty");
  }
  return disk_mask(genome.x, genome.y, genome.r, width, height);
}

Image render_visible(const PatchGenome& genome, int width, int height) {
  const Mask mask = genome_mask(genome, width, height);
  Image out(width, height, 3);
  const std::size_t n = genome.colors.size();
  std::size_t k = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!mask.test(x, y)) continue;
      const Color& c = genome.colors[k++ % n];
      out.at(x, y, 0) = c.r;
      out.at(x, y, 1) = c.g;
      out.at(x, y, 2) = c.b;
    }
  }
  return out;
}

Image render_infrared(const PatchGenome& genome, int width, int height,
                      const CompressionParams& compression) {
  const Mask mask = genome_mask(genome, width, height);
  const std::size_t n = genome.colors.size();
  std::vector<double> levels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Color& c = genome.colors[i];
    levels[i] = clamp_unit(compression.beta * clamp_unit(luma(c.r, c.g, c.b)) +
                           compression.gamma);
  }
  Image out(width, height, 1);
  std::size_t k = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (mask.test(x, y)) out.at(x, y) = levels[k++ % n];
    }
  }
  return out;
}

RenderedPatch render(const PatchGenome& genome, int width, int height,
                     const CompressionParams& compression) {
  return {render_visible(genome, width, height),
          render_infrared(genome, width, height, compression),
          genome_mask(genome, width, height)};
}

ImagePair apply(const PatchGenome& genome, const ImagePair& pair,
                const CompressionParams& compression, PatchTarget target) {
  const int w = pair.width();
  const int h = pair.height();
  check_feasible(genome, w, h);
  const Mask mask = genome_mask(genome, w, h);
  Image visible = target == PatchTarget::kInfraredOnly
                      ? pair.visible()
                      : embed_patch(pair.visible(),
                                    render_visible(genome, w, h), mask);
  Image infrared =
      target == PatchTarget::kVisibleOnly
          ? pair.infrared()
          : embed_patch(pair.infrared(),
                        render_infrared(genome, w, h, compression), mask);
  return ImagePair(std::move(visible), std::move(infrared));
}

std::string to_record(const PatchGenome& genome) {
  std::ostringstream os;
  os << genome.x << ' ' << genome.y << ' ' << genome.r << ' '
     << genome.colors.size();
  for (const Color& c : genome.colors) {
    os << ' ' << format_real(c.r) << ' ' << format_real(c.g) << ' '
       << format_real(c.b);
  }
  return os.str();
}

PatchGenome parse_record(const std::string& line) {
  std::istringstream is(line);
  PatchGenome genome;
  std::size_t n = 0;
  if (!(is >> genome.x >> genome.y >> genome.r >> n) || n == 0) {
    throw FormatError("malformed genome record header: '" + line + "'");
  }
  genome.colors.resize(n);
  for (Color& c : genome.colors) {
    if (!(is >> c.r >> c.g >> c.b)) {
      throw FormatError("genome record declares " + std::to_string(n) +
                        " colors but holds fewer");
    }
  }
  std::string extra;
  if (is >> extra) throw FormatError("trailing data in genome record");
  return genome;
}

}  // namespace vipatch
