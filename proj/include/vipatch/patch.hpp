#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vipatch/bounds.hpp"
#include "vipatch/image.hpp"

namespace vipatch {

struct Color {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  friend bool operator==(const Color&, const Color&) = default;
};

// One candidate patch: integer center, radius and the cyclic color list.
struct PatchGenome {
  int x = 0;
  int y = 0;
  int r = 1;
  std::vector<Color> colors;

  friend bool operator==(const PatchGenome&, const PatchGenome&) = default;
};

// Affine infrared intensity compression applied to the grayscale of each
// patch color: beta * gray + gamma. beta = 1, gamma = 0 disables reuse.
struct CompressionParams {
  double beta = 0.5;
  double gamma = 0.25;

  static CompressionParams identity() { return {1.0, 0.0}; }
};

// Which modalities receive the patch.
enum class PatchTarget { kBoth, kVisibleOnly, kInfraredOnly };

// Describes how a flat DE vector maps onto a genome:
//   [x, y, (r), R1, G1, B1, ..., Rn, Gn, Bn]
// When frozen_colors is non-empty the color block is absent from the vector
// and those colors are used verbatim.
struct ParamLayout {
  int radius = 40;  // used when the radius is not optimized
  bool optimize_radius = false;
  int min_radius = 1;  // search range when optimize_radius is set
  int max_radius = 40;
  std::size_t color_count = 10;
  std::vector<Color> frozen_colors;

  std::size_t spatial_dims() const { return optimize_radius ? 3 : 2; }
  bool colors_in_vector() const { return frozen_colors.empty(); }
  std::size_t dimension() const {
    return spatial_dims() + (colors_in_vector() ? 3 * color_count : 0);
  }
};

// Per-dimension search bounds honoring center feasibility for the image size.
Bounds param_bounds(const ParamLayout& layout, int width, int height);

// Rounds positions half-up, clamps them into the feasible region and colors
// into [0, 1].
PatchGenome decode(std::span<const double> values, const ParamLayout& layout,
                   int width, int height);
std::vector<double> encode(const PatchGenome& genome, const ParamLayout& layout);

// Throws FeasibilityError when the genome cannot be rendered at this size.
void check_feasible(const PatchGenome& genome, int width, int height);

Mask genome_mask(const PatchGenome& genome, int width, int height);

// The k-th mask pixel in row-major order gets colors[k mod n]. Off-mask
// pixels are zero.
Image render_visible(const PatchGenome& genome, int width, int height);
Image render_infrared(const PatchGenome& genome, int width, int height,
                      const CompressionParams& compression);

struct RenderedPatch {
  Image visible_content;
  Image infrared_content;
  Mask mask;
};

RenderedPatch render(const PatchGenome& genome, int width, int height,
                     const CompressionParams& compression);

// Produces the adversarial pair; the clean pair is not modified.
ImagePair apply(const PatchGenome& genome, const ImagePair& pair,
                const CompressionParams& compression,
                PatchTarget target = PatchTarget::kBoth);

// Flat text record: "x y r n R1 G1 B1 ... Rn Gn Bn".
std::string to_record(const PatchGenome& genome);
PatchGenome parse_record(const std::string& line);

}  // namespace vipatch
