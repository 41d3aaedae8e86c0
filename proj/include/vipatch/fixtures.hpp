#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vipatch/image.hpp"
#include "vipatch/metrics.hpp"

namespace vipatch {

// Synthetic "crowd" scenes: bright warm bodies on a cool, noisy infrared
// background, one dense cluster plus scattered individuals, with the
// matching visible image and point annotations. Intensities are quantized
// to 8 bits so in-memory fixtures equal their PNG files.
struct FixtureOptions {
  int width = 200;
  int height = 180;
  int body_radius = 4;
  int min_cluster = 10;
  int max_cluster = 16;
  int cluster_radius = 28;
  int min_singles = 3;
  int max_singles = 6;
  double min_spacing = 11.0;
};

struct Fixture {
  std::string name;
  ImagePair pair;
  PointAnnotations points;
};

Fixture make_fixture(std::uint64_t seed, const std::string& name,
                     const FixtureOptions& options = {});

// `count` fixtures named fixture_000, fixture_001, ... seeded from `seed`.
std::vector<Fixture> make_fixtures(std::size_t count, std::uint64_t seed,
                                   const FixtureOptions& options = {});

// Writes <name>_vis.png, <name>_inf.png and <name>_points.csv.
void write_fixture(const Fixture& fixture, const std::filesystem::path& dir);

PointAnnotations load_points(const std::filesystem::path& path);
void save_points(const PointAnnotations& points,
                 const std::filesystem::path& path);

}  // namespace vipatch
