#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "vipatch/errors.hpp"
#include "vipatch/image.hpp"

using namespace vipatch;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "vipatch_test_imagecore";
  fs::create_directories(dir);
  return dir / name;
}

Image random_bytes_image(std::mt19937_64& rng, int w, int h, int c) {
  std::uniform_int_distribution<int> b(0, 255);
  Image img(w, h, c);
  for (double& v : img.data()) v = b(rng) / 255.0;
  return img;
}

}  // namespace

TEST_CASE("image construction validates data") {
  CHECK_THROWS_AS(Image::from_data(2, 2, 1, {0.0, 0.5, 1.0}), DimensionError);
  CHECK_THROWS_AS(Image::from_data(1, 1, 1, {1.5}), DimensionError);
  const Image img = Image::from_data(2, 1, 1, {0.25, 0.75});
  CHECK(img.at(1, 0) == 0.75);
  CHECK_THROWS_AS(ImagePair(Image(4, 4, 3), Image(4, 5, 1)), DimensionError);
  CHECK_THROWS_AS(ImagePair(Image(4, 4, 1), Image(4, 4, 1)), DimensionError);
}

TEST_CASE("embed_patch with empty and full masks") {
  std::mt19937_64 rng(1);
  const Image base = oracle::random_image(rng, 6, 5, 3);
  const Image patch = oracle::random_image(rng, 6, 5, 3);
  Mask none(6, 5);
  CHECK(embed_patch(base, patch, none) == base);
  Mask all(6, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x) all.set(x, y);
  CHECK(embed_patch(base, patch, all) == patch);
}

TEST_CASE("embed_patch r=1 disk on a 4x4 base matches a pixel loop") {
  const Image base(4, 4, 1, 0.5);
  const Image ones(4, 4, 1, 1.0);
  const Mask mask = disk_mask(2, 2, 1, 4, 4);
  const Image out = embed_patch(base, ones, mask);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      const int dx = x - 2, dy = y - 2;
      const double want = dx * dx + dy * dy <= 1 ? 1.0 : 0.5;
      CHECK(out.at(x, y) == want);
    }
  }
}

TEST_CASE("embed_patch rejects mismatched shapes") {
  CHECK_THROWS_AS(embed_patch(Image(4, 4, 3), Image(4, 4, 1), Mask(4, 4)),
                  DimensionError);
  CHECK_THROWS_AS(embed_patch(Image(4, 4, 1), Image(4, 4, 1), Mask(3, 4)),
                  DimensionError);
}

TEST_CASE("disk_mask r=1 at (5,5) in 10x10 sets five pixels") {
  const Mask m = disk_mask(5, 5, 1, 10, 10);
  int count = 0;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) count += m.test(x, y) ? 1 : 0;
  CHECK(count == 5);
  CHECK(m.count() == 5);
  CHECK(m.test(5, 5));
  CHECK(m.test(4, 5));
  CHECK(m.test(6, 5));
  CHECK(m.test(5, 4));
  CHECK(m.test(5, 6));
}

TEST_CASE("disk_mask feasibility bounds") {
  CHECK_THROWS_AS(disk_mask(5, 5, 0, 10, 10), FeasibilityError);
  CHECK_NOTHROW(disk_mask(3, 3, 3, 10, 10));
  CHECK_NOTHROW(disk_mask(7, 7, 3, 10, 10));
  CHECK_THROWS_AS(disk_mask(2, 5, 3, 10, 10), FeasibilityError);
  CHECK_THROWS_AS(disk_mask(8, 5, 3, 10, 10), FeasibilityError);
  CHECK_THROWS_AS(disk_mask(5, 2, 3, 10, 10), FeasibilityError);
  CHECK_THROWS_AS(disk_mask(5, 8, 3, 10, 10), FeasibilityError);
  try {
    disk_mask(8, 5, 3, 10, 10);
  } catch (const FeasibilityError& e) {
    CHECK(std::string(e.what()).find("w-r") != std::string::npos);
  }
}

TEST_CASE("disk_mask r=40 count respects the Gauss circle bound") {
  const Mask m = disk_mask(320, 240, 40, 640, 480);
  long brute = 0;
  for (int y = 0; y < 480; ++y)
    for (int x = 0; x < 640; ++x) {
      const long dx = x - 320, dy = y - 240;
      brute += dx * dx + dy * dy <= 1600 ? 1 : 0;
    }
  CHECK(static_cast<long>(m.count()) == brute);
  const double area = M_PI * 40 * 40;
  CHECK(brute >= area - 160);
  CHECK(brute <= area + 160);
}

TEST_CASE("grayscale weights") {
  const Image white = Image::from_data(1, 1, 3, {1, 1, 1});
  CHECK(to_grayscale(white).at(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  const Image red = Image::from_data(1, 1, 3, {1, 0, 0});
  CHECK(to_grayscale(red).at(0, 0) == doctest::Approx(0.299).epsilon(1e-15));
  const Image gray = Image::from_data(1, 1, 3, {0.5, 0.5, 0.5});
  CHECK(to_grayscale(gray).at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  const Image one = Image::from_data(1, 1, 1, {0.3});
  CHECK(to_grayscale(one) == one);
}

TEST_CASE("8-bit intensity mapping") {
  CHECK(to_byte(1.0) == 255);
  CHECK(to_byte(0.0) == 0);
  CHECK(to_byte(128.0 / 255.0) == 128);
  for (int v = 0; v < 256; ++v) CHECK(to_byte(v / 255.0) == v);
}

TEST_CASE("PNG round trip is lossless for 8-bit data") {
  std::mt19937_64 rng(5);
  for (int c : {1, 3}) {
    const Image img = random_bytes_image(rng, 17, 9, c);
    const fs::path p = temp_file("rt" + std::to_string(c) + ".png");
    save_image(img, p);
    const Image back = load_image(p);
    CHECK(back == img);
    save_image(back, p);
    CHECK(load_image(p) == img);
    CHECK(decode_png(encode_png(img)) == img);
  }
}

TEST_CASE("PNG errors") {
  const fs::path p = temp_file("garbage.png");
  {
    std::FILE* f = std::fopen(p.c_str(), "wb");
    std::fputs("not a png", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_image(p), FormatError);
  CHECK_THROWS_AS(load_image(temp_file("missing.png")), IoError);
  CHECK_THROWS_AS(Image(2, 2, 2), DimensionError);
}

TEST_CASE("modality loaders fix channel counts") {
  std::mt19937_64 rng(9);
  const Image gray = random_bytes_image(rng, 5, 4, 1);
  const fs::path gp = temp_file("gray.png");
  save_image(gray, gp);
  const Image vis = load_visible(gp);
  CHECK(vis.channels() == 3);
  CHECK(vis.at(2, 1, 0) == gray.at(2, 1));
  CHECK(vis.at(2, 1, 2) == gray.at(2, 1));

  const Image rgb = gray_to_rgb(gray);
  const fs::path rp = temp_file("rgb.png");
  save_image(rgb, rp);
  const Image ir = load_infrared(rp);
  CHECK(ir.channels() == 1);
  CHECK(ir == gray);
}
