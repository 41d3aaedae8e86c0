#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "vipatch/defenses.hpp"
#include "vipatch/errors.hpp"
#include "vipatch/fixtures.hpp"
#include "vipatch/patch.hpp"

using namespace vipatch;

namespace {

double max_abs_diff(const Image& a, const Image& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

Image gradient(int w, int h) {
  Image img(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(x, y) = std::round(255.0 * (x + y) / (w + h - 2)) / 255.0;
  return img;
}

}  // namespace

TEST_CASE("defense spec parsing") {
  CHECK(parse_defense("none").kind == DefenseKind::kPassThrough);
  const DefenseConfig j = parse_defense("jpeg:50");
  CHECK(j.kind == DefenseKind::kJpeg);
  CHECK(j.jpeg_quality == 50);
  CHECK(j.kind_name() == "jpeg");
  CHECK(j.parameter() == "50");
  CHECK(parse_defense("jpeg").jpeg_quality == 75);
  CHECK(parse_defense("median:5").median_kernel == 5);
  CHECK(parse_defense("mse:0.25").mse_threshold == 0.25);
  CHECK(parse_defense("mse").mse_threshold < 0.0);
  CHECK_THROWS_AS(parse_defense("blur"), ConfigError);
  CHECK_THROWS_AS(parse_defense("jpeg:0"), ConfigError);
  CHECK_THROWS_AS(parse_defense("median:4"), ConfigError);
  CHECK_THROWS_AS(parse_defense("jpeg:abc"), ConfigError);
}

TEST_CASE("jpeg quantization table") {
  const auto q50 = jpeg_quant_table(50);
  REQUIRE(q50.size() == 64);
  CHECK(q50[0] == 16);
  CHECK(q50[63] == 99);
  for (int v : jpeg_quant_table(100)) CHECK(v == 1);
  const auto q10 = jpeg_quant_table(10);
  for (std::size_t i = 0; i < 64; ++i) CHECK(q10[i] >= q50[i]);
}

TEST_CASE("jpeg at quality 100 is nearly lossless") {
  const Image g = gradient(37, 29);
  CHECK(max_abs_diff(jpeg_compress(g, 100), g) <= 2.0 / 255.0 + 1e-12);
}

TEST_CASE("jpeg preserves constant images at moderate quality") {
  for (int q : {50, 75, 90, 100}) {
    for (double v : {0.0, 0.2, 0.5, 0.8, 1.0}) {
      const Image flat(20, 12, 3, std::round(v * 255.0) / 255.0);
      CHECK(max_abs_diff(jpeg_compress(flat, q), flat) <= 1.0 / 255.0 + 1e-12);
    }
  }
}

TEST_CASE("jpeg fidelity falls with quality") {
  std::mt19937_64 rng(4);
  const Fixture f = make_fixture(3, "q");
  double prev = 1e9;
  for (int q : {90, 75, 50, 25}) {
    const double p = psnr(f.pair.visible(), jpeg_compress(f.pair.visible(), q));
    CHECK(p < prev);
    prev = p;
  }
  const Image out = jpeg_compress(oracle::random_image(rng, 9, 9, 1), 30);
  for (double v : out.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("median filter") {
  const Image flat(10, 10, 3, 0.4);
  CHECK(median_filter(flat, 3) == flat);

  Image impulse(9, 9, 1, 0.1);
  impulse.at(4, 4) = 1.0;
  CHECK(median_filter(impulse, 3) == Image(9, 9, 1, 0.1));

  std::mt19937_64 rng(6);
  for (int k : {3, 5}) {
    const Image img = oracle::random_image(rng, 16, 16, 3);
    const Image out = median_filter(img, k);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
          CHECK(out.at(x, y, c) == oracle::median_at(img, x, y, c, k));
    double lo = 1.0, hi = 0.0, olo = 1.0, ohi = 0.0;
    for (double v : img.data()) lo = std::min(lo, v), hi = std::max(hi, v);
    for (double v : out.data()) olo = std::min(olo, v), ohi = std::max(ohi, v);
    CHECK(olo >= lo);
    CHECK(ohi <= hi);
  }
  // a median-filtered step edge is a fixed point
  Image step(8, 8, 1, 0.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 4; x < 8; ++x) step.at(x, y) = 1.0;
  const Image once = median_filter(step, 3);
  CHECK(median_filter(once, 3) == once);
}

TEST_CASE("mse detector and calibration") {
  std::mt19937_64 rng(7);
  const Image a = oracle::random_image(rng, 12, 12, 1);
  const Image b = oracle::random_image(rng, 12, 12, 1);
  CHECK(mse_detect(a, b, 0.0).mse == mse_detect(b, a, 0.0).mse);
  CHECK(mse_detect(a, b, 0.0).flagged);
  CHECK(!mse_detect(a, a, 0.0).flagged);
  CHECK(!mse_detect(a, b, 1.0).flagged);

  const std::vector<double> v = {5, 1, 4, 2, 3};
  CHECK(calibrate_threshold(v, 0.5) == 3.0);
  CHECK(calibrate_threshold(v, 1.0) == 5.0);
  CHECK(calibrate_threshold(v, 0.0) == 1.0);
  CHECK(calibrate_threshold(v, 0.95) == doctest::Approx(4.8));
  CHECK_THROWS_AS(calibrate_threshold(std::vector<double>{}, 0.95), ConfigError);
}

TEST_CASE("pass-through leaves metrics unchanged") {
  const SurrogateCounter model;
  const Fixture f = make_fixture(11, "p");
  GroundTruth gt;
  gt.points = f.points;
  PatchGenome g;
  g.x = 100;
  g.y = 90;
  g.r = 20;
  g.colors = {Color{1, 1, 1}};
  const ImagePair adv = apply(g, f.pair, CompressionParams{});
  const DefenseResult r =
      attack_under_defense(f.pair, adv, parse_defense("none"), model, gt);
  const MetricTable direct = evaluate_input(adv, f.pair, model, gt);
  CHECK(r.metrics.csv_row() == direct.csv_row());
  CHECK(!r.detection.has_value());

  const DefenseResult d =
      attack_under_defense(f.pair, adv, parse_defense("mse:0"), model, gt);
  REQUIRE(d.detection.has_value());
  CHECK(d.detection->flagged);
  CHECK_THROWS_AS(
      attack_under_defense(f.pair, adv, parse_defense("mse"), model, gt),
      ConfigError);
}

TEST_CASE("median removes a one-pixel texture but not a solid patch") {
  const SurrogateCounter model;
  const ImagePair clean(Image(60, 60, 3, 0.0), Image(60, 60, 1, 0.0));
  Image checker(60, 60, 1, 0.0);
  for (int y = 20; y < 40; ++y)
    for (int x = 20; x < 40; ++x)
      if (x % 3 == 0 && y % 3 == 0) checker.at(x, y) = 1.0;
  const ImagePair textured(Image(60, 60, 3, 0.0), checker);
  const ImagePair median_tex = apply_defense(textured, parse_defense("median:3"));
  CHECK(median_tex.infrared() == clean.infrared());

  PatchGenome g;
  g.x = 30;
  g.y = 30;
  g.r = 10;
  g.colors = {Color{1, 1, 1}};
  const ImagePair solid = apply(g, clean, CompressionParams{});
  const ImagePair defended = apply_defense(solid, parse_defense("median:3"));
  CHECK(model.count(defended).count == model.count(solid).count);
}
