// Acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "vipatch/attack.hpp"
#include "vipatch/de.hpp"
#include "vipatch/defenses.hpp"
#include "vipatch/errors.hpp"
#include "vipatch/fixtures.hpp"
#include "vipatch/log.hpp"
#include "vipatch/metrics.hpp"
#include "vipatch/patch.hpp"

using namespace vipatch;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s  %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// --- metric oracles ---------------------------------------------------------

void metric_oracles() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> dim(1, 32);
  std::uniform_int_distribution<int> classes_d(2, 6);
  double worst = 0.0;
  std::string worst_name = "none";
  auto check = [&](const char* name, double got, double want) {
    const double d = std::abs(got - want);
    if (!(d <= worst) || std::isnan(d)) {
      worst = std::isnan(d) ? INFINITY : d;
      worst_name = name;
    }
  };
  for (int trial = 0; trial < 100; ++trial) {
    const int w = dim(rng);
    const int h = dim(rng);
    const Image vis = oracle::random_image(rng, w, h, 3);
    const Image inf = oracle::random_image(rng, w, h, 1);
    const Image fused = oracle::random_image(rng, w, h, 1);
    const Image vis2 = oracle::random_image(rng, w, h, 3);
    const Image density = oracle::random_density(rng, w, h);
    const auto points = oracle::random_points(rng, w, h, 12);
    for (int k = 0; k <= 3; ++k) {
      check("game", game(density, points, k), oracle::game(density, points, k));
    }
    std::vector<double> pc(static_cast<std::size_t>(w)), gc(pc.size());
    std::uniform_real_distribution<double> cnt(0.0, 50.0);
    for (std::size_t i = 0; i < pc.size(); ++i) {
      pc[i] = cnt(rng);
      gc[i] = cnt(rng);
    }
    check("rmse", rmse(pc, gc), oracle::rmse(pc, gc));
    const int classes = classes_d(rng);
    const ClassMap pred = oracle::random_classmap(rng, w, h, classes);
    const ClassMap gt = oracle::random_classmap(rng, w, h, classes);
    check("miou", miou(pred, gt, classes), oracle::miou(pred, gt, classes));
    check("recall", recall(pred, gt, classes), oracle::recall(pred, gt, classes));
    check("psnr", psnr(vis, vis2), oracle::psnr(vis, vis2));
    check("ssim", ssim(vis, vis2), oracle::ssim(vis, vis2));
    check("ssim_gray", ssim(inf, fused), oracle::ssim(inf, fused));
    check("cc", cc(vis, inf, fused), oracle::cc(vis, inf, fused));
    const FusionLosses fl = fusion_losses(vis, inf, fused);
    check("l_inten", fl.intensity, oracle::l_inten(vis, inf, fused));
    check("l_grad", fl.gradient, oracle::l_grad(vis, inf, fused));
  }
  const double t = seconds_since(start);
  report("metric-oracle equivalence",
         worst <= 1e-9 && t < 10.0,
         fmt("100 instances, worst |diff| %.3g (%s), %.2fs", worst,
             worst_name.c_str(), t));
}

void game_monotonicity() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> dim(1, 256);
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int w = dim(rng);
    const int h = dim(rng);
    const Image density = oracle::random_density(rng, w, h);
    const auto points = oracle::random_points(rng, w, h, 60);
    double prev = -1.0;
    for (int k = 0; k <= 3; ++k) {
      const double g = game(density, points, k);
      if (g < prev) ++violations;
      prev = g;
    }
  }
  report("GAME monotonicity", violations == 0,
         fmt("100 random fixtures, %d violations", violations));
}

// --- DE ---------------------------------------------------------------------

void de_correctness() {
  const auto start = Clock::now();
  DEConfig c;
  c.population_size = 30;
  c.scale_factor = 0.7;
  c.crossover_rate = 0.9;
  c.max_generations = 200;
  c.stagnation_patience = 10;
  c.seed = 42;
  c.bounds.assign(10, {-1.0, 1.0});
  FitnessOracle sphere{[](std::span<const double> v) {
                         double s = 0.0;
                         for (double x : v) s += x * x;
                         return -s;
                       },
                       1};
  const RunResult r = run(c, sphere);
  DEConfig wide = c;
  wide.bounds.assign(10, {-5.12, 5.12});
  const RunResult r_wide = run(wide, sphere);

  bool monotone = true;
  auto check_monotone = [&](const Trajectory& t) {
    for (std::size_t i = 1; i < t.size(); ++i) {
      if (t[i].best_fitness < t[i - 1].best_fitness) monotone = false;
    }
  };
  check_monotone(r.trajectory);
  check_monotone(r_wide.trajectory);
  FitnessOracle rastrigin{[](std::span<const double> v) {
                            double s = 10.0 * v.size();
                            for (double x : v) {
                              s += x * x - 10.0 * std::cos(2 * M_PI * x);
                            }
                            return -s;
                          },
                          1};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    DEConfig rc = c;
    rc.seed = seed;
    check_monotone(run(rc, rastrigin).trajectory);
  }

  DEConfig cc = c;
  FitnessOracle constant{[](std::span<const double>) { return 3.0; }, 1};
  const RunResult flat = run(cc, constant);
  const double t = seconds_since(start);
  const bool pass = r.best_fitness >= -1e-3 && monotone && flat.generations == 10 &&
                    flat.reason == StopReason::kStagnation && t < 5.0;
  report("DE correctness", pass,
         fmt("sphere on [-1,1]^10 best %.3g after %d generations (on "
             "[-5.12,5.12]^10: %.3g, informational), trajectories monotone=%s, "
             "constant oracle stopped at generation %d (%s), %.2fs",
             r.best_fitness, r.generations, r_wide.best_fitness,
             monotone ? "yes" : "no",
             flat.generations, std::string(to_string(flat.reason)).c_str(), t));
}

// --- attack experiments -----------------------------------------------------

struct Suite {
  std::vector<BatchInput> inputs;
  std::unique_ptr<TargetModel> model;
  std::size_t workers = 1;
};

AttackConfig base_config() {
  AttackConfig c;
  c.task = Task::kCounting;
  c.population = 30;
  c.generations = 50;
  c.patience = 10;
  c.seed = 42;
  c.workers = 1;
  return c;
}

BatchReport run_condition(const Suite& suite, const AttackConfig& config) {
  return run_batch(config, suite.inputs, *suite.model, suite.workers);
}

double mean_game0(const BatchReport& r) { return batch_mean(r, Metric::kGame0); }

double mean_of(const BatchReport& r, Metric m) { return batch_mean(r, m); }

void embedding_invariants() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> dim(8, 96);
  int outside_changes = 0;
  int infeasible_decodes = 0;
  int mask_mismatch = 0;
  int feasibility_errors = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = dim(rng);
    const int h = dim(rng);
    const int rmax = std::max(1, std::min(w, h) / 2);
    ParamLayout layout;
    layout.radius = std::uniform_int_distribution<int>(1, rmax)(rng);
    layout.color_count = std::uniform_int_distribution<std::size_t>(1, 10)(rng);
    layout.optimize_radius = trial % 3 == 0;
    layout.max_radius = rmax;
    const Bounds bounds = param_bounds(layout, w, h);
    std::vector<double> v(bounds.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
      // Draw a little outside the bounds too; decode must still be feasible.
      const double span = bounds[j].high - bounds[j].low;
      v[j] = std::uniform_real_distribution<double>(bounds[j].low - 0.2 * span,
                                                    bounds[j].high + 0.2 * span)(rng);
    }
    const PatchGenome g = decode(v, layout, w, h);
    if (g.x < g.r || g.x > w - g.r || g.y < g.r || g.y > h - g.r) {
      ++infeasible_decodes;
      continue;
    }
    const ImagePair clean(oracle::random_image(rng, w, h, 3),
                          oracle::random_image(rng, w, h, 1));
    const ImagePair adv = apply(g, clean, CompressionParams{});
    const Mask mask = genome_mask(g, w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const long dx = x - g.x, dy = y - g.y;
        const bool inside = dx * dx + dy * dy <= static_cast<long>(g.r) * g.r;
        if (inside != mask.test(x, y)) ++mask_mismatch;
        if (inside) continue;
        for (int c = 0; c < 3; ++c) {
          if (adv.visible().at(x, y, c) != clean.visible().at(x, y, c)) {
            ++outside_changes;
          }
        }
        if (adv.infrared().at(x, y) != clean.infrared().at(x, y)) {
          ++outside_changes;
        }
      }
    }
    // Raw genomes: check_feasible must reject exactly the infeasible centers.
    PatchGenome raw = g;
    raw.x = std::uniform_int_distribution<int>(-5, w + 5)(rng);
    raw.y = std::uniform_int_distribution<int>(-5, h + 5)(rng);
    const bool feasible =
        raw.x >= raw.r && raw.x <= w - raw.r && raw.y >= raw.r && raw.y <= h - raw.r;
    bool threw = false;
    try {
      check_feasible(raw, w, h);
    } catch (const FeasibilityError&) {
      threw = true;
    }
    if (threw == feasible) ++feasibility_errors;
  }
  const bool pass = outside_changes == 0 && infeasible_decodes == 0 &&
                    mask_mismatch == 0 && feasibility_errors == 0;
  report("patch embedding invariants", pass,
         fmt("1000 genomes: %d off-mask changes, %d infeasible decodes, "
             "%d mask mismatches, %d feasibility misclassifications",
             outside_changes, infeasible_decodes, mask_mismatch,
             feasibility_errors));
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism(const std::vector<Fixture>& fixtures) {
  const fs::path root = fs::temp_directory_path() / "vipatch_acceptance_det";
  fs::remove_all(root);
  const fs::path data = root / "pairs";
  for (const Fixture& f : fixtures) write_fixture(f, data);
  AttackConfig c = base_config();
  c.generations = 8;
  std::vector<std::string> items, aggregates;
  const std::size_t pools[] = {1, 8, 1, 8};
  for (std::size_t i = 0; i < 4; ++i) {
    c.batch_workers = pools[i];
    c.out_dir = root / ("run" + std::to_string(i));
    cmd_batch(c, data, 8);
    items.push_back(read_file(c.out_dir / "items.csv"));
    aggregates.push_back(read_file(c.out_dir / "aggregate.csv"));
  }
  bool same = !items[0].empty() && !aggregates[0].empty();
  for (std::size_t i = 1; i < items.size(); ++i) {
    same = same && items[i] == items[0] && aggregates[i] == aggregates[0];
  }
  fs::remove_all(root);
  report("batch determinism", same,
         "cmd_batch on 8 sampled fixtures, pool sizes 1, 8, 1, 8: items.csv and "
         "aggregate.csv byte-identical=" + std::string(same ? "yes" : "no"));
}

}  // namespace

int main() {
  set_warnings_enabled(false);
  metric_oracles();
  game_monotonicity();
  de_correctness();
  embedding_invariants();

  const auto fixtures = make_fixtures(20, 2024);
  Suite suite;
  for (const Fixture& f : fixtures) {
    GroundTruth gt;
    gt.points = f.points;
    suite.inputs.push_back({f.name, f.pair, gt});
  }
  AttackConfig base = base_config();
  suite.model = make_model(base);
  suite.workers = std::max(1u, std::thread::hardware_concurrency());

  // Effectiveness: joint vs random vs position-only.
  const auto t0 = Clock::now();
  AttackConfig c_random = base;
  c_random.ablation = Ablation::kRandom;
  const BatchReport random = run_condition(suite, c_random);
  const BatchReport full = run_condition(suite, base);
  AttackConfig c_pos = base;
  c_pos.ablation = Ablation::kPositionOnly;
  const BatchReport pos = run_condition(suite, c_pos);
  const double t_eff = seconds_since(t0);
  {
    const double gf = mean_game0(full), gr = mean_game0(random), gp = mean_game0(pos);
    report("attack effectiveness",
           gf >= 2.0 * gr && gf >= 1.2 * gp && t_eff < 300.0,
           fmt("mean GAME(0) joint %.3f, random %.3f (x%.2f), position-only "
               "%.3f (x%.2f), %.1fs",
               gf, gr, gf / gr, gp, gf / gp, t_eff));
  }

  // Cross-modal reuse.
  {
    AttackConfig c = base;
    c.compression = CompressionParams::identity();
    const BatchReport no_reuse = run_condition(suite, c);
    int higher = 0;
    for (std::size_t i = 0; i < full.items.size(); ++i) {
      if (full.items[i].result.adversarial_metrics.get(Metric::kPsnrInf) >
          no_reuse.items[i].result.adversarial_metrics.get(Metric::kPsnrInf)) {
        ++higher;
      }
    }
    const double g_on = mean_game0(full), g_off = mean_game0(no_reuse);
    report("cross-modal color reuse",
           higher == static_cast<int>(full.items.size()) && g_on >= 0.7 * g_off,
           fmt("PSNR_T higher with reuse on %d/%zu fixtures (mean %.2f vs %.2f dB); "
               "GAME(0) %.3f vs %.3f without reuse (%.0f%% retained)",
               higher, full.items.size(), mean_of(full, Metric::kPsnrInf),
               mean_of(no_reuse, Metric::kPsnrInf), g_on, g_off,
               100.0 * g_on / g_off));
  }

  // Modality ablation.
  {
    AttackConfig cv = base;
    cv.ablation = Ablation::kVisibleOnly;
    AttackConfig ci = base;
    ci.ablation = Ablation::kInfraredOnly;
    const double gv = mean_game0(run_condition(suite, cv));
    const double gi = mean_game0(run_condition(suite, ci));
    const double gj = mean_game0(full);
    report("modality ablation", gj >= std::max(gv, gi),
           fmt("mean GAME(0) joint %.3f, visible-only %.3f, infrared-only %.3f",
               gj, gv, gi));
  }

  // Radius sweep.
  {
    std::vector<double> eff, psnr_rgb;
    std::string detail;
    for (int r : {20, 40, 80}) {
      BatchReport rep;
      if (r == 40) {
        rep = full;
      } else {
        AttackConfig c = base;
        c.radius = r;
        rep = run_condition(suite, c);
      }
      eff.push_back(mean_game0(rep));
      psnr_rgb.push_back(mean_of(rep, Metric::kPsnrVis));
      detail += fmt("r=%d GAME(0) %.3f PSNR_RGB %.2f; ", r, eff.back(),
                    psnr_rgb.back());
    }
    const bool pass = eff[0] <= eff[1] && eff[1] <= eff[2] &&
                      psnr_rgb[0] >= psnr_rgb[1] && psnr_rgb[1] >= psnr_rgb[2];
    report("radius sweep trend", pass, detail);
  }

  // Alpha sweep.
  {
    std::vector<double> s;
    std::string detail;
    for (double a : {1.0, 0.5, 0.1}) {
      BatchReport rep;
      if (a == 1.0) {
        rep = full;
      } else {
        AttackConfig c = base;
        c.alpha = a;
        rep = run_condition(suite, c);
      }
      s.push_back(batch_mean_s(rep));
      detail += fmt("alpha=%.1f S %.3f GAME(0) %.3f; ", a, s.back(), mean_game0(rep));
    }
    report("alpha sweep trend", s[0] <= s[1] && s[1] <= s[2], detail);
  }

  // Defenses on the optimized attacks.
  {
    std::string detail;
    bool pass = true;
    double uplift = 0.0;
    for (const BatchItem& item : full.items) {
      uplift += item.result.adversarial_metrics.get(Metric::kGame0) -
                item.result.clean_metrics.get(Metric::kGame0);
    }
    uplift /= full.items.size();
    for (const char* spec : {"median:3", "jpeg:75"}) {
      const DefenseConfig d = parse_defense(spec);
      double defended = 0.0;
      for (std::size_t i = 0; i < full.items.size(); ++i) {
        const BatchInput& in = suite.inputs[i];
        const auto on_adv = attack_under_defense(
            in.pair, full.items[i].result.adversarial, d, *suite.model, in.gt);
        const auto on_clean =
            attack_under_defense(in.pair, in.pair, d, *suite.model, in.gt);
        defended += on_adv.metrics.get(Metric::kGame0) -
                    on_clean.metrics.get(Metric::kGame0);
      }
      defended /= full.items.size();
      const double retained = defended / uplift;
      pass = pass && retained >= 0.5;
      detail += fmt("%s retains %.0f%% of the %.3f uplift; ", spec,
                    100.0 * retained, uplift);
    }
    DefenseConfig det = parse_defense("mse");
    det.mse_threshold =
        calibrate_threshold(clean_detector_mses(suite.inputs, *suite.model), 0.95);
    int flagged = 0;
    for (std::size_t i = 0; i < full.items.size(); ++i) {
      const BatchInput& in = suite.inputs[i];
      const auto r = attack_under_defense(in.pair, full.items[i].result.adversarial,
                                          det, *suite.model, in.gt);
      flagged += r.detection->flagged ? 1 : 0;
    }
    pass = pass && flagged < static_cast<int>(full.items.size());
    detail += fmt("MSE detector (theta %.3g) flags %d/%zu attacked samples",
                  det.mse_threshold, flagged, full.items.size());
    report("defense evaluation", pass, detail);
  }

  determinism(fixtures);

  std::printf("%s: %d criteria failed\n", g_failures ? "FAILED" : "ALL PASSED",
              g_failures);
  return g_failures == 0 ? 0 : 1;
}
