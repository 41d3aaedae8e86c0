#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "vipatch/attack.hpp"
#include "vipatch/errors.hpp"
#include "vipatch/fixtures.hpp"
#include "vipatch/log.hpp"

namespace {

using namespace vipatch;

enum ExitCode {
  kOk = 0,
  kOther = 1,
  kConfig = 2,
  kIo = 3,
  kProtocol = 4,
  kOracle = 5,
};

// Flag values collected as strings so that only flags actually given
// override the config file.
struct Overrides {
  std::map<std::string, std::string> values;
  std::string config_file;

  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    app->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { values[key] = v; }, help);
  }
};

void add_attack_flags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_file, "key = value config file");
  o.add(app, "--task", "task", "counting | segmentation | fusion");
  o.add(app, "--target", "target", "surrogate | remote");
  o.add(app, "--endpoint", "endpoint", "stdio:<command> or tcp:<host>:<port>");
  o.add(app, "--timeout-ms", "timeout_ms", "remote request timeout");
  o.add(app, "--max-in-flight", "max_in_flight", "remote concurrent requests");
  o.add(app, "--radius", "radius", "patch radius in pixels");
  o.add(app, "--colors", "colors", "number of patch colors");
  o.add(app, "--optimize-radius", "optimize_radius", "true | false");
  o.add(app, "--alpha", "alpha", "effectiveness weight in [0,1]");
  o.add(app, "--pop", "pop", "population size");
  o.add(app, "--f", "f", "DE scale factor");
  o.add(app, "--cr", "cr", "DE crossover rate");
  o.add(app, "--gens", "gens", "maximum generations");
  o.add(app, "--patience", "patience", "early-stop patience");
  o.add(app, "--seed", "seed", "random seed");
  o.add(app, "--workers", "workers", "concurrent evaluations per attack");
  o.add(app, "--batch-workers", "batch_workers", "batch pool size (0 = cores)");
  o.add(app, "--ablation", "ablation",
        "full | position_only | random | visible_only | infrared_only");
  o.add(app, "--beta", "beta", "infrared compression slope");
  o.add(app, "--gamma", "gamma", "infrared compression offset");
  o.add(app, "--gt-reference", "gt_reference", "score segmentation against labels");
  o.add(app, "--out", "out", "output directory");
}

AttackConfig resolve(const Overrides& o) {
  AttackConfig config;
  if (!o.config_file.empty()) config = load_config_file(o.config_file);
  for (const auto& [k, v] : o.values) config.set(k, v);
  config.validate();
  return config;
}

int run(int argc, char** argv) {
  CLI::App app{"Black-box adversarial patches for visible-infrared models"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress warnings");

  Overrides attack_o, batch_o, sweep_o;

  auto* attack = app.add_subcommand("attack", "attack one visible/infrared pair");
  add_attack_flags(attack, attack_o);
  std::string vis_path, inf_path, points_path;
  attack->add_option("--visible", vis_path, "visible PNG")->required();
  attack->add_option("--infrared", inf_path, "infrared PNG")->required();
  attack->add_option("--points", points_path, "point annotations CSV");

  auto* batch = app.add_subcommand("batch", "attack every pair in a directory");
  add_attack_flags(batch, batch_o);
  std::string batch_dir;
  std::optional<std::size_t> batch_sample;
  batch->add_option("--input", batch_dir, "directory of *_vis.png/*_inf.png")
      ->required();
  batch->add_option("--sample", batch_sample, "seeded sample size");

  auto* sweep = app.add_subcommand("sweep", "repeat a batch over parameter values");
  add_attack_flags(sweep, sweep_o);
  std::string sweep_dir, sweep_param;
  std::optional<std::size_t> sweep_sample;
  std::vector<double> sweep_values;
  sweep->add_option("--input", sweep_dir, "directory of pairs")->required();
  sweep->add_option("--sample", sweep_sample, "seeded sample size");
  sweep->add_option("--param", sweep_param, "radius | colors | alpha")->required();
  sweep->add_option("--values", sweep_values, "values to sweep")
      ->required()
      ->delimiter(',');

  auto* defend = app.add_subcommand("defend", "re-evaluate an attack under defenses");
  std::string result_dir, calibration_dir;
  std::vector<std::string> defense_specs;
  defend->add_option("--result", result_dir, "directory written by 'attack'")
      ->required();
  defend->add_option("--defense", defense_specs,
                     "none | jpeg[:q] | median[:k] | mse[:theta]")
      ->required();
  defend->add_option("--calibrate", calibration_dir,
                     "clean pairs for detector calibration");

  auto* fixtures = app.add_subcommand("fixtures", "write synthetic fixture pairs");
  std::size_t fixture_count = 20;
  std::uint64_t fixture_seed = 7;
  std::string fixture_dir;
  fixtures->add_option("--count", fixture_count, "number of pairs");
  fixtures->add_option("--seed", fixture_seed, "generator seed");
  fixtures->add_option("--out", fixture_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  set_warnings_enabled(!quiet);

  try {
    if (*attack) {
      const AttackConfig config = resolve(attack_o);
      std::optional<std::filesystem::path> points;
      if (!points_path.empty()) points = points_path;
      const AttackResult r = cmd_attack(config, vis_path, inf_path, points);
      std::printf("genome %s\nE %.6g  S %.6g  J %.6g  generations %d (%s)  %.2fs\n",
                  to_record(r.genome).c_str(), r.fitness.e_term,
                  r.fitness.s_term, r.fitness.j, r.generations,
                  std::string(to_string(r.stop_reason)).c_str(), r.seconds);
      std::printf("wrote %s\n", config.out_dir.string().c_str());
    } else if (*batch) {
      const AttackConfig config = resolve(batch_o);
      const BatchReport report = cmd_batch(config, batch_dir, batch_sample);
      std::printf("%zu pairs, mean E %.6g, mean S %.6g\nwrote %s\n",
                  report.items.size(), batch_mean_e(report), batch_mean_s(report),
                  config.out_dir.string().c_str());
    } else if (*sweep) {
      const AttackConfig config = resolve(sweep_o);
      const auto parameter = parse_sweep_parameter(sweep_param);
      const auto rows =
          cmd_sweep(config, sweep_dir, sweep_sample, parameter, sweep_values);
      for (const SweepRow& row : rows) {
        std::printf("%s=%g  mean E %.6g  mean S %.6g\n",
                    std::string(to_string(parameter)).c_str(), row.value,
                    batch_mean_e(row.report), batch_mean_s(row.report));
      }
      std::printf("wrote %s\n", (config.out_dir / "sweep.csv").string().c_str());
    } else if (*defend) {
      std::vector<DefenseConfig> defenses;
      for (const auto& s : defense_specs) defenses.push_back(parse_defense(s));
      std::optional<std::filesystem::path> calib;
      if (!calibration_dir.empty()) calib = calibration_dir;
      const auto results = cmd_defend(result_dir, defenses, calib);
      for (std::size_t i = 0; i < results.size(); ++i) {
        std::printf("%s: game0 %s", defense_specs[i].c_str(),
                    format_csv_real(results[i].metrics.get(Metric::kGame0)).c_str());
        if (results[i].detection) {
          std::printf("  flagged %d (mse %.6g)", results[i].detection->flagged,
                      results[i].detection->mse);
        }
        std::printf("\n");
      }
    } else if (*fixtures) {
      for (const Fixture& f : make_fixtures(fixture_count, fixture_seed)) {
        write_fixture(f, fixture_dir);
      }
      std::printf("wrote %zu fixtures to %s\n", fixture_count, fixture_dir.c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const FeasibilityError& e) {
    std::fprintf(stderr, "infeasible patch: %s\n", e.what());
    return kConfig;
  } catch (const ProtocolError& e) {
    std::fprintf(stderr, "protocol error: %s\n", e.what());
    return kProtocol;
  } catch (const OracleError& e) {
    std::fprintf(stderr, "model error: %s\n", e.what());
    return kOracle;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kIo;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "dimension error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
