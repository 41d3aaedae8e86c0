#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vipatch/de.hpp"
#include "vipatch/defenses.hpp"
#include "vipatch/evaluation.hpp"
#include "vipatch/fitness.hpp"
#include "vipatch/patch.hpp"
#include "vipatch/targets.hpp"

namespace vipatch {

enum class Ablation { kFull, kPositionOnly, kRandom, kVisibleOnly, kInfraredOnly };

std::string_view to_string(Ablation ablation);
Ablation parse_ablation(std::string_view name);

struct TargetSpec {
  std::string kind = "surrogate";  // "surrogate" or "remote"
  std::string endpoint;            // remote only, see parse_endpoint
  int timeout_ms = 30000;
  std::size_t max_in_flight = 1;
  SurrogateCountingParams counting;
  int bands = 4;    // surrogate segmentation classes
  int classes = 4;  // remote segmentation classes
};

struct AttackConfig {
  Task task = Task::kCounting;
  TargetSpec target;
  std::optional<int> radius;          // task default when unset
  std::optional<std::size_t> colors;  // task default when unset
  bool optimize_radius = false;
  double alpha = 1.0;
  std::size_t population = 30;
  double scale_factor = 0.7;
  double crossover_rate = 0.9;
  int generations = 200;
  int patience = 10;
  std::uint64_t seed = 42;
  std::size_t workers = 1;  // concurrent fitness evaluations inside one attack
  std::size_t batch_workers = 0;  // 0 = logical cores
  Ablation ablation = Ablation::kFull;
  CompressionParams compression;
  bool ground_truth_reference = false;
  std::filesystem::path out_dir = "out";

  int resolved_radius() const;
  std::size_t resolved_colors() const;
  void validate() const;

  // Flat "key = value" form; parse accepts '#' comments and blank lines.
  std::map<std::string, std::string> to_key_values() const;
  void set(const std::string& key, const std::string& value);
};

int default_radius(Task task);
std::size_t default_colors(Task task);

AttackConfig load_config_file(const std::filesystem::path& path,
                              AttackConfig base = {});
std::string config_text(const AttackConfig& config,
                        const std::map<std::string, std::string>& extra = {});

std::unique_ptr<TargetModel> make_model(const AttackConfig& config);

struct AttackResult {
  PatchGenome genome;
  ImagePair adversarial;
  FitnessReport fitness;
  Trajectory trajectory;
  MetricTable clean_metrics;
  MetricTable adversarial_metrics;
  double seconds = 0.0;
  int generations = 0;
  StopReason stop_reason = StopReason::kGenerationLimit;
  // Set when the run ended before the generation budget.
  std::optional<int> early_stop_generation;
};

// Runs one attack against `clean` in memory (no files written).
AttackResult run_attack(const AttackConfig& config, const ImagePair& clean,
                        const TargetModel& model, const GroundTruth& gt = {});

// Side-by-side rows (visible, infrared) of clean | adversarial | difference
// heat map.
Image composite(const ImagePair& clean, const ImagePair& adversarial);

// Writes adversarial PNGs, genome record, trajectory/metrics CSV, composite,
// resolved config and result.json into config.out_dir.
void write_attack_artifacts(const AttackConfig& config,
                            const AttackResult& result, const ImagePair& clean,
                            const std::filesystem::path& visible_path,
                            const std::filesystem::path& infrared_path,
                            const std::optional<std::filesystem::path>& points_path);

AttackResult cmd_attack(const AttackConfig& config,
                        const std::filesystem::path& visible_path,
                        const std::filesystem::path& infrared_path,
                        const std::optional<std::filesystem::path>& points_path =
                            std::nullopt);

// --- batch ------------------------------------------------------------------

struct PairEntry {
  std::string name;
  std::filesystem::path visible;
  std::filesystem::path infrared;
  std::optional<std::filesystem::path> points;
  std::optional<std::filesystem::path> labels;
};

// Pairs named <name>_vis.png / <name>_inf.png, with optional
// <name>_points.csv and <name>_labels.png, sorted by name.
std::vector<PairEntry> discover_pairs(const std::filesystem::path& dir);

// Seeded sampling without replacement; the result is sorted by name.
std::vector<PairEntry> sample_pairs(std::vector<PairEntry> entries,
                                    std::optional<std::size_t> sample,
                                    std::uint64_t seed);

struct BatchInput {
  std::string name;
  ImagePair pair;
  GroundTruth gt;
};

BatchInput load_batch_input(const PairEntry& entry);

struct BatchItem {
  std::string name;
  AttackResult result;
};

struct BatchReport {
  std::vector<BatchItem> items;
};

// Per-item seeds depend only on the base seed and the item index, so results
// are identical at any pool size.
std::uint64_t item_seed(std::uint64_t seed, std::size_t index);

BatchReport run_batch(const AttackConfig& config,
                      const std::vector<BatchInput>& inputs,
                      const TargetModel& model, std::size_t workers);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;
};

// Mean and population standard deviation over items, NaN entries skipped.
Aggregate aggregate(const std::vector<double>& values);

std::string batch_items_csv(const BatchReport& report);
std::string batch_aggregate_csv(const BatchReport& report);

// Mean of one metric over a batch (adversarial or clean side).
double batch_mean(const BatchReport& report, Metric metric, bool adversarial = true);
double batch_mean_e(const BatchReport& report);
double batch_mean_s(const BatchReport& report);

BatchReport cmd_batch(const AttackConfig& config,
                      const std::filesystem::path& directory,
                      std::optional<std::size_t> sample);

// --- sweeps -----------------------------------------------------------------

enum class SweepParameter { kRadius, kColors, kAlpha };

SweepParameter parse_sweep_parameter(std::string_view name);
std::string_view to_string(SweepParameter parameter);
AttackConfig with_sweep_value(AttackConfig config, SweepParameter parameter,
                              double value);

struct SweepRow {
  double value = 0.0;
  BatchReport report;
};

std::vector<SweepRow> run_sweep(const AttackConfig& config,
                                const std::vector<BatchInput>& inputs,
                                const TargetModel& model,
                                SweepParameter parameter,
                                const std::vector<double>& values,
                                std::size_t workers);
std::string sweep_csv(SweepParameter parameter, const std::vector<SweepRow>& rows);

std::vector<SweepRow> cmd_sweep(const AttackConfig& config,
                                const std::filesystem::path& directory,
                                std::optional<std::size_t> sample,
                                SweepParameter parameter,
                                const std::vector<double>& values);

// --- defenses ---------------------------------------------------------------

std::string defense_csv_header();
std::string defense_csv_row(const DefenseConfig& defense,
                            const DefenseResult& result);

// Re-evaluates a stored attack (directory written by cmd_attack) under each
// defense and appends rows to <dir>/defense.csv. Detector defenses without a
// threshold are calibrated on the clean pairs in `calibration_dir` (95th
// percentile of clean MSEs).
std::vector<DefenseResult> cmd_defend(
    const std::filesystem::path& result_dir,
    std::vector<DefenseConfig> defenses,
    const std::optional<std::filesystem::path>& calibration_dir = std::nullopt);

// Clean-sample MSEs between the model's density and the ground-truth density.
std::vector<double> clean_detector_mses(const std::vector<BatchInput>& inputs,
                                        const TargetModel& model);

}  // namespace vipatch
