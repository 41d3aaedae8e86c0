#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vipatch/bounds.hpp"

namespace vipatch {

using Rng = std::mt19937_64;

// DE/rand/1/bin settings. Fitness is maximized.
struct DEConfig {
  std::size_t population_size = 30;
  double scale_factor = 0.7;
  double crossover_rate = 0.9;
  int max_generations = 200;
  int stagnation_patience = 10;
  std::uint64_t seed = 42;
  Bounds bounds;
  // Upper bound on concurrent fitness evaluations; further limited by the
  // oracle's own max_concurrency.
  std::size_t workers = 1;

  void validate() const;
};

// Fitness oracle seen by the engine. evaluate must be safe to call from
// max_concurrency threads at once; 1 means the engine evaluates serially.
struct FitnessOracle {
  std::function<double(std::span<const double>)> evaluate;
  std::size_t max_concurrency = 1;
};

struct Population {
  std::vector<std::vector<double>> members;
  std::vector<double> fitness;
  int generation = 0;

  std::size_t size() const { return members.size(); }
  // Index of the highest fitness; the lowest index wins ties.
  std::size_t best_index() const;
  double mean_fitness() const;
};

struct GenerationRecord {
  int generation = 0;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  std::vector<double> best_vector;
};

using Trajectory = std::vector<GenerationRecord>;

Population initialize(const DEConfig& config, const FitnessOracle& oracle,
                      Rng& rng);

// V_m1 + f * (V_m2 - V_m3) with m1, m2, m3 distinct and != target_index.
std::vector<double> mutate(const Population& population,
                           std::size_t target_index, const DEConfig& config,
                           Rng& rng);

// Binomial crossover: dimension j comes from the mutant iff u_j <= CR or
// j == J_rand.
std::vector<double> crossover(std::span<const double> target,
                              std::span<const double> mutant,
                              const DEConfig& config, Rng& rng);

std::vector<double> clamp_bounds(std::span<const double> vector,
                                 const Bounds& bounds);

// One generation: every trial vector is built in index order from the shared
// generator, then all trials are evaluated (possibly concurrently), then each
// parent is replaced iff its trial is strictly fitter. Throws on oracle
// failure; the input population is left as it was.
Population step(const Population& population, const FitnessOracle& oracle,
                const DEConfig& config, Rng& rng);

// Evaluates vectors with up to `workers` threads. Results are in input order.
std::vector<double> evaluate_all(const std::vector<std::vector<double>>& vectors,
                                 const FitnessOracle& oracle,
                                 std::size_t workers);

enum class StopReason { kSuccess, kStagnation, kGenerationLimit };

std::string_view to_string(StopReason reason);

using SuccessPredicate =
    std::function<bool(std::span<const double> best_vector, double fitness)>;

struct RunResult {
  std::vector<double> best_vector;
  double best_fitness = 0.0;
  Trajectory trajectory;
  int generations = 0;  // completed steps
  StopReason reason = StopReason::kGenerationLimit;
};

// The full optimization loop: initialize, then step until the success
// predicate accepts the generation best, the mean fitness has stayed within
// 1e-12 for stagnation_patience consecutive generations, or
// max_generations steps have run.
RunResult run(const DEConfig& config, const FitnessOracle& oracle,
              const SuccessPredicate& success = {});

std::string trajectory_csv(const Trajectory& trajectory);

}  // namespace vipatch
