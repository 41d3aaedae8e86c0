#include "vipatch/de.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "vipatch/errors.hpp"
#include "vipatch/metrics.hpp"

namespace vipatch {
namespace {

constexpr double kStagnationTolerance = 1e-12;

std::size_t draw_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

double draw_unit(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace

void DEConfig::validate() const {
  if (population_size < 4) {
    throw ConfigError("population size must be >= 4 for DE/rand/1 mutation");
  }
  if (max_generations < 1) throw ConfigError("max generations must be >= 1");
  if (stagnation_patience < 1) throw ConfigError("patience must be >= 1");
  if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) {
    throw ConfigError("crossover rate must lie in [0,1]");
  }
  if (!std::isfinite(scale_factor)) throw ConfigError("scale factor not finite");
  if (bounds.empty()) throw ConfigError("search space has no dimensions");
  for (const Interval& b : bounds) {
    if (!(b.low <= b.high)) throw ConfigError("bound with low > high");
  }
}

std::size_t Population::best_index() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < fitness.size(); ++i) {
    if (fitness[i] > fitness[best]) best = i;
  }
  return best;
}

double Population::mean_fitness() const {
  double acc = 0.0;
  for (double f : fitness) acc += f;
  return acc / static_cast<double>(fitness.size());
}

std::vector<double> evaluate_all(const std::vector<std::vector<double>>& vectors,
                                 const FitnessOracle& oracle,
                                 std::size_t workers) {
  std::vector<double> out(vectors.size());
  const std::size_t threads =
      std::min({std::max<std::size_t>(workers, 1),
                std::max<std::size_t>(oracle.max_concurrency, 1),
                vectors.size()});
  if (threads <= 1) {
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      out[i] = oracle.evaluate(vectors[i]);
    }
    return out;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::size_t error_index = vectors.size();
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= vectors.size() || failed.load()) return;
      try {
        out[i] = oracle.evaluate(vectors[i]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        // Report the lowest failing index so the surfaced error does not
        // depend on scheduling.
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
        failed.store(true);
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  return out;
}

Population initialize(const DEConfig& config, const FitnessOracle& oracle,
                      Rng& rng) {
  config.validate();
  Population pop;
  pop.members.resize(config.population_size);
  for (auto& member : pop.members) {
    member.resize(config.bounds.size());
    for (std::size_t d = 0; d < config.bounds.size(); ++d) {
      const Interval& b = config.bounds[d];
      member[d] = b.low + draw_unit(rng) * (b.high - b.low);
      member[d] = std::clamp(member[d], b.low, b.high);
    }
  }
  pop.fitness = evaluate_all(pop.members, oracle, config.workers);
  return pop;
}

std::vector<double> mutate(const Population& population,
                           std::size_t target_index, const DEConfig& config,
                           Rng& rng) {
  const std::size_t q = population.size();
  if (q < 4) throw ConfigError("mutation needs at least 4 members");
  std::size_t m1, m2, m3;
  do {
    m1 = draw_index(rng, q);
  } while (m1 == target_index);
  do {
    m2 = draw_index(rng, q);
  } while (m2 == target_index || m2 == m1);
  do {
    m3 = draw_index(rng, q);
  } while (m3 == target_index || m3 == m1 || m3 == m2);

  const auto& a = population.members[m1];
  const auto& b = population.members[m2];
  const auto& c = population.members[m3];
  std::vector<double> mutant(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    mutant[j] = a[j] + config.scale_factor * (b[j] - c[j]);
  }
  return mutant;
}

std::vector<double> crossover(std::span<const double> target,
                              std::span<const double> mutant,
                              const DEConfig& config, Rng& rng) {
  if (target.size() != mutant.size() || target.empty()) {
    throw DimensionError("crossover needs equal, non-zero lengths");
  }
  const std::size_t forced = draw_index(rng, target.size());
  std::vector<double> trial(target.begin(), target.end());
  for (std::size_t j = 0; j < target.size(); ++j) {
    const double u = draw_unit(rng);
    if (u <= config.crossover_rate || j == forced) trial[j] = mutant[j];
  }
  return trial;
}

std::vector<double> clamp_bounds(std::span<const double> vector,
                                 const Bounds& bounds) {
  if (vector.size() != bounds.size()) {
    throw DimensionError("vector length does not match bounds");
  }
  std::vector<double> out(vector.begin(), vector.end());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = std::clamp(out[j], bounds[j].low, bounds[j].high);
  }
  return out;
}

Population step(const Population& population, const FitnessOracle& oracle,
                const DEConfig& config, Rng& rng) {
  std::vector<std::vector<double>> trials(population.size());
  for (std::size_t i = 0; i < population.size(); ++i) {
    const auto mutant = mutate(population, i, config, rng);
    const auto trial = crossover(population.members[i], mutant, config, rng);
    trials[i] = clamp_bounds(trial, config.bounds);
  }
  const auto trial_fitness = evaluate_all(trials, oracle, config.workers);

  Population next = population;
  for (std::size_t i = 0; i < population.size(); ++i) {
    if (trial_fitness[i] > population.fitness[i]) {
      next.members[i] = std::move(trials[i]);
      next.fitness[i] = trial_fitness[i];
    }
  }
  ++next.generation;
  return next;
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kSuccess:
      return "success";
    case StopReason::kStagnation:
      return "stagnation";
    case StopReason::kGenerationLimit:
      return "generation_limit";
  }
  return "unknown";
}

RunResult run(const DEConfig& config, const FitnessOracle& oracle,
              const SuccessPredicate& success) {
  config.validate();
  Rng rng(config.seed);
  Population pop = initialize(config, oracle, rng);

  RunResult result;
  auto record = [&] {
    const std::size_t best = pop.best_index();
    result.trajectory.push_back({pop.generation, pop.fitness[best],
                                 pop.mean_fitness(), pop.members[best]});
    result.best_vector = pop.members[best];
    result.best_fitness = pop.fitness[best];
  };
  auto succeeded = [&] {
    return success && success(result.best_vector, result.best_fitness);
  };

  record();
  if (succeeded()) {
    result.reason = StopReason::kSuccess;
    return result;
  }
  int unchanged = 0;
  while (pop.generation < config.max_generations) {
    const double previous_mean = pop.mean_fitness();
    pop = step(pop, oracle, config, rng);
    record();
    result.generations = pop.generation;
    if (succeeded()) {
      result.reason = StopReason::kSuccess;
      return result;
    }
    if (std::abs(pop.mean_fitness() - previous_mean) < kStagnationTolerance) {
      ++unchanged;
    } else {
      unchanged = 0;
    }
    if (unchanged >= config.stagnation_patience) {
      result.reason = StopReason::kStagnation;
      return result;
    }
  }
  result.reason = StopReason::kGenerationLimit;
  return result;
}

std::string trajectory_csv(const Trajectory& trajectory) {
  std::string out = "generation,best,mean\n";
  for (const auto& r : trajectory) {
    out += std::to_string(r.generation) + ',' +
           format_csv_real(r.best_fitness) + ',' +
           format_csv_real(r.mean_fitness) + '\n';
  }
  return out;
}

}  // namespace vipatch
