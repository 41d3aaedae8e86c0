#include "vipatch/attack.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "vipatch/errors.hpp"
#include "vipatch/fixtures.hpp"
#include "vipatch/log.hpp"
#include "vipatch/remote.hpp"

namespace vipatch {
namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string format_real(double v) { return format_csv_real(v); }

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    T out{};
    if constexpr (std::is_same_v<T, double>) {
      out = std::stod(value, &used);
    } else if constexpr (std::is_same_v<T, int>) {
      out = std::stoi(value, &used);
    } else {
      if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
      out = static_cast<T>(std::stoull(value, &used));
    }
    if (used != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::logic_error&) {
    throw ConfigError("bad value for '" + key + "': '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("bad boolean for '" + key + "': '" + value + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PatchTarget patch_target(Ablation ablation) {
  switch (ablation) {
    case Ablation::kVisibleOnly:
      return PatchTarget::kVisibleOnly;
    case Ablation::kInfraredOnly:
      return PatchTarget::kInfraredOnly;
    default:
      return PatchTarget::kBoth;
  }
}

std::vector<double> sample_uniform(const Bounds& bounds, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> v(bounds.size());
  for (std::size_t j = 0; j < bounds.size(); ++j) {
    v[j] = bounds[j].low + unit(rng) * (bounds[j].high - bounds[j].low);
  }
  return v;
}

// Round trip through 8-bit storage so reported numbers match saved PNGs.
Image quantized(const Image& image) {
  Image out = image;
  for (double& v : out.data()) v = to_byte(v) / 255.0;
  return out;
}

Image heat(const Image& a, const Image& b) {
  const int w = a.width();
  const int h = a.height();
  std::vector<double> diff(a.pixel_count());
  double peak = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int c = 0; c < a.channels(); ++c) {
        const double d = a.at(x, y, c) - b.at(x, y, c);
        acc += d * d;
      }
      diff[static_cast<std::size_t>(y) * w + x] = std::sqrt(acc);
      peak = std::max(peak, std::sqrt(acc));
    }
  }
  Image out(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v =
          peak > 0.0 ? diff[static_cast<std::size_t>(y) * w + x] / peak : 0.0;
      out.at(x, y, 0) = std::clamp(3.0 * v, 0.0, 1.0);
      out.at(x, y, 1) = std::clamp(3.0 * v - 1.0, 0.0, 1.0);
      out.at(x, y, 2) = std::clamp(3.0 * v - 2.0, 0.0, 1.0);
    }
  }
  return out;
}

void blit(Image& dst, const Image& src, int ox, int oy) {
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        dst.at(ox + x, oy + y, c) = src.at(x, y, src.channels() == 3 ? c : 0);
      }
    }
  }
}

std::string metrics_csv(const MetricTable& clean, const MetricTable& adv) {
  std::string out = "side," + MetricTable::csv_header() + "\n";
  out += "clean," + clean.csv_row() + "\n";
  out += "adversarial," + adv.csv_row() + "\n";
  return out;
}

nlohmann::json metrics_json(const MetricTable& table) {
  nlohmann::json j = nlohmann::json::object();
  for (Metric m : MetricTable::all()) {
    if (table.has(m)) j[std::string(MetricTable::name(m))] = table.get(m);
  }
  return j;
}

std::size_t resolve_workers(std::size_t requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<BatchInput> load_inputs(const fs::path& directory,
                                    std::optional<std::size_t> sample,
                                    std::uint64_t seed) {
  const auto entries = sample_pairs(discover_pairs(directory), sample, seed);
  if (entries.empty()) {
    throw IoError("no <name>_vis.png / <name>_inf.png pairs in " +
                  directory.string());
  }
  std::vector<BatchInput> inputs;
  inputs.reserve(entries.size());
  for (const auto& e : entries) inputs.push_back(load_batch_input(e));
  return inputs;
}

std::vector<Metric> report_metrics() {
  const auto& all = MetricTable::all();
  return {all.begin(), all.end()};
}

}  // namespace

std::string_view to_string(Ablation ablation) {
  switch (ablation) {
    case Ablation::kFull:
      return "full";
    case Ablation::kPositionOnly:
      return "position_only";
    case Ablation::kRandom:
      return "random";
    case Ablation::kVisibleOnly:
      return "visible_only";
    case Ablation::kInfraredOnly:
      return "infrared_only";
  }
  return "full";
}

Ablation parse_ablation(std::string_view name) {
  for (Ablation a : {Ablation::kFull, Ablation::kPositionOnly, Ablation::kRandom,
                     Ablation::kVisibleOnly, Ablation::kInfraredOnly}) {
    if (name == to_string(a)) return a;
  }
  throw ConfigError("unknown ablation '" + std::string(name) +
                    "' (full, position_only, random, visible_only, "
                    "infrared_only)");
}

int default_radius(Task task) { return task == Task::kFusion ? 30 : 40; }

std::size_t default_colors(Task task) { return task == Task::kFusion ? 2 : 10; }

int AttackConfig::resolved_radius() const {
  return radius.value_or(default_radius(task));
}

std::size_t AttackConfig::resolved_colors() const {
  return colors.value_or(default_colors(task));
}

void AttackConfig::validate() const {
  if (resolved_radius() < 1) throw ConfigError("radius must be positive");
  if (resolved_colors() < 1) throw ConfigError("color count must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha must lie in [0,1]");
  }
  if (target.kind != "surrogate" && target.kind != "remote") {
    throw ConfigError("target must be 'surrogate' or 'remote'");
  }
  if (target.kind == "remote" && target.endpoint.empty()) {
    throw ConfigError("remote target needs an endpoint");
  }
  if (!(compression.beta >= 0.0) || !(compression.gamma >= 0.0) ||
      compression.beta + compression.gamma > 1.0 + 1e-12) {
    throw ConfigError("compression needs beta, gamma >= 0 and beta + gamma <= 1");
  }
  DEConfig de;
  de.population_size = population;
  de.scale_factor = scale_factor;
  de.crossover_rate = crossover_rate;
  de.max_generations = generations;
  de.stagnation_patience = patience;
  de.bounds = {{0.0, 1.0}};
  de.workers = std::max<std::size_t>(workers, 1);
  de.validate();
  target.counting.validate();
}

std::map<std::string, std::string> AttackConfig::to_key_values() const {
  std::map<std::string, std::string> kv;
  kv["task"] = std::string(to_string(task));
  kv["target"] = target.kind;
  kv["endpoint"] = target.endpoint;
  kv["timeout_ms"] = std::to_string(target.timeout_ms);
  kv["max_in_flight"] = std::to_string(target.max_in_flight);
  kv["blur_sigma"] = format_real(target.counting.blur_sigma);
  kv["threshold"] = format_real(target.counting.threshold);
  kv["min_area"] = std::to_string(target.counting.min_area);
  kv["bands"] = std::to_string(target.bands);
  kv["classes"] = std::to_string(target.classes);
  kv["radius"] = std::to_string(resolved_radius());
  kv["colors"] = std::to_string(resolved_colors());
  kv["optimize_radius"] = optimize_radius ? "true" : "false";
  kv["alpha"] = format_real(alpha);
  kv["pop"] = std::to_string(population);
  kv["f"] = format_real(scale_factor);
  kv["cr"] = format_real(crossover_rate);
  kv["gens"] = std::to_string(generations);
  kv["patience"] = std::to_string(patience);
  kv["seed"] = std::to_string(seed);
  kv["workers"] = std::to_string(workers);
  kv["batch_workers"] = std::to_string(batch_workers);
  kv["ablation"] = std::string(to_string(ablation));
  kv["beta"] = format_real(compression.beta);
  kv["gamma"] = format_real(compression.gamma);
  kv["gt_reference"] = ground_truth_reference ? "true" : "false";
  kv["out"] = out_dir.string();
  return kv;
}

void AttackConfig::set(const std::string& key, const std::string& value) {
  if (key == "task") {
    task = parse_task(value);
  } else if (key == "target") {
    target.kind = value;
  } else if (key == "endpoint") {
    target.endpoint = value;
  } else if (key == "timeout_ms") {
    target.timeout_ms = parse_number<int>(key, value);
  } else if (key == "max_in_flight") {
    target.max_in_flight = parse_number<std::size_t>(key, value);
  } else if (key == "blur_sigma") {
    target.counting.blur_sigma = parse_number<double>(key, value);
  } else if (key == "threshold") {
    target.counting.threshold = parse_number<double>(key, value);
  } else if (key == "min_area") {
    target.counting.min_area = parse_number<int>(key, value);
  } else if (key == "bands") {
    target.bands = parse_number<int>(key, value);
  } else if (key == "classes") {
    target.classes = parse_number<int>(key, value);
  } else if (key == "radius") {
    radius = parse_number<int>(key, value);
  } else if (key == "colors") {
    colors = parse_number<std::size_t>(key, value);
  } else if (key == "optimize_radius") {
    optimize_radius = parse_bool(key, value);
  } else if (key == "alpha") {
    alpha = parse_number<double>(key, value);
  } else if (key == "pop") {
    population = parse_number<std::size_t>(key, value);
  } else if (key == "f") {
    scale_factor = parse_number<double>(key, value);
  } else if (key == "cr") {
    crossover_rate = parse_number<double>(key, value);
  } else if (key == "gens") {
    generations = parse_number<int>(key, value);
  } else if (key == "patience") {
    patience = parse_number<int>(key, value);
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "workers") {
    workers = parse_number<std::size_t>(key, value);
  } else if (key == "batch_workers") {
    batch_workers = parse_number<std::size_t>(key, value);
  } else if (key == "ablation") {
    ablation = parse_ablation(value);
  } else if (key == "beta") {
    compression.beta = parse_number<double>(key, value);
  } else if (key == "gamma") {
    compression.gamma = parse_number<double>(key, value);
  } else if (key == "gt_reference") {
    ground_truth_reference = parse_bool(key, value);
  } else if (key == "out") {
    out_dir = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

AttackConfig load_config_file(const fs::path& path, AttackConfig base) {
  std::istringstream in(read_text(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      base.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return base;
}

std::string config_text(const AttackConfig& config,
                        const std::map<std::string, std::string>& extra) {
  std::string out = "# vipatch resolved configuration\n";
  for (const auto& [k, v] : config.to_key_values()) out += k + " = " + v + "\n";
  for (const auto& [k, v] : extra) out += "# " + k + " = " + v + "\n";
  return out;
}

std::unique_ptr<TargetModel> make_model(const AttackConfig& config) {
  if (config.target.kind == "remote") {
    RemoteEndpoint endpoint = parse_endpoint(config.target.endpoint);
    endpoint.timeout_ms = config.target.timeout_ms;
    endpoint.max_in_flight = config.target.max_in_flight;
    return std::make_unique<RemoteModel>(endpoint, config.task,
                                         config.target.classes);
  }
  if (config.target.kind != "surrogate") {
    throw ConfigError("unknown target kind '" + config.target.kind + "'");
  }
  switch (config.task) {
    case Task::kCounting:
      return std::make_unique<SurrogateCounter>(config.target.counting);
    case Task::kSegmentation:
      return std::make_unique<SurrogateSegmenter>(config.target.bands);
    case Task::kFusion:
      return std::make_unique<SurrogateFuser>();
  }
  throw ConfigError("unknown task");
}

AttackResult run_attack(const AttackConfig& config, const ImagePair& clean,
                        const TargetModel& model, const GroundTruth& gt) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const int w = clean.width();
  const int h = clean.height();

  ParamLayout layout;
  layout.radius = config.resolved_radius();
  layout.optimize_radius = config.optimize_radius;
  layout.max_radius = config.resolved_radius();
  layout.color_count = config.resolved_colors();

  FitnessConfig fc;
  fc.task = config.task;
  fc.alpha = config.alpha;
  fc.compression = config.compression;
  fc.target = patch_target(config.ablation);
  fc.ground_truth_reference = config.ground_truth_reference;
  const FitnessEvaluator evaluator(clean, model, fc, gt.labels);

  AttackResult result;
  // Baseline draws come from a generator of their own so they never shift
  // the optimizer's stream.
  Rng sampler(config.seed ^ 0x5deece66dULL);
  if (config.ablation == Ablation::kRandom) {
    const Bounds bounds = param_bounds(layout, w, h);
    result.genome = decode(sample_uniform(bounds, sampler), layout, w, h);
    result.generations = 0;
    result.stop_reason = StopReason::kGenerationLimit;
  } else {
    if (config.ablation == Ablation::kPositionOnly) {
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      layout.frozen_colors.resize(layout.color_count);
      for (Color& c : layout.frozen_colors) {
        c.r = unit(sampler);
        c.g = unit(sampler);
        c.b = unit(sampler);
      }
    }
    DEConfig de;
    de.population_size = config.population;
    de.scale_factor = config.scale_factor;
    de.crossover_rate = config.crossover_rate;
    de.max_generations = config.generations;
    de.stagnation_patience = config.patience;
    de.seed = config.seed;
    de.bounds = param_bounds(layout, w, h);
    de.workers = std::max<std::size_t>(config.workers, 1);
    const RunResult run_result = run(de, make_patch_oracle(evaluator, layout));
    result.genome = decode(run_result.best_vector, layout, w, h);
    result.trajectory = run_result.trajectory;
    result.generations = run_result.generations;
    result.stop_reason = run_result.reason;
    if (run_result.reason != StopReason::kGenerationLimit) {
      result.early_stop_generation = run_result.generations;
    }
  }

  const ImagePair adv = evaluator.adversarial(result.genome);
  result.adversarial =
      ImagePair(quantized(adv.visible()), quantized(adv.infrared()));
  result.fitness = evaluator.evaluate_pair(result.adversarial);
  result.clean_metrics = evaluate_input(clean, clean, model, gt);
  result.adversarial_metrics =
      evaluate_input(result.adversarial, clean, model, gt);
  result.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  return result;
}

Image composite(const ImagePair& clean, const ImagePair& adversarial) {
  if (clean.width() != adversarial.width() ||
      clean.height() != adversarial.height()) {
    throw DimensionError("composite needs equally sized pairs");
  }
  const int w = clean.width();
  const int h = clean.height();
  Image out(3 * w, 2 * h, 3);
  blit(out, clean.visible(), 0, 0);
  blit(out, adversarial.visible(), w, 0);
  blit(out, heat(clean.visible(), adversarial.visible()), 2 * w, 0);
  blit(out, clean.infrared(), 0, h);
  blit(out, adversarial.infrared(), w, h);
  blit(out, heat(clean.infrared(), adversarial.infrared()), 2 * w, h);
  return out;
}

void write_attack_artifacts(const AttackConfig& config,
                            const AttackResult& result, const ImagePair& clean,
                            const fs::path& visible_path,
                            const fs::path& infrared_path,
                            const std::optional<fs::path>& points_path) {
  const fs::path& dir = config.out_dir;
  fs::create_directories(dir);
  save_image(result.adversarial.visible(), dir / "adv_visible.png");
  save_image(result.adversarial.infrared(), dir / "adv_infrared.png");
  write_text(dir / "genome.txt", to_record(result.genome) + "\n");
  write_text(dir / "trajectory.csv", trajectory_csv(result.trajectory));
  write_text(dir / "metrics.csv",
             metrics_csv(result.clean_metrics, result.adversarial_metrics));
  save_image(composite(clean, result.adversarial), dir / "composite.png");
  write_text(dir / "config.txt", config_text(config));

  nlohmann::json j;
  j["visible"] = fs::absolute(visible_path).string();
  j["infrared"] = fs::absolute(infrared_path).string();
  j["points"] = points_path ? fs::absolute(*points_path).string() : "";
  j["task"] = std::string(to_string(config.task));
  j["ablation"] = std::string(to_string(config.ablation));
  j["genome"] = to_record(result.genome);
  j["fitness"] = {{"e", result.fitness.e_term},
                  {"s", result.fitness.s_term},
                  {"j", result.fitness.j},
                  {"alpha", result.fitness.alpha}};
  j["generations"] = result.generations;
  j["stop_reason"] = std::string(to_string(result.stop_reason));
  if (result.early_stop_generation) {
    j["early_stop_generation"] = *result.early_stop_generation;
  } else {
    j["early_stop_generation"] = nullptr;
  }
  j["seconds"] = result.seconds;
  j["clean_metrics"] = metrics_json(result.clean_metrics);
  j["adversarial_metrics"] = metrics_json(result.adversarial_metrics);
  write_text(dir / "result.json", j.dump(2) + "\n");
}

AttackResult cmd_attack(const AttackConfig& config, const fs::path& visible_path,
                        const fs::path& infrared_path,
                        const std::optional<fs::path>& points_path) {
  config.validate();
  const ImagePair clean(load_visible(visible_path), load_infrared(infrared_path));
  GroundTruth gt;
  if (points_path) gt.points = load_points(*points_path);
  const auto model = make_model(config);
  const AttackResult result = run_attack(config, clean, *model, gt);
  write_attack_artifacts(config, result, clean, visible_path, infrared_path,
                         points_path);
  return result;
}

// --- batch ------------------------------------------------------------------

std::vector<PairEntry> discover_pairs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  const std::string suffix = "_vis.png";
  std::vector<PairEntry> entries;
  for (const auto& item : fs::directory_iterator(dir)) {
    if (!item.is_regular_file()) continue;
    const std::string file = item.path().filename().string();
    if (file.size() <= suffix.size() ||
        file.compare(file.size() - suffix.size(), suffix.size(), suffix) != 0) {
      continue;
    }
    PairEntry e;
    e.name = file.substr(0, file.size() - suffix.size());
    e.visible = item.path();
    e.infrared = dir / (e.name + "_inf.png");
    if (!fs::exists(e.infrared)) {
      log_warning("skipping " + e.name + ": no matching _inf.png");
      continue;
    }
    const fs::path points = dir / (e.name + "_points.csv");
    const fs::path labels = dir / (e.name + "_labels.png");
    if (fs::exists(points)) e.points = points;
    if (fs::exists(labels)) e.labels = labels;
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(),
            [](const PairEntry& a, const PairEntry& b) { return a.name < b.name; });
  return entries;
}

std::vector<PairEntry> sample_pairs(std::vector<PairEntry> entries,
                                    std::optional<std::size_t> sample,
                                    std::uint64_t seed) {
  std::sort(entries.begin(), entries.end(),
            [](const PairEntry& a, const PairEntry& b) { return a.name < b.name; });
  if (!sample || *sample >= entries.size()) return entries;
  Rng rng(seed);
  // Fisher-Yates with explicit draws; std::shuffle's use of the engine is
  // library specific.
  for (std::size_t i = entries.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(entries[i], entries[j]);
  }
  entries.resize(*sample);
  std::sort(entries.begin(), entries.end(),
            [](const PairEntry& a, const PairEntry& b) { return a.name < b.name; });
  return entries;
}

BatchInput load_batch_input(const PairEntry& entry) {
  BatchInput in{entry.name,
                ImagePair(load_visible(entry.visible),
                          load_infrared(entry.infrared)),
                {}};
  if (entry.points) in.gt.points = load_points(*entry.points);
  if (entry.labels) {
    const Image img = load_image(*entry.labels);
    if (img.channels() != 1) {
      throw FormatError(entry.labels->string() + ": labels must be grayscale");
    }
    std::vector<std::uint8_t> labels(img.pixel_count());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      labels[i] = to_byte(img.data()[i]);
    }
    in.gt.labels = ClassMap(img.width(), img.height(), std::move(labels));
  }
  return in;
}

std::uint64_t item_seed(std::uint64_t seed, std::size_t index) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

BatchReport run_batch(const AttackConfig& config,
                      const std::vector<BatchInput>& inputs,
                      const TargetModel& model, std::size_t workers) {
  config.validate();
  BatchReport report;
  report.items.resize(inputs.size());
  std::vector<std::exception_ptr> errors(inputs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      try {
        AttackConfig item = config;
        item.seed = item_seed(config.seed, i);
        report.items[i] = {inputs[i].name,
                           run_attack(item, inputs[i].pair, model, inputs[i].gt)};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t pool = std::min(std::max<std::size_t>(workers, 1),
                                    std::max<std::size_t>(inputs.size(), 1));
  if (pool <= 1) {
    work();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(pool);
    for (std::size_t t = 0; t < pool; ++t) threads.emplace_back(work);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return report;
}

Aggregate aggregate(const std::vector<double>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  if (n == 0) return {std::nan(""), std::nan("")};
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) {
    if (!std::isnan(v)) ss += (v - mean) * (v - mean);
  }
  return {mean, std::sqrt(ss / static_cast<double>(n))};
}

std::string batch_items_csv(const BatchReport& report) {
  std::string out =
      "name,x,y,r,generations,stop_reason,e_term,s_term,j";
  for (Metric m : report_metrics()) {
    out += ",clean_" + std::string(MetricTable::name(m));
  }
  for (Metric m : report_metrics()) {
    out += ",adv_" + std::string(MetricTable::name(m));
  }
  out += "\n";
  for (const BatchItem& item : report.items) {
    const AttackResult& r = item.result;
    out += item.name + "," + std::to_string(r.genome.x) + "," +
           std::to_string(r.genome.y) + "," + std::to_string(r.genome.r) + "," +
           std::to_string(r.generations) + "," +
           std::string(to_string(r.stop_reason)) + "," +
           format_real(r.fitness.e_term) + "," + format_real(r.fitness.s_term) +
           "," + format_real(r.fitness.j);
    for (Metric m : report_metrics()) out += "," + format_real(r.clean_metrics.get(m));
    for (Metric m : report_metrics()) {
      out += "," + format_real(r.adversarial_metrics.get(m));
    }
    out += "\n";
  }
  return out;
}

double batch_mean(const BatchReport& report, Metric metric, bool adversarial) {
  std::vector<double> values;
  for (const BatchItem& item : report.items) {
    values.push_back(adversarial ? item.result.adversarial_metrics.get(metric)
                                 : item.result.clean_metrics.get(metric));
  }
  return aggregate(values).mean;
}

double batch_mean_e(const BatchReport& report) {
  std::vector<double> values;
  for (const BatchItem& item : report.items) values.push_back(item.result.fitness.e_term);
  return aggregate(values).mean;
}

double batch_mean_s(const BatchReport& report) {
  std::vector<double> values;
  for (const BatchItem& item : report.items) values.push_back(item.result.fitness.s_term);
  return aggregate(values).mean;
}

std::string batch_aggregate_csv(const BatchReport& report) {
  std::string out = "condition,metric,mean,std\n";
  auto row = [&](const std::string& condition, const std::string& metric,
                 const std::vector<double>& values) {
    const Aggregate a = aggregate(values);
    out += condition + "," + metric + "," + format_real(a.mean) + "," +
           format_real(a.stddev) + "\n";
  };
  for (int side = 0; side < 2; ++side) {
    const bool adv = side == 1;
    const std::string condition = adv ? "adversarial" : "clean";
    for (Metric m : report_metrics()) {
      std::vector<double> values;
      for (const BatchItem& item : report.items) {
        values.push_back(adv ? item.result.adversarial_metrics.get(m)
                             : item.result.clean_metrics.get(m));
      }
      row(condition, std::string(MetricTable::name(m)), values);
    }
    // Set-level RMSE from the per-image absolute count errors.
    std::vector<double> errors;
    for (const BatchItem& item : report.items) {
      const double e = adv ? item.result.adversarial_metrics.get(Metric::kGame0)
                           : item.result.clean_metrics.get(Metric::kGame0);
      if (!std::isnan(e)) errors.push_back(e);
    }
    double set_rmse = std::nan("");
    if (!errors.empty()) {
      const std::vector<double> zeros(errors.size(), 0.0);
      set_rmse = rmse(errors, zeros);
    }
    out += condition + ",rmse_set," + format_real(set_rmse) + ",nan\n";
  }
  std::vector<double> e, s, j;
  for (const BatchItem& item : report.items) {
    e.push_back(item.result.fitness.e_term);
    s.push_back(item.result.fitness.s_term);
    j.push_back(item.result.fitness.j);
  }
  row("adversarial", "e_term", e);
  row("adversarial", "s_term", s);
  row("adversarial", "j", j);
  return out;
}

BatchReport cmd_batch(const AttackConfig& config, const fs::path& directory,
                      std::optional<std::size_t> sample) {
  config.validate();
  const auto inputs = load_inputs(directory, sample, config.seed);
  const auto model = make_model(config);
  const BatchReport report =
      run_batch(config, inputs, *model, resolve_workers(config.batch_workers));
  fs::create_directories(config.out_dir);
  write_text(config.out_dir / "items.csv", batch_items_csv(report));
  write_text(config.out_dir / "aggregate.csv", batch_aggregate_csv(report));
  std::map<std::string, std::string> extra{{"input", directory.string()}};
  if (sample) extra["sample"] = std::to_string(*sample);
  write_text(config.out_dir / "config.txt", config_text(config, extra));
  return report;
}

// --- sweeps -----------------------------------------------------------------

SweepParameter parse_sweep_parameter(std::string_view name) {
  if (name == "radius") return SweepParameter::kRadius;
  if (name == "colors") return SweepParameter::kColors;
  if (name == "alpha") return SweepParameter::kAlpha;
  throw ConfigError("unknown sweep parameter '" + std::string(name) +
                    "' (radius, colors, alpha)");
}

std::string_view to_string(SweepParameter parameter) {
  switch (parameter) {
    case SweepParameter::kRadius:
      return "radius";
    case SweepParameter::kColors:
      return "colors";
    case SweepParameter::kAlpha:
      return "alpha";
  }
  return "radius";
}

AttackConfig with_sweep_value(AttackConfig config, SweepParameter parameter,
                              double value) {
  switch (parameter) {
    case SweepParameter::kRadius:
      if (value < 1.0 || value != std::floor(value)) {
        throw ConfigError("radius sweep values must be positive integers");
      }
      config.radius = static_cast<int>(value);
      break;
    case SweepParameter::kColors:
      if (value < 1.0 || value != std::floor(value)) {
        throw ConfigError("color sweep values must be positive integers");
      }
      config.colors = static_cast<std::size_t>(value);
      break;
    case SweepParameter::kAlpha:
      config.alpha = value;
      break;
  }
  config.validate();
  return config;
}

std::vector<SweepRow> run_sweep(const AttackConfig& config,
                                const std::vector<BatchInput>& inputs,
                                const TargetModel& model,
                                SweepParameter parameter,
                                const std::vector<double>& values,
                                std::size_t workers) {
  std::vector<SweepRow> rows;
  for (double v : values) {
    rows.push_back(
        {v, run_batch(with_sweep_value(config, parameter, v), inputs, model,
                      workers)});
  }
  return rows;
}

std::string sweep_csv(SweepParameter parameter, const std::vector<SweepRow>& rows) {
  std::string out = "parameter,value,e_term_mean,e_term_std,s_term_mean,s_term_std";
  for (Metric m : report_metrics()) {
    const std::string n(MetricTable::name(m));
    out += "," + n + "_mean," + n + "_std";
  }
  out += "\n";
  for (const SweepRow& row : rows) {
    std::vector<double> e, s;
    for (const BatchItem& item : row.report.items) {
      e.push_back(item.result.fitness.e_term);
      s.push_back(item.result.fitness.s_term);
    }
    const Aggregate ae = aggregate(e);
    const Aggregate as = aggregate(s);
    out += std::string(to_string(parameter)) + "," + format_real(row.value) + "," +
           format_real(ae.mean) + "," + format_real(ae.stddev) + "," +
           format_real(as.mean) + "," + format_real(as.stddev);
    for (Metric m : report_metrics()) {
      std::vector<double> values;
      for (const BatchItem& item : row.report.items) {
        values.push_back(item.result.adversarial_metrics.get(m));
      }
      const Aggregate a = aggregate(values);
      out += "," + format_real(a.mean) + "," + format_real(a.stddev);
    }
    out += "\n";
  }
  return out;
}

std::vector<SweepRow> cmd_sweep(const AttackConfig& config,
                                const fs::path& directory,
                                std::optional<std::size_t> sample,
                                SweepParameter parameter,
                                const std::vector<double>& values) {
  config.validate();
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  for (double v : values) with_sweep_value(config, parameter, v);
  const auto inputs = load_inputs(directory, sample, config.seed);
  const auto model = make_model(config);
  const auto rows = run_sweep(config, inputs, *model, parameter, values,
                              resolve_workers(config.batch_workers));
  fs::create_directories(config.out_dir);
  write_text(config.out_dir / "sweep.csv", sweep_csv(parameter, rows));
  std::string list;
  for (double v : values) list += (list.empty() ? "" : ",") + format_real(v);
  std::map<std::string, std::string> extra{{"input", directory.string()},
                                           {"sweep", std::string(to_string(parameter))},
                                           {"values", list}};
  if (sample) extra["sample"] = std::to_string(*sample);
  write_text(config.out_dir / "config.txt", config_text(config, extra));
  return rows;
}

// --- defenses ---------------------------------------------------------------

std::string defense_csv_header() {
  return "defense,parameter,input,flagged,detector_mse," +
         MetricTable::csv_header();
}

std::string defense_csv_row(const DefenseConfig& defense,
                            const DefenseResult& result) {
  std::string flagged = "";
  std::string detector_mse = "nan";
  if (result.detection) {
    flagged = result.detection->flagged ? "1" : "0";
    detector_mse = format_real(result.detection->mse);
  }
  return defense.kind_name() + "," + defense.parameter() + ",adversarial," +
         flagged + "," + detector_mse + "," + result.metrics.csv_row();
}

std::vector<double> clean_detector_mses(const std::vector<BatchInput>& inputs,
                                        const TargetModel& model) {
  if (model.task() != Task::kCounting) {
    throw ConfigError("the MSE detector needs a counting model");
  }
  std::vector<double> mses;
  for (const BatchInput& in : inputs) {
    if (!in.gt.points) continue;
    const CountOutput out = model.count(in.pair);
    if (!out.density) {
      throw OracleError("the MSE detector needs a density map from the model");
    }
    mses.push_back(mse(*out.density, points_to_density(*in.gt.points,
                                                       in.pair.width(),
                                                       in.pair.height())));
  }
  if (mses.empty()) throw ConfigError("no annotated clean pairs to calibrate on");
  return mses;
}

std::vector<DefenseResult> cmd_defend(
    const fs::path& result_dir, std::vector<DefenseConfig> defenses,
    const std::optional<fs::path>& calibration_dir) {
  if (defenses.empty()) throw ConfigError("no defenses given");
  const AttackConfig config = load_config_file(result_dir / "config.txt");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text(result_dir / "result.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((result_dir / "result.json").string() + ": " + e.what());
  }
  const auto field = [&](const char* key) -> std::string {
    if (!meta.contains(key) || !meta[key].is_string()) {
      throw FormatError("result.json lacks '" + std::string(key) + "'");
    }
    return meta[key].get<std::string>();
  };
  const ImagePair clean(load_visible(field("visible")),
                        load_infrared(field("infrared")));
  const ImagePair adversarial(load_visible(result_dir / "adv_visible.png"),
                              load_infrared(result_dir / "adv_infrared.png"));
  GroundTruth gt;
  if (const std::string points = field("points"); !points.empty()) {
    gt.points = load_points(points);
  }
  const auto model = make_model(config);

  for (DefenseConfig& d : defenses) {
    if (d.kind == DefenseKind::kMseDetector && d.mse_threshold < 0.0) {
      if (!calibration_dir) {
        throw ConfigError(
            "mse detector without a threshold needs a calibration directory");
      }
      const auto inputs = load_inputs(*calibration_dir, std::nullopt, 0);
      const auto mses = clean_detector_mses(inputs, *model);
      d.mse_threshold = calibrate_threshold(mses, 0.95);
    }
    d.validate();
  }

  const fs::path csv = result_dir / "defense.csv";
  const bool fresh = !fs::exists(csv);
  std::ofstream out(csv, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot write " + csv.string());
  if (fresh) out << defense_csv_header() << "\n";

  std::vector<DefenseResult> results;
  for (const DefenseConfig& d : defenses) {
    DefenseResult on_clean = attack_under_defense(clean, clean, d, *model, gt);
    DefenseResult on_adv = attack_under_defense(clean, adversarial, d, *model, gt);
    std::string clean_row = defense_csv_row(d, on_clean);
    clean_row.replace(clean_row.find(",adversarial,"), 13, ",clean,");
    out << clean_row << "\n" << defense_csv_row(d, on_adv) << "\n";
    results.push_back(std::move(on_adv));
  }
  if (!out) throw IoError("failed writing " + csv.string());
  return results;
}

}  // namespace vipatch
