#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "adambs/bandit_sampler.hpp"
#include "adambs/data.hpp"
#include "adambs/error.hpp"
#include "adambs/format.hpp"
#include "adambs/models.hpp"
#include "adambs/optimizers.hpp"
#include "adambs/oracle.hpp"
#include "adambs/random.hpp"

namespace adambs {

enum class ModelKind { Logistic, OneNeuronRelu, Mlp };

struct DatasetSpec {
  enum class Kind { HeavyTailed, Csv } kind = Kind::HeavyTailed;
  HeavyTailConfig heavy;  // seed is replaced by the run seed
  std::string path;
};

struct ModelSpec {
  ModelKind kind = ModelKind::Logistic;
  std::size_t hidden = 16;
};

struct ArmSpec {
  std::string name;
  Arm arm = Arm::Adam;
  OptimConfig optim;
  BanditOptions bandit;
};

struct ProbeSpec {
  double gamma = 2.0;
  double beta3 = 1.0;
  std::size_t d = 64;
  std::vector<std::size_t> n_grid{256, 512, 1024, 2048, 4096, 8192, 16384};
  std::size_t trials = 200;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  ModelSpec model;
  std::vector<ArmSpec> arms;
  std::size_t batch_size = 128;
  std::size_t iterations = 1000;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "adambs_out";
  std::optional<double> loss_threshold;
  bool record_wall_time = true;
  ProbeSpec probe;
};

inline constexpr const char* kOutputDirEnv = "ADAMBS_OUTPUT_DIR";

namespace detail {

using nlohmann::json;

class ConfigReader {
 public:
  explicit ConfigReader(std::vector<std::string>& diagnostics) : diag_(diagnostics) {}

  void error(const std::string& key, const std::string& message) { diag_.push_back(key + ": " + message); }

  // Reports members of `obj` outside `allowed`.
  void check_keys(const json& obj, const std::string& prefix, std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; }))
        error(join(prefix, it.key()), "unknown key");
    }
  }

  template <typename T>
  void number(const json& obj, const std::string& prefix, const char* key, T& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return error(join(prefix, key), "expected a number");
      out = v.get<T>();
    } else {
      if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0))
        return error(join(prefix, key), "expected a nonnegative integer");
      out = v.get<T>();
    }
  }

  void optional_number(const json& obj, const std::string& prefix, const char* key, std::optional<double>& out) {
    if (!obj.contains(key) || obj.at(key).is_null()) return;
    if (!obj.at(key).is_number()) return error(join(prefix, key), "expected a number");
    out = obj.at(key).get<double>();
  }

  void string(const json& obj, const std::string& prefix, const char* key, std::string& out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_string()) return error(join(prefix, key), "expected a string");
    out = obj.at(key).get<std::string>();
  }

  static std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
  }

 private:
  std::vector<std::string>& diag_;
};

}  // namespace detail

/// Parses and validates a JSON experiment document. Every problem is listed
/// in `diagnostics`, each prefixed with the offending key.
inline ExperimentConfig parse_experiment(const nlohmann::json& doc, std::vector<std::string>& diagnostics) {
  detail::ConfigReader rd(diagnostics);
  ExperimentConfig cfg;
  if (!doc.is_object()) {
    rd.error("config", "top level must be a JSON object");
    return cfg;
  }
  rd.check_keys(doc, "", {"dataset", "model", "arms", "batch_size", "iterations", "seeds", "output_dir",
                          "loss_threshold", "timing", "probe"});

  std::optional<std::size_t> example_count;
  if (!doc.contains("dataset") || !doc.at("dataset").is_object()) {
    rd.error("dataset", "missing object");
  } else {
    const auto& ds = doc.at("dataset");
    std::string kind = "heavy_tailed";
    rd.string(ds, "dataset", "kind", kind);
    if (kind == "heavy_tailed") {
      rd.check_keys(ds, "dataset", {"kind", "n", "d", "gamma", "beta3"});
      cfg.dataset.kind = DatasetSpec::Kind::HeavyTailed;
      rd.number(ds, "dataset", "n", cfg.dataset.heavy.n);
      rd.number(ds, "dataset", "d", cfg.dataset.heavy.d);
      rd.number(ds, "dataset", "gamma", cfg.dataset.heavy.gamma);
      rd.number(ds, "dataset", "beta3", cfg.dataset.heavy.beta3);
      if (cfg.dataset.heavy.n < 1) rd.error("dataset.n", "must be at least 1");
      if (cfg.dataset.heavy.d < 1) rd.error("dataset.d", "must be at least 1");
      if (!(cfg.dataset.heavy.gamma >= 1.0)) rd.error("dataset.gamma", "must be >= 1");
      if (!(cfg.dataset.heavy.beta3 > 0.0 && cfg.dataset.heavy.beta3 <= 1.0))
        rd.error("dataset.beta3", "must lie in (0, 1]");
      example_count = cfg.dataset.heavy.n;
    } else if (kind == "csv") {
      rd.check_keys(ds, "dataset", {"kind", "path"});
      cfg.dataset.kind = DatasetSpec::Kind::Csv;
      rd.string(ds, "dataset", "path", cfg.dataset.path);
      if (cfg.dataset.path.empty()) {
        rd.error("dataset.path", "required for csv datasets");
      } else {
        try {
          example_count = load_csv(cfg.dataset.path).size();
        } catch (const Error& e) {
          rd.error("dataset.path", e.what());
        }
      }
    } else {
      rd.error("dataset.kind", "expected \"heavy_tailed\" or \"csv\"");
    }
  }

  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    if (!m.is_object()) {
      rd.error("model", "expected an object");
    } else {
      rd.check_keys(m, "model", {"kind", "hidden"});
      std::string kind = "logistic";
      rd.string(m, "model", "kind", kind);
      if (kind == "logistic") cfg.model.kind = ModelKind::Logistic;
      else if (kind == "one_neuron_relu") cfg.model.kind = ModelKind::OneNeuronRelu;
      else if (kind == "mlp") cfg.model.kind = ModelKind::Mlp;
      else rd.error("model.kind", "expected \"logistic\", \"one_neuron_relu\" or \"mlp\"");
      rd.number(m, "model", "hidden", cfg.model.hidden);
      if (cfg.model.hidden < 1) rd.error("model.hidden", "must be at least 1");
    }
  }

  rd.number(doc, "", "batch_size", cfg.batch_size);
  if (cfg.batch_size < 1) rd.error("batch_size", "must be at least 1");
  rd.number(doc, "", "iterations", cfg.iterations);
  rd.string(doc, "", "output_dir", cfg.output_dir);
  if (doc.contains("loss_threshold") && !doc.at("loss_threshold").is_null()) {
    double t = 0.0;
    rd.number(doc, "", "loss_threshold", t);
    cfg.loss_threshold = t;
  }
  if (doc.contains("timing")) {
    std::string timing;
    rd.string(doc, "", "timing", timing);
    if (timing == "wall") cfg.record_wall_time = true;
    else if (timing == "off") cfg.record_wall_time = false;
    else rd.error("timing", "expected \"wall\" or \"off\"");
  }

  if (doc.contains("seeds")) {
    const auto& s = doc.at("seeds");
    cfg.seeds.clear();
    if (!s.is_array()) {
      rd.error("seeds", "expected an array of nonnegative integers");
    } else {
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (!s[k].is_number_unsigned()) rd.error("seeds[" + std::to_string(k) + "]", "expected a nonnegative integer");
        else cfg.seeds.push_back(s[k].get<std::uint64_t>());
      }
    }
  }
  if (cfg.seeds.empty()) rd.error("seeds", "must list at least one seed");

  if (!doc.contains("arms") || !doc.at("arms").is_array() || doc.at("arms").empty()) {
    rd.error("arms", "must be a nonempty array");
  } else {
    std::set<std::string> names;
    const auto& arms = doc.at("arms");
    for (std::size_t k = 0; k < arms.size(); ++k) {
      const std::string prefix = "arms[" + std::to_string(k) + "]";
      const auto& a = arms[k];
      if (!a.is_object()) {
        rd.error(prefix, "expected an object");
        continue;
      }
      rd.check_keys(a, prefix, {"name", "optimizer", "alpha", "beta1", "beta2", "epsilon", "lambda_decay",
                                "lr_schedule", "bandit"});
      ArmSpec arm;
      std::string optimizer;
      rd.string(a, prefix, "optimizer", optimizer);
      const auto parsed = parse_arm(optimizer);
      if (parsed) arm.arm = *parsed;
      else rd.error(prefix + ".optimizer", "expected adam, adambs, amsgrad or amsgrad-bs");
      arm.name = std::string(to_string(arm.arm));
      rd.string(a, prefix, "name", arm.name);
      // a default name derived from a bad optimizer would only echo that error
      if (parsed || a.contains("name")) {
        if (arm.name.empty() || arm.name.find_first_of("/\\") != std::string::npos)
          rd.error(prefix + ".name", "must be a nonempty file-name-safe string");
        if (!names.insert(arm.name).second) rd.error(prefix + ".name", "duplicate arm name \"" + arm.name + "\"");
      }
      rd.number(a, prefix, "alpha", arm.optim.alpha);
      rd.number(a, prefix, "beta1", arm.optim.beta1);
      rd.number(a, prefix, "beta2", arm.optim.beta2);
      rd.number(a, prefix, "epsilon", arm.optim.epsilon);
      rd.number(a, prefix, "lambda_decay", arm.optim.lambda_decay);
      if (a.contains("lr_schedule")) {
        std::string sched;
        rd.string(a, prefix, "lr_schedule", sched);
        if (sched == "constant") arm.optim.lr_schedule = LrSchedule::Constant;
        else if (sched == "inverse_sqrt") arm.optim.lr_schedule = LrSchedule::InverseSqrt;
        else rd.error(prefix + ".lr_schedule", "expected \"constant\" or \"inverse_sqrt\"");
      }
      for (const auto& msg : arm.optim.diagnostics()) {
        // messages lead with the field name
        std::size_t end = 0;
        while (end < msg.size() && (std::isalnum(static_cast<unsigned char>(msg[end])) || msg[end] == '_')) ++end;
        rd.error(prefix + "." + msg.substr(0, end), msg);
      }
      if (a.contains("bandit")) {
        const auto& b = a.at("bandit");
        const std::string bp = prefix + ".bandit";
        if (!b.is_object()) {
          rd.error(bp, "expected an object");
        } else {
          rd.check_keys(b, bp, {"alpha_p", "grad_norm_bound", "p_min", "bregman_radius"});
          rd.optional_number(b, bp, "alpha_p", arm.bandit.alpha_p);
          rd.optional_number(b, bp, "grad_norm_bound", arm.bandit.grad_norm_bound);
          rd.optional_number(b, bp, "p_min", arm.bandit.p_min);
          rd.optional_number(b, bp, "bregman_radius", arm.bandit.bregman_radius);
          if (arm.bandit.alpha_p && !(*arm.bandit.alpha_p > 0.0)) rd.error(bp + ".alpha_p", "must be positive");
          if (arm.bandit.grad_norm_bound && !(*arm.bandit.grad_norm_bound > 0.0))
            rd.error(bp + ".grad_norm_bound", "must be positive");
          if (arm.bandit.bregman_radius && !(*arm.bandit.bregman_radius > 0.0))
            rd.error(bp + ".bregman_radius", "must be positive");
          if (arm.bandit.p_min) {
            if (!(*arm.bandit.p_min > 0.0)) rd.error(bp + ".p_min", "must be positive");
            else if (example_count && *arm.bandit.p_min * static_cast<double>(*example_count) > 1.0)
              rd.error(bp + ".p_min", "p_min * n = " + format_g17(*arm.bandit.p_min * static_cast<double>(*example_count)) +
                                          " exceeds 1");
          }
        }
      }
      cfg.arms.push_back(std::move(arm));
    }
  }

  if (doc.contains("probe")) {
    const auto& p = doc.at("probe");
    if (!p.is_object()) {
      rd.error("probe", "expected an object");
    } else {
      rd.check_keys(p, "probe", {"gamma", "beta3", "d", "n_grid", "trials", "seed"});
      rd.number(p, "probe", "gamma", cfg.probe.gamma);
      rd.number(p, "probe", "beta3", cfg.probe.beta3);
      rd.number(p, "probe", "d", cfg.probe.d);
      rd.number(p, "probe", "trials", cfg.probe.trials);
      rd.number(p, "probe", "seed", cfg.probe.seed);
      if (p.contains("n_grid")) {
        cfg.probe.n_grid.clear();
        const auto& g = p.at("n_grid");
        if (!g.is_array()) rd.error("probe.n_grid", "expected an array");
        else
          for (const auto& v : g) {
            if (!v.is_number_unsigned()) rd.error("probe.n_grid", "entries must be positive integers");
            else cfg.probe.n_grid.push_back(v.get<std::size_t>());
          }
      }
      if (!(cfg.probe.gamma >= 2.0)) rd.error("probe.gamma", "must be >= 2");
      if (!(cfg.probe.beta3 > 0.0 && cfg.probe.beta3 <= 1.0)) rd.error("probe.beta3", "must lie in (0, 1]");
      if (cfg.probe.d < 2) rd.error("probe.d", "must be at least 2");
      if (cfg.probe.trials < 2) rd.error("probe.trials", "must be at least 2");
      if (cfg.probe.n_grid.empty()) rd.error("probe.n_grid", "must be nonempty");
      for (std::size_t k = 0; k < cfg.probe.n_grid.size(); ++k) {
        if (cfg.probe.n_grid[k] < 2 || (k > 0 && cfg.probe.n_grid[k] <= cfg.probe.n_grid[k - 1])) {
          rd.error("probe.n_grid", "must be strictly increasing values >= 2");
          break;
        }
      }
    }
  }
  return cfg;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ParseError, "config: " + std::string(e.what()));
  }
}

/// Full validation of a config file without running anything. Returns the
/// list of violated constraints (empty when the file is valid).
inline std::vector<std::string> validate_config(const std::string& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::Io, "file not found: " + path);
  std::vector<std::string> diagnostics;
  try {
    const auto doc = read_json_file(path);
    parse_experiment(doc, diagnostics);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ParseError) throw;
    diagnostics.emplace_back(e.what());
  }
  return diagnostics;
}

struct CellResult {
  std::string arm;
  std::uint64_t seed = 0;
  std::vector<RunMetrics> metrics;
  double initial_loss = 0.0;
};

struct ArmSummary {
  std::string arm;
  std::vector<double> iters_to_threshold;  // per seed; +inf when never reached
  std::vector<double> wall_ms;             // per seed, total
  std::vector<double> final_loss;          // per seed
  double median_iters = 0.0;
  double median_wall_ms = 0.0;
  double median_final_loss = 0.0;
};

struct ExperimentResult {
  std::vector<CellResult> cells;
  std::vector<double> thresholds;  // per seed
  std::vector<ArmSummary> summary;
};

inline double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  if (values.size() % 2 == 1) return values[m];
  if (std::isinf(values[m - 1]) || std::isinf(values[m])) return values[m];
  return 0.5 * (values[m - 1] + values[m]);
}

inline Dataset build_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  const LabelSet labels = cfg.model.kind == ModelKind::OneNeuronRelu ? LabelSet::PlusMinusOne : LabelSet::ZeroOne;
  if (cfg.dataset.kind == DatasetSpec::Kind::Csv) return load_csv(cfg.dataset.path, labels);
  HeavyTailConfig heavy = cfg.dataset.heavy;
  heavy.seed = seed;
  Dataset data = generate_heavy_tailed(heavy);
  data.labels = coerce_labels(data.labels, labels);
  return data;
}

inline std::unique_ptr<Model> build_model(const ExperimentConfig& cfg, Dataset data, std::uint64_t seed) {
  switch (cfg.model.kind) {
    case ModelKind::Logistic: return std::make_unique<LogisticRegression>(std::move(data));
    case ModelKind::OneNeuronRelu: return std::make_unique<OneNeuronRelu>(std::move(data));
    case ModelKind::Mlp: {
      Rng init(mix_seed(seed, 1));
      return std::make_unique<SmallMlp>(std::move(data), cfg.model.hidden, init);
    }
  }
  throw Error(ErrorKind::InvalidConfig, "unknown model kind");
}

/// Trains every (arm, seed) cell. Arms of one seed share the dataset, the
/// initial parameters and the sampling random stream.
inline ExperimentResult run_cells(const ExperimentConfig& cfg) {
  ExperimentResult result;
  for (std::uint64_t seed : cfg.seeds) {
    const auto model = build_model(cfg, build_dataset(cfg, seed), seed);
    const Eigen::VectorXd theta0 = model->initial_theta();
    const double initial_loss = model->full_loss(theta0);
    double best = initial_loss;
    for (const auto& arm : cfg.arms) {
      TrainConfig tc;
      tc.arm = arm.arm;
      tc.optim = arm.optim;
      tc.bandit = arm.bandit;
      tc.batch_size = cfg.batch_size;
      tc.iterations = cfg.iterations;
      tc.record_wall_time = cfg.record_wall_time;
      Rng rng(mix_seed(seed, 2));
      auto run = train(*model, theta0, tc, rng);
      for (const auto& row : run.metrics) best = std::min(best, row.full_loss);
      result.cells.push_back({arm.name, seed, std::move(run.metrics), initial_loss});
    }
    double threshold = 0.0;
    if (cfg.loss_threshold) {
      threshold = *cfg.loss_threshold;
    } else if (initial_loss > 0.0 && best > 0.0) {
      threshold = std::exp(0.5 * (std::log(initial_loss) + std::log(best)));
    } else {
      threshold = 0.5 * (initial_loss + best);
    }
    result.thresholds.push_back(threshold);
  }

  for (const auto& arm : cfg.arms) {
    ArmSummary s;
    s.arm = arm.name;
    for (std::size_t k = 0; k < result.cells.size(); ++k) {
      const auto& cell = result.cells[k];
      if (cell.arm != arm.name) continue;
      const std::size_t seed_idx = k / cfg.arms.size();
      double iters = std::numeric_limits<double>::infinity();
      for (const auto& row : cell.metrics) {
        if (row.full_loss <= result.thresholds[seed_idx]) {
          iters = static_cast<double>(row.iter);
          break;
        }
      }
      s.iters_to_threshold.push_back(iters);
      s.wall_ms.push_back(cell.metrics.empty() ? 0.0 : cell.metrics.back().wall_ms);
      s.final_loss.push_back(cell.metrics.empty() ? cell.initial_loss : cell.metrics.back().full_loss);
    }
    s.median_iters = median(s.iters_to_threshold);
    s.median_wall_ms = median(s.wall_ms);
    s.median_final_loss = median(s.final_loss);
    result.summary.push_back(std::move(s));
  }
  return result;
}

inline constexpr std::string_view kSummaryHeader = "arm,median_iters_to_threshold,median_wall_ms,median_final_loss";

inline void write_summary_csv(std::ostream& out, const std::vector<ArmSummary>& summary) {
  out << kSummaryHeader << '\n';
  for (const auto& s : summary)
    out << s.arm << ',' << format_g17(s.median_iters) << ',' << format_g17(s.median_wall_ms) << ','
        << format_g17(s.median_final_loss) << '\n';
}

/// Runs all cells and writes `<arm>_seed<seed>.csv` per cell plus
/// `summary.csv` into cfg.output_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  auto result = run_cells(cfg);
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + cfg.output_dir + ": " + ec.message());
  auto open = [&](const std::string& name) {
    std::ofstream out(fs::path(cfg.output_dir) / name, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + (fs::path(cfg.output_dir) / name).string());
    return out;
  };
  for (const auto& cell : result.cells) {
    auto out = open(cell.arm + "_seed" + std::to_string(cell.seed) + ".csv");
    write_metrics_csv(out, cell.metrics);
  }
  auto out = open("summary.csv");
  write_summary_csv(out, result.summary);
  return result;
}

struct ProbeResult {
  oracle::ScalingReport uniform;
  oracle::ScalingReport floored;
};

/// Runs both scaling probes and writes scaling_uniform.csv and
/// scaling_floored.csv into cfg.output_dir.
inline ProbeResult run_probes(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const auto& p = cfg.probe;
  ProbeResult r{oracle::uniform_scaling_probe(p.gamma, p.beta3, p.d, p.n_grid, p.trials, p.seed),
                oracle::floored_scaling_probe(p.gamma, p.beta3, p.d, p.n_grid)};
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + cfg.output_dir);
  std::ofstream u(fs::path(cfg.output_dir) / "scaling_uniform.csv", std::ios::binary);
  std::ofstream f(fs::path(cfg.output_dir) / "scaling_floored.csv", std::ios::binary);
  if (!u || !f) throw Error(ErrorKind::Io, "cannot write probe outputs in " + cfg.output_dir);
  oracle::write_scaling_csv(u, r.uniform);
  oracle::write_scaling_csv(f, r.floored);
  return r;
}

}  // namespace adambs
