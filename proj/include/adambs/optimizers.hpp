#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "adambs/bandit_sampler.hpp"
#include "adambs/error.hpp"
#include "adambs/format.hpp"
#include "adambs/models.hpp"
#include "adambs/random.hpp"

namespace adambs {

enum class LrSchedule { Constant, InverseSqrt };

struct OptimConfig {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda_decay = 1.0;  // beta1 at step t is beta1 * lambda^(t-1)
  LrSchedule lr_schedule = LrSchedule::Constant;

  /// Every violated constraint, one message each; empty when valid.
  std::vector<std::string> diagnostics() const {
    std::vector<std::string> out;
    if (!(alpha > 0.0) || !std::isfinite(alpha)) out.emplace_back("alpha must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) out.emplace_back("beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) out.emplace_back("beta2 must lie in [0, 1)");
    if (!(epsilon > 0.0)) out.emplace_back("epsilon must be positive");
    if (!(lambda_decay > 0.0 && lambda_decay <= 1.0))
      out.emplace_back("lambda_decay must lie in (0, 1]");
    if (beta1 >= 0.0 && beta2 > 0.0 && beta2 < 1.0 && !(beta1 * beta1 / std::sqrt(beta2) < 1.0))
      out.emplace_back("beta1^2 / sqrt(beta2) must be < 1");
    return out;
  }

  void validate() const {
    const auto d = diagnostics();
    if (!d.empty()) throw Error(ErrorKind::InvalidConfig, d.front());
  }

  double learning_rate(std::size_t t) const {
    return lr_schedule == LrSchedule::InverseSqrt ? alpha / std::sqrt(static_cast<double>(t)) : alpha;
  }
};

struct MomentState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::optional<Eigen::VectorXd> v_hat_max;  // AMSGrad only
  std::size_t t = 0;

  static MomentState adam(Eigen::Index dim) {
    return MomentState{Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim), std::nullopt, 0};
  }
  static MomentState amsgrad(Eigen::Index dim) {
    return MomentState{Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim),
                       Eigen::VectorXd::Zero(dim), 0};
  }
};

/// K draws with, for each, the example's gradient, its norm, and the
/// probability it had when drawn.
struct MiniBatch {
  std::vector<std::size_t> indices;
  std::vector<Eigen::VectorXd> grads;
  std::vector<double> norms;
  std::vector<double> probs;

  std::size_t size() const noexcept { return indices.size(); }
};

struct GradientEstimate {
  Eigen::VectorXd value;
  std::vector<double> norms;
};

/// (1/K) sum_k g_k / (n p_k): unbiased for the full mean gradient under the
/// sampling distribution. Terms are summed in draw order.
inline GradientEstimate unbiased_estimate(const MiniBatch& batch, std::size_t n) {
  if (batch.size() == 0) throw Error(ErrorKind::InvalidConfig, "empty mini-batch");
  if (batch.grads.size() != batch.size() || batch.probs.size() != batch.size())
    throw Error(ErrorKind::DimensionMismatch, "mini-batch fields differ in length");
  const double nd = static_cast<double>(n);
  GradientEstimate out{Eigen::VectorXd::Zero(batch.grads.front().size()), batch.norms};
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const double p = batch.probs[k];
    if (!(p > 0.0)) throw Error(ErrorKind::InvalidConfig, "sampling probability must be positive");
    if (batch.grads[k].size() != out.value.size())
      throw Error(ErrorKind::DimensionMismatch, "gradient dimensions differ within batch");
    out.value += batch.grads[k] / (nd * p);
  }
  out.value /= static_cast<double>(batch.size());
  return out;
}

namespace detail {

inline void check_step_inputs(const MomentState& state, const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& g) {
  if (theta.size() != g.size() || state.m.size() != g.size() || state.v.size() != g.size())
    throw Error(ErrorKind::DimensionMismatch, "parameter, gradient and moment sizes differ");
  if (!g.allFinite()) throw Error(ErrorKind::NonFinite, "gradient estimate has non-finite entries");
}

// Moment recursions shared by both optimizers; returns the learning rate and
// the bias-corrected first moment.
inline double advance_moments(MomentState& state, const Eigen::VectorXd& g, const OptimConfig& config,
                              Eigen::VectorXd& m_hat) {
  state.t += 1;
  const auto t = static_cast<double>(state.t);
  const double beta1_t = config.beta1 * std::pow(config.lambda_decay, t - 1.0);
  state.m = beta1_t * state.m + (1.0 - beta1_t) * g;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * g.cwiseProduct(g);
  // bias correction uses the undecayed beta1
  m_hat = state.m / (1.0 - std::pow(config.beta1, t));
  return config.learning_rate(state.t);
}

}  // namespace detail

inline void adam_step(MomentState& state, Eigen::VectorXd& theta, const Eigen::VectorXd& g,
                      const OptimConfig& config) {
  detail::check_step_inputs(state, theta, g);
  Eigen::VectorXd m_hat;
  const double lr = detail::advance_moments(state, g, config, m_hat);
  const Eigen::VectorXd v_hat = state.v / (1.0 - std::pow(config.beta2, static_cast<double>(state.t)));
  theta.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + config.epsilon);
}

inline void adam_step(MomentState& state, Eigen::VectorXd& theta, const GradientEstimate& g_hat,
                      const OptimConfig& config) {
  adam_step(state, theta, g_hat.value, config);
}

/// Adam with the denominator built from the running elementwise maximum of
/// the bias-corrected second moment.
inline void amsgrad_step(MomentState& state, Eigen::VectorXd& theta, const Eigen::VectorXd& g,
                         const OptimConfig& config) {
  detail::check_step_inputs(state, theta, g);
  if (!state.v_hat_max || state.v_hat_max->size() != g.size())
    throw Error(ErrorKind::InvalidConfig, "AMSGrad state is missing v_hat_max");
  Eigen::VectorXd m_hat;
  const double lr = detail::advance_moments(state, g, config, m_hat);
  const Eigen::VectorXd v_hat = state.v / (1.0 - std::pow(config.beta2, static_cast<double>(state.t)));
  *state.v_hat_max = state.v_hat_max->cwiseMax(v_hat);
  theta.array() -= lr * m_hat.array() / (state.v_hat_max->array().sqrt() + config.epsilon);
}

inline void amsgrad_step(MomentState& state, Eigen::VectorXd& theta, const GradientEstimate& g_hat,
                         const OptimConfig& config) {
  amsgrad_step(state, theta, g_hat.value, config);
}

enum class Arm { Adam, AdamBS, AMSGrad, AMSGradBS };

inline bool uses_bandit(Arm arm) { return arm == Arm::AdamBS || arm == Arm::AMSGradBS; }
inline bool uses_amsgrad(Arm arm) { return arm == Arm::AMSGrad || arm == Arm::AMSGradBS; }

inline std::string_view to_string(Arm arm) {
  switch (arm) {
    case Arm::Adam: return "adam";
    case Arm::AdamBS: return "adambs";
    case Arm::AMSGrad: return "amsgrad";
    case Arm::AMSGradBS: return "amsgrad-bs";
  }
  return "adam";
}

inline std::optional<Arm> parse_arm(std::string_view name) {
  for (Arm a : {Arm::Adam, Arm::AdamBS, Arm::AMSGrad, Arm::AMSGradBS}) {
    if (to_string(a) == name) return a;
  }
  return std::nullopt;
}

struct TrainConfig {
  Arm arm = Arm::AdamBS;
  OptimConfig optim;
  BanditOptions bandit;
  std::size_t batch_size = 1;
  std::size_t iterations = 0;
  bool freeze_distribution = false;  // sample from p but never update it
  bool record_wall_time = true;      // false writes wall_ms = 0
  bool record_full_loss = true;
};

struct RunMetrics {
  std::size_t iter = 0;
  double wall_ms = 0.0;
  double full_loss = 0.0;
  double batch_loss = 0.0;
  double entropy = 0.0;
};

struct TrainResult {
  std::vector<RunMetrics> metrics;
  Eigen::VectorXd theta;
  MomentState state;
  std::optional<ExampleDistribution> distribution;
};

/// Called after each parameter step with (iteration, theta, moments).
using StepObserver = std::function<void(std::size_t, const Eigen::VectorXd&, const MomentState&)>;

/// Runs `config.iterations` optimizer steps from `theta0`.
///
/// Every draw consumes exactly one uniform variate from `rng`; uniform arms
/// map it to floor(u n), bandit arms descend the distribution's tree. The
/// bandit arms importance-weight the batch, the uniform arms average it.
inline TrainResult train(const Model& model, Eigen::VectorXd theta0, const TrainConfig& config, Rng& rng,
                         const StepObserver& observer = {}) {
  config.optim.validate();
  if (config.batch_size == 0) throw Error(ErrorKind::InvalidConfig, "batch size must be at least 1");
  if (static_cast<std::size_t>(theta0.size()) != model.dim())
    throw Error(ErrorKind::DimensionMismatch, "theta0 does not match model dimension");
  if (!theta0.allFinite()) throw Error(ErrorKind::NonFinite, "initial parameters not finite");

  const std::size_t n = model.size();
  const auto dim = static_cast<Eigen::Index>(model.dim());
  const bool bandit = uses_bandit(config.arm);
  std::optional<BanditSampler> sampler;
  if (bandit) sampler.emplace(n, config.bandit, config.iterations);

  TrainResult result{{}, std::move(theta0),
                     uses_amsgrad(config.arm) ? MomentState::amsgrad(dim) : MomentState::adam(dim),
                     std::nullopt};
  result.metrics.reserve(config.iterations);
  const double uniform_entropy = std::log(static_cast<double>(n));
  const double uniform_p = 1.0 / static_cast<double>(n);

  using Clock = std::chrono::steady_clock;
  double elapsed_ms = 0.0;

  MiniBatch batch;
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    const auto step_start = Clock::now();
    batch.indices.resize(config.batch_size);
    batch.probs.resize(config.batch_size);
    batch.grads.resize(config.batch_size);
    batch.norms.resize(config.batch_size);
    for (std::size_t k = 0; k < config.batch_size; ++k) {
      const double u = uniform01(rng);
      if (bandit) {
        const auto& dist = sampler->distribution();
        batch.indices[k] = dist.index_for(u);
        batch.probs[k] = dist.prob(batch.indices[k]);
      } else {
        batch.indices[k] = std::min(n - 1, static_cast<std::size_t>(u * static_cast<double>(n)));
        batch.probs[k] = uniform_p;
      }
    }

    double batch_loss = 0.0;
    for (std::size_t k = 0; k < config.batch_size; ++k) {
      const std::size_t j = batch.indices[k];
      batch_loss += model.loss(result.theta, j);
      batch.grads[k] = model.grad(result.theta, j);
      if (!batch.grads[k].allFinite())
        throw Error(ErrorKind::NonFinite, "gradient of example " + std::to_string(j) + " at iteration " +
                                              std::to_string(it) + " is not finite");
      batch.norms[k] = batch.grads[k].norm();
    }
    batch_loss /= static_cast<double>(config.batch_size);
    if (!std::isfinite(batch_loss))
      throw Error(ErrorKind::NonFinite, "batch loss at iteration " + std::to_string(it) + " is not finite");

    GradientEstimate g_hat;
    if (bandit) {
      g_hat = unbiased_estimate(batch, n);
    } else {
      g_hat.value = Eigen::VectorXd::Zero(dim);
      for (const auto& g : batch.grads) g_hat.value += g;
      g_hat.value /= static_cast<double>(config.batch_size);
      g_hat.norms = batch.norms;
    }

    if (uses_amsgrad(config.arm)) {
      amsgrad_step(result.state, result.theta, g_hat, config.optim);
    } else {
      adam_step(result.state, result.theta, g_hat, config.optim);
    }
    if (bandit && !config.freeze_distribution) sampler->update(batch.indices, batch.norms);
    // diagnostics below are excluded from the clock
    elapsed_ms += std::chrono::duration<double, std::milli>(Clock::now() - step_start).count();

    if (observer) observer(it, result.theta, result.state);

    RunMetrics row;
    row.iter = it;
    row.batch_loss = batch_loss;
    row.full_loss = config.record_full_loss ? model.full_loss(result.theta) : 0.0;
    if (!std::isfinite(row.full_loss))
      throw Error(ErrorKind::NonFinite, "full loss at iteration " + std::to_string(it) + " is not finite");
    row.entropy = bandit ? entropy(sampler->distribution()) : uniform_entropy;
    row.wall_ms = config.record_wall_time ? elapsed_ms : 0.0;
    result.metrics.push_back(row);
  }
  if (sampler) result.distribution = sampler->distribution();
  return result;
}

inline constexpr std::string_view kMetricsHeader = "iter,wall_ms,full_loss,batch_loss,entropy";

inline void write_metrics_csv(std::ostream& out, std::span<const RunMetrics> rows) {
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    out << r.iter << ',' << format_g17(r.wall_ms) << ',' << format_g17(r.full_loss) << ','
        << format_g17(r.batch_loss) << ',' << format_g17(r.entropy) << '\n';
  }
}

}  // namespace adambs
