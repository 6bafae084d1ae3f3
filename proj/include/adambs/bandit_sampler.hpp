#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <spdlog/spdlog.h>

#include "adambs/error.hpp"
#include "adambs/format.hpp"
#include "adambs/random.hpp"
#include "adambs/sum_tree.hpp"

namespace adambs {

/// Fully resolved parameters of the distribution update.
struct BanditConfig {
  double alpha_p = 1.0;          // step size of the exponential update
  double grad_norm_bound = 1.0;  // L, assumed bound on per-example gradient norms
  double p_min = 0.0;            // probability floor
  double bregman_radius = 1.0;   // R; only enters theoretical_alpha_p
  std::size_t horizon = 1;       // T; only enters theoretical_alpha_p

  void validate(std::size_t n) const {
    if (n == 0) throw Error(ErrorKind::InvalidConfig, "n must be at least 1");
    if (!(alpha_p > 0.0) || !std::isfinite(alpha_p))
      throw Error(ErrorKind::InvalidConfig, "alpha_p must be positive");
    if (!(grad_norm_bound > 0.0) || !std::isfinite(grad_norm_bound))
      throw Error(ErrorKind::InvalidConfig, "grad_norm_bound must be positive");
    if (!(p_min > 0.0)) throw Error(ErrorKind::InvalidConfig, "p_min must be positive");
    if (p_min * static_cast<double>(n) > 1.0 + 1e-12)
      throw Error(ErrorKind::InvalidConfig,
                  "p_min=" + format_g17(p_min) + " exceeds 1/n for n=" + std::to_string(n));
    if (!(bregman_radius > 0.0)) throw Error(ErrorKind::InvalidConfig, "bregman_radius must be positive");
    if (horizon < 1) throw Error(ErrorKind::InvalidConfig, "horizon must be at least 1");
  }
};

/// Step size sqrt(2 R^2 p_min^4 / (n T L^4)) that balances the regret bound
/// of the exponential-weights update over a horizon of T rounds.
inline double theoretical_alpha_p(const BanditConfig& config, std::size_t n) {
  const double p2 = config.p_min * config.p_min;
  const double l2 = config.grad_norm_bound * config.grad_norm_bound;
  const double r2 = config.bregman_radius * config.bregman_radius;
  return std::sqrt(2.0 * r2 * p2 * p2 /
                   (static_cast<double>(n) * static_cast<double>(config.horizon) * l2 * l2));
}

inline double default_p_min(std::size_t n) { return 1.0 / (10.0 * static_cast<double>(n)); }

// KL(p || uniform) <= log n bounds the divergence reachable from the
// uniform start.
inline double default_bregman_radius(std::size_t n) {
  return n > 1 ? std::sqrt(std::log(static_cast<double>(n))) : 1.0;
}

/// User-facing knobs. Unset fields take their defaults when resolved:
/// p_min = 1/(10 n), R = sqrt(log n), L = 1.1 x running max observed norm,
/// alpha_p = theoretical_alpha_p at the current L.
struct BanditOptions {
  std::optional<double> alpha_p;
  std::optional<double> grad_norm_bound;
  std::optional<double> p_min;
  std::optional<double> bregman_radius;

  BanditConfig resolve(std::size_t n, std::size_t horizon, double bound_if_unset = 1.0) const {
    BanditConfig c;
    c.p_min = p_min.value_or(default_p_min(n));
    c.bregman_radius = bregman_radius.value_or(default_bregman_radius(n));
    c.horizon = std::max<std::size_t>(horizon, 1);
    c.grad_norm_bound = grad_norm_bound.value_or(bound_if_unset);
    c.alpha_p = alpha_p ? *alpha_p : theoretical_alpha_p(c, n);
    return c;
  }
};

namespace detail {

inline void warn_norm_clamped(double grad_norm, double bound) {
  static std::atomic<std::size_t> count{0};
  const std::size_t seen = count.fetch_add(1, std::memory_order_relaxed);
  if (seen == 0 || (seen + 1) % 10000 == 0) {
    spdlog::warn("gradient norm {} exceeds bound L={}; clamped ({} occurrences)", grad_norm, bound,
                 seen + 1);
  }
}

}  // namespace detail

/// Bandit loss of pulling an example with gradient norm `grad_norm` while it
/// has sampling probability `p_j`: L^2/p_min^2 - |g|^2/p_j^2. Nonnegative,
/// and smaller for examples with larger gradients. Norms above L are clamped.
inline double bandit_loss(double grad_norm, double p_j, double bound, double p_min) {
  if (grad_norm > bound) {
    detail::warn_norm_clamped(grad_norm, bound);
    grad_norm = bound;
  }
  const double ceiling = (bound * bound) / (p_min * p_min);
  const double loss = ceiling - (grad_norm * grad_norm) / (p_j * p_j);
  // p_j can sit a rounding error below p_min
  return std::clamp(loss, 0.0, ceiling);
}

inline double bandit_loss(double grad_norm, double p_j, const BanditConfig& config) {
  return bandit_loss(grad_norm, p_j, config.grad_norm_bound, config.p_min);
}

/// KL projection of positive weights onto {q : sum q = 1, q_j >= p_min}.
///
/// The minimizer has the form q_j = max(p_min, c * w_j). Weights are sorted
/// ascending and the number m of floored entries is the smallest m for which
/// c_m = (1 - m p_min) / sum_{k >= m} w_(k) lifts w_(m) to at least p_min.
inline std::vector<double> project_kl(std::span<const double> weights, double p_min) {
  const std::size_t n = weights.size();
  if (n == 0) throw Error(ErrorKind::InvalidConfig, "project_kl on empty weights");
  if (p_min < 0.0 || p_min * static_cast<double>(n) > 1.0 + 1e-12)
    throw Error(ErrorKind::InfeasibleFloor,
                "n*p_min=" + format_g17(p_min * static_cast<double>(n)) + " > 1");
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w))
      throw Error(ErrorKind::InvalidConfig, "project_kl requires positive finite weights");
  }

  std::vector<double> sorted(weights.begin(), weights.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t k = n; k-- > 0;) suffix[k] = suffix[k + 1] + sorted[k];

  double scale = 0.0;
  std::size_t floored = n;
  for (std::size_t m = 0; m < n; ++m) {
    const double free_mass = 1.0 - static_cast<double>(m) * p_min;
    if (free_mass <= 0.0) break;
    const double c = free_mass / suffix[m];
    if (c * sorted[m] >= p_min) {
      scale = c;
      floored = m;
      break;
    }
  }

  std::vector<double> q(n);
  if (floored == n) {
    // n * p_min == 1: the feasible set is the single point.
    std::fill(q.begin(), q.end(), 1.0 / static_cast<double>(n));
    return q;
  }
  for (std::size_t j = 0; j < n; ++j) q[j] = std::max(p_min, scale * weights[j]);
  return q;
}

/// Importance distribution over n examples.
///
/// Probabilities are stored as unnormalized leaf weights of a SumTree and
/// read as leaf / normalizer, where the normalizer is the tree total after
/// each update (exactly 1 for freshly constructed distributions, so loaded
/// snapshots read back bit-for-bit). Sampling is an O(log n) descent. Every
/// probability is at least p_min and they sum to 1 up to rounding.
class ExampleDistribution {
 public:
  static ExampleDistribution uniform(std::size_t n, double p_min) {
    if (n == 0) throw Error(ErrorKind::InvalidConfig, "distribution needs n >= 1");
    if (!(p_min > 0.0) || p_min * static_cast<double>(n) > 1.0 + 1e-12)
      throw Error(ErrorKind::InvalidConfig,
                  "p_min=" + format_g17(p_min) + " infeasible for n=" + std::to_string(n));
    std::vector<double> probs(n, 1.0 / static_cast<double>(n));
    return ExampleDistribution(std::move(probs), p_min);
  }

  /// Adopts `probs` as-is after checking the simplex and floor constraints.
  static ExampleDistribution from_probabilities(std::vector<double> probs, double p_min) {
    const std::size_t n = probs.size();
    if (n == 0) throw Error(ErrorKind::InvalidConfig, "distribution needs n >= 1");
    if (!(p_min > 0.0) || p_min * static_cast<double>(n) > 1.0 + 1e-12)
      throw Error(ErrorKind::InvalidConfig, "p_min infeasible for n=" + std::to_string(n));
    double sum = 0.0;
    for (double p : probs) {
      if (!std::isfinite(p) || p < p_min * (1.0 - 1e-12))
        throw Error(ErrorKind::InvalidConfig, "probability below floor " + format_g17(p_min));
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw Error(ErrorKind::InvalidConfig, "probabilities sum to " + format_g17(sum));
    return ExampleDistribution(std::move(probs), p_min);
  }

  std::size_t size() const noexcept { return tree_.size(); }
  double p_min() const noexcept { return p_min_; }

  double prob(std::size_t j) const {
    if (j >= size()) throw Error(ErrorKind::IndexOutOfRange, "index " + std::to_string(j));
    return std::max(p_min_, tree_.leaf(j) / total_);
  }

  std::vector<double> probs() const {
    std::vector<double> out(size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::max(p_min_, tree_.leaf(j) / total_);
    return out;
  }

  /// Unnormalized weights; probs() is weights() / sum.
  std::vector<double> weights() const { return tree_.leaves(); }

  const SumTree<double>& tree() const noexcept { return tree_; }

  /// Maps a uniform variate u in [0, 1) to an index by tree descent.
  std::size_t index_for(double u) const { return tree_.find(u * tree_.total()); }

  std::size_t sample(Rng& rng) const { return index_for(uniform01(rng)); }

  /// Number of O(n) rebuilds performed by updates (diagnostic).
  std::size_t full_rebuilds() const noexcept { return full_rebuilds_; }

 private:
  ExampleDistribution(std::vector<double> probs, double p_min)
      : p_min_(p_min), tree_(std::span<const double>(probs)) {}

  friend void update_distribution(ExampleDistribution& dist, std::span<const std::size_t> indices,
                                  std::span<const double> grad_norms, const BanditConfig& config);

  double p_min_ = 0.0;
  SumTree<double> tree_;
  double total_ = 1.0;
  std::size_t full_rebuilds_ = 0;
};

inline ExampleDistribution new_uniform(std::size_t n, const BanditConfig& config) {
  if (n == 0) throw Error(ErrorKind::InvalidConfig, "n must be at least 1");
  if (config.p_min * static_cast<double>(n) > 1.0 + 1e-12)
    throw Error(ErrorKind::InvalidConfig,
                "p_min=" + format_g17(config.p_min) + " exceeds 1/n for n=" + std::to_string(n));
  config.validate(n);
  return ExampleDistribution::uniform(n, config.p_min);
}

/// K independent draws with replacement.
inline std::vector<std::size_t> sample_batch(const ExampleDistribution& dist, std::size_t batch_size,
                                             Rng& rng) {
  std::vector<std::size_t> out(batch_size);
  for (auto& idx : out) idx = dist.sample(rng);
  return out;
}

/// Importance-weighted estimate of the per-example bandit losses:
/// h_j = sum_{k : I_k = j} l_k / (K p_j), zero for examples not drawn.
inline std::vector<double> estimate_bandit_gradient(const ExampleDistribution& dist,
                                                    std::span<const std::size_t> indices,
                                                    std::span<const double> losses) {
  if (indices.size() != losses.size())
    throw Error(ErrorKind::DimensionMismatch, "indices and losses differ in length");
  const double k = static_cast<double>(indices.size());
  std::vector<double> h(dist.size(), 0.0);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t j = indices[b];
    if (j >= dist.size()) throw Error(ErrorKind::IndexOutOfRange, "batch index " + std::to_string(j));
    h[j] += losses[b] / (k * dist.prob(j));
  }
  return h;
}

/// One exponential-weights step followed by KL projection onto the floored
/// simplex, applied in place.
///
/// Unsampled entries keep w_j = p_j, and since every bandit loss is
/// nonnegative the projection's scale c is at least 1. Unsampled entries
/// therefore all become c * p_j (none can hit the floor) and only sampled
/// entries may be floored. In tree terms the unsampled leaves stay put, the
/// implied total shrinks by c, and only the K sampled leaves are rewritten.
/// When that shortcut does not apply the full projection and an O(n)
/// rebuild run instead.
inline void update_distribution(ExampleDistribution& dist, std::span<const std::size_t> indices,
                                std::span<const double> grad_norms, const BanditConfig& config) {
  if (indices.size() != grad_norms.size())
    throw Error(ErrorKind::DimensionMismatch, "indices and grad_norms differ in length");
  const std::size_t n = dist.size();
  if (indices.empty()) return;
  for (std::size_t j : indices) {
    if (j >= n) throw Error(ErrorKind::IndexOutOfRange, "batch index " + std::to_string(j));
  }
  for (double g : grad_norms) {
    if (!std::isfinite(g) || g < 0.0) throw Error(ErrorKind::NonFinite, "gradient norm not finite");
  }

  constexpr double kWeightFloor = 1e-300;
  const double batch = static_cast<double>(indices.size());
  const double p_min = dist.p_min_;

  struct Entry {
    std::size_t index;
    double prob;
    double loss_sum;
    double weight;
  };
  std::vector<std::pair<std::size_t, double>> draws;
  draws.reserve(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) draws.emplace_back(indices[b], grad_norms[b]);
  std::sort(draws.begin(), draws.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<Entry> entries;
  for (const auto& [j, norm] : draws) {
    if (entries.empty() || entries.back().index != j) entries.push_back({j, dist.prob(j), 0.0, 0.0});
    entries.back().loss_sum += bandit_loss(norm, entries.back().prob, config);
  }
  double sampled_mass = 0.0;
  for (auto& e : entries) {
    const double h = e.loss_sum / (batch * e.prob);
    e.weight = std::max(kWeightFloor, e.prob * std::exp(-config.alpha_p * h));
    sampled_mass += e.prob;
  }

  // Restricted active-set scan over the sampled entries.
  const double unsampled_mass = 1.0 - sampled_mass;
  std::vector<Entry> by_weight = entries;
  std::sort(by_weight.begin(), by_weight.end(),
            [](const Entry& a, const Entry& b) { return a.weight < b.weight; });
  std::vector<double> suffix(by_weight.size() + 1, 0.0);
  for (std::size_t k = by_weight.size(); k-- > 0;) suffix[k] = suffix[k + 1] + by_weight[k].weight;

  double scale = 0.0;
  bool solved = false;
  for (std::size_t m = 0; m <= by_weight.size(); ++m) {
    const double free_mass = 1.0 - static_cast<double>(m) * p_min;
    const double denom = unsampled_mass + suffix[m];
    if (!(free_mass > 0.0) || !(denom > 0.0)) break;
    const double c = free_mass / denom;
    if (m == by_weight.size() || c * by_weight[m].weight >= p_min) {
      scale = c;
      solved = true;
      break;
    }
  }

  const bool fast_path = solved && entries.size() < n && unsampled_mass > 1e-9 && scale >= 1.0 - 1e-12;
  SumTree<double>& tree = dist.tree_;
  if (fast_path) {
    const double new_total = tree.total() / scale;
    for (const auto& e : entries) tree.set(e.index, std::max(p_min, scale * e.weight) * new_total);
  } else {
    std::vector<double> w = dist.probs();
    for (const auto& e : entries) w[e.index] = e.weight;
    const std::vector<double> q = project_kl(w, p_min);
    for (std::size_t j = 0; j < n; ++j) tree.set_leaf_unsynced(j, q[j]);
    tree.rebuild();
    ++dist.full_rebuilds_;
  }

  // Keep the implied total away from under/overflow.
  const double total = tree.total();
  if (total < 1e-200 || total > 1e200) {
    for (std::size_t j = 0; j < n; ++j) tree.set_leaf_unsynced(j, tree.leaf(j) / total);
    tree.rebuild();
    ++dist.full_rebuilds_;
  }
  dist.total_ = tree.total();
}

/// Shannon entropy in nats.
inline double entropy(const ExampleDistribution& dist) {
  double h = 0.0;
  for (double p : dist.probs()) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

/// Distribution plus the adaptive gradient-norm bound and step size used
/// inside a training loop.
class BanditSampler {
 public:
  BanditSampler(std::size_t n, BanditOptions options, std::size_t horizon)
      : options_(std::move(options)),
        horizon_(horizon),
        config_(options_.resolve(n, horizon)),
        dist_(new_uniform(n, config_)) {}

  const ExampleDistribution& distribution() const noexcept { return dist_; }
  const BanditConfig& config() const noexcept { return config_; }

  std::vector<std::size_t> sample(std::size_t batch_size, Rng& rng) const {
    return sample_batch(dist_, batch_size, rng);
  }

  void update(std::span<const std::size_t> indices, std::span<const double> grad_norms) {
    if (!options_.grad_norm_bound) {
      for (double g : grad_norms) max_seen_ = std::max(max_seen_, g);
      if (max_seen_ > 0.0) config_ = options_.resolve(dist_.size(), horizon_, 1.1 * max_seen_);
    }
    update_distribution(dist_, indices, grad_norms, config_);
  }

 private:
  BanditOptions options_;
  std::size_t horizon_;
  BanditConfig config_;
  ExampleDistribution dist_;
  double max_seen_ = 0.0;
};

/// Snapshot text: header "n=<n> p_min=<p_min>", then one
/// "index<TAB>probability" line per example, floats at 17 significant digits.
inline void write_snapshot(std::ostream& out, const ExampleDistribution& dist) {
  out << "n=" << dist.size() << " p_min=" << format_g17(dist.p_min()) << '\n';
  const auto probs = dist.probs();
  for (std::size_t j = 0; j < probs.size(); ++j) out << j << '\t' << format_g17(probs[j]) << '\n';
}

inline ExampleDistribution read_snapshot(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "line 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::size_t n = 0;
  double p_min = 0.0;
  {
    const auto sp = line.find(' ');
    if (line.rfind("n=", 0) != 0 || sp == std::string::npos ||
        line.compare(sp + 1, 6, "p_min=") != 0)
      throw Error(ErrorKind::ParseError, "line 1: expected 'n=<n> p_min=<p_min>'");
    double n_value = 0.0;
    if (!parse_double(std::string_view(line).substr(2, sp - 2), n_value) || n_value < 1 ||
        n_value != std::floor(n_value))
      throw Error(ErrorKind::ParseError, "line 1: bad n");
    n = static_cast<std::size_t>(n_value);
    if (!parse_double(std::string_view(line).substr(sp + 7), p_min))
      throw Error(ErrorKind::ParseError, "line 1: bad p_min");
  }
  std::vector<double> probs;
  probs.reserve(n);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    double index = 0.0;
    double p = 0.0;
    if (tab == std::string::npos || !parse_double(std::string_view(line).substr(0, tab), index) ||
        !parse_double(std::string_view(line).substr(tab + 1), p))
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected index<TAB>probability");
    if (index != static_cast<double>(probs.size()))
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": out-of-order index");
    probs.push_back(p);
  }
  if (probs.size() != n)
    throw Error(ErrorKind::ParseError, "expected " + std::to_string(n) + " rows, found " +
                                           std::to_string(probs.size()));
  return ExampleDistribution::from_probabilities(std::move(probs), p_min);
}

}  // namespace adambs
