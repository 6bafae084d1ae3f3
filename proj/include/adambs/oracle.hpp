#pragma once

// Brute-force and closed-form reference computations. Nothing here calls
// into the sampler, optimizer or data modules, so agreement with them is a
// genuine cross-check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "adambs/error.hpp"
#include "adambs/format.hpp"
#include "adambs/random.hpp"

namespace adambs::oracle {

inline constexpr double kEnumerationBudget = 1e6;

namespace detail {

inline void check_distribution(std::span<const double> p) {
  if (p.empty()) throw Error(ErrorKind::InvalidConfig, "empty distribution");
  double sum = 0.0;
  for (double x : p) {
    if (!(x > 0.0) || !std::isfinite(x))
      throw Error(ErrorKind::InvalidConfig, "every probability must be positive (floor violated)");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorKind::InvalidConfig, "probabilities do not sum to 1");
}

inline void check_budget(std::size_t n, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::InvalidConfig, "batch size must be at least 1");
  if (std::pow(static_cast<double>(n), static_cast<double>(k)) > kEnumerationBudget)
    throw Error(ErrorKind::BudgetExceeded,
                "n^K = " + std::to_string(n) + "^" + std::to_string(k) + " exceeds 1e6 batches");
}

}  // namespace detail

/// Exact expectation of `estimator(batch)` over all n^K ordered batches
/// drawn i.i.d. from p. `estimator` takes a std::span<const std::size_t> and
/// returns something Eigen can accumulate into `Result`.
template <typename Result, typename Estimator>
Result enumerate_expectation(std::span<const double> p, std::size_t k, Estimator&& estimator) {
  detail::check_distribution(p);
  detail::check_budget(p.size(), k);
  const std::size_t n = p.size();
  std::vector<std::size_t> batch(k, 0);
  Result total;
  bool first = true;
  while (true) {
    double weight = 1.0;
    for (std::size_t idx : batch) weight *= p[idx];
    Result term = estimator(std::span<const std::size_t>(batch));
    if (first) {
      total = weight * term;
      first = false;
    } else {
      total += weight * term;
    }
    std::size_t pos = 0;
    while (pos < k && ++batch[pos] == n) batch[pos++] = 0;
    if (pos == k) break;
  }
  return total;
}

/// Exact expectation of (1/K) sum_k v_{I_k} / (n p_{I_k}).
inline Eigen::VectorXd enumerate_batch_expectation(std::span<const double> p,
                                                   std::span<const Eigen::VectorXd> values, std::size_t k) {
  if (values.size() != p.size()) throw Error(ErrorKind::DimensionMismatch, "values and p differ in length");
  const double n = static_cast<double>(p.size());
  return enumerate_expectation<Eigen::VectorXd>(p, k, [&](std::span<const std::size_t> batch) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(values.front().size());
    for (std::size_t idx : batch) s += values[idx] / (n * p[idx]);
    return Eigen::VectorXd(s / static_cast<double>(batch.size()));
  });
}

/// sum_j |g_j|^2 / p_j; terms with zero norm contribute nothing.
inline double sq_norm_objective(std::span<const double> norms, std::span<const double> p) {
  double s = 0.0;
  for (std::size_t j = 0; j < norms.size(); ++j) {
    if (norms[j] != 0.0) s += norms[j] * norms[j] / p[j];
  }
  return s;
}

/// argmin over the simplex of sum_j |g_j|^2 / p_j, i.e. p proportional to |g_j|.
inline std::vector<double> optimal_distribution(std::span<const double> norms) {
  double total = 0.0;
  for (double g : norms) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw Error(ErrorKind::InvalidConfig, "norms must be finite and >= 0");
    total += g;
  }
  if (!(total > 0.0)) throw Error(ErrorKind::AllZeroNorms, "every gradient norm is zero");
  std::vector<double> p(norms.size());
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = norms[j] / total;
  return p;
}

/// Minimizer over {p_j >= p_min, sum p = 1} of sum_j |g_j|^2 / p_j:
/// p_j = max(p_min, c |g_j|), with c located by bisection on the
/// monotone constraint sum_j max(p_min, c |g_j|) = 1.
inline std::vector<double> floored_optimal_distribution(std::span<const double> norms, double p_min) {
  const std::size_t n = norms.size();
  if (n == 0) throw Error(ErrorKind::InvalidConfig, "empty norms");
  if (p_min < 0.0 || p_min * static_cast<double>(n) > 1.0 + 1e-12)
    throw Error(ErrorKind::InfeasibleFloor, "n * p_min exceeds 1");
  if (p_min == 0.0) return optimal_distribution(norms);
  double total = 0.0;
  for (double g : norms) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw Error(ErrorKind::InvalidConfig, "norms must be finite and >= 0");
    total += g;
  }
  if (!(total > 0.0)) {
    if (p_min * static_cast<double>(n) >= 1.0 - 1e-12) return std::vector<double>(n, 1.0 / static_cast<double>(n));
    throw Error(ErrorKind::AllZeroNorms, "every gradient norm is zero");
  }
  auto mass = [&](double c) {
    double s = 0.0;
    for (double g : norms) s += std::max(p_min, c * g);
    return s;
  };
  double lo = 0.0;
  double hi = 1.0 / total;  // mass(hi) >= 1
  for (int iter = 0; iter < 2000; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (mass(mid) < 1.0 ? lo : hi) = mid;
  }
  std::vector<double> p(n);
  for (std::size_t j = 0; j < n; ++j) p[j] = std::max(p_min, hi * norms[j]);
  return p;
}

/// KL(q || w) with w unnormalized: sum q log(q / w) - sum q + sum w.
inline double kl_divergence(std::span<const double> q, std::span<const double> w) {
  double s = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    if (q[j] > 0.0) s += q[j] * std::log(q[j] / w[j]);
    s += w[j] - q[j];
  }
  return s;
}

struct ScalingRow {
  std::size_t n = 0;
  double value = 0.0;
  double std_error = 0.0;     // Monte Carlo standard error; 0 for exact values
  double fit_residual = 0.0;  // ratio / fitted constant - 1
};

struct ScalingReport {
  std::vector<ScalingRow> rows;
  std::string model;             // reference growth the values are divided by
  double fitted_constant = 0.0;  // mean of value / reference
  double fit_residual = 0.0;     // max |row residual|
};

/// sum_{k<=m} k^-gamma.
inline double generalized_harmonic(std::size_t m, double gamma) {
  double s = 0.0;
  for (std::size_t k = m; k >= 1; --k) s += std::pow(static_cast<double>(k), -gamma);
  return s;
}

/// Exact E sum_j |z_j|^2 / p_j under p_j = 1/n:
/// beta3 n (sum_{j<=n} j^-gamma)(sum_{i<=d} i^-gamma).
inline double analytic_uniform_value(double gamma, double beta3, std::size_t d, std::size_t n) {
  return beta3 * static_cast<double>(n) * generalized_harmonic(n, gamma) * generalized_harmonic(d, gamma);
}

namespace detail {

inline void check_grid(std::span<const std::size_t> n_grid, double gamma, std::size_t d) {
  if (n_grid.empty()) throw Error(ErrorKind::InvalidConfig, "empty n grid");
  for (std::size_t k = 0; k < n_grid.size(); ++k) {
    if (n_grid[k] < 2) throw Error(ErrorKind::InvalidConfig, "grid values must be >= 2");
    if (k > 0 && n_grid[k] <= n_grid[k - 1]) throw Error(ErrorKind::InvalidConfig, "n grid must be strictly increasing");
  }
  if (!(gamma >= 2.0)) throw Error(ErrorKind::InvalidConfig, "scaling probes require gamma >= 2");
  if (d < 2) throw Error(ErrorKind::InvalidConfig, "scaling probes require d >= 2");
}

inline void fit_constant(ScalingReport& report, const std::vector<double>& reference) {
  double mean = 0.0;
  for (std::size_t k = 0; k < report.rows.size(); ++k) mean += report.rows[k].value / reference[k];
  mean /= static_cast<double>(report.rows.size());
  report.fitted_constant = mean;
  report.fit_residual = 0.0;
  for (std::size_t k = 0; k < report.rows.size(); ++k) {
    auto& row = report.rows[k];
    row.fit_residual = row.value / reference[k] / mean - 1.0;
    report.fit_residual = std::max(report.fit_residual, std::abs(row.fit_residual));
  }
}

}  // namespace detail

/// Monte Carlo estimate of E sum_j |z_j|^2 / p_j under uniform sampling,
/// with |z_j|^2 standing in for |g_j|^2, fitted against beta3 n log n log d.
inline ScalingReport uniform_scaling_probe(double gamma, double beta3, std::size_t d,
                                           std::span<const std::size_t> n_grid, std::size_t trials,
                                           std::uint64_t seed = 0) {
  detail::check_grid(n_grid, gamma, d);
  if (trials < 2) throw Error(ErrorKind::InvalidConfig, "need at least 2 trials");
  ScalingReport report;
  report.model = "beta3*n*log(n)*log(d)";
  std::vector<double> reference;
  std::vector<double> col(d);
  for (std::size_t i = 0; i < d; ++i) col[i] = std::pow(static_cast<double>(i + 1), -gamma);

  for (std::size_t n : n_grid) {
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      Rng rng(mix_seed(seed, (static_cast<std::uint64_t>(n) << 20) + t));
      double nonzeros = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double row = beta3 * std::pow(static_cast<double>(j), -gamma);
        for (std::size_t i = 0; i < d; ++i) {
          if (uniform01(rng) < row * col[i]) nonzeros += 1.0;
        }
      }
      const double value = static_cast<double>(n) * nonzeros;
      sum += value;
      sum_sq += value * value;
    }
    const double tr = static_cast<double>(trials);
    const double mean = sum / tr;
    const double var = std::max(0.0, (sum_sq - tr * mean * mean) / (tr - 1.0));
    report.rows.push_back({n, mean, std::sqrt(var / tr), 0.0});
    reference.push_back(beta3 * static_cast<double>(n) * std::log(static_cast<double>(n)) *
                        std::log(static_cast<double>(d)));
  }
  detail::fit_constant(report, reference);
  return report;
}

/// min over p >= p_min of sum_j E|z_j|^2 / p_j with p_min = 1/(10 n),
/// evaluated exactly from the expected squared norms and fitted against
/// log d log^2 n.
inline ScalingReport floored_scaling_probe(double gamma, double beta3, std::size_t d,
                                           std::span<const std::size_t> n_grid) {
  detail::check_grid(n_grid, gamma, d);
  ScalingReport report;
  report.model = "log(d)*log(n)^2";
  std::vector<double> reference;
  const double feature_sum = generalized_harmonic(d, gamma);
  for (std::size_t n : n_grid) {
    std::vector<double> sq(n);
    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) {
      sq[j] = beta3 * std::pow(static_cast<double>(j + 1), -gamma) * feature_sum;
      norms[j] = std::sqrt(sq[j]);
    }
    const double p_min = 1.0 / (10.0 * static_cast<double>(n));
    const auto p = floored_optimal_distribution(norms, p_min);
    double value = 0.0;
    for (std::size_t j = 0; j < n; ++j) value += sq[j] / p[j];
    report.rows.push_back({n, value, 0.0, 0.0});
    const double ln = std::log(static_cast<double>(n));
    reference.push_back(std::log(static_cast<double>(d)) * ln * ln);
  }
  detail::fit_constant(report, reference);
  return report;
}

inline void write_scaling_csv(std::ostream& out, const ScalingReport& report) {
  out << "n,value,fit_residual\n";
  for (const auto& row : report.rows)
    out << row.n << ',' << format_g17(row.value) << ',' << format_g17(row.fit_residual) << '\n';
}

}  // namespace adambs::oracle
