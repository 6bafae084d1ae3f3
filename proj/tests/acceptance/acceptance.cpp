// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <spdlog/spdlog.h>

#include "adambs/bandit_sampler.hpp"
#include "adambs/experiment.hpp"
#include "adambs/models.hpp"
#include "adambs/optimizers.hpp"
#include "adambs/oracle.hpp"

using namespace adambs;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

// Random floored distribution over n examples.
std::vector<double> random_distribution(std::size_t n, Rng& rng, double& p_min) {
  std::vector<double> w(n);
  for (auto& x : w) x = std::exp(3.0 * (uniform01(rng) - 0.5));
  p_min = uniform01(rng) / static_cast<double>(n);
  return project_kl(w, p_min);
}

// ---------------------------------------------------------------- 1
Outcome gradient_unbiasedness() {
  Rng rng(101);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 2 + static_cast<std::size_t>(uniform01(rng) * 5);
    const std::size_t k = 1 + static_cast<std::size_t>(uniform01(rng) * 3);
    double p_min = 0.0;
    const auto p = random_distribution(n, rng, p_min);
    std::vector<Eigen::VectorXd> g(n, Eigen::VectorXd(4));
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
    for (auto& v : g) {
      for (auto& x : v) x = standard_normal(rng);
      mean += v;
    }
    mean /= static_cast<double>(n);
    const auto e = oracle::enumerate_expectation<Eigen::VectorXd>(p, k, [&](std::span<const std::size_t> idx) {
      MiniBatch b;
      for (std::size_t j : idx) {
        b.indices.push_back(j);
        b.grads.push_back(g[j]);
        b.norms.push_back(g[j].norm());
        b.probs.push_back(p[j]);
      }
      return unbiased_estimate(b, n).value;
    });
    worst = std::max(worst, (e - mean).norm() / mean.norm());
  }
  return {worst <= 1e-10, "max relative error " + fmt("%.3g", worst) + " over 100 configurations"};
}

// ---------------------------------------------------------------- 2
Outcome bandit_gradient_unbiasedness() {
  Rng rng(202);
  double worst_exact = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 2 + static_cast<std::size_t>(uniform01(rng) * 5);
    const std::size_t k = 1 + static_cast<std::size_t>(uniform01(rng) * 3);
    double p_min = 0.0;
    auto probs = random_distribution(n, rng, p_min);
    const auto dist = ExampleDistribution::from_probabilities(std::move(probs), p_min);
    std::vector<double> l(n);
    for (auto& x : l) x = 10.0 * uniform01(rng);
    const auto e = oracle::enumerate_expectation<Eigen::VectorXd>(
        dist.probs(), k, [&](std::span<const std::size_t> idx) {
          std::vector<double> losses;
          for (std::size_t j : idx) losses.push_back(l[j]);
          const auto h = estimate_bandit_gradient(dist, idx, losses);
          return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(n)));
        });
    for (std::size_t j = 0; j < n; ++j)
      worst_exact = std::max(worst_exact, std::abs(e[static_cast<Eigen::Index>(j)] - l[j]) / std::max(l[j], 1e-300));
  }

  // Monte Carlo at n = 50, K = 8 on a mildly non-uniform distribution.
  const std::size_t n = 50, k = 8, batches = 1'000'000;
  std::vector<double> w(n), l(n);
  for (std::size_t j = 0; j < n; ++j) {
    w[j] = 0.5 + uniform01(rng);
    l[j] = 1.0 + 9.0 * uniform01(rng);
  }
  const double p_min = 0.1 / n;
  const auto dist = ExampleDistribution::from_probabilities(project_kl(w, p_min), p_min);
  std::vector<double> sum(n, 0.0);
  std::vector<double> losses(k);
  for (std::size_t b = 0; b < batches; ++b) {
    const auto idx = sample_batch(dist, k, rng);
    for (std::size_t q = 0; q < k; ++q) losses[q] = l[idx[q]];
    const auto h = estimate_bandit_gradient(dist, idx, losses);
    for (std::size_t j = 0; j < n; ++j) sum[j] += h[j];
  }
  double err2 = 0.0, ref2 = 0.0, worst_coord = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double m = sum[j] / batches;
    err2 += (m - l[j]) * (m - l[j]);
    ref2 += l[j] * l[j];
    worst_coord = std::max(worst_coord, std::abs(m - l[j]) / l[j]);
  }
  const double mc = std::sqrt(err2 / ref2);
  return {worst_exact <= 1e-10 && mc <= 0.01,
          "exact max relative error " + fmt("%.3g", worst_exact) + "; Monte Carlo relative L2 error " +
              fmt("%.3g", mc) + " (largest single coordinate " + fmt("%.3g", worst_coord) + ")"};
}

// ---------------------------------------------------------------- 3
// Grid minimum of KL(q || w) over the floored simplex, n in {2, 3}. Grid
// points are q_j = p_min + k_j h with sum k_j = M and h <= 1e-4.
double grid_min_kl(const std::vector<double>& w, double p_min) {
  const std::size_t n = w.size();
  const double free = 1.0 - static_cast<double>(n) * p_min;
  const auto m = static_cast<std::size_t>(std::ceil(free / 1e-4));
  const double h = free / static_cast<double>(m);
  std::vector<std::vector<double>> f(n, std::vector<double>(m + 1));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k <= m; ++k) {
      const double q = p_min + static_cast<double>(k) * h;
      f[j][k] = (q > 0.0 ? q * std::log(q / w[j]) : 0.0) - q + w[j];
    }
  }
  double best = std::numeric_limits<double>::infinity();
  if (n == 2) {
    for (std::size_t a = 0; a <= m; ++a) best = std::min(best, f[0][a] + f[1][m - a]);
  } else {
    for (std::size_t a = 0; a <= m; ++a) {
      const double fa = f[0][a];
      const double* f1 = f[1].data();
      const double* f2 = f[2].data();
      for (std::size_t b = 0; a + b <= m; ++b) best = std::min(best, fa + f1[b] + f2[m - a - b]);
    }
  }
  return best;
}

Outcome kl_projection() {
  Rng rng(303);
  double worst_gap = -std::numeric_limits<double>::infinity();
  bool feasible = true;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = rep % 2 == 0 ? 2 : 3;
    std::vector<double> w(n);
    for (auto& x : w) x = std::exp(4.0 * (uniform01(rng) - 0.5));
    const double p_min = 0.9 * uniform01(rng) / static_cast<double>(n);
    const auto q = project_kl(w, p_min);
    double s = 0.0;
    for (double x : q) {
      feasible = feasible && x >= p_min;
      s += x;
    }
    feasible = feasible && std::abs(s - 1.0) <= 1e-12;
    worst_gap = std::max(worst_gap, oracle::kl_divergence(q, w) - grid_min_kl(w, p_min));
  }
  double worst_prop = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * 256);
    std::vector<double> w(n);
    for (auto& x : w) x = std::exp(10.0 * (uniform01(rng) - 0.5));
    const double p_min = uniform01(rng) / static_cast<double>(n);
    const auto q = project_kl(w, p_min);
    const double s = std::accumulate(q.begin(), q.end(), 0.0);
    feasible = feasible && std::abs(s - 1.0) <= 1e-12;
    for (double x : q) feasible = feasible && x >= p_min;
    const auto qq = project_kl(q, p_min);
    const double c = std::exp(8.0 * (uniform01(rng) - 0.5));
    std::vector<double> scaled(w);
    for (auto& x : scaled) x *= c;
    const auto qs = project_kl(scaled, p_min);
    for (std::size_t j = 0; j < n; ++j)
      worst_prop = std::max({worst_prop, std::abs(qq[j] - q[j]), std::abs(qs[j] - q[j])});
  }
  return {feasible && worst_gap <= 1e-6 && worst_prop <= 1e-12,
          "KL minus grid minimum at most " + fmt("%.3g", worst_gap) + "; idempotence/scale deviation " +
              fmt("%.3g", worst_prop) + (feasible ? "; all feasible" : "; INFEASIBLE output")};
}

// ---------------------------------------------------------------- 4
Dataset gaussian_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data{FeatureMatrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)),
               Eigen::VectorXd(static_cast<Eigen::Index>(n))};
  Eigen::VectorXd teacher(static_cast<Eigen::Index>(d));
  for (auto& t : teacher) t = standard_normal(rng);
  for (Eigen::Index j = 0; j < data.features.rows(); ++j) {
    for (Eigen::Index i = 0; i < data.features.cols(); ++i) data.features(j, i) = standard_normal(rng);
    data.labels[j] = data.features.row(j).dot(teacher) + 0.5 * standard_normal(rng) >= 0.0 ? 1.0 : 0.0;
  }
  return data;
}

Outcome adam_reduction() {
  Rng init(404);
  const SmallMlp model(gaussian_dataset(200, 10, 4), 16, init);
  TrainConfig adam;
  adam.arm = Arm::Adam;
  adam.batch_size = 16;
  adam.iterations = 1000;
  adam.record_full_loss = false;
  adam.record_wall_time = false;
  TrainConfig bs = adam;
  bs.arm = Arm::AdamBS;
  bs.freeze_distribution = true;
  std::vector<Eigen::VectorXd> a, b;
  Rng ra(5), rb(5);
  train(model, model.initial_theta(), adam, ra,
        [&](std::size_t, const Eigen::VectorXd& th, const MomentState&) { a.push_back(th); });
  train(model, model.initial_theta(), bs, rb,
        [&](std::size_t, const Eigen::VectorXd& th, const MomentState&) { b.push_back(th); });
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) worst = std::max(worst, (a[t] - b[t]).cwiseAbs().maxCoeff());
  const double moved = (a.back() - model.initial_theta()).norm();
  return {a.size() == 1000 && b.size() == 1000 && worst <= 1e-12,
          "max coordinate difference " + fmt("%.3g", worst) + " over 1000 steps (parameters moved " +
              fmt("%.3g", moved) + ")"};
}

// ---------------------------------------------------------------- 5
Outcome scalar_trajectories() {
  double worst = 0.0;
  for (bool ams : {false, true}) {
    const double alpha = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double th = 1.0, m = 0.0, v = 0.0, vmax = 0.0;
    auto state = ams ? MomentState::amsgrad(1) : MomentState::adam(1);
    Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 1.0);
    OptimConfig cfg;
    cfg.alpha = alpha;
    for (int t = 1; t <= 5; ++t) {
      const double g = th;
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      const double mh = m / (1 - std::pow(b1, t));
      double vh = v / (1 - std::pow(b2, t));
      if (ams) vh = vmax = std::max(vmax, vh);
      th -= alpha * mh / (std::sqrt(vh) + eps);
      const Eigen::VectorXd grad = theta;
      if (ams) amsgrad_step(state, theta, grad, cfg);
      else adam_step(state, theta, grad, cfg);
      worst = std::max(worst, std::abs(theta[0] - th));
    }
  }
  return {worst <= 1e-12, "max deviation " + fmt("%.3g", worst) + " over Adam and AMSGrad"};
}

// ---------------------------------------------------------------- 6
double fd_relative_error(const Model& m, const Eigen::VectorXd& theta, std::size_t j) {
  const double h = 1e-6;
  Eigen::VectorXd fd(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd a = theta, b = theta;
    a[i] += h;
    b[i] -= h;
    fd[i] = (m.loss(a, j) - m.loss(b, j)) / (2 * h);
  }
  const Eigen::VectorXd g = m.grad(theta, j);
  return (g - fd).norm() / std::max(1e-8, std::max(g.norm(), fd.norm()));
}

Outcome gradient_correctness() {
  Rng rng(606);
  auto random_theta = [&](std::size_t d, double scale) {
    Eigen::VectorXd t(static_cast<Eigen::Index>(d));
    for (auto& x : t) x = scale * standard_normal(rng);
    return t;
  };
  Dataset pm = gaussian_dataset(100, 6, 61);
  pm.labels = coerce_labels(pm.labels, LabelSet::PlusMinusOne);
  const LogisticRegression lr(gaussian_dataset(100, 6, 60));
  const OneNeuronRelu one(pm);
  Rng init(62);
  const SmallMlp mlp(gaussian_dataset(100, 6, 63), 8, init);

  double worst[3] = {0, 0, 0};
  for (int k = 0; k < 100; ++k) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * 100);
    worst[0] = std::max(worst[0], fd_relative_error(lr, random_theta(6, 1.0), j));
  }
  for (int k = 0; k < 100;) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * 100);
    const auto theta = random_theta(6, 1.0);
    if (one.data().features.row(static_cast<Eigen::Index>(j)).dot(theta) <= 1e-3) continue;
    worst[1] = std::max(worst[1], fd_relative_error(one, theta, j));
    ++k;
  }
  for (int k = 0; k < 100;) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * 100);
    const auto theta = random_theta(mlp.dim(), 0.5);
    if (mlp.preactivations(theta, j).cwiseAbs().minCoeff() <= 1e-3) continue;
    worst[2] = std::max(worst[2], fd_relative_error(mlp, theta, j));
    ++k;
  }
  const double w = std::max({worst[0], worst[1], worst[2]});
  return {w < 1e-5, "max relative error: logistic " + fmt("%.3g", worst[0]) + ", one-neuron " +
                        fmt("%.3g", worst[1]) + ", mlp " + fmt("%.3g", worst[2])};
}

// ---------------------------------------------------------------- 7
// Naive reference: probabilities in a flat array, sampling by linear scan,
// dense exponential update and renormalization with the floor.
struct NaiveSampler {
  std::vector<double> p;
  double p_min;

  std::size_t sample(Rng& rng) const {
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      acc += p[j];
      if (u < acc) return j;
    }
    return p.size() - 1;
  }

  void update(const std::vector<std::size_t>& idx, const std::vector<double>& norms, const BanditConfig& cfg) {
    const std::size_t n = p.size();
    std::vector<double> h(n, 0.0);
    const double k = static_cast<double>(idx.size());
    for (std::size_t b = 0; b < idx.size(); ++b)
      h[idx[b]] += bandit_loss(norms[b], p[idx[b]], cfg) / (k * p[idx[b]]);
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) w[j] = p[j] * std::exp(-cfg.alpha_p * h[j]);
    std::vector<char> floored(n, 0);
    for (;;) {
      double free_w = 0.0, floored_mass = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (floored[j]) floored_mass += p_min;
        else free_w += w[j];
      }
      const double c = (1.0 - floored_mass) / free_w;
      bool changed = false;
      for (std::size_t j = 0; j < n; ++j) {
        if (!floored[j] && c * w[j] < p_min) {
          floored[j] = 1;
          changed = true;
        }
      }
      if (!changed) {
        for (std::size_t j = 0; j < n; ++j) p[j] = floored[j] ? p_min : c * w[j];
        return;
      }
    }
  }
};

template <typename Step>
double cost_per_iteration(std::size_t iterations, Step&& step) {
  double best = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 3; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t it = 0; it < iterations; ++it) step();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    best = std::min(best, s / static_cast<double>(iterations));
  }
  return best;
}

Outcome sampling_structure() {
  Rng rng(707);
  bool chi_ok = true;
  double worst_stat_ratio = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 2 + static_cast<std::size_t>(uniform01(rng) * 63);
    double p_min = 0.0;
    auto probs = random_distribution(n, rng, p_min);
    const auto dist = ExampleDistribution::from_probabilities(std::move(probs), p_min);
    std::vector<double> counts(n, 0.0);
    const std::size_t draws = 1'000'000;
    for (std::size_t d = 0; d < draws; ++d) counts[dist.sample(rng)] += 1.0;
    double stat = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = dist.prob(j) * draws;
      stat += (counts[j] - e) * (counts[j] - e) / e;
    }
    const boost::math::chi_squared chi(static_cast<double>(n - 1));
    const double crit = boost::math::quantile(boost::math::complement(chi, 0.001));
    chi_ok = chi_ok && stat < crit;
    worst_stat_ratio = std::max(worst_stat_ratio, stat / crit);
  }

  const std::size_t k = 8;
  std::vector<double> norm_pool(4096);
  for (auto& g : norm_pool) g = uniform01(rng);
  auto tree_cost = [&](std::size_t n) {
    BanditConfig cfg;
    cfg.p_min = 1.0 / (10.0 * static_cast<double>(n));
    cfg.grad_norm_bound = 1.0;
    cfg.horizon = 10000;
    cfg.bregman_radius = std::sqrt(std::log(static_cast<double>(n)));
    cfg.alpha_p = theoretical_alpha_p(cfg, n);
    auto dist = new_uniform(n, cfg);
    std::size_t cursor = 0;
    std::vector<double> norms(k);
    Rng local(1);
    return cost_per_iteration(20000, [&] {
      const auto idx = sample_batch(dist, k, local);
      for (auto& g : norms) g = norm_pool[cursor++ % norm_pool.size()];
      update_distribution(dist, idx, norms, cfg);
    });
  };
  auto naive_cost = [&](std::size_t n, std::size_t iterations) {
    BanditConfig cfg;
    cfg.p_min = 1.0 / (10.0 * static_cast<double>(n));
    cfg.grad_norm_bound = 1.0;
    cfg.horizon = 10000;
    cfg.bregman_radius = std::sqrt(std::log(static_cast<double>(n)));
    cfg.alpha_p = theoretical_alpha_p(cfg, n);
    NaiveSampler naive{std::vector<double>(n, 1.0 / static_cast<double>(n)), cfg.p_min};
    std::size_t cursor = 0;
    std::vector<std::size_t> idx(k);
    std::vector<double> norms(k);
    Rng local(1);
    return cost_per_iteration(iterations, [&] {
      for (auto& i : idx) i = naive.sample(local);
      for (auto& g : norms) g = norm_pool[cursor++ % norm_pool.size()];
      naive.update(idx, norms, cfg);
    });
  };
  const double tree_small = tree_cost(std::size_t{1} << 10);
  const double tree_large = tree_cost(std::size_t{1} << 20);
  const double naive_small = naive_cost(std::size_t{1} << 10, 2000);
  const double naive_large = naive_cost(std::size_t{1} << 20, 20);
  const double tree_ratio = tree_large / tree_small;
  const double naive_ratio = naive_large / naive_small;
  return {chi_ok && tree_ratio <= 4.0 && naive_ratio >= 200.0,
          "chi-square worst stat/critical " + fmt("%.3g", worst_stat_ratio) + "; cost ratio 2^20/2^10: tree " +
              fmt("%.3g", tree_ratio) + " (" + fmt("%.3g", tree_small * 1e6) + " -> " +
              fmt("%.3g", tree_large * 1e6) + " us), linear scan " + fmt("%.4g", naive_ratio)};
}

// ---------------------------------------------------------------- 8, 9
const std::vector<std::size_t> kGrid{256, 512, 1024, 2048, 4096, 8192, 16384};
oracle::ScalingReport g_uniform;

Outcome uniform_scaling() {
  g_uniform = oracle::uniform_scaling_probe(2.0, 1.0, 64, kGrid, 200, 808);
  std::string rows;
  for (const auto& r : g_uniform.rows) rows += " " + fmt("%+.3f", r.fit_residual);
  return {g_uniform.fit_residual <= 0.20, "value/(n log n log d) residuals" + rows + "; max |residual| " +
                                              fmt("%.3f", g_uniform.fit_residual) + " (limit 0.20)"};
}

Outcome floored_scaling() {
  const auto f = oracle::floored_scaling_probe(2.0, 1.0, 64, kGrid);
  bool slow_growth = true;
  bool widening = true;
  bool smaller = true;
  double prev_gap = 0.0;
  std::string gaps;
  const double r0 = 1.0 + f.rows[0].fit_residual;
  for (std::size_t k = 0; k < kGrid.size(); ++k) {
    slow_growth = slow_growth && (1.0 + f.rows[k].fit_residual) <= 1.2 * r0;
    const double gap = g_uniform.rows.empty() ? 0.0 : g_uniform.rows[k].value / f.rows[k].value;
    smaller = smaller && gap > 1.0;
    if (k > 0) widening = widening && gap > prev_gap;
    prev_gap = gap;
    gaps += " " + fmt("%.3g", gap);
  }
  const double last_ratio = (1.0 + f.rows.back().fit_residual) / r0;
  return {slow_growth && widening && smaller,
          "value/(log d log^2 n) at largest n is " + fmt("%.3f", last_ratio) +
              "x the smallest-n value (limit 1.2); uniform/floored ratio" + gaps};
}

// ---------------------------------------------------------------- 10
Outcome desk_speedup() {
  ExperimentConfig cfg;
  cfg.dataset.kind = DatasetSpec::Kind::HeavyTailed;
  cfg.dataset.heavy = HeavyTailConfig{2000, 50, 2.0, 1.0, 0};
  cfg.model.kind = ModelKind::Logistic;
  ArmSpec adam;
  adam.name = "adam";
  adam.arm = Arm::Adam;
  adam.optim.alpha = 0.001;
  adam.optim.beta1 = 0.9;
  adam.optim.beta2 = 0.999;
  ArmSpec bs = adam;
  bs.name = "adambs";
  bs.arm = Arm::AdamBS;
  cfg.arms = {adam, bs};
  cfg.batch_size = 128;
  cfg.iterations = 1000;
  cfg.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  cfg.record_wall_time = false;
  const auto r = run_cells(cfg);
  const auto& a = r.summary[0];
  const auto& b = r.summary[1];
  return {b.median_iters <= a.median_iters && b.median_final_loss <= a.median_final_loss,
          "median iterations to threshold adambs " + fmt("%g", b.median_iters) + " vs adam " +
              fmt("%g", a.median_iters) + "; median final loss adambs " + fmt("%.10f", b.median_final_loss) +
              " vs adam " + fmt("%.10f", a.median_final_loss)};
}

// ---------------------------------------------------------------- 11
Outcome amsgrad_invariant() {
  Rng init(1101);
  const SmallMlp model(gaussian_dataset(300, 8, 11), 12, init);
  bool ok = true;
  std::size_t steps = 0;
  for (Arm arm : {Arm::AMSGrad, Arm::AMSGradBS}) {
    TrainConfig cfg;
    cfg.arm = arm;
    cfg.batch_size = 16;
    cfg.iterations = 1000;
    cfg.optim.alpha = 0.01;
    cfg.record_full_loss = false;
    Rng rng(7);
    Eigen::VectorXd last = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dim()));
    train(model, model.initial_theta(), cfg, rng, [&](std::size_t, const Eigen::VectorXd&, const MomentState& s) {
      ok = ok && s.v_hat_max.has_value() && (s.v_hat_max->array() >= last.array()).all();
      last = *s.v_hat_max;
      ++steps;
    });
  }
  return {ok && steps == 2000, "checked " + std::to_string(steps) + " steps over amsgrad and amsgrad-bs"};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "mini-batch gradient unbiasedness", 10, gradient_unbiasedness},
      {2, "bandit gradient unbiasedness", 60, bandit_gradient_unbiasedness},
      {3, "KL projection", 120, kl_projection},
      {4, "Adam reduction", 30, adam_reduction},
      {5, "scalar optimizer trajectories", 1, scalar_trajectories},
      {6, "gradient correctness", 30, gradient_correctness},
      {7, "sampling structure", 300, sampling_structure},
      {8, "uniform-sampling scaling", 300, uniform_scaling},
      {9, "floored-sampling scaling", 300, floored_scaling},
      {10, "desk-scale speedup", 600, desk_speedup},
      {11, "AMSGrad running max", 60, amsgrad_invariant},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && s <= c.limit_s;
    failures += pass ? 0 : 1;
    std::printf("%s criterion %2d %s: %s [%.2f s, limit %.0f s]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), s, c.limit_s);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
