#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Core>

#include "adambs/data.hpp"
#include "adambs/error.hpp"
#include "adambs/random.hpp"

namespace adambs {

namespace detail {

// log(1 + e^x) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline void check_dataset(const Dataset& data, LabelSet labels) {
  if (data.labels.size() != data.features.rows())
    throw Error(ErrorKind::DimensionMismatch, "labels (" + std::to_string(data.labels.size()) +
                                                  ") do not match feature rows (" +
                                                  std::to_string(data.features.rows()) + ")");
  if (data.features.rows() == 0 || data.features.cols() == 0)
    throw Error(ErrorKind::DimensionMismatch, "empty dataset");
  if (!data.features.allFinite()) throw Error(ErrorKind::NonFinite, "features must be finite");
  const double negative = labels == LabelSet::ZeroOne ? 0.0 : -1.0;
  for (Eigen::Index j = 0; j < data.labels.size(); ++j) {
    if (data.labels[j] != 1.0 && data.labels[j] != negative)
      throw Error(ErrorKind::InvalidConfig, "label at row " + std::to_string(j) + " outside the model's label set");
  }
}

}  // namespace detail

/// Finite-sum objective f(theta) = (1/n) sum_j f_j(theta) with per-example
/// access. Evaluations are pure and the handle is immutable.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::size_t dim() const = 0;
  virtual std::size_t size() const = 0;
  virtual double loss(const Eigen::VectorXd& theta, std::size_t j) const = 0;
  virtual Eigen::VectorXd grad(const Eigen::VectorXd& theta, std::size_t j) const = 0;

  virtual Eigen::VectorXd initial_theta() const {
    return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim()));
  }

  double grad_norm(const Eigen::VectorXd& theta, std::size_t j) const { return grad(theta, j).norm(); }

  double full_loss(const Eigen::VectorXd& theta) const {
    double s = 0.0;
    for (std::size_t j = 0; j < size(); ++j) s += loss(theta, j);
    return s / static_cast<double>(size());
  }

  Eigen::VectorXd full_grad(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim()));
    for (std::size_t j = 0; j < size(); ++j) g += grad(theta, j);
    return g / static_cast<double>(size());
  }

 protected:
  void check_theta(const Eigen::VectorXd& theta, std::size_t j) const {
    if (static_cast<std::size_t>(theta.size()) != dim())
      throw Error(ErrorKind::DimensionMismatch, "theta has " + std::to_string(theta.size()) +
                                                    " entries, model expects " + std::to_string(dim()));
    if (j >= size()) throw Error(ErrorKind::IndexOutOfRange, "example " + std::to_string(j));
  }
};

/// f_j = log(1 + exp(z.theta)) - y z.theta with y in {0, 1}.
class LogisticRegression final : public Model {
 public:
  explicit LogisticRegression(Dataset data) : data_(std::move(data)) {
    detail::check_dataset(data_, LabelSet::ZeroOne);
  }

  std::size_t dim() const override { return data_.dim(); }
  std::size_t size() const override { return data_.size(); }

  double loss(const Eigen::VectorXd& theta, std::size_t j) const override {
    check_theta(theta, j);
    const auto r = static_cast<Eigen::Index>(j);
    const double s = data_.features.row(r).dot(theta);
    // softplus(s) - y s, written per label to avoid cancellation
    return data_.labels[r] == 1.0 ? detail::softplus(-s) : detail::softplus(s);
  }

  Eigen::VectorXd grad(const Eigen::VectorXd& theta, std::size_t j) const override {
    check_theta(theta, j);
    const auto r = static_cast<Eigen::Index>(j);
    const double s = data_.features.row(r).dot(theta);
    return (detail::sigmoid(s) - data_.labels[r]) * data_.features.row(r).transpose();
  }

  const Dataset& data() const noexcept { return data_; }

 private:
  Dataset data_;
};

/// One ReLU hidden unit feeding a sigmoid output:
/// f_j = -y log sigmoid(relu(z.theta)) with y in {-1, +1}, and
/// g_j = -y (1 - sigmoid(relu(z.theta))) 1(z.theta > 0) z.
/// For y = -1 the loss is unbounded below; the model exists for gradient-norm
/// studies, not as a training objective.
class OneNeuronRelu final : public Model {
 public:
  explicit OneNeuronRelu(Dataset data) : data_(std::move(data)) {
    detail::check_dataset(data_, LabelSet::PlusMinusOne);
  }

  std::size_t dim() const override { return data_.dim(); }
  std::size_t size() const override { return data_.size(); }

  double loss(const Eigen::VectorXd& theta, std::size_t j) const override {
    check_theta(theta, j);
    const auto r = static_cast<Eigen::Index>(j);
    const double a = std::max(0.0, data_.features.row(r).dot(theta));
    // log sigmoid(a) = -softplus(-a)
    return data_.labels[r] * detail::softplus(-a);
  }

  Eigen::VectorXd grad(const Eigen::VectorXd& theta, std::size_t j) const override {
    check_theta(theta, j);
    const auto r = static_cast<Eigen::Index>(j);
    const double s = data_.features.row(r).dot(theta);
    if (!(s > 0.0)) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim()));
    return (-data_.labels[r] * (1.0 - detail::sigmoid(s))) * data_.features.row(r).transpose();
  }

  const Dataset& data() const noexcept { return data_; }

 private:
  Dataset data_;
};

/// d -> hidden (ReLU) -> 1 (sigmoid) network with cross-entropy loss and
/// labels in {0, 1}. Parameters are packed as [W1 row-major, b1, w2, b2].
class SmallMlp final : public Model {
 public:
  SmallMlp(Dataset data, std::size_t hidden, Rng& rng) : data_(std::move(data)), hidden_(hidden) {
    if (hidden_ < 1) throw Error(ErrorKind::InvalidConfig, "hidden width must be at least 1");
    detail::check_dataset(data_, LabelSet::ZeroOne);
    init_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim()));
    const double in_scale = std::sqrt(2.0 / static_cast<double>(data_.dim()));
    const double out_scale = std::sqrt(1.0 / static_cast<double>(hidden_));
    const auto d = static_cast<Eigen::Index>(data_.dim());
    const auto h = static_cast<Eigen::Index>(hidden_);
    for (Eigen::Index k = 0; k < h * d; ++k) init_[k] = in_scale * standard_normal(rng);
    for (Eigen::Index k = 0; k < h; ++k) init_[h * d + h + k] = out_scale * standard_normal(rng);
  }

  std::size_t dim() const override { return hidden_ * data_.dim() + 2 * hidden_ + 1; }
  std::size_t size() const override { return data_.size(); }
  std::size_t hidden() const noexcept { return hidden_; }

  Eigen::VectorXd initial_theta() const override { return init_; }

  /// Hidden pre-activations W1 z + b1 for example j.
  Eigen::VectorXd preactivations(const Eigen::VectorXd& theta, std::size_t j) const {
    check_theta(theta, j);
    const auto d = static_cast<Eigen::Index>(data_.dim());
    const auto h = static_cast<Eigen::Index>(hidden_);
    const Eigen::Map<const FeatureMatrix> w1(theta.data(), h, d);
    return w1 * data_.features.row(static_cast<Eigen::Index>(j)).transpose() + theta.segment(h * d, h);
  }

  double loss(const Eigen::VectorXd& theta, std::size_t j) const override {
    const double o = output(theta, j);
    return data_.labels[static_cast<Eigen::Index>(j)] == 1.0 ? detail::softplus(-o) : detail::softplus(o);
  }

  Eigen::VectorXd grad(const Eigen::VectorXd& theta, std::size_t j) const override {
    const auto d = static_cast<Eigen::Index>(data_.dim());
    const auto h = static_cast<Eigen::Index>(hidden_);
    const Eigen::VectorXd a = preactivations(theta, j);
    const Eigen::VectorXd r = a.cwiseMax(0.0);
    const auto w2 = theta.segment(h * d + h, h);
    const double o = w2.dot(r) + theta[h * d + 2 * h];
    const double delta = detail::sigmoid(o) - data_.labels[static_cast<Eigen::Index>(j)];

    Eigen::VectorXd g(static_cast<Eigen::Index>(dim()));
    Eigen::VectorXd delta_hidden(h);
    for (Eigen::Index k = 0; k < h; ++k) delta_hidden[k] = a[k] > 0.0 ? delta * w2[k] : 0.0;
    Eigen::Map<FeatureMatrix> gw1(g.data(), h, d);
    gw1.noalias() = delta_hidden * data_.features.row(static_cast<Eigen::Index>(j));
    g.segment(h * d, h) = delta_hidden;
    g.segment(h * d + h, h) = delta * r;
    g[h * d + 2 * h] = delta;
    return g;
  }

  const Dataset& data() const noexcept { return data_; }

 private:
  double output(const Eigen::VectorXd& theta, std::size_t j) const {
    const auto d = static_cast<Eigen::Index>(data_.dim());
    const auto h = static_cast<Eigen::Index>(hidden_);
    const Eigen::VectorXd r = preactivations(theta, j).cwiseMax(0.0);
    return theta.segment(h * d + h, h).dot(r) + theta[h * d + 2 * h];
  }

  Dataset data_;
  std::size_t hidden_;
  Eigen::VectorXd init_;
};

}  // namespace adambs
