#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "adambs/error.hpp"
#include "adambs/format.hpp"
#include "adambs/random.hpp"

namespace adambs {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Dataset {
  FeatureMatrix features;  // n x d, one example per row
  Eigen::VectorXd labels;  // n

  std::size_t size() const noexcept { return static_cast<std::size_t>(features.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }
};

enum class LabelSet { ZeroOne, PlusMinusOne };

/// Positive labels map to 1, everything else to 0 or -1.
inline Eigen::VectorXd coerce_labels(const Eigen::VectorXd& labels, LabelSet target) {
  Eigen::VectorXd out(labels.size());
  const double negative = target == LabelSet::ZeroOne ? 0.0 : -1.0;
  for (Eigen::Index j = 0; j < labels.size(); ++j) out[j] = labels[j] > 0.0 ? 1.0 : negative;
  return out;
}

struct HeavyTailConfig {
  std::size_t n = 1;
  std::size_t d = 1;
  double gamma = 2.0;
  double beta3 = 1.0;
  std::uint64_t seed = 0;

  std::vector<std::string> diagnostics() const {
    std::vector<std::string> out;
    if (n < 1) out.emplace_back("n must be at least 1");
    if (d < 1) out.emplace_back("d must be at least 1");
    if (!(gamma >= 1.0)) out.emplace_back("gamma must be >= 1");
    if (!(beta3 > 0.0 && beta3 <= 1.0)) out.emplace_back("beta3 must lie in (0, 1]");
    return out;
  }
};

/// P(|z_{j,i}| = 1) with 1-based example index j and feature index i.
inline double heavy_tail_nonzero_prob(const HeavyTailConfig& cfg, std::size_t j1, std::size_t i1) {
  return cfg.beta3 * std::pow(static_cast<double>(i1), -cfg.gamma) *
         std::pow(static_cast<double>(j1), -cfg.gamma);
}

/// E|z_j|^2 = beta3 j^-gamma sum_{i<=d} i^-gamma (1-based j).
inline double heavy_tail_expected_sq_norm(const HeavyTailConfig& cfg, std::size_t j1) {
  double s = 0.0;
  for (std::size_t i = 1; i <= cfg.d; ++i) s += std::pow(static_cast<double>(i), -cfg.gamma);
  return cfg.beta3 * std::pow(static_cast<double>(j1), -cfg.gamma) * s;
}

/// Ternary features whose nonzero probability decays polynomially in both
/// the example and the feature index; signs are fair coins. Labels are
/// sign(z . theta*) for a standard-normal teacher theta*, ties going to +1.
inline Dataset generate_heavy_tailed(const HeavyTailConfig& cfg) {
  const auto diag = cfg.diagnostics();
  if (!diag.empty()) throw Error(ErrorKind::InvalidConfig, diag.front());
  Rng rng(cfg.seed);
  Eigen::VectorXd teacher(static_cast<Eigen::Index>(cfg.d));
  for (auto& t : teacher) t = standard_normal(rng);

  std::vector<double> col_factor(cfg.d);
  for (std::size_t i = 0; i < cfg.d; ++i) col_factor[i] = std::pow(static_cast<double>(i + 1), -cfg.gamma);

  Dataset data{FeatureMatrix::Zero(static_cast<Eigen::Index>(cfg.n), static_cast<Eigen::Index>(cfg.d)),
               Eigen::VectorXd(static_cast<Eigen::Index>(cfg.n))};
  for (std::size_t j = 0; j < cfg.n; ++j) {
    const double row_factor = cfg.beta3 * std::pow(static_cast<double>(j + 1), -cfg.gamma);
    for (std::size_t i = 0; i < cfg.d; ++i) {
      const double u = uniform01(rng);
      if (u < row_factor * col_factor[i]) {
        data.features(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
            uniform01(rng) < 0.5 ? 1.0 : -1.0;
      }
    }
    const double score = data.features.row(static_cast<Eigen::Index>(j)).dot(teacher);
    data.labels[static_cast<Eigen::Index>(j)] = score >= 0.0 ? 1.0 : -1.0;
  }
  return data;
}

/// Rows are "label,f1,...,fd". Labels are coerced to `labels`.
inline Dataset read_csv(std::istream& in, LabelSet labels = LabelSet::ZeroOne) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const auto field = std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos
                                                                                         : comma - start);
      double value = 0.0;
      if (!parse_double(field, value) || !std::isfinite(value))
        throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": field " +
                                               std::to_string(row.size() + 1) + " is not a finite number");
      row.push_back(value);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (row.size() < 2)
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": need a label and at least one feature");
    if (rows.empty()) {
      width = row.size();
    } else if (row.size() != width) {
      throw Error(ErrorKind::RaggedRow, "line " + std::to_string(line_no) + " has " + std::to_string(row.size() - 1) +
                                            " features, expected " + std::to_string(width - 1));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorKind::ParseError, "no rows");

  Dataset data{FeatureMatrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1)),
               Eigen::VectorXd(static_cast<Eigen::Index>(rows.size()))};
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto r = static_cast<Eigen::Index>(j);
    data.labels[r] = rows[j][0];
    for (std::size_t i = 1; i < width; ++i) data.features(r, static_cast<Eigen::Index>(i - 1)) = rows[j][i];
  }
  data.labels = coerce_labels(data.labels, labels);
  return data;
}

inline Dataset load_csv(const std::string& path, LabelSet labels = LabelSet::ZeroOne) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return read_csv(in, labels);
}

inline void write_csv(std::ostream& out, const Dataset& data) {
  for (Eigen::Index j = 0; j < data.features.rows(); ++j) {
    out << format_g17(data.labels[j]);
    for (Eigen::Index i = 0; i < data.features.cols(); ++i) out << ',' << format_g17(data.features(j, i));
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  write_csv(out, data);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

}  // namespace adambs
