#pragma once

// Ising model on {0,1}^p with log f(x; theta) = x' theta x.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pmising/errors.hpp"
#include "pmising/random.hpp"

namespace pmising {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BinaryView = std::span<const std::uint8_t>;

/// Number of free coordinates (upper triangle including the diagonal).
constexpr std::size_t num_free(std::size_t p) noexcept { return p * (p + 1) / 2; }

/// Symmetric p x p interaction matrix. The diagonal holds the main effects.
class IsingParams {
 public:
  IsingParams() = default;

  explicit IsingParams(std::size_t p) : theta_(Matrix::Zero(p, p)) {
    if (p == 0) throw InputError("IsingParams: dimension must be positive");
  }

  explicit IsingParams(Matrix theta) : theta_(std::move(theta)) {
    if (theta_.rows() == 0 || theta_.rows() != theta_.cols())
      throw InputError("IsingParams: matrix must be square and non-empty");
    for (Eigen::Index j = 0; j < theta_.rows(); ++j)
      for (Eigen::Index k = 0; k < theta_.cols(); ++k) {
        if (!std::isfinite(theta_(j, k))) throw InputError("IsingParams: non-finite entry");
        if (theta_(j, k) != theta_(k, j)) throw InputError("IsingParams: matrix is not symmetric");
      }
  }

  /// Rebuild from an upper-triangle row-major packing (see `pack`).
  static IsingParams unpack(std::size_t p, std::span<const double> packed) {
    if (packed.size() != num_free(p)) throw InputError("IsingParams::unpack: wrong packed length");
    IsingParams out(p);
    std::size_t idx = 0;
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t k = j; k < p; ++k) out.set(j, k, packed[idx++]);
    return out;
  }

  static IsingParams unpack(std::size_t p, const Vector& packed) {
    return unpack(p, std::span<const double>(packed.data(), static_cast<std::size_t>(packed.size())));
  }

  std::size_t p() const noexcept { return static_cast<std::size_t>(theta_.rows()); }
  const Matrix& theta() const noexcept { return theta_; }
  double operator()(std::size_t j, std::size_t k) const { return theta_(j, k); }

  /// Sets theta_jk and theta_kj together.
  void set(std::size_t j, std::size_t k, double v) {
    if (!std::isfinite(v)) throw InputError("IsingParams::set: non-finite value");
    theta_(j, k) = v;
    theta_(k, j) = v;
  }

  /// The independence model phi = diag(theta).
  IsingParams diagonal() const {
    IsingParams out(p());
    out.theta_.diagonal() = theta_.diagonal();
    return out;
  }

  Vector pack() const {
    const std::size_t d = p();
    Vector out(static_cast<Eigen::Index>(num_free(d)));
    Eigen::Index idx = 0;
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = j; k < d; ++k) out(idx++) = theta_(j, k);
    return out;
  }

  bool within_bound(double bound) const { return theta_.cwiseAbs().maxCoeff() <= bound; }

  friend bool operator==(const IsingParams& a, const IsingParams& b) {
    return a.theta_.rows() == b.theta_.rows() && a.theta_ == b.theta_;
  }

 private:
  Matrix theta_;
};

/// n x p matrix over {0,1}, stored row-major.
class BinaryDataset {
 public:
  BinaryDataset() = default;

  BinaryDataset(std::size_t n, std::size_t p) : n_(n), p_(p), bits_(n * p, 0) {
    if (p == 0) throw InputError("BinaryDataset: dimension must be positive");
  }

  BinaryDataset(std::size_t n, std::size_t p, std::vector<std::uint8_t> bits)
      : n_(n), p_(p), bits_(std::move(bits)) {
    if (p == 0) throw InputError("BinaryDataset: dimension must be positive");
    if (bits_.size() != n * p) throw InputError("BinaryDataset: storage size does not match n*p");
    for (auto b : bits_)
      if (b > 1) throw InputError("BinaryDataset: entries must be 0 or 1");
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t p() const noexcept { return p_; }

  BinaryView row(std::size_t i) const { return {bits_.data() + i * p_, p_}; }
  std::span<std::uint8_t> mutable_row(std::size_t i) { return {bits_.data() + i * p_, p_}; }

  std::uint8_t operator()(std::size_t i, std::size_t j) const { return bits_[i * p_ + j]; }
  void set(std::size_t i, std::size_t j, bool v) { bits_[i * p_ + j] = v ? 1 : 0; }

  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  friend bool operator==(const BinaryDataset&, const BinaryDataset&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t p_ = 0;
  std::vector<std::uint8_t> bits_;
};

namespace detail {

inline void check_config(BinaryView x, const IsingParams& params) {
  if (x.size() != params.p())
    throw InputError("configuration length " + std::to_string(x.size()) +
                     " does not match dimension " + std::to_string(params.p()));
  for (auto b : x)
    if (b > 1) throw InputError("configuration entries must be 0 or 1");
}

/// 2 * sum_{j<k} theta_jk x_j x_k over the active set.
inline double pair_term(BinaryView x, const Matrix& theta) {
  double acc = 0.0;
  const std::size_t p = x.size();
  for (std::size_t j = 0; j < p; ++j) {
    if (!x[j]) continue;
    for (std::size_t k = j + 1; k < p; ++k)
      if (x[k]) acc += theta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
  }
  return 2.0 * acc;
}

}  // namespace detail

/// log f(x; theta) = x' theta x.
inline double log_f(BinaryView x, const IsingParams& params) {
  detail::check_config(x, params);
  double diag = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j)
    if (x[j]) diag += params(j, j);
  return diag + detail::pair_term(x, params.theta());
}

/// log f(x; theta) - log f(x; diag(theta)); the diagonal cancels exactly.
inline double log_f_ratio_vs_independence(BinaryView x, const IsingParams& params) {
  detail::check_config(x, params);
  return detail::pair_term(x, params.theta());
}

/// log z(phi) = sum_j log(1 + exp(theta_jj)).
inline double independence_log_z(const IsingParams& params) {
  double acc = 0.0;
  for (std::size_t j = 0; j < params.p(); ++j) acc += log1p_exp(params(j, j));
  return acc;
}

/// Logit of P(X_j = 1 | x_{-j}): theta_jj + 2 sum_{k != j} theta_jk x_k.
inline double conditional_logit(std::size_t j, BinaryView x, const IsingParams& params) {
  detail::check_config(x, params);
  if (j >= params.p()) throw InputError("conditional_logit: index out of range");
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k)
    if (k != j && x[k]) acc += params(j, k);
  return params(j, j) + 2.0 * acc;
}

/// S_jj = x_j, S_jk = S_kj = 2 x_j x_k, so that log f = <S, theta> over j <= k.
inline Matrix sufficient_stats(BinaryView x) {
  const auto p = static_cast<Eigen::Index>(x.size());
  Matrix s = Matrix::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!x[j]) continue;
    s(j, j) = 1.0;
    for (Eigen::Index k = j + 1; k < p; ++k)
      if (x[k]) s(j, k) = s(k, j) = 2.0;
  }
  return s;
}

/// Sum of sufficient statistics over the rows of a dataset.
inline Matrix sufficient_stats_sum(const BinaryDataset& data) {
  const auto p = static_cast<Eigen::Index>(data.p());
  Matrix s = Matrix::Zero(p, p);
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto x = data.row(i);
    for (Eigen::Index j = 0; j < p; ++j) {
      if (!x[j]) continue;
      s(j, j) += 1.0;
      for (Eigen::Index k = j + 1; k < p; ++k)
        if (x[k]) s(j, k) += 2.0;
    }
  }
  s.triangularView<Eigen::StrictlyLower>() = s.transpose().triangularView<Eigen::StrictlyLower>();
  return s;
}

/// <a, b> summed over the free coordinates j <= k.
inline double free_inner(const Matrix& a, const Matrix& b) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < a.cols(); ++k)
    for (Eigen::Index j = 0; j <= k; ++j) acc += a(j, k) * b(j, k);
  return acc;
}

/// Draws `count` vectors from the independence model diag(theta).
template <RandomStream G>
BinaryDataset sample_independence(const IsingParams& params, std::size_t count, G& rng) {
  const std::size_t p = params.p();
  std::vector<std::uint64_t> thresholds(p);
  for (std::size_t j = 0; j < p; ++j) thresholds[j] = bernoulli_threshold(params(j, j));
  BinaryDataset out(count, p);
  for (std::size_t i = 0; i < count; ++i) {
    auto row = out.mutable_row(i);
    for (std::size_t j = 0; j < p; ++j) row[j] = (rng() >> 11) < thresholds[j] ? 1 : 0;
  }
  return out;
}

/// One systematic-scan Gibbs sweep j = 0..p-1, updating `x` in place.
template <RandomStream G>
void gibbs_sweep_inplace(std::span<std::uint8_t> x, const IsingParams& params, G& rng) {
  detail::check_config(x, params);
  const std::size_t p = params.p();
  const Matrix& theta = params.theta();
  for (std::size_t j = 0; j < p; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < p; ++k)
      if (k != j && x[k]) acc += theta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
    x[j] = bernoulli_logit(rng, params(j, j) + 2.0 * acc) ? 1 : 0;
  }
}

template <RandomStream G>
std::vector<std::uint8_t> gibbs_sweep(BinaryView x, const IsingParams& params, G& rng) {
  std::vector<std::uint8_t> out(x.begin(), x.end());
  gibbs_sweep_inplace(std::span<std::uint8_t>(out), params, rng);
  return out;
}

}  // namespace pmising
