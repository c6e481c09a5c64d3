#pragma once

// Full enumeration of {0,1}^p. These routines are the ground truth that the
// Monte Carlo estimators are checked against; they are exponential in p.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "pmising/errors.hpp"
#include "pmising/ising.hpp"

namespace pmising {

inline constexpr std::size_t kDefaultEnumerationCap = 20;

namespace detail {

inline void check_cap(std::size_t p, std::size_t cap) {
  if (p > cap)
    throw RefusedError("enumeration refused: p = " + std::to_string(p) +
                       " exceeds the enumeration cap of " + std::to_string(cap));
}

inline double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace detail

/// log f(x; theta) for every state; entry s corresponds to x_j = bit j of s.
/// Walks a Gray code so each state costs O(p).
inline std::vector<double> enumerate_log_weights(const IsingParams& params,
                                                 std::size_t cap = kDefaultEnumerationCap) {
  const std::size_t p = params.p();
  detail::check_cap(p, cap);
  const std::size_t states = std::size_t{1} << p;
  std::vector<double> out(states);
  std::vector<std::uint8_t> x(p, 0);
  const Matrix& theta = params.theta();
  double current = 0.0;
  out[0] = 0.0;
  for (std::size_t i = 1; i < states; ++i) {
    const auto j = static_cast<std::size_t>(std::countr_zero(i));
    double delta = theta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
    for (std::size_t k = 0; k < p; ++k)
      if (k != j && x[k]) delta += 2.0 * theta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
    current += x[j] ? -delta : delta;
    x[j] ^= 1;
    std::size_t code = i ^ (i >> 1);
    out[code] = current;
  }
  return out;
}

/// log z(theta) by summing over all 2^p configurations.
inline double exact_log_z_bruteforce(const IsingParams& params,
                                     std::size_t cap = kDefaultEnumerationCap) {
  return detail::log_sum_exp(enumerate_log_weights(params, cap));
}

/// Exact probabilities p(x; theta) indexed like `enumerate_log_weights`.
inline std::vector<double> exact_probabilities(const IsingParams& params,
                                               std::size_t cap = kDefaultEnumerationCap) {
  auto w = enumerate_log_weights(params, cap);
  const double lz = detail::log_sum_exp(w);
  for (double& v : w) v = std::exp(v - lz);
  return w;
}

/// E[S(X)] under p(.; theta), i.e. the gradient of log z over free coordinates.
inline Matrix exact_grad_log_z(const IsingParams& params,
                               std::size_t cap = kDefaultEnumerationCap) {
  const auto probs = exact_probabilities(params, cap);
  const std::size_t p = params.p();
  const auto d = static_cast<Eigen::Index>(p);
  Matrix g = Matrix::Zero(d, d);
  for (std::size_t s = 0; s < probs.size(); ++s) {
    const double w = probs[s];
    for (std::size_t j = 0; j < p; ++j) {
      if (!((s >> j) & 1U)) continue;
      g(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) += w;
      for (std::size_t k = j + 1; k < p; ++k)
        if ((s >> k) & 1U) g(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) += 2.0 * w;
    }
  }
  g.triangularView<Eigen::StrictlyLower>() = g.transpose().triangularView<Eigen::StrictlyLower>();
  return g;
}

/// Decodes a state index into a configuration vector.
inline std::vector<std::uint8_t> state_to_config(std::size_t state, std::size_t p) {
  std::vector<std::uint8_t> x(p);
  for (std::size_t j = 0; j < p; ++j) x[j] = (state >> j) & 1U;
  return x;
}

inline std::size_t config_to_state(BinaryView x) {
  std::size_t s = 0;
  for (std::size_t j = 0; j < x.size(); ++j)
    if (x[j]) s |= std::size_t{1} << j;
  return s;
}

}  // namespace pmising
