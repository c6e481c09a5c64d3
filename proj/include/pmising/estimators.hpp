#pragma once

// Unbiased estimators of the partition-function ratio mu = z(theta)/z(phi)
// and of negative powers of z(theta), built from independence-model draws.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "pmising/enumerate.hpp"
#include "pmising/errors.hpp"
#include "pmising/ising.hpp"
#include "pmising/random.hpp"
#include "pmising/signed_log.hpp"

namespace pmising {

struct EstimatorConfig {
  std::size_t N = 5000;   // importance samples per mu_hat replicate
  std::size_t M = 20;     // pilot replicates for nu
  double alpha = 1.0;     // target nu * mu
  double geom_p = 0.1;    // truncation success probability
  std::size_t enumeration_cap = kDefaultEnumerationCap;
  bool check_contraction = true;
  double contraction_threshold = 0.95;

  void validate() const {
    if (N < 1) throw InputError("EstimatorConfig: N must be >= 1");
    if (M < 1) throw InputError("EstimatorConfig: M must be >= 1");
    if (!(alpha > 0.0 && alpha < 2.0)) throw InputError("EstimatorConfig: alpha must lie in (0, 2)");
    if (!(geom_p > 0.0 && geom_p < 1.0)) throw InputError("EstimatorConfig: geom_p must lie in (0, 1)");
  }
};

struct RouletteEstimate {
  SignedLogValue value;          // realized T
  std::size_t R = 0;             // realized truncation index
  std::vector<double> mu_hats;   // the R replicates entering U_{R,k}
  double nu = 1.0;

  friend bool operator==(const RouletteEstimate&, const RouletteEstimate&) = default;
};

namespace detail {

/// Draws from the independence model diag(theta) and returns the pair term
/// log f(y;theta) - log f(y;phi) without materializing the batch.
class IndependenceDraws {
 public:
  explicit IndependenceDraws(const IsingParams& params)
      : p_(params.p()), theta_(&params.theta()), thresholds_(p_), active_(p_) {
    for (std::size_t j = 0; j < p_; ++j) thresholds_[j] = bernoulli_threshold(params(j, j));
  }

  template <RandomStream G>
  double next_log_ratio(G& rng) {
    return pair_term(next_active(rng));
  }

  /// Active indices of the most recent draw.
  std::span<const Eigen::Index> last_active(std::size_t count) const { return {active_.data(), count}; }

  template <RandomStream G>
  std::size_t next_active(G& rng) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < p_; ++j)
      if ((rng() >> 11) < thresholds_[j]) active_[m++] = static_cast<Eigen::Index>(j);
    return m;
  }

  double pair_term(std::size_t m) const {
    double acc = 0.0;
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = a + 1; b < m; ++b) acc += (*theta_)(active_[a], active_[b]);
    return 2.0 * acc;
  }

 private:
  std::size_t p_;
  const Matrix* theta_;
  std::vector<std::uint64_t> thresholds_;
  std::vector<Eigen::Index> active_;
};

/// Streaming log-sum-exp with a running maximum.
class LogSumExp {
 public:
  void add(double x) {
    if (x <= max_) {
      sum_ += std::exp(x - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    }
  }
  double value() const {
    return max_ == -std::numeric_limits<double>::infinity() ? max_ : max_ + std::log(sum_);
  }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
};

inline void require_positive_count(std::size_t N, const char* what) {
  if (N < 1) throw InputError(std::string(what) + ": sample count must be >= 1");
}

}  // namespace detail

/// log of the importance-sampling estimate of mu = z(theta)/z(phi).
template <RandomStream G>
double log_mu_hat(const IsingParams& params, std::size_t N, G& rng) {
  detail::require_positive_count(N, "mu_hat");
  detail::IndependenceDraws draws(params);
  detail::LogSumExp acc;
  for (std::size_t i = 0; i < N; ++i) acc.add(draws.next_log_ratio(rng));
  return acc.value() - std::log(static_cast<double>(N));
}

/// Unbiased estimate of mu = z(theta)/z(phi) from N independence-model draws.
template <RandomStream G>
double mu_hat(const IsingParams& params, std::size_t N, G& rng) {
  return std::exp(log_mu_hat(params, N, rng));
}

/// nu = alpha / (mean of M pilot mu_hat replicates).
template <RandomStream G>
double tune_nu(const IsingParams& params, const EstimatorConfig& cfg, G& rng) {
  cfg.validate();
  detail::LogSumExp acc;
  for (std::size_t m = 0; m < cfg.M; ++m) acc.add(log_mu_hat(params, cfg.N, rng));
  const double log_pilot = acc.value() - std::log(static_cast<double>(cfg.M));
  return std::exp(std::log(cfg.alpha) - log_pilot);
}

/// Monte Carlo estimate of E|1 - nu * mu_hat| from M fresh replicates.
template <RandomStream G>
double check_contraction(const IsingParams& params, double nu, const EstimatorConfig& cfg, G& rng) {
  cfg.validate();
  if (!(nu > 0.0)) throw InputError("check_contraction: nu must be positive");
  const double log_nu = std::log(nu);
  double acc = 0.0;
  for (std::size_t m = 0; m < cfg.M; ++m)
    acc += std::fabs(1.0 - std::exp(log_nu + log_mu_hat(params, cfg.N, rng)));
  return acc / static_cast<double>(cfg.M);
}

/// log of gamma_k = binom(n + k - 1, k).
inline double log_series_coefficient(std::size_t n, std::size_t k) {
  const double nn = static_cast<double>(n);
  const double kk = static_cast<double>(k);
  return std::lgamma(nn + kk) - std::lgamma(kk + 1.0) - std::lgamma(nn);
}

/// Randomized-truncation estimate of (nu * mu)^(-n):
///   T = sum_{k=0}^{R} gamma_k / P(R >= k) * prod_{j=1}^{k} (1 - nu * mu_hat_j),
/// with R ~ Geometric(geom_p) on {0, 1, ...} so that P(R >= k) = (1 - geom_p)^k.
template <RandomStream G>
RouletteEstimate roulette_T(const IsingParams& params, double nu, std::size_t n,
                            const EstimatorConfig& cfg, G& rng) {
  cfg.validate();
  if (!(nu > 0.0) || !std::isfinite(nu)) throw InputError("roulette_T: nu must be positive and finite");
  if (n < 1) throw InputError("roulette_T: n must be >= 1");

  RouletteEstimate out;
  out.nu = nu;
  std::geometric_distribution<std::size_t> truncation(cfg.geom_p);
  out.R = truncation(rng);
  out.mu_hats.reserve(out.R);
  const double log_nu = std::log(nu);
  const double log_survival = std::log1p(-cfg.geom_p);

  // Terms as (sign, log|term|); U_{R,0} = 1.
  std::vector<int> signs{1};
  std::vector<double> logs{0.0};
  int u_sign = 1;
  double u_log = 0.0;
  for (std::size_t k = 1; k <= out.R; ++k) {
    const double log_mu = log_mu_hat(params, cfg.N, rng);
    out.mu_hats.push_back(std::exp(log_mu));
    if (u_sign == 0) continue;
    const double factor = 1.0 - std::exp(log_nu + log_mu);
    if (factor == 0.0) {
      u_sign = 0;
      continue;
    }
    u_sign *= factor > 0.0 ? 1 : -1;
    u_log += std::log(std::fabs(factor));
    signs.push_back(u_sign);
    logs.push_back(log_series_coefficient(n, k) - static_cast<double>(k) * log_survival + u_log);
  }

  // Rescale by the largest magnitude, then compensated summation.
  const double top = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  double carry = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const double y = signs[i] * std::exp(logs[i] - top) - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  if (sum != 0.0) out.value = SignedLogValue(sum > 0.0 ? 1 : -1, top + std::log(std::fabs(sum)));
  return out;
}

struct InverseZnEstimate {
  SignedLogValue value;  // estimate of z(theta)^(-n)
  double nu = 1.0;
};

/// Unbiased estimate of z(theta)^(-n) = [nu / z(phi)]^n * g_nu(mu).
template <RandomStream G>
InverseZnEstimate inverse_zn_estimate(const IsingParams& params, std::size_t n,
                                      const EstimatorConfig& cfg, G& rng) {
  if (n < 1) throw InputError("inverse_zn_estimate: n must be >= 1");
  const double nu = tune_nu(params, cfg, rng);
  const RouletteEstimate t = roulette_T(params, nu, n, cfg, rng);
  const double scale = static_cast<double>(n) * (std::log(nu) - independence_log_z(params));
  return {t.value * SignedLogValue::from_log(scale), nu};
}

/// Self-normalized estimate of grad log z(theta) = E[S(X)], sharing one batch
/// of independence-model draws between numerator and denominator.
template <RandomStream G>
Matrix grad_log_z_estimate(const IsingParams& params, std::size_t N, G& rng) {
  detail::require_positive_count(N, "grad_log_z_estimate");
  const std::size_t p = params.p();
  const auto d = static_cast<Eigen::Index>(p);
  detail::IndependenceDraws draws(params);

  // Weights are kept relative to the running maximum log weight.
  Matrix num = Matrix::Zero(d, d);
  double den = 0.0;
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t m = draws.next_active(rng);
    const double log_w = draws.pair_term(m);
    if (log_w > top) {
      const double shrink = std::exp(top - log_w);
      num *= shrink;
      den *= shrink;
      top = log_w;
    }
    const double w = std::exp(log_w - top);
    den += w;
    const auto act = draws.last_active(m);
    for (std::size_t a = 0; a < m; ++a) {
      num(act[a], act[a]) += w;
      for (std::size_t b = a + 1; b < m; ++b) num(act[a], act[b]) += 2.0 * w;
    }
  }
  num /= den;
  num.triangularView<Eigen::StrictlyLower>() = num.transpose().triangularView<Eigen::StrictlyLower>();
  return num;
}

/// var(U) for U = f(Y;theta_to)/f(Y;theta_from), Y ~ p(.;theta_from):
///   z(2 theta_to - theta_from)/z(theta_from) - z(theta_to)^2/z(theta_from)^2.
inline double var_U_closed_form(const IsingParams& params_from, const IsingParams& params_to,
                                std::size_t cap = kDefaultEnumerationCap) {
  if (params_from.p() != params_to.p()) throw InputError("var_U_closed_form: dimension mismatch");
  const IsingParams doubled(2.0 * params_to.theta() - params_from.theta());
  const double lz_from = exact_log_z_bruteforce(params_from, cap);
  const double lz_to = exact_log_z_bruteforce(params_to, cap);
  const double lz_doubled = exact_log_z_bruteforce(doubled, cap);
  return std::exp(lz_doubled - lz_from) - std::exp(2.0 * (lz_to - lz_from));
}

struct VarianceBounds {
  double between = 0.0;  // bound on var[E(T | R)]
  double within = 0.0;   // bound on E[var(T | R)]
  double total() const { return between + within; }
};

/// Variance bounds for T given alpha_abs = |1 - nu mu|, beta^2 = alpha_abs^2 +
/// nu^2 var(mu_hat) and the truncation parameter. Requires alpha_abs < 1/(2e),
/// beta < 1/(4e) and geom_p < 1 - 4 beta^2 e^2.
inline VarianceBounds theorem1_bounds(double alpha_abs, double beta, double geom_p) {
  const double e = std::exp(1.0);
  if (!(alpha_abs >= 0.0 && alpha_abs < 1.0 / (2.0 * e)))
    throw BoundsInapplicable("variance bounds inapplicable: |1 - nu mu| must be below 1/(2e)");
  if (!(beta >= 0.0 && beta < 1.0 / (4.0 * e)))
    throw BoundsInapplicable("variance bounds inapplicable: beta must be below 1/(4e)");
  if (!(geom_p > 0.0 && geom_p < 1.0 - 4.0 * beta * beta * e * e))
    throw BoundsInapplicable("variance bounds inapplicable: geom_p must be below 1 - 4 beta^2 e^2");
  if (beta < alpha_abs) throw InputError("theorem1_bounds: beta cannot be smaller than alpha_abs");
  const double a2 = 4.0 * alpha_abs * alpha_abs * e * e;
  const double b2 = 4.0 * e * e * beta * beta;
  const double lead = 1.0 - 2.0 * e * alpha_abs;
  VarianceBounds out;
  out.between = a2 * geom_p / ((lead * lead) * (1.0 - geom_p - a2));
  out.within = (1.0 + 4.0 * e * beta) / (1.0 - 4.0 * e * beta) * (1.0 - geom_p) / (1.0 - geom_p - b2);
  return out;
}

}  // namespace pmising
