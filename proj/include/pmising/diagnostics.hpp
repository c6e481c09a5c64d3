#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pmising/errors.hpp"
#include "pmising/ising.hpp"
#include "pmising/samplers.hpp"

namespace pmising {

struct DiagnosticsReport {
  std::vector<double> ess_per_coordinate;
  double mean_ess = 0.0;
  double median_ess = 0.0;
  double mse = std::numeric_limits<double>::quiet_NaN();  // NaN when no truth is supplied
  double acceptance_rate = 0.0;
  double wall_minutes = 0.0;
  double ess_per_minute = 0.0;
  std::vector<std::string> warnings;
};

/// Sample autocorrelations rho_1..rho_max_lag with the biased (1/T) normalization.
/// A constant series yields zeros and sets `constant` when supplied.
inline std::vector<double> autocorrelation(std::span<const double> series, std::size_t max_lag,
                                           bool* constant = nullptr) {
  const std::size_t len = series.size();
  if (max_lag < 1) throw InputError("autocorrelation: max_lag must be >= 1");
  if (len < 2 * max_lag) throw InputError("autocorrelation: series shorter than 2 * max_lag");
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(len);
  double c0 = 0.0;
  for (double v : series) c0 += (v - mean) * (v - mean);
  std::vector<double> rho(max_lag, 0.0);
  if (constant) *constant = (c0 == 0.0);
  if (c0 == 0.0) return rho;
  for (std::size_t k = 1; k <= max_lag; ++k) {
    double ck = 0.0;
    for (std::size_t t = 0; t + k < len; ++t) ck += (series[t] - mean) * (series[t + k] - mean);
    rho[k - 1] = ck / c0;
  }
  return rho;
}

/// T0 / (1 + 2 sum_{k>=1} rho_k), truncated with Geyer's initial positive
/// sequence and clamped to (0, T0].
inline double effective_sample_size(std::span<const double> series) {
  const std::size_t len = series.size();
  if (len < 100) throw InputError("effective_sample_size: need at least 100 samples");
  const double t0 = static_cast<double>(len);
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / t0;
  std::vector<double> centered(len);
  for (std::size_t t = 0; t < len; ++t) centered[t] = series[t] - mean;
  double c0 = 0.0;
  for (double v : centered) c0 += v * v;
  if (c0 == 0.0) return t0;

  auto rho = [&](std::size_t k) {
    double ck = 0.0;
    for (std::size_t t = 0; t + k < len; ++t) ck += centered[t] * centered[t + k];
    return ck / c0;
  };

  // Pairs Gamma_m = rho_{2m} + rho_{2m+1}, summed while positive.
  double tau = -1.0;
  for (std::size_t m = 0; 2 * m + 1 < len; ++m) {
    const double pair = (m == 0 ? 1.0 : rho(2 * m)) + rho(2 * m + 1);
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  const double floor = 1.0 / t0;
  tau = std::max(tau, floor);
  return std::clamp(t0 / tau, std::numeric_limits<double>::min(), t0);
}

/// Monte Carlo standard error of the sample mean, sd / sqrt(ESS).
inline double mcse(std::span<const double> series) {
  const double len = static_cast<double>(series.size());
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / len;
  double ss = 0.0;
  for (double v : series) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (len - 1.0));
  return sd / std::sqrt(effective_sample_size(series));
}

/// ||a - b||_F^2 / p^2.
inline double recovery_mse(const IsingParams& theta_hat, const IsingParams& theta_true) {
  if (theta_hat.p() != theta_true.p()) throw InputError("recovery_mse: dimension mismatch");
  const double p = static_cast<double>(theta_hat.p());
  return (theta_hat.theta() - theta_true.theta()).squaredNorm() / (p * p);
}

/// Fraction of free coordinates (j <= k) whose thresholded sign categories
/// (-, 0, +) agree; |entry| <= threshold counts as 0.
inline double sign_agreement(const IsingParams& a, const IsingParams& b, double threshold) {
  if (a.p() != b.p()) throw InputError("sign_agreement: dimension mismatch");
  if (!(threshold > 0.0)) throw InputError("sign_agreement: threshold must be positive");
  auto category = [threshold](double v) { return std::fabs(v) <= threshold ? 0 : (v > 0.0 ? 1 : -1); };
  std::size_t agree = 0;
  std::size_t total = 0;
  for (std::size_t j = 0; j < a.p(); ++j)
    for (std::size_t k = j; k < a.p(); ++k) {
      agree += category(a(j, k)) == category(b(j, k));
      ++total;
    }
  return static_cast<double>(agree) / static_cast<double>(total);
}

/// Per-coordinate ESS of the packed samples.
inline std::vector<double> ess_per_coordinate(const Matrix& samples) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(samples.cols()));
  std::vector<double> column(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    for (Eigen::Index r = 0; r < samples.rows(); ++r) column[static_cast<std::size_t>(r)] = samples(r, c);
    out.push_back(effective_sample_size(column));
  }
  return out;
}

/// Summary of a chain; `truth` enables the recovery MSE of the sign-weighted mean.
inline DiagnosticsReport diagnose(const ChainOutput& chain, const IsingParams* truth = nullptr) {
  DiagnosticsReport r;
  r.ess_per_coordinate = ess_per_coordinate(chain.samples);
  if (!r.ess_per_coordinate.empty()) {
    r.mean_ess = std::accumulate(r.ess_per_coordinate.begin(), r.ess_per_coordinate.end(), 0.0) /
                 static_cast<double>(r.ess_per_coordinate.size());
    std::vector<double> sorted = r.ess_per_coordinate;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    r.median_ess = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  }
  r.acceptance_rate = chain.acceptance_rate();
  r.wall_minutes = chain.wall_seconds / 60.0;
  r.ess_per_minute = r.wall_minutes > 0.0 ? r.mean_ess / r.wall_minutes : 0.0;
  if (truth) r.mse = recovery_mse(IsingParams::unpack(chain.p, sign_weighted_posterior_mean(chain)), *truth);
  r.warnings = chain.warnings;
  return r;
}

/// MCSE of each coordinate of the sign-weighted mean, by the delta method on
/// the ratio sum(sigma h)/sum(sigma).
inline Vector sign_weighted_mcse(const ChainOutput& chain) {
  const Vector mean = sign_weighted_posterior_mean(chain);
  const auto len = static_cast<Eigen::Index>(chain.size());
  double sbar = 0.0;
  for (int s : chain.signs) sbar += s;
  sbar /= static_cast<double>(len);
  Vector out(mean.size());
  std::vector<double> z(static_cast<std::size_t>(len));
  for (Eigen::Index c = 0; c < mean.size(); ++c) {
    for (Eigen::Index t = 0; t < len; ++t)
      z[static_cast<std::size_t>(t)] = chain.signs[static_cast<std::size_t>(t)] * (chain.samples(t, c) - mean(c)) / sbar;
    out(c) = mcse(z);
  }
  return out;
}

}  // namespace pmising
