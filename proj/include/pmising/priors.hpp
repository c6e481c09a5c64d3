#pragma once

#include <cmath>

#include "pmising/errors.hpp"
#include "pmising/ising.hpp"

namespace pmising {

/// Product Laplace prior with rate lambda over the free coordinates j <= k.
struct LaplacePrior {
  double lambda = 1.0;

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InputError("LaplacePrior: lambda must be positive");
  }
};

/// Normalized log density: -lambda * sum_{j<=k} |theta_jk| + p(p+1)/2 * log(lambda/2).
inline double log_prior(const IsingParams& theta, const LaplacePrior& prior) {
  prior.validate();
  const std::size_t p = theta.p();
  double l1 = 0.0;
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t k = j; k < p; ++k) l1 += std::fabs(theta(j, k));
  return -prior.lambda * l1 + static_cast<double>(num_free(p)) * std::log(prior.lambda / 2.0);
}

/// Subgradient -lambda * sign(theta_jk), with sign(0) = 0, mirrored.
inline Matrix grad_log_prior(const IsingParams& theta, const LaplacePrior& prior) {
  prior.validate();
  const Matrix& t = theta.theta();
  return t.unaryExpr([&](double v) { return v > 0.0 ? -prior.lambda : (v < 0.0 ? prior.lambda : 0.0); });
}

}  // namespace pmising
