#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pmising/diagnostics.hpp"
#include "pmising/harness.hpp"
#include "pmising/samplers.hpp"
#include "test_util.hpp"

using namespace pmising;
using pmising::testing::random_params;

namespace {

EstimatorConfig cheap_estimator(std::size_t N = 200, std::size_t M = 5) {
  EstimatorConfig c;
  c.N = N;
  c.M = M;
  return c;
}

ProposalSpec rw(double step) {
  ProposalSpec s;
  s.step_rw = step;
  return s;
}

// Every entry nonzero, so a 1e-300 variance step leaves theta bit-identical.
IsingParams dense_params(std::size_t p, Rng& rng) {
  IsingParams t = random_params(p, rng);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t k = j; k < p; ++k)
      if (std::fabs(t(j, k)) < 0.1) t.set(j, k, 0.3);
  return t;
}

struct Quadrature {
  double mean = 0.0;
  double sd = 0.0;
};

// One-dimensional posterior exp(S t - n log(1 + e^t) - lambda |t|) on a fine grid.
Quadrature p1_posterior(double S, double n, double lambda) {
  const double lo = -12.0, hi = 12.0, h = 1e-4;
  double top = -1e300;
  for (double t = lo; t <= hi; t += h) top = std::max(top, S * t - n * log1p_exp(t) - lambda * std::fabs(t));
  double w0 = 0, w1 = 0, w2 = 0;
  for (double t = lo; t <= hi; t += h) {
    const double w = std::exp(S * t - n * log1p_exp(t) - lambda * std::fabs(t) - top);
    w0 += w;
    w1 += w * t;
    w2 += w * t * t;
  }
  const double mean = w1 / w0;
  return {mean, std::sqrt(w2 / w0 - mean * mean)};
}

BinaryDataset p1_data(Rng& rng) {
  IsingParams t(1);
  t.set(0, 0, 0.5);
  return sample_independence(t, 60, rng);
}

}  // namespace

TEST(Propose, RandomWalkIsSymmetricAndShrinks) {
  Rng rng(1);
  ChainState s;
  s.theta = random_params(4, rng);
  s.suff_stat_sum = Matrix::Zero(4, 4);
  const BinaryDataset none(0, 4);
  for (double step : {1e-12, 1.0}) {
    const auto prop = propose(s, rw(step), none, LaplacePrior{1.0}, rng);
    EXPECT_EQ(prop.log_q_forward, prop.log_q_reverse);
    EXPECT_EQ(prop.theta.theta(), prop.theta.theta().transpose());
    const double dist = (prop.theta.theta() - s.theta.theta()).cwiseAbs().maxCoeff();
    if (step < 1e-6) {
      EXPECT_LT(dist, 1e-4);
    }
  }
}

TEST(Propose, RandomWalkVariancePerFreeCoordinate) {
  Rng rng(2);
  ChainState s;
  s.theta = IsingParams(3);
  s.suff_stat_sum = Matrix::Zero(3, 3);
  const BinaryDataset none(0, 3);
  const int reps = 20000;
  Vector sumsq = Vector::Zero(6);
  for (int r = 0; r < reps; ++r) sumsq += propose(s, rw(0.25), none, LaplacePrior{1.0}, rng).theta.pack().array().square().matrix();
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(sumsq(i) / reps, 0.25, 0.25 * 4.0 * std::sqrt(2.0 / reps));
}

TEST(Propose, LangevinShrinksWithStep) {
  Rng rng(3);
  ChainState s;
  s.theta = random_params(3, rng);
  const auto data = simulate_dataset(s.theta, 50, 20, rng);
  s.suff_stat_sum = sufficient_stats_sum(data);
  ProposalSpec spec;
  spec.kind = ProposalKind::langevin;
  spec.step_langevin = 1e-12;
  spec.grad_samples = 500;
  const auto prop = propose(s, spec, data, LaplacePrior{1.0}, rng);
  EXPECT_LT((prop.theta.theta() - s.theta.theta()).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Propose, LangevinHasNoDriftWithoutDataAndFlatPrior) {
  Rng rng(4);
  ChainState s;
  s.theta = dense_params(3, rng);
  s.suff_stat_sum = Matrix::Zero(3, 3);
  const BinaryDataset none(0, 3);
  ProposalSpec spec;
  spec.kind = ProposalKind::langevin;
  spec.step_langevin = 0.01;
  spec.grad_samples = 10;
  const int reps = 20000;
  Vector sum = Vector::Zero(6);
  for (int r = 0; r < reps; ++r) sum += propose(s, spec, none, LaplacePrior{1e-12}, rng).theta.pack() - s.theta.pack();
  const double se = std::sqrt(2 * 0.01 / reps);
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(sum(i) / reps, 0.0, 4.0 * se);
}

TEST(Propose, LangevinDensitiesUseTheMalaForm) {
  Rng rng(5);
  ChainState s;
  s.theta = random_params(3, rng);
  const auto data = simulate_dataset(s.theta, 30, 20, rng);
  s.suff_stat_sum = sufficient_stats_sum(data);
  ProposalSpec spec;
  spec.kind = ProposalKind::langevin;
  spec.step_langevin = 0.02;
  spec.gradient = GradientSource::oracle;
  const LaplacePrior prior{1.0};
  const auto prop = propose(s, spec, data, prior, rng);

  auto grad = [&](const IsingParams& t) {
    const Matrix g = s.suff_stat_sum + grad_log_prior(t, prior) - 30.0 * exact_grad_log_z(t);
    return IsingParams(g).pack();
  };
  const Vector a = s.theta.pack(), b = prop.theta.pack();
  EXPECT_NEAR(prop.log_q_forward, -(b - a - 0.02 * grad(s.theta)).squaredNorm() / 0.08, 1e-9);
  EXPECT_NEAR(prop.log_q_reverse, -(a - b - 0.02 * grad(prop.theta)).squaredNorm() / 0.08, 1e-9);
}

TEST(PmStep, EstimateIsPartOfTheState) {
  Rng rng(6);
  const auto theta = dense_params(3, rng);
  const auto data = simulate_dataset(theta, 40, 20, rng);
  const auto cfg = cheap_estimator(20, 3);
  const LaplacePrior prior{1.0};
  ChainState state = init_chain_state(KernelKind::pseudo_marginal, theta, data, cfg, prior, rng);
  std::size_t rejected = 0;
  for (int it = 0; it < 300; ++it) {
    const auto out = pm_step(state, rw(1e-300), data, cfg, prior, rng);
    EXPECT_EQ(out.state.theta, theta);
    if (!out.accepted) {
      ++rejected;
      EXPECT_EQ(out.state.T_cached, state.T_cached);
      EXPECT_EQ(out.state.nu, state.nu);
    }
    state = out.state;
  }
  EXPECT_GT(rejected, 0U);
}

TEST(PmStep, RejectionKeepsCachedEstimate) {
  Rng rng(7);
  const auto theta = random_params(3, rng);
  const auto data = simulate_dataset(theta, 50, 20, rng);
  const auto cfg = cheap_estimator();
  const LaplacePrior prior{1.0};
  ChainState state = init_chain_state(KernelKind::pseudo_marginal, theta, data, cfg, prior, rng);
  std::size_t rejected = 0, accepted = 0;
  for (int it = 0; it < 300; ++it) {
    const auto out = pm_step(state, rw(0.05), data, cfg, prior, rng);
    if (out.accepted) {
      ++accepted;
    } else {
      ++rejected;
      EXPECT_EQ(out.state.theta, state.theta);
      EXPECT_EQ(out.state.T_cached, state.T_cached);
      EXPECT_EQ(out.state.nu, state.nu);
      EXPECT_EQ(out.state.log_prior, state.log_prior);
    }
    state = out.state;
  }
  EXPECT_GT(rejected, 0U);
  EXPECT_GT(accepted, 0U);
}

TEST(ExchangeStep, DegenerateProposalAlwaysAccepts) {
  Rng rng(8);
  const auto theta = dense_params(3, rng);
  const auto data = simulate_dataset(theta, 30, 10, rng);
  const LaplacePrior prior{1.0};
  ChainState state = init_chain_state(KernelKind::exchange, theta, data, cheap_estimator(), prior, rng);
  for (int it = 0; it < 50; ++it) EXPECT_TRUE(exchange_step(state, rw(1e-300), data, prior, 3, rng).accepted);
  EXPECT_THROW(exchange_step(state, rw(0.1), data, prior, 0, rng), InputError);
}

TEST(ExactMhStep, DegenerateProposalAlwaysAcceptsAndCapRefuses) {
  Rng rng(9);
  const auto theta = dense_params(3, rng);
  const auto data = simulate_dataset(theta, 30, 10, rng);
  const LaplacePrior prior{1.0};
  ChainState state = init_chain_state(KernelKind::exact, theta, data, cheap_estimator(), prior, rng);
  for (int it = 0; it < 50; ++it) EXPECT_TRUE(exact_mh_step(state, rw(1e-300), data, prior, rng).accepted);

  ChainState big;
  big.theta = IsingParams(21);
  big.suff_stat_sum = Matrix::Zero(21, 21);
  EXPECT_THROW(exact_mh_step(big, rw(0.1), BinaryDataset(1, 21), prior, rng), RefusedError);
}

TEST(NoisyStep, FreshEstimatesEveryIteration) {
  Rng rng(10);
  const auto theta = random_params(3, rng);
  const auto data = simulate_dataset(theta, 30, 10, rng);
  const LaplacePrior prior{1.0};
  const auto cfg = cheap_estimator(50);
  ChainState state = init_chain_state(KernelKind::noisy, theta, data, cfg, prior, rng);
  const auto out = noisy_step(state, rw(1e-300), data, cfg, prior, rng);
  EXPECT_NE(out.state.log_mu_cached, state.log_mu_cached);
}

// In the p = 1 model the estimators are exact, so every kernel targets the
// posterior that quadrature computes directly.
class DiagonalSubmodel : public ::testing::TestWithParam<KernelKind> {};

TEST_P(DiagonalSubmodel, MatchesQuadrature) {
  Rng rng(11);
  const auto data = p1_data(rng);
  const double S = sufficient_stats_sum(data)(0, 0);
  const LaplacePrior prior{1.0};
  const auto truth = p1_posterior(S, 60.0, 1.0);
  RunOptions opts;
  opts.inner_sweeps = 1;
  const auto chain = run_chain(GetParam(), IsingParams(1), 22000, 2000, rw(0.3), data, cheap_estimator(10, 2), prior,
                               rng, opts);
  std::vector<double> v(chain.size());
  for (std::size_t t = 0; t < v.size(); ++t) v[t] = chain.samples(static_cast<Eigen::Index>(t), 0);
  for (int s : chain.signs) EXPECT_EQ(s, 1);
  EXPECT_NEAR(sign_weighted_posterior_mean(chain)(0), truth.mean, 3.0 * mcse(v));
  EXPECT_NEAR(std::sqrt(pmising::testing::sample_variance(v)), truth.sd, 0.1 * truth.sd);
}

INSTANTIATE_TEST_SUITE_P(Kernels, DiagonalSubmodel,
                         ::testing::Values(KernelKind::pseudo_marginal, KernelKind::noisy, KernelKind::exchange,
                                           KernelKind::exact),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(RunChain, RecordsRetainedIterations) {
  Rng rng(12);
  const auto data = simulate_dataset(random_params(3, rng), 20, 10, rng);
  const auto one = run_chain(KernelKind::exact, IsingParams(3), 11, 10, rw(0.01), data, cheap_estimator(), {1.0}, rng);
  EXPECT_EQ(one.size(), 1U);
  EXPECT_EQ(one.samples.rows(), 1);
  EXPECT_EQ(one.accepted.size(), 1U);
  EXPECT_EQ(one.log_post_trace.size(), 1U);
  EXPECT_THROW(run_chain(KernelKind::exact, IsingParams(3), 10, 10, rw(0.01), data, cheap_estimator(), {1.0}, rng),
               InputError);
  EXPECT_THROW(run_chain(KernelKind::exact, IsingParams(21), 10, 1, rw(0.01), BinaryDataset(2, 21), cheap_estimator(),
                         {1.0}, rng),
               RefusedError);
}

TEST(RunChain, SeedDeterminism) {
  Rng rng(13);
  const auto data = simulate_dataset(random_params(3, rng), 30, 10, rng);
  for (auto kernel : {KernelKind::pseudo_marginal, KernelKind::noisy, KernelKind::exchange, KernelKind::exact}) {
    Rng a(5), b(5);
    const auto ca = run_chain(kernel, IsingParams(3), 60, 10, rw(0.02), data, cheap_estimator(), {1.0}, a);
    const auto cb = run_chain(kernel, IsingParams(3), 60, 10, rw(0.02), data, cheap_estimator(), {1.0}, b);
    EXPECT_EQ(ca.samples, cb.samples) << to_string(kernel);
    EXPECT_EQ(ca.signs, cb.signs);
    EXPECT_EQ(ca.accepted, cb.accepted);
    EXPECT_EQ(ca.log_post_trace, cb.log_post_trace);
  }
}

TEST(RunChain, AcceptanceFallsWithStepSize) {
  Rng rng(14);
  const auto data = simulate_dataset(random_params(3, rng), 100, 10, rng);
  const auto small = run_chain(KernelKind::exact, IsingParams(3), 2000, 100, rw(1e-8), data, cheap_estimator(), {1.0}, rng);
  const auto mid = run_chain(KernelKind::exact, IsingParams(3), 2000, 100, rw(0.01), data, cheap_estimator(), {1.0}, rng);
  const auto huge = run_chain(KernelKind::exact, IsingParams(3), 2000, 100, rw(100.0), data, cheap_estimator(), {1.0}, rng);
  EXPECT_GT(small.acceptance_rate(), 0.95);
  EXPECT_LT(huge.acceptance_rate(), 0.05);
  EXPECT_GT(small.acceptance_rate(), mid.acceptance_rate());
  EXPECT_GT(mid.acceptance_rate(), huge.acceptance_rate());
}

TEST(RunChain, OracleTraceMatchesEnumeration) {
  Rng rng(15);
  const auto data = simulate_dataset(random_params(3, rng), 40, 10, rng);
  RunOptions opts;
  opts.trace = TraceMode::oracle;
  const LaplacePrior prior{1.0};
  const auto chain = run_chain(KernelKind::noisy, IsingParams(3), 50, 0, rw(0.02), data, cheap_estimator(), prior, rng, opts);
  const Matrix S = sufficient_stats_sum(data);
  for (std::size_t t = 0; t < chain.size(); ++t)
    EXPECT_NEAR(chain.log_post_trace[t], oracle_log_posterior(chain.sample(t), S, 40, prior), 1e-9);
}

TEST(RunChain, LangevinGradientNoiseIsNegligibleAtLargeN) {
  Rng rng(16);
  const auto theta0 = generate_true_theta(3, Regime::dense, rng);
  const auto data = simulate_dataset(theta0, 100, 200, rng);
  ProposalSpec spec;
  spec.kind = ProposalKind::langevin;
  spec.step_langevin = 0.01;
  spec.grad_samples = 100000;
  const LaplacePrior prior{1.0};
  Rng a(21), b(22);
  const auto est = run_chain(KernelKind::exact, IsingParams(3), 2500, 500, spec, data, cheap_estimator(), prior, a);
  spec.gradient = GradientSource::oracle;
  const auto orc = run_chain(KernelKind::exact, IsingParams(3), 2500, 500, spec, data, cheap_estimator(), prior, b);
  const Vector m1 = sign_weighted_posterior_mean(est), m2 = sign_weighted_posterior_mean(orc);
  const Vector e1 = sign_weighted_mcse(est), e2 = sign_weighted_mcse(orc);
  for (Eigen::Index i = 0; i < m1.size(); ++i)
    EXPECT_NEAR(m1(i), m2(i), 3.0 * std::hypot(e1(i), e2(i))) << "coordinate " << i;
}

TEST(SignWeightedMean, OrdinaryMeanWhenAllSignsPositive) {
  Rng rng(17);
  const auto data = simulate_dataset(random_params(2, rng), 20, 10, rng);
  const auto chain = run_chain(KernelKind::exact, IsingParams(2), 300, 100, rw(0.05), data, cheap_estimator(), {1.0}, rng);
  const Vector direct = chain.samples.colwise().mean().transpose();
  EXPECT_TRUE(sign_weighted_posterior_mean(chain).isApprox(direct, 1e-12));
  const Vector via_h = sign_weighted_mean(chain, [](const IsingParams& t) { return t.pack(); });
  EXPECT_TRUE(via_h.isApprox(direct, 1e-12));
}
