#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "pmising/diagnostics.hpp"
#include "test_util.hpp"

using namespace pmising;

namespace {

std::vector<double> white_noise(std::size_t len, Rng& rng) {
  std::normal_distribution<double> z;
  std::vector<double> v(len);
  for (auto& x : v) x = z(rng);
  return v;
}

std::vector<double> ar1(std::size_t len, double phi, Rng& rng) {
  std::normal_distribution<double> z;
  std::vector<double> v(len);
  double x = z(rng) / std::sqrt(1 - phi * phi);
  for (auto& out : v) {
    x = phi * x + z(rng);
    out = x;
  }
  return v;
}

ChainOutput chain_from(const Matrix& samples, std::vector<int> signs) {
  ChainOutput c;
  c.p = 2;
  c.samples = samples;
  c.signs = std::move(signs);
  c.accepted.assign(c.signs.size(), 1);
  c.log_post_trace.assign(c.signs.size(), 0.0);
  return c;
}

}  // namespace

TEST(Autocorrelation, WhiteNoise) {
  Rng rng(1);
  const auto v = white_noise(100000, rng);
  for (double r : autocorrelation(v, 20)) EXPECT_LT(std::fabs(r), 0.02);
}

TEST(Autocorrelation, AR1) {
  Rng rng(2);
  const auto v = ar1(100000, 0.9, rng);
  const auto rho = autocorrelation(v, 5);
  EXPECT_NEAR(rho[0], 0.9, 0.02);
  EXPECT_NEAR(rho[1], 0.81, 0.03);
}

TEST(Autocorrelation, AlternatingAndConstant) {
  std::vector<double> alt(1000);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 ? 1.0 : -1.0;
  EXPECT_NEAR(autocorrelation(alt, 3)[0], -1.0, 0.01);

  bool constant = false;
  const auto flat = autocorrelation(std::vector<double>(50, 2.0), 5, &constant);
  EXPECT_TRUE(constant);
  for (double r : flat) EXPECT_EQ(r, 0.0);
  EXPECT_THROW(autocorrelation(alt, 600), InputError);
  EXPECT_THROW(autocorrelation(alt, 0), InputError);
}

TEST(EffectiveSampleSize, WhiteNoise) {
  Rng rng(3);
  const auto v = white_noise(20000, rng);
  EXPECT_NEAR(effective_sample_size(v), 20000.0, 2000.0);
}

TEST(EffectiveSampleSize, AR1ClosedForm) {
  Rng rng(4);
  const std::size_t len = 200000;
  const auto v = ar1(len, 0.9, rng);
  const double expected = len * 0.1 / 1.9;
  EXPECT_NEAR(effective_sample_size(v), expected, 0.2 * expected);
}

TEST(EffectiveSampleSize, DuplicatedSeriesHalves) {
  Rng rng(5);
  const auto v = ar1(50000, 0.5, rng);
  std::vector<double> doubled;
  for (double x : v) {
    doubled.push_back(x);
    doubled.push_back(x);
  }
  const double ratio = effective_sample_size(doubled) / effective_sample_size(v);
  EXPECT_NEAR(ratio, 1.0, 0.2);  // same information, twice the length
  EXPECT_NEAR(effective_sample_size(doubled) / doubled.size(), 0.5 * effective_sample_size(v) / v.size(), 0.05);
}

TEST(EffectiveSampleSize, ClampedToChainLength) {
  std::vector<double> alt(1000);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 ? 1.0 : -1.0;
  const double ess = effective_sample_size(alt);
  EXPECT_GT(ess, 0.0);
  EXPECT_LE(ess, 1000.0);
  EXPECT_EQ(effective_sample_size(std::vector<double>(200, 3.0)), 200.0);
  EXPECT_THROW(effective_sample_size(std::vector<double>(99, 1.0)), InputError);

  Rng rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    const auto v = ar1(150, 2.0 * uniform01(rng) - 1.0, rng);
    const double e = effective_sample_size(v);
    EXPECT_GT(e, 0.0);
    EXPECT_LE(e, 150.0);
  }
}

TEST(Mcse, WhiteNoiseMatchesClassicalStandardError) {
  Rng rng(7);
  const auto v = white_noise(10000, rng);
  EXPECT_NEAR(mcse(v), 0.01, 0.0015);
}

TEST(RecoveryMse, Examples) {
  Rng rng(8);
  const auto a = pmising::testing::random_params(4, rng);
  const auto b = pmising::testing::random_params(4, rng);
  EXPECT_EQ(recovery_mse(a, a), 0.0);
  EXPECT_DOUBLE_EQ(recovery_mse(a, b), recovery_mse(b, a));
  EXPECT_GT(recovery_mse(a, b), 0.0);
  EXPECT_DOUBLE_EQ(recovery_mse(IsingParams(Matrix::Ones(2, 2)), IsingParams(2)), 1.0);
  EXPECT_THROW(recovery_mse(a, IsingParams(3)), InputError);
}

TEST(SignAgreement, Examples) {
  Rng rng(9);
  IsingParams a(3);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t k = j; k < 3; ++k) a.set(j, k, (uniform01(rng) < 0.5 ? -1.0 : 1.0) * (0.5 + uniform01(rng)));
  EXPECT_EQ(sign_agreement(a, a, 0.1), 1.0);
  EXPECT_EQ(sign_agreement(a, IsingParams(Matrix(-a.theta())), 0.1), 0.0);
  EXPECT_EQ(sign_agreement(IsingParams(3), a, 0.1), 0.0);
  EXPECT_EQ(sign_agreement(IsingParams(Matrix(3.0 * a.theta())), IsingParams(Matrix(2.0 * a.theta())), 0.1), 1.0);
  EXPECT_THROW(sign_agreement(a, a, 0.0), InputError);
  EXPECT_THROW(sign_agreement(a, IsingParams(2), 0.1), InputError);
}

TEST(SignAgreement, ThresholdBand) {
  IsingParams a(2), b(2);
  a.set(0, 1, 0.05);
  b.set(0, 1, -0.08);
  a.set(0, 0, 0.3);
  b.set(0, 0, -0.3);
  // (0,1) both round to 0; (0,0) flips; (1,1) both zero.
  EXPECT_NEAR(sign_agreement(a, b, 0.1), 2.0 / 3.0, 1e-15);
}

TEST(Diagnose, ReportFields) {
  Rng rng(10);
  const auto c0 = white_noise(1000, rng);
  const auto c1 = ar1(1000, 0.9, rng);
  Matrix s(1000, 3);
  for (Eigen::Index t = 0; t < 1000; ++t) {
    s(t, 0) = c0[static_cast<std::size_t>(t)];
    s(t, 1) = c1[static_cast<std::size_t>(t)];
    s(t, 2) = 0.5;
  }
  auto chain = chain_from(s, std::vector<int>(1000, 1));
  chain.accepted[0] = 0;
  chain.wall_seconds = 30.0;
  const auto r = diagnose(chain);
  ASSERT_EQ(r.ess_per_coordinate.size(), 3U);
  for (double e : r.ess_per_coordinate) {
    EXPECT_GT(e, 0.0);
    EXPECT_LE(e, 1000.0);
  }
  EXPECT_GT(r.ess_per_coordinate[0], r.ess_per_coordinate[1]);
  EXPECT_NEAR(r.mean_ess, (r.ess_per_coordinate[0] + r.ess_per_coordinate[1] + r.ess_per_coordinate[2]) / 3, 1e-9);
  auto sorted = r.ess_per_coordinate;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(r.median_ess, sorted[1]);
  EXPECT_DOUBLE_EQ(r.acceptance_rate, 0.999);
  EXPECT_DOUBLE_EQ(r.wall_minutes, 0.5);
  EXPECT_DOUBLE_EQ(r.ess_per_minute, r.mean_ess / 0.5);
  EXPECT_TRUE(std::isnan(r.mse));

  const IsingParams truth(2);
  const auto with_truth = diagnose(chain, &truth);
  EXPECT_TRUE(std::isfinite(with_truth.mse));
}

TEST(SignWeighted, MeanAndMcse) {
  Matrix s(4, 3);
  s << 1, 0, 0,  //
      3, 0, 0,   //
      5, 0, 0,   //
      7, 0, 0;
  const auto all_plus = chain_from(s, {1, 1, 1, 1});
  EXPECT_NEAR(sign_weighted_posterior_mean(all_plus)(0), 4.0, 1e-12);
  const auto mixed = chain_from(s, {1, 1, -1, 1});
  EXPECT_NEAR(sign_weighted_posterior_mean(mixed)(0), (1 + 3 - 5 + 7) / 2.0, 1e-12);
  EXPECT_NEAR(sign_weighted_mean(mixed, [](const IsingParams&) { return Vector::Ones(1); })(0), 1.0, 1e-15);
  EXPECT_THROW(sign_weighted_posterior_mean(chain_from(s, {1, -1, 1, -1})), EstimationError);

  Rng rng(11);
  const auto noise = white_noise(4000, rng);
  Matrix big(4000, 3);
  for (Eigen::Index t = 0; t < 4000; ++t) big.row(t) << noise[static_cast<std::size_t>(t)], 0.0, 1.0;
  const Vector err = sign_weighted_mcse(chain_from(big, std::vector<int>(4000, 1)));
  EXPECT_NEAR(err(0), 1.0 / std::sqrt(4000.0), 0.003);
}
