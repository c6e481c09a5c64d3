#pragma once

// MCMC kernels for the posterior of an Ising interaction matrix:
//   - pseudo-marginal, driven by the randomized-series estimate of z^(-n)
//   - noisy, plugging importance-sampling estimates into the log M-H ratio
//   - exchange (double M-H) with an inner Gibbs sampler for auxiliary data
//   - exact M-H using enumerated log z (oracle, small p only)

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pmising/enumerate.hpp"
#include "pmising/errors.hpp"
#include "pmising/estimators.hpp"
#include "pmising/ising.hpp"
#include "pmising/priors.hpp"
#include "pmising/random.hpp"
#include "pmising/signed_log.hpp"

namespace pmising {

enum class KernelKind { pseudo_marginal, noisy, exchange, exact };
enum class ProposalKind { random_walk, langevin };
enum class GradientSource { estimated, oracle };

inline const char* to_string(KernelKind k) {
  switch (k) {
    case KernelKind::pseudo_marginal: return "pm";
    case KernelKind::noisy: return "noisy";
    case KernelKind::exchange: return "exchange";
    case KernelKind::exact: return "exact";
  }
  return "?";
}

inline KernelKind parse_kernel(const std::string& s) {
  if (s == "pm" || s == "pseudo_marginal") return KernelKind::pseudo_marginal;
  if (s == "noisy") return KernelKind::noisy;
  if (s == "exchange") return KernelKind::exchange;
  if (s == "exact") return KernelKind::exact;
  throw InputError("unknown kernel '" + s + "' (expected pm, noisy, exchange or exact)");
}

inline const char* to_string(ProposalKind k) { return k == ProposalKind::random_walk ? "rw" : "langevin"; }

inline ProposalKind parse_proposal(const std::string& s) {
  if (s == "rw" || s == "random_walk") return ProposalKind::random_walk;
  if (s == "langevin" || s == "mala") return ProposalKind::langevin;
  throw InputError("unknown proposal '" + s + "' (expected rw or langevin)");
}

struct ProposalSpec {
  ProposalKind kind = ProposalKind::random_walk;
  double step_rw = 0.01;         // sigma^2 of the random walk
  double step_langevin = 1e-3;   // gamma
  std::size_t grad_samples = 5000;
  GradientSource gradient = GradientSource::estimated;

  void validate() const {
    if (!(step_rw > 0.0)) throw InputError("ProposalSpec: step_rw must be positive");
    if (!(step_langevin > 0.0)) throw InputError("ProposalSpec: step_langevin must be positive");
    if (grad_samples < 1) throw InputError("ProposalSpec: grad_samples must be >= 1");
  }
};

struct ChainState {
  IsingParams theta;
  double nu = 1.0;
  SignedLogValue T_cached = SignedLogValue::from_log(0.0);
  double log_prior = 0.0;
  Matrix suff_stat_sum;
  double log_mu_cached = 0.0;  // noisy kernel: last mu_hat at theta
  double log_z_cached = 0.0;   // exact kernel: enumerated log z(theta)
};

struct StepOutcome {
  ChainState state;
  bool accepted = false;
  std::optional<std::string> warning;
};

struct Proposal {
  IsingParams theta;
  double log_q_forward = 0.0;  // log q(theta' | theta)
  double log_q_reverse = 0.0;  // log q(theta | theta')
};

namespace detail {

inline double data_term(const ChainState& s, const IsingParams& theta) {
  return free_inner(s.suff_stat_sum, theta.theta());
}

/// Gradient of the log posterior over the free coordinates.
template <RandomStream G>
Vector log_posterior_gradient(const IsingParams& theta, const Matrix& suff_stat_sum, std::size_t n,
                              const ProposalSpec& spec, const LaplacePrior& prior,
                              std::size_t enumeration_cap, G& rng) {
  Matrix g = suff_stat_sum + grad_log_prior(theta, prior);
  if (n > 0) {
    const Matrix glz = spec.gradient == GradientSource::oracle
                           ? exact_grad_log_z(theta, enumeration_cap)
                           : grad_log_z_estimate(theta, spec.grad_samples, rng);
    g -= static_cast<double>(n) * glz;
  }
  return IsingParams(g).pack();
}

template <RandomStream G>
Vector standard_normal(Eigen::Index d, G& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = z(rng);
  return v;
}

inline bool accept(double log_ratio, double log_u) { return log_u < log_ratio; }

}  // namespace detail

/// Draws theta' from the random-walk or (approximate) Langevin proposal.
/// Both act on the p(p+1)/2 free coordinates and mirror to keep symmetry.
template <RandomStream G>
Proposal propose(const ChainState& state, const ProposalSpec& spec, const BinaryDataset& data,
                 const LaplacePrior& prior, G& rng, std::size_t enumeration_cap = kDefaultEnumerationCap) {
  spec.validate();
  const std::size_t p = state.theta.p();
  const Vector current = state.theta.pack();
  const auto d = current.size();
  Proposal out;
  if (spec.kind == ProposalKind::random_walk) {
    const Vector next = current + std::sqrt(spec.step_rw) * detail::standard_normal(d, rng);
    out.theta = IsingParams::unpack(p, next);
    return out;
  }

  // MALA: theta' = theta + gamma * g(theta) + sqrt(2 gamma) * Z, with g an
  // estimate of the log-posterior gradient; the reverse density uses an
  // independent estimate at theta'.
  const double gamma = spec.step_langevin;
  const std::size_t n = data.n();
  const Vector g_here =
      detail::log_posterior_gradient(state.theta, state.suff_stat_sum, n, spec, prior, enumeration_cap, rng);
  const Vector next = current + gamma * g_here + std::sqrt(2.0 * gamma) * detail::standard_normal(d, rng);
  out.theta = IsingParams::unpack(p, next);
  const Vector g_there =
      detail::log_posterior_gradient(out.theta, state.suff_stat_sum, n, spec, prior, enumeration_cap, rng);
  out.log_q_forward = -(next - current - gamma * g_here).squaredNorm() / (4.0 * gamma);
  out.log_q_reverse = -(current - next - gamma * g_there).squaredNorm() / (4.0 * gamma);
  return out;
}

namespace detail {

/// Tunes nu for theta and applies the contraction policy: when the estimated
/// E|1 - nu mu_hat| reaches the threshold, retune once with alpha halved.
template <RandomStream G>
double tune_nu_checked(const IsingParams& theta, const EstimatorConfig& cfg, G& rng,
                       std::optional<std::string>& warning) {
  double nu = tune_nu(theta, cfg, rng);
  if (!cfg.check_contraction) return nu;
  if (check_contraction(theta, nu, cfg, rng) < cfg.contraction_threshold) return nu;
  EstimatorConfig halved = cfg;
  halved.alpha = cfg.alpha / 2.0;
  nu = tune_nu(theta, halved, rng);
  if (check_contraction(theta, nu, halved, rng) >= cfg.contraction_threshold)
    warning = "contraction check failed after retuning nu with halved alpha";
  return nu;
}

}  // namespace detail

/// Builds the initial chain state, drawing the kernel's cached estimates.
template <RandomStream G>
ChainState init_chain_state(KernelKind kernel, const IsingParams& theta0, const BinaryDataset& data,
                            const EstimatorConfig& cfg, const LaplacePrior& prior, G& rng) {
  if (data.p() != theta0.p()) throw InputError("init_chain_state: data and parameter dimensions differ");
  ChainState s;
  s.theta = theta0;
  s.log_prior = log_prior(theta0, prior);
  s.suff_stat_sum = sufficient_stats_sum(data);
  const std::size_t n = data.n();
  switch (kernel) {
    case KernelKind::pseudo_marginal:
      if (n > 0) {
        std::optional<std::string> ignored;
        s.nu = detail::tune_nu_checked(theta0, cfg, rng, ignored);
        s.T_cached = roulette_T(theta0, s.nu, n, cfg, rng).value;
      }
      break;
    case KernelKind::noisy:
      s.log_mu_cached = log_mu_hat(theta0, cfg.N, rng);
      break;
    case KernelKind::exact:
      s.log_z_cached = exact_log_z_bruteforce(theta0, cfg.enumeration_cap);
      break;
    case KernelKind::exchange:
      break;
  }
  return s;
}

/// Log of the pseudo-marginal posterior estimate |pi_hat(theta | D)| (unnormalized).
inline double pm_log_posterior(const ChainState& s, std::size_t n) {
  const double nn = static_cast<double>(n);
  double lp = detail::data_term(s, s.theta) + s.log_prior;
  if (n > 0) lp += nn * (std::log(s.nu) - independence_log_z(s.theta)) + s.T_cached.log_abs();
  return lp;
}

/// One pseudo-marginal step. Acceptance uses |T|; the sign is carried in the
/// state. On rejection nu and T_cached are retained unchanged.
template <RandomStream G>
StepOutcome pm_step(const ChainState& state, const ProposalSpec& spec, const BinaryDataset& data,
                    const EstimatorConfig& cfg, const LaplacePrior& prior, G& rng) {
  const std::size_t n = data.n();
  const double nn = static_cast<double>(n);
  StepOutcome out{state, false, std::nullopt};
  Proposal prop = propose(state, spec, data, prior, rng, cfg.enumeration_cap);

  ChainState next = state;
  next.theta = prop.theta;
  next.log_prior = log_prior(prop.theta, prior);
  double log_ratio = detail::data_term(state, prop.theta) - detail::data_term(state, state.theta) +
                     next.log_prior - state.log_prior + prop.log_q_reverse - prop.log_q_forward;
  if (n > 0) {
    next.nu = detail::tune_nu_checked(prop.theta, cfg, rng, out.warning);
    next.T_cached = roulette_T(prop.theta, next.nu, n, cfg, rng).value;
    log_ratio += nn * (std::log(next.nu) - independence_log_z(prop.theta)) -
                 nn * (std::log(state.nu) - independence_log_z(state.theta)) +
                 next.T_cached.log_abs() - state.T_cached.log_abs();
  }
  const double log_u = std::log(uniform_open01(rng));
  if (!std::isnan(log_ratio) && detail::accept(log_ratio, log_u)) {
    out.state = std::move(next);
    out.accepted = true;
  }
  return out;
}

/// Log-posterior estimate used by the noisy kernel's trace.
inline double noisy_log_posterior(const ChainState& s, std::size_t n) {
  return detail::data_term(s, s.theta) + s.log_prior -
         static_cast<double>(n) * (s.log_mu_cached + independence_log_z(s.theta));
}

/// One noisy step: both mu_hat(theta) and mu_hat(theta') are drawn fresh.
template <RandomStream G>
StepOutcome noisy_step(const ChainState& state, const ProposalSpec& spec, const BinaryDataset& data,
                       const EstimatorConfig& cfg, const LaplacePrior& prior, G& rng) {
  const double nn = static_cast<double>(data.n());
  StepOutcome out{state, false, std::nullopt};
  Proposal prop = propose(state, spec, data, prior, rng, cfg.enumeration_cap);
  const double lp_new = log_prior(prop.theta, prior);
  const double log_mu_here = log_mu_hat(state.theta, cfg.N, rng);
  const double log_mu_there = log_mu_hat(prop.theta, cfg.N, rng);
  const double v = detail::data_term(state, prop.theta) - detail::data_term(state, state.theta) +
                   prop.log_q_reverse + lp_new - prop.log_q_forward - state.log_prior +
                   nn * (log_mu_here - log_mu_there) -
                   nn * (independence_log_z(prop.theta) - independence_log_z(state.theta));
  out.state.log_mu_cached = log_mu_here;
  const double log_u = std::log(uniform_open01(rng));
  if (!std::isnan(v) && log_u <= std::min(v, 0.0)) {
    out.state.theta = std::move(prop.theta);
    out.state.log_prior = lp_new;
    out.state.log_mu_cached = log_mu_there;
    out.accepted = true;
  }
  return out;
}

/// One exchange (double M-H) step. Auxiliary vector w_l starts at x_l and
/// runs `inner_sweeps` Gibbs sweeps under theta'.
template <RandomStream G>
StepOutcome exchange_step(const ChainState& state, const ProposalSpec& spec, const BinaryDataset& data,
                          const LaplacePrior& prior, std::size_t inner_sweeps, G& rng,
                          std::size_t enumeration_cap = kDefaultEnumerationCap) {
  if (inner_sweeps < 1) throw InputError("exchange_step: inner_sweeps must be >= 1");
  StepOutcome out{state, false, std::nullopt};
  Proposal prop = propose(state, spec, data, prior, rng, enumeration_cap);
  const double lp_new = log_prior(prop.theta, prior);

  BinaryDataset aux = data;
  for (std::size_t l = 0; l < aux.n(); ++l) {
    auto w = aux.mutable_row(l);
    for (std::size_t s = 0; s < inner_sweeps; ++s) gibbs_sweep_inplace(w, prop.theta, rng);
  }
  const Matrix aux_stats = sufficient_stats_sum(aux);
  const Matrix delta = prop.theta.theta() - state.theta.theta();
  const double log_ratio = free_inner(state.suff_stat_sum, delta) + lp_new - state.log_prior +
                           prop.log_q_reverse - prop.log_q_forward - free_inner(aux_stats, delta);
  const double log_u = std::log(uniform_open01(rng));
  if (!std::isnan(log_ratio) && detail::accept(log_ratio, log_u)) {
    out.state.theta = std::move(prop.theta);
    out.state.log_prior = lp_new;
    out.accepted = true;
  }
  return out;
}

/// Textbook M-H with enumerated log z; the ground truth for small p.
template <RandomStream G>
StepOutcome exact_mh_step(const ChainState& state, const ProposalSpec& spec, const BinaryDataset& data,
                          const LaplacePrior& prior, G& rng,
                          std::size_t enumeration_cap = kDefaultEnumerationCap) {
  detail::check_cap(state.theta.p(), enumeration_cap);
  const double nn = static_cast<double>(data.n());
  StepOutcome out{state, false, std::nullopt};
  Proposal prop = propose(state, spec, data, prior, rng, enumeration_cap);
  const double lp_new = log_prior(prop.theta, prior);
  const double lz_new = exact_log_z_bruteforce(prop.theta, enumeration_cap);
  const double log_ratio = detail::data_term(state, prop.theta) - detail::data_term(state, state.theta) +
                           lp_new - state.log_prior + prop.log_q_reverse - prop.log_q_forward -
                           nn * (lz_new - state.log_z_cached);
  const double log_u = std::log(uniform_open01(rng));
  if (!std::isnan(log_ratio) && detail::accept(log_ratio, log_u)) {
    out.state.theta = std::move(prop.theta);
    out.state.log_prior = lp_new;
    out.state.log_z_cached = lz_new;
    out.accepted = true;
  }
  return out;
}

/// Exact unnormalized log posterior (enumeration).
inline double oracle_log_posterior(const IsingParams& theta, const Matrix& suff_stat_sum, std::size_t n,
                                   const LaplacePrior& prior, std::size_t cap = kDefaultEnumerationCap) {
  return free_inner(suff_stat_sum, theta.theta()) + log_prior(theta, prior) -
         static_cast<double>(n) * exact_log_z_bruteforce(theta, cap);
}

enum class TraceMode { kernel, oracle };

struct RunOptions {
  std::size_t inner_sweeps = 50;   // exchange kernel
  TraceMode trace = TraceMode::kernel;
};

struct ChainOutput {
  std::size_t p = 0;
  Matrix samples;                      // one packed theta per retained iteration
  std::vector<int> signs;              // sigma(theta); +1 for non-PM kernels
  std::vector<std::uint8_t> accepted;  // per retained iteration
  std::vector<double> log_post_trace;
  double wall_seconds = 0.0;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return signs.size(); }
  IsingParams sample(std::size_t t) const { return IsingParams::unpack(p, Vector(samples.row(static_cast<Eigen::Index>(t)).transpose())); }

  double acceptance_rate() const {
    if (accepted.empty()) return 0.0;
    std::size_t a = 0;
    for (auto v : accepted) a += v;
    return static_cast<double>(a) / static_cast<double>(accepted.size());
  }
};

/// Runs `iterations` steps of the chosen kernel, recording iterations after
/// `burn_in`. The trace holds the kernel's own running log-posterior estimate
/// (plug-in mu_hat for exchange) or the enumerated value in oracle mode.
template <RandomStream G>
ChainOutput run_chain(KernelKind kernel, const IsingParams& init, std::size_t iterations, std::size_t burn_in,
                      const ProposalSpec& spec, const BinaryDataset& data, const EstimatorConfig& cfg,
                      const LaplacePrior& prior, G& rng, const RunOptions& opts = {}) {
  if (burn_in >= iterations) throw InputError("run_chain: burn_in must be smaller than iterations");
  spec.validate();
  cfg.validate();
  prior.validate();
  if (kernel == KernelKind::exact || opts.trace == TraceMode::oracle) detail::check_cap(init.p(), cfg.enumeration_cap);

  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = data.n();
  const std::size_t kept = iterations - burn_in;
  ChainOutput out;
  out.p = init.p();
  out.samples.resize(static_cast<Eigen::Index>(kept), static_cast<Eigen::Index>(num_free(init.p())));
  out.signs.reserve(kept);
  out.accepted.reserve(kept);
  out.log_post_trace.reserve(kept);
  std::map<std::string, std::size_t> warning_counts;

  ChainState state = init_chain_state(kernel, init, data, cfg, prior, rng);
  for (std::size_t it = 0; it < iterations; ++it) {
    StepOutcome step;
    switch (kernel) {
      case KernelKind::pseudo_marginal: step = pm_step(state, spec, data, cfg, prior, rng); break;
      case KernelKind::noisy: step = noisy_step(state, spec, data, cfg, prior, rng); break;
      case KernelKind::exchange:
        step = exchange_step(state, spec, data, prior, opts.inner_sweeps, rng, cfg.enumeration_cap);
        break;
      case KernelKind::exact: step = exact_mh_step(state, spec, data, prior, rng, cfg.enumeration_cap); break;
    }
    state = std::move(step.state);
    if (step.warning) ++warning_counts[*step.warning];
    if (it < burn_in) continue;

    const auto row = static_cast<Eigen::Index>(it - burn_in);
    out.samples.row(row) = state.theta.pack().transpose();
    out.signs.push_back(kernel == KernelKind::pseudo_marginal && n > 0 ? state.T_cached.sign() : 1);
    out.accepted.push_back(step.accepted ? 1 : 0);

    double lp = 0.0;
    if (opts.trace == TraceMode::oracle) {
      lp = oracle_log_posterior(state.theta, state.suff_stat_sum, n, prior, cfg.enumeration_cap);
    } else {
      switch (kernel) {
        case KernelKind::pseudo_marginal: lp = pm_log_posterior(state, n); break;
        case KernelKind::noisy: lp = noisy_log_posterior(state, n); break;
        case KernelKind::exact:
          lp = detail::data_term(state, state.theta) + state.log_prior - static_cast<double>(n) * state.log_z_cached;
          break;
        case KernelKind::exchange: {
          ChainState probe = state;
          probe.log_mu_cached = log_mu_hat(state.theta, cfg.N, rng);
          lp = noisy_log_posterior(probe, n);
          break;
        }
      }
    }
    out.log_post_trace.push_back(lp);
  }
  for (const auto& [msg, count] : warning_counts)
    out.warnings.push_back(msg + " (" + std::to_string(count) + " iterations)");
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Sign-reweighted posterior expectation sum_t sigma_t h(theta_t) / sum_t sigma_t.
template <class H>
Vector sign_weighted_mean(const ChainOutput& output, H&& h) {
  if (output.size() == 0) throw EstimationError("sign_weighted_mean: empty chain");
  long long sign_sum = 0;
  for (int s : output.signs) sign_sum += s;
  if (sign_sum == 0) throw EstimationError("sign_weighted_mean: signs cancel exactly (sum of signs is zero)");
  Vector acc;
  for (std::size_t t = 0; t < output.size(); ++t) {
    const Vector v = h(output.sample(t));
    if (t == 0) acc = Vector::Zero(v.size());
    acc += static_cast<double>(output.signs[t]) * v;
  }
  return acc / static_cast<double>(sign_sum);
}

/// Sign-reweighted posterior mean of the packed free coordinates.
inline Vector sign_weighted_posterior_mean(const ChainOutput& output) {
  if (output.size() == 0) throw EstimationError("sign_weighted_posterior_mean: empty chain");
  Eigen::VectorXd w(static_cast<Eigen::Index>(output.size()));
  for (std::size_t t = 0; t < output.size(); ++t) w(static_cast<Eigen::Index>(t)) = output.signs[t];
  const double total = w.sum();
  if (total == 0.0) throw EstimationError("sign_weighted_posterior_mean: signs cancel exactly");
  return output.samples.transpose() * w / total;
}

}  // namespace pmising
