#pragma once

// Synthetic data generation, experiment configuration and replicated runs.

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pmising/diagnostics.hpp"
#include "pmising/enumerate.hpp"
#include "pmising/errors.hpp"
#include "pmising/estimators.hpp"
#include "pmising/io.hpp"
#include "pmising/ising.hpp"
#include "pmising/priors.hpp"
#include "pmising/random.hpp"
#include "pmising/samplers.hpp"
#include "pmising/version.hpp"

namespace pmising {

enum class Regime { dense, sparse };

inline Regime parse_regime(const std::string& s) {
  if (s == "dense") return Regime::dense;
  if (s == "sparse") return Regime::sparse;
  throw InputError("unknown regime '" + s + "' (expected dense or sparse)");
}

inline const char* to_string(Regime r) { return r == Regime::dense ? "dense" : "sparse"; }

/// Each free coordinate (diagonal included unless `diag_zero`) independently
/// takes -1 w.p. 0.9 (dense) or -3 w.p. 0.02 (sparse), else 0.
template <RandomStream G>
IsingParams generate_true_theta(std::size_t p, Regime regime, G& rng, bool diag_zero = false) {
  const double value = regime == Regime::dense ? -1.0 : -3.0;
  const double prob = regime == Regime::dense ? 0.9 : 0.02;
  IsingParams out(p);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t k = j; k < p; ++k) {
      const bool hit = uniform01(rng) < prob;
      if (hit && !(diag_zero && j == k)) out.set(j, k, value);
    }
  return out;
}

/// n independent rows, each from its own Gibbs chain: start at an
/// independence-model draw under diag(theta0), run `warmup_sweeps` sweeps.
template <RandomStream G>
BinaryDataset simulate_dataset(const IsingParams& theta0, std::size_t n, std::size_t warmup_sweeps, G& rng) {
  if (warmup_sweeps < 1) throw InputError("simulate_dataset: warmup_sweeps must be >= 1");
  BinaryDataset out = sample_independence(theta0.diagonal(), n, rng);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = out.mutable_row(i);
    for (std::size_t s = 0; s < warmup_sweeps; ++s) gibbs_sweep_inplace(row, theta0, rng);
  }
  return out;
}

struct SyntheticSpec {
  Regime regime = Regime::dense;
  std::size_t warmup_sweeps = 500;
  bool diag_zero = false;
  bool fix_theta0 = false;  // share one theta0 across replications
};

struct ExperimentConfig {
  std::size_t p = 3;
  std::size_t n = 100;
  KernelKind kernel = KernelKind::pseudo_marginal;
  ProposalSpec proposal;
  EstimatorConfig estimator;
  LaplacePrior prior;
  std::vector<double> lambda_grid;
  std::size_t iterations = 5000;
  std::size_t burn_in = 2000;
  std::uint64_t seed = 1;
  std::optional<SyntheticSpec> synthetic = SyntheticSpec{};
  std::optional<std::string> data_file;
  bool has_header = false;
  std::string out_dir = "out";
  bool oracle = false;
  std::size_t replications = 1;
  std::size_t inner_sweeps = 50;
  TraceMode trace = TraceMode::kernel;

  void validate() const {
    if (p < 1) throw InputError("config: p must be positive");
    if (synthetic && n < 1) throw InputError("config: n must be positive");
    if (iterations < 1) throw InputError("config: iterations must be positive");
    if (burn_in >= iterations) throw InputError("config: burn_in must be smaller than iterations");
    if (replications < 1) throw InputError("config: replications must be positive");
    if (inner_sweeps < 1) throw InputError("config: inner_sweeps must be positive");
    if (synthetic.has_value() == data_file.has_value())
      throw InputError("config: exactly one of a synthetic spec or a data file must be given");
    if (synthetic && synthetic->warmup_sweeps < 1) throw InputError("config: warmup_sweeps must be positive");
    proposal.validate();
    estimator.validate();
    prior.validate();
    for (double l : lambda_grid)
      if (!(l > 0.0)) throw InputError("config: lambda grid entries must be positive");
    if (synthetic && (kernel == KernelKind::exact || trace == TraceMode::oracle))
      detail::check_cap(p, estimator.enumeration_cap);
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["p"] = c.p;
  j["n"] = c.n;
  j["kernel"] = to_string(c.kernel);
  j["proposal"] = {{"kind", to_string(c.proposal.kind)},
                   {"step_rw", c.proposal.step_rw},
                   {"step_langevin", c.proposal.step_langevin},
                   {"grad_samples", c.proposal.grad_samples},
                   {"gradient", c.proposal.gradient == GradientSource::oracle ? "oracle" : "estimated"}};
  j["estimator"] = {{"N", c.estimator.N},
                    {"M", c.estimator.M},
                    {"alpha", c.estimator.alpha},
                    {"geom_p", c.estimator.geom_p},
                    {"enumeration_cap", c.estimator.enumeration_cap},
                    {"check_contraction", c.estimator.check_contraction},
                    {"contraction_threshold", c.estimator.contraction_threshold}};
  j["prior"] = {{"lambda", c.prior.lambda}, {"grid", c.lambda_grid}};
  j["iterations"] = c.iterations;
  j["burn_in"] = c.burn_in;
  j["seed"] = c.seed;
  if (c.synthetic)
    j["data"] = {{"synthetic",
                  {{"regime", to_string(c.synthetic->regime)},
                   {"warmup_sweeps", c.synthetic->warmup_sweeps},
                   {"diag_zero", c.synthetic->diag_zero},
                   {"fix_theta0", c.synthetic->fix_theta0}}}};
  else
    j["data"] = {{"file", *c.data_file}, {"has_header", c.has_header}};
  j["out_dir"] = c.out_dir;
  j["oracle"] = c.oracle;
  j["replications"] = c.replications;
  j["inner_sweeps"] = c.inner_sweeps;
  j["trace"] = c.trace == TraceMode::oracle ? "oracle" : "kernel";
  return j;
}

/// Applies the keys present in `j` on top of `c`; unknown keys are rejected.
inline void apply_json(ExperimentConfig& c, const nlohmann::json& j) {
  auto check_keys = [](const nlohmann::json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw InputError("config: '" + where + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || it.key() == a;
      if (!ok) throw InputError("config: unknown key '" + it.key() + "' in " + where);
    }
  };
  check_keys(j, {"p", "n", "kernel", "proposal", "estimator", "prior", "iterations", "burn_in", "seed", "data",
                 "out_dir", "oracle", "replications", "inner_sweeps", "trace"},
             "top level");
  try {
    if (j.contains("p")) c.p = j["p"].get<std::size_t>();
    if (j.contains("n")) c.n = j["n"].get<std::size_t>();
    if (j.contains("kernel")) c.kernel = parse_kernel(j["kernel"].get<std::string>());
    if (j.contains("proposal")) {
      const auto& q = j["proposal"];
      check_keys(q, {"kind", "step_rw", "step_langevin", "grad_samples", "gradient"}, "proposal");
      if (q.contains("kind")) c.proposal.kind = parse_proposal(q["kind"].get<std::string>());
      if (q.contains("step_rw")) c.proposal.step_rw = q["step_rw"].get<double>();
      if (q.contains("step_langevin")) c.proposal.step_langevin = q["step_langevin"].get<double>();
      if (q.contains("grad_samples")) c.proposal.grad_samples = q["grad_samples"].get<std::size_t>();
      if (q.contains("gradient")) {
        const auto g = q["gradient"].get<std::string>();
        if (g != "oracle" && g != "estimated") throw InputError("config: gradient must be oracle or estimated");
        c.proposal.gradient = g == "oracle" ? GradientSource::oracle : GradientSource::estimated;
      }
    }
    if (j.contains("estimator")) {
      const auto& e = j["estimator"];
      check_keys(e, {"N", "M", "alpha", "geom_p", "enumeration_cap", "check_contraction", "contraction_threshold"},
                 "estimator");
      if (e.contains("N")) c.estimator.N = e["N"].get<std::size_t>();
      if (e.contains("M")) c.estimator.M = e["M"].get<std::size_t>();
      if (e.contains("alpha")) c.estimator.alpha = e["alpha"].get<double>();
      if (e.contains("geom_p")) c.estimator.geom_p = e["geom_p"].get<double>();
      if (e.contains("enumeration_cap")) c.estimator.enumeration_cap = e["enumeration_cap"].get<std::size_t>();
      if (e.contains("check_contraction")) c.estimator.check_contraction = e["check_contraction"].get<bool>();
      if (e.contains("contraction_threshold"))
        c.estimator.contraction_threshold = e["contraction_threshold"].get<double>();
    }
    if (j.contains("prior")) {
      const auto& pr = j["prior"];
      check_keys(pr, {"lambda", "grid"}, "prior");
      if (pr.contains("lambda")) c.prior.lambda = pr["lambda"].get<double>();
      if (pr.contains("grid")) c.lambda_grid = pr["grid"].get<std::vector<double>>();
    }
    if (j.contains("iterations")) c.iterations = j["iterations"].get<std::size_t>();
    if (j.contains("burn_in")) c.burn_in = j["burn_in"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("data")) {
      const auto& d = j["data"];
      check_keys(d, {"synthetic", "file", "has_header"}, "data");
      if (d.contains("synthetic") && d.contains("file"))
        throw InputError("config: data must name either synthetic or file, not both");
      if (d.contains("synthetic")) {
        const auto& s = d["synthetic"];
        check_keys(s, {"regime", "warmup_sweeps", "diag_zero", "fix_theta0"}, "data.synthetic");
        SyntheticSpec spec = c.synthetic.value_or(SyntheticSpec{});
        if (s.contains("regime")) spec.regime = parse_regime(s["regime"].get<std::string>());
        if (s.contains("warmup_sweeps")) spec.warmup_sweeps = s["warmup_sweeps"].get<std::size_t>();
        if (s.contains("diag_zero")) spec.diag_zero = s["diag_zero"].get<bool>();
        if (s.contains("fix_theta0")) spec.fix_theta0 = s["fix_theta0"].get<bool>();
        c.synthetic = spec;
        c.data_file.reset();
      }
      if (d.contains("file")) {
        c.data_file = d["file"].get<std::string>();
        c.synthetic.reset();
      }
      if (d.contains("has_header")) c.has_header = d["has_header"].get<bool>();
    }
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("oracle")) c.oracle = j["oracle"].get<bool>();
    if (j.contains("replications")) c.replications = j["replications"].get<std::size_t>();
    if (j.contains("inner_sweeps")) c.inner_sweeps = j["inner_sweeps"].get<std::size_t>();
    if (j.contains("trace")) {
      const auto t = j["trace"].get<std::string>();
      if (t != "oracle" && t != "kernel") throw InputError("config: trace must be oracle or kernel");
      c.trace = t == "oracle" ? TraceMode::oracle : TraceMode::kernel;
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config '" + path.string() + "': " + e.what());
  }
  ExperimentConfig c;
  apply_json(c, j);
  return c;
}

inline nlohmann::json to_json(const DiagnosticsReport& r) {
  nlohmann::json j;
  j["ess_per_coordinate"] = r.ess_per_coordinate;
  j["mean_ess"] = r.mean_ess;
  j["median_ess"] = r.median_ess;
  j["mse"] = std::isnan(r.mse) ? nlohmann::json(nullptr) : nlohmann::json(r.mse);
  j["acceptance_rate"] = r.acceptance_rate;
  j["wall_minutes"] = r.wall_minutes;
  j["ess_per_minute"] = r.ess_per_minute;
  j["warnings"] = r.warnings;
  return j;
}

struct ReplicationResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  DiagnosticsReport report;
  Vector posterior_mean;
};

namespace detail {

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

inline ReplicationResult run_replication(const ExperimentConfig& cfg, std::size_t index,
                                         const std::optional<BinaryDataset>& file_data) {
  namespace fs = std::filesystem;
  ReplicationResult res;
  res.index = index;
  res.seed = derive_seed(cfg.seed, index);
  res.dir = fs::path(cfg.out_dir) / ("rep_" + std::to_string(index));
  std::error_code ec;
  fs::create_directories(res.dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + res.dir.string() + "': " + ec.message());

  Rng theta_rng(cfg.synthetic && cfg.synthetic->fix_theta0 ? derive_seed(cfg.seed, ~std::uint64_t{0})
                                                           : derive_seed(res.seed, 0));
  Rng data_rng(derive_seed(res.seed, 1));
  Rng chain_rng(derive_seed(res.seed, 2));
  Rng oracle_rng(derive_seed(res.seed, 3));

  std::optional<IsingParams> truth;
  BinaryDataset data;
  if (cfg.synthetic) {
    truth = generate_true_theta(cfg.p, cfg.synthetic->regime, theta_rng, cfg.synthetic->diag_zero);
    data = simulate_dataset(*truth, cfg.n, cfg.synthetic->warmup_sweeps, data_rng);
    save_theta_csv(res.dir / "theta0.csv", *truth);
    save_binary_csv(res.dir / "data.csv", data);
  } else {
    data = *file_data;
  }

  const IsingParams init(data.p());
  RunOptions opts;
  opts.inner_sweeps = cfg.inner_sweeps;
  opts.trace = cfg.trace;
  const ChainOutput chain =
      run_chain(cfg.kernel, init, cfg.iterations, cfg.burn_in, cfg.proposal, data, cfg.estimator, cfg.prior,
                chain_rng, opts);

  {
    auto out = open_out(res.dir / "samples.csv");
    write_samples_csv(out, chain, cfg.burn_in + 1);
  }
  {
    auto out = open_out(res.dir / "trace.csv");
    write_trace_csv(out, chain, cfg.burn_in + 1);
  }

  res.report = diagnose(chain);
  try {
    res.posterior_mean = sign_weighted_posterior_mean(chain);
    if (truth) res.report.mse = recovery_mse(IsingParams::unpack(chain.p, res.posterior_mean), *truth);
  } catch (const EstimationError& e) {
    res.report.warnings.emplace_back(e.what());
  }
  nlohmann::json diag = to_json(res.report);
  diag["posterior_mean"] = std::vector<double>(res.posterior_mean.data(),
                                               res.posterior_mean.data() + res.posterior_mean.size());
  std::size_t negative = 0;
  for (int s : chain.signs) negative += s < 0;
  diag["negative_signs"] = negative;
  diag["replication"] = index;
  diag["replication_seed"] = res.seed;
  diag["config"] = to_json(cfg);
  diag["version"] = kVersion;
  write_json(res.dir / "diagnostics.json", diag);

  if (cfg.oracle && data.p() <= cfg.estimator.enumeration_cap) {
    const ChainOutput ref = run_chain(KernelKind::exact, init, cfg.iterations, cfg.burn_in, cfg.proposal, data,
                                      cfg.estimator, cfg.prior, oracle_rng, opts);
    const Vector mean = sign_weighted_posterior_mean(ref);
    const Vector err = sign_weighted_mcse(ref);
    nlohmann::json o;
    o["posterior_mean"] = std::vector<double>(mean.data(), mean.data() + mean.size());
    o["mcse"] = std::vector<double>(err.data(), err.data() + err.size());
    o["acceptance_rate"] = ref.acceptance_rate();
    if (truth) o["mse"] = recovery_mse(IsingParams::unpack(data.p(), mean), *truth);
    if (res.posterior_mean.size() == mean.size())
      o["max_abs_diff_vs_kernel"] = (res.posterior_mean - mean).cwiseAbs().maxCoeff();
    write_json(res.dir / "oracle_summary.json", o);
  }
  return res;
}

}  // namespace detail

/// Runs `replications` independent chains (seed i derived from the top seed)
/// on a worker pool; every replication writes into its own directory.
inline std::vector<ReplicationResult> run_experiment(const ExperimentConfig& cfg, unsigned workers = 0) {
  cfg.validate();
  std::optional<BinaryDataset> file_data;
  if (cfg.data_file) {
    file_data = load_binary_csv(*cfg.data_file, cfg.has_header);
    if (cfg.kernel == KernelKind::exact || cfg.trace == TraceMode::oracle)
      detail::check_cap(file_data->p(), cfg.estimator.enumeration_cap);
  }
  std::filesystem::create_directories(cfg.out_dir);

  std::vector<ReplicationResult> results(cfg.replications);
  std::vector<std::exception_ptr> errors(cfg.replications);
  if (workers == 0) workers = std::max(1U, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, cfg.replications));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < cfg.replications; i = next++) {
      try {
        results[i] = detail::run_replication(cfg, i, file_data);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

/// Held-out log-likelihood sum_test log f(x;theta) - n_test log z(theta), with
/// log z = log mu_hat + log z(phi) from an `N`-sample estimate, or enumerated
/// when `oracle` is set.
template <RandomStream G>
double heldout_loglik(const IsingParams& theta, const BinaryDataset& test, std::size_t N, G& rng,
                      bool oracle = false, std::size_t cap = kDefaultEnumerationCap) {
  if (test.p() != theta.p()) throw InputError("heldout_loglik: dimension mismatch");
  const double data = free_inner(sufficient_stats_sum(test), theta.theta());
  const double log_z = oracle ? exact_log_z_bruteforce(theta, cap)
                              : log_mu_hat(theta, N, rng) + independence_log_z(theta);
  return data - static_cast<double>(test.n()) * log_z;
}

struct LambdaSelectionSettings {
  KernelKind kernel = KernelKind::noisy;
  ProposalSpec proposal;
  EstimatorConfig estimator;
  std::size_t iterations = 2000;
  std::size_t burn_in = 1000;
  std::size_t eval_samples = 100000;  // N for the held-out mu_hat
  bool oracle_eval = false;
  RunOptions run;
};

struct LambdaSelection {
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> heldout;
};

/// Picks the lambda whose posterior-mean fit maximizes held-out
/// log-likelihood; ties go to the smaller lambda.
template <RandomStream G>
LambdaSelection select_lambda(const std::vector<double>& grid, const BinaryDataset& train, const BinaryDataset& test,
                              const LambdaSelectionSettings& settings, G& rng) {
  if (grid.empty()) throw InputError("select_lambda: empty grid");
  if (train.p() != test.p()) throw InputError("select_lambda: train/test dimension mismatch");
  LambdaSelection out;
  out.grid = grid;
  for (double lambda : grid) {
    const LaplacePrior prior{lambda};
    const ChainOutput chain = run_chain(settings.kernel, IsingParams(train.p()), settings.iterations,
                                        settings.burn_in, settings.proposal, train, settings.estimator, prior, rng,
                                        settings.run);
    const IsingParams fit = IsingParams::unpack(train.p(), sign_weighted_posterior_mean(chain));
    out.heldout.push_back(heldout_loglik(fit, test, settings.eval_samples, rng, settings.oracle_eval,
                                         settings.estimator.enumeration_cap));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const bool better = out.heldout[i] > out.heldout[best];
    const bool tie_smaller = out.heldout[i] == out.heldout[best] && grid[i] < grid[best];
    if (better || tie_smaller) best = i;
  }
  out.lambda = grid[best];
  return out;
}

}  // namespace pmising
