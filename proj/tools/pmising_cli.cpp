// Command-line front end: generate, run, diagnose, select-lambda, compare.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pmising/pmising.hpp"

namespace {

using namespace pmising;

struct RunFlags {
  std::string config;
  std::size_t p = 0, n = 0, iterations = 0, burn_in = 0, N = 0, M = 0, grad_samples = 0, replications = 0,
              inner_sweeps = 0, warmup = 0;
  std::string kernel, proposal, gradient, regime, data, trace;
  double step_rw = 0, step_langevin = 0, alpha = 0, geom_p = 0, lambda = 0;
  bool header = false, oracle = false, diag_zero = false, fix_theta0 = false, no_contraction_check = false;
  unsigned workers = 0;
};

// Copies every flag the user actually passed onto the config.
void apply_flags(ExperimentConfig& c, const CLI::App& app, const RunFlags& f) {
  auto given = [&](const char* name) {
    const CLI::Option* opt = app.get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--p")) c.p = f.p;
  if (given("--n")) c.n = f.n;
  if (given("--kernel")) c.kernel = parse_kernel(f.kernel);
  if (given("--proposal")) c.proposal.kind = parse_proposal(f.proposal);
  if (given("--step-rw")) c.proposal.step_rw = f.step_rw;
  if (given("--step-langevin")) c.proposal.step_langevin = f.step_langevin;
  if (given("--grad-samples")) c.proposal.grad_samples = f.grad_samples;
  if (given("--gradient")) c.proposal.gradient = f.gradient == "oracle" ? GradientSource::oracle : GradientSource::estimated;
  if (given("--N")) c.estimator.N = f.N;
  if (given("--M")) c.estimator.M = f.M;
  if (given("--alpha")) c.estimator.alpha = f.alpha;
  if (given("--geom-p")) c.estimator.geom_p = f.geom_p;
  if (given("--no-contraction-check")) c.estimator.check_contraction = false;
  if (given("--lambda")) c.prior.lambda = f.lambda;
  if (given("--iterations")) c.iterations = f.iterations;
  if (given("--burn-in")) c.burn_in = f.burn_in;
  if (given("--replications")) c.replications = f.replications;
  if (given("--inner-sweeps")) c.inner_sweeps = f.inner_sweeps;
  if (given("--oracle")) c.oracle = true;
  if (given("--trace")) c.trace = f.trace == "oracle" ? TraceMode::oracle : TraceMode::kernel;
  if (given("--data")) {
    c.data_file = f.data;
    c.synthetic.reset();
  }
  if (given("--header")) c.has_header = true;
  if (given("--regime") || given("--warmup") || given("--diag-zero") || given("--fix-theta0")) {
    if (c.data_file) throw InputError("synthetic-data flags conflict with --data");
    SyntheticSpec s = c.synthetic.value_or(SyntheticSpec{});
    if (given("--regime")) s.regime = parse_regime(f.regime);
    if (given("--warmup")) s.warmup_sweeps = f.warmup;
    if (given("--diag-zero")) s.diag_zero = true;
    if (given("--fix-theta0")) s.fix_theta0 = true;
    c.synthetic = s;
  }
}

void add_sampler_flags(CLI::App* app, RunFlags& f) {
  app->add_option("--kernel", f.kernel, "pm | noisy | exchange | exact")
      ->check(CLI::IsMember({"pm", "noisy", "exchange", "exact"}));
  app->add_option("--proposal", f.proposal, "rw | langevin")->check(CLI::IsMember({"rw", "langevin"}));
  app->add_option("--step-rw", f.step_rw, "random-walk variance");
  app->add_option("--step-langevin", f.step_langevin, "Langevin step size");
  app->add_option("--grad-samples", f.grad_samples, "importance samples per gradient estimate");
  app->add_option("--gradient", f.gradient, "estimated | oracle")->check(CLI::IsMember({"estimated", "oracle"}));
  app->add_option("--N", f.N, "importance samples per mu estimate");
  app->add_option("--M", f.M, "pilot replicates for nu");
  app->add_option("--alpha", f.alpha, "target nu*mu");
  app->add_option("--geom-p", f.geom_p, "truncation probability");
  app->add_flag("--no-contraction-check", f.no_contraction_check, "skip the E|1 - nu mu_hat| check");
  app->add_option("--iterations", f.iterations);
  app->add_option("--burn-in", f.burn_in);
  app->add_option("--inner-sweeps", f.inner_sweeps, "Gibbs sweeps per exchange auxiliary draw");
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

std::vector<double> as_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Posterior sampling for Ising interaction matrices"};
  app.set_version_flag("--version", std::string(pmising::kVersion));
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::string out_dir = "out";

  // generate
  auto* gen = app.add_subcommand("generate", "draw a true parameter and a synthetic dataset");
  std::size_t gen_p = 3, gen_n = 100, gen_warmup = 500;
  std::string gen_regime = "dense";
  bool gen_diag_zero = false;
  gen->add_option("--p", gen_p)->required();
  gen->add_option("--n", gen_n)->required();
  gen->add_option("--regime", gen_regime)->check(CLI::IsMember({"dense", "sparse"}));
  gen->add_option("--warmup", gen_warmup, "Gibbs warmup sweeps per row");
  gen->add_flag("--diag-zero", gen_diag_zero);
  gen->add_option("--seed", seed);
  gen->add_option("--out-dir", out_dir);

  // run
  auto* run = app.add_subcommand("run", "run one or more chains and write samples, traces and diagnostics");
  RunFlags rf;
  run->add_option("--config", rf.config, "JSON config; flags given here take precedence")->check(CLI::ExistingFile);
  run->add_option("--p", rf.p);
  run->add_option("--n", rf.n);
  run->add_option("--lambda", rf.lambda, "Laplace prior rate");
  run->add_option("--data", rf.data, "binary CSV instead of synthetic data")->check(CLI::ExistingFile);
  run->add_flag("--header", rf.header, "data file has a header line");
  run->add_option("--regime", rf.regime)->check(CLI::IsMember({"dense", "sparse"}));
  run->add_option("--warmup", rf.warmup);
  run->add_flag("--diag-zero", rf.diag_zero);
  run->add_flag("--fix-theta0", rf.fix_theta0, "share one true parameter across replications");
  run->add_option("--replications", rf.replications);
  run->add_flag("--oracle", rf.oracle, "also run an exact-MH reference chain");
  run->add_option("--trace", rf.trace, "kernel | oracle")->check(CLI::IsMember({"kernel", "oracle"}));
  run->add_option("--workers", rf.workers, "worker threads (0 = hardware concurrency)");
  run->add_option("--seed", seed);
  run->add_option("--out-dir", out_dir);
  add_sampler_flags(run, rf);

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "summarize a samples CSV");
  std::string diag_samples, diag_truth;
  diag->add_option("samples", diag_samples)->required()->check(CLI::ExistingFile);
  diag->add_option("--truth", diag_truth, "true parameter CSV for recovery MSE")->check(CLI::ExistingFile);

  // select-lambda
  auto* sel = app.add_subcommand("select-lambda", "choose the prior rate by held-out log-likelihood");
  std::string sel_train, sel_test;
  std::vector<double> sel_grid;
  std::size_t sel_eval = 100000;
  bool sel_oracle = false;
  bool sel_header = false;
  RunFlags sf;
  sel->add_option("--train", sel_train)->required()->check(CLI::ExistingFile);
  sel->add_option("--test", sel_test)->required()->check(CLI::ExistingFile);
  sel->add_flag("--header", sel_header);
  sel->add_option("--grid", sel_grid, "candidate lambdas")->required()->delimiter(',');
  sel->add_option("--eval-samples", sel_eval, "importance samples for held-out log z");
  sel->add_flag("--oracle-eval", sel_oracle, "enumerate log z for the held-out score");
  sel->add_option("--seed", seed);
  add_sampler_flags(sel, sf);

  // compare
  auto* cmp = app.add_subcommand("compare", "sign agreement between the posterior means of two samples files");
  std::string cmp_a, cmp_b;
  double cmp_threshold = 0.1;
  cmp->add_option("a", cmp_a)->required()->check(CLI::ExistingFile);
  cmp->add_option("b", cmp_b)->required()->check(CLI::ExistingFile);
  cmp->add_option("--threshold", cmp_threshold);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      Rng theta_rng(derive_seed(seed, 0));
      Rng data_rng(derive_seed(seed, 1));
      const auto theta0 = generate_true_theta(gen_p, parse_regime(gen_regime), theta_rng, gen_diag_zero);
      const auto data = simulate_dataset(theta0, gen_n, gen_warmup, data_rng);
      std::filesystem::create_directories(out_dir);
      save_theta_csv(std::filesystem::path(out_dir) / "theta0.csv", theta0);
      save_binary_csv(std::filesystem::path(out_dir) / "data.csv", data);
      std::cout << "wrote " << out_dir << "/theta0.csv and " << out_dir << "/data.csv\n";
    } else if (*run) {
      ExperimentConfig cfg = rf.config.empty() ? ExperimentConfig{} : load_config(rf.config);
      apply_flags(cfg, *run, rf);
      if (run->count("--seed") || rf.config.empty()) cfg.seed = seed;
      if (run->count("--out-dir") || rf.config.empty()) cfg.out_dir = out_dir;
      const auto results = run_experiment(cfg, rf.workers);
      for (const auto& r : results) {
        std::cout << r.dir.string() << ": mean ESS " << r.report.mean_ess << ", acceptance "
                  << r.report.acceptance_rate;
        if (!std::isnan(r.report.mse)) std::cout << ", MSE " << r.report.mse;
        std::cout << '\n';
        for (const auto& w : r.report.warnings) std::cerr << "warning: " << w << '\n';
      }
    } else if (*diag) {
      const auto file = load_samples_csv(diag_samples);
      std::optional<IsingParams> truth;
      if (!diag_truth.empty()) truth = load_theta_csv(diag_truth);
      nlohmann::json j = to_json(diagnose(file.chain, truth ? &*truth : nullptr));
      j.erase("acceptance_rate");
      j.erase("wall_minutes");
      j.erase("ess_per_minute");
      j["posterior_mean"] = as_vector(sign_weighted_posterior_mean(file.chain));
      j["samples"] = file.chain.size();
      print_json(j);
    } else if (*sel) {
      const auto train = load_binary_csv(sel_train, sel_header);
      const auto test = load_binary_csv(sel_test, sel_header);
      ExperimentConfig base;
      base.kernel = KernelKind::noisy;
      apply_flags(base, *sel, sf);
      LambdaSelectionSettings settings;
      settings.kernel = base.kernel;
      settings.proposal = base.proposal;
      settings.estimator = base.estimator;
      settings.iterations = sel->count("--iterations") ? base.iterations : settings.iterations;
      settings.burn_in = sel->count("--burn-in") ? base.burn_in : settings.burn_in;
      settings.eval_samples = sel_eval;
      settings.oracle_eval = sel_oracle;
      settings.run.inner_sweeps = base.inner_sweeps;
      Rng rng(seed);
      const auto result = select_lambda(sel_grid, train, test, settings, rng);
      print_json({{"lambda", result.lambda}, {"grid", result.grid}, {"heldout_loglik", result.heldout}});
    } else if (*cmp) {
      const auto a = load_samples_csv(cmp_a);
      const auto b = load_samples_csv(cmp_b);
      if (a.p != b.p) throw InputError("compare: samples files have different dimensions");
      const auto ma = IsingParams::unpack(a.p, sign_weighted_posterior_mean(a.chain));
      const auto mb = IsingParams::unpack(b.p, sign_weighted_posterior_mean(b.chain));
      print_json({{"sign_agreement", sign_agreement(ma, mb, cmp_threshold)}, {"threshold", cmp_threshold}});
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
