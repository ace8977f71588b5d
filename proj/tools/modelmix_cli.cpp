#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "modelmix/errors.hpp"
#include "modelmix/harness.hpp"

namespace mm = modelmix;

namespace {

void print_resolved(const nlohmann::json& config, std::uint64_t seed) {
  nlohmann::json resolved = config;
  resolved["seed"] = seed;
  std::cerr << "resolved config: " << resolved.dump() << "\n";
}

int cmd_account(const mm::AccountantConfig& cfg, const std::string& output) {
  print_resolved(mm::to_json(cfg), 0);
  const mm::RdpCurve curve = mm::rdp_curve(cfg);
  const mm::PrivacySpend spend = mm::compose_to_dp(curve, cfg.T, cfg.delta);
  if (output == "csv") {
    std::cout << "alpha,eps\n";
    for (const auto& pt : curve.entries) {
      std::printf("%d,%.10g\n", pt.alpha, pt.eps_alpha);
    }
    std::printf("# spend eps=%.10g delta=%.3g alpha=%d\n", spend.epsilon,
                spend.delta, spend.argmin_alpha);
  } else {
    std::cout << mm::account_record(cfg, curve, spend).dump(2) << "\n";
  }
  return 0;
}

int cmd_calibrate(mm::AccountantConfig cfg, double target_eps) {
  print_resolved(mm::to_json(cfg), 0);
  const double sigma = mm::calibrate_sigma(target_eps, cfg);
  cfg.sigma = sigma;
  const mm::PrivacySpend spend = mm::account(cfg);
  std::cout << nlohmann::json{{"sigma", sigma},
                              {"epsilon", spend.epsilon},
                              {"alpha", spend.argmin_alpha}}
                   .dump(2)
            << "\n";
  return 0;
}

struct TrainArgs {
  std::string problem = "least-squares";
  long n = 1000;
  int d = 20;
  double eta = 0.01;
  double c = 1.0;
  int p = 1;
  double tau = 0.0;
  double q = 1.0;
  double sigma = 0.0;
  long T = 100;
  std::uint64_t seed = 1;
  std::string mix = "on";
  int alpha_fixed = -1;  // 1 forces alpha = 1 (mixing draws disabled)
  std::string aggregation = "sum";
  std::string trajectory_path;
  std::string checkpoint_path;
  double delta = 1e-5;
};

int cmd_train(const TrainArgs& args) {
  mm::Problem problem;
  if (args.problem == "least-squares") {
    problem = mm::make_least_squares(args.n, args.d, args.seed);
  } else if (args.problem == "logistic") {
    problem = mm::make_logistic(args.n, args.d, args.seed);
  } else if (args.problem == "mlp") {
    problem = mm::make_mlp({args.d, 8}, args.n, args.seed);
  } else if (args.problem == "example31") {
    problem = mm::example_31();
  } else {
    throw mm::ContractError("unknown problem: " + args.problem);
  }

  mm::MixConfig cfg;
  cfg.eta = args.eta;
  cfg.clip = {args.c, args.p};
  cfg.tau_schedule = mm::TauSchedule::constant(args.tau);
  cfg.q = args.q;
  cfg.sigma = args.sigma;
  cfg.T = args.T;
  cfg.seed = args.seed;
  cfg.aggregation = args.aggregation == "mean" ? mm::Aggregation::mean
                                               : mm::Aggregation::sum;
  cfg.mix_enabled = args.mix == "on" && args.alpha_fixed != 1;
  const mm::Variant variant =
      args.mix == "on" ? mm::Variant::modelmix : mm::Variant::dpsgd;

  nlohmann::json resolved{{"problem", args.problem}, {"n", problem.n},
                          {"d", problem.d},          {"eta", cfg.eta},
                          {"c", args.c},             {"p", args.p},
                          {"tau", args.tau},         {"q", cfg.q},
                          {"sigma", cfg.sigma},      {"T", cfg.T},
                          {"mix", args.mix},         {"alpha_fixed", args.alpha_fixed},
                          {"aggregation", args.aggregation}};
  print_resolved(resolved, args.seed);

  std::ostringstream traj;
  const mm::RunResult run = mm::train(problem, cfg, variant, nullptr, &traj);
  if (!args.trajectory_path.empty()) {
    std::ofstream out(args.trajectory_path);
    if (!out) {
      throw mm::ContractError("cannot open " + args.trajectory_path);
    }
    out << traj.str();
  }
  if (!args.checkpoint_path.empty()) {
    mm::write_checkpoint(args.checkpoint_path, run.final_state.w_curr);
  }
  const mm::AccountantConfig acc =
      mm::to_accountant_config(cfg, problem.n, args.delta);
  nlohmann::json results{
      {"final_loss", run.trajectory.back().loss},
      {"final_grad_norm", run.trajectory.back().grad_norm},
      {"trajectory_hash", mm::content_hash(traj.str())},
      {"accountant_config", mm::to_json(acc)}};
  std::cout << mm::make_envelope(resolved, resolved.dump(), results, args.seed)
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_fig4(const mm::Fig4Spec& spec) {
  nlohmann::json resolved{{"n", spec.n},       {"delta", spec.delta},
                          {"c", spec.c},       {"q", spec.q},
                          {"T", spec.T},       {"target", spec.target_baseline_eps},
                          {"oracle_samples", spec.oracle_samples}};
  print_resolved(resolved, spec.seed);
  const mm::Fig4Result result = mm::run_fig4(spec);
  // Reference endpoint table, rows keyed (tau_over_eta, p).
  const double reference[3][3] = {{57.2, 17.9, 15.3},
                                  {40.4, 9.0, 7.9},
                                  {31.7, 5.4, 4.8}};
  const double tau_values[3] = {0.075, 0.15, 0.3};
  const int p_values[3] = {1, 25, 100};
  bool endpoints_ok = true;
  std::printf("calibrated sigma = %.8g (sensitivity %.6g)\n", result.sigma,
              result.sensitivity);
  std::printf("%-14s %-6s %-12s %-12s %-8s\n", "tau/eta", "p", "epsilon",
              "reference", "within15%");
  for (const mm::Fig4Cell& cell : result.endpoints) {
    double ref = 0.0;
    for (int ti = 0; ti < 3; ++ti) {
      for (int pi = 0; pi < 3; ++pi) {
        if (cell.tau_over_eta == tau_values[ti] && cell.p == p_values[pi]) {
          ref = reference[ti][pi];
        }
      }
    }
    const bool ok = std::fabs(cell.epsilon - ref) <= 0.15 * ref;
    endpoints_ok = endpoints_ok && ok;
    std::printf("%-14g %-6d %-12.6g %-12g %-8s\n", cell.tau_over_eta, cell.p,
                cell.epsilon, ref, ok ? "yes" : "NO");
  }
  std::printf("ordering invariant: %s\n", result.ordering_ok ? "ok" : "VIOLATED");
  std::printf("oracle gate: %s\n",
              spec.oracle_samples > 0 ? (result.oracle_ok ? "ok" : "FAILED")
                                      : "skipped");
  const bool pass = endpoints_ok && result.ordering_ok && result.oracle_ok;
  std::printf("fig4 reproduction: %s\n", pass ? "PASS" : "FAIL");
  return 0;
}

int cmd_example31() {
  const mm::Example31Report r = mm::run_example31();
  std::cout << nlohmann::json{{"expected_clip_at_opt", r.expected_clip_at_opt},
                              {"expected_clip_at_zero", r.expected_clip_at_zero},
                              {"grad_std", r.grad_std},
                              {"final_w_small_c", r.final_w_small_c},
                              {"final_w_large_c", r.final_w_large_c}}
                   .dump(2)
            << "\n";
  return 0;
}

struct OracleArgs {
  std::string family = "gaussian";
  double scale = 1.0;
  double shift = 1.0;
  double halfwidth = 0.0;
  std::vector<int> ks = {1, 2, 3};
  long samples = 1000000;
  std::uint64_t seed = 7;
  bool pointwise = false;
};

int cmd_oracle(const OracleArgs& args) {
  const mm::NoiseFamily family = mm::noise_family_from_string(args.family);
  const mm::MixtureKernel p0{family, args.scale, 0.0, args.halfwidth};
  const mm::MixtureKernel p1{family, args.scale, args.shift, args.halfwidth};
  nlohmann::json resolved{{"family", args.family},   {"scale", args.scale},
                          {"shift", args.shift},     {"halfwidth", args.halfwidth},
                          {"samples", args.samples}, {"pointwise", args.pointwise}};
  print_resolved(resolved, args.seed);
  if (args.pointwise) {
    const mm::PointwiseLossStats stats =
        mm::mc_pointwise_loss(p0, p1, args.samples, args.seed);
    std::cout << nlohmann::json{{"mean", stats.mean},
                                {"variance", stats.variance},
                                {"q50", stats.q50},
                                {"q90", stats.q90},
                                {"q99", stats.q99}}
                     .dump(2)
              << "\n";
    return 0;
  }
  const auto estimates =
      mm::mc_validate_moments(p0, p1, args.ks, args.samples, args.seed);
  bool all_ok = true;
  std::printf("%-4s %-16s %-16s %-12s %-6s\n", "k", "monte_carlo",
              "quadrature", "std_error", "ok");
  for (const mm::MomentEstimate& est : estimates) {
    const double exact = mm::moment_ratio(p0, p1, est.k);
    const bool ok = std::fabs(est.estimate - exact) <= 3.0 * est.std_error;
    all_ok = all_ok && ok;
    std::printf("%-4d %-16.8g %-16.8g %-12.3g %-6s\n", est.k, est.estimate,
                exact, est.std_error, ok ? "yes" : "NO");
  }
  std::printf("oracle: %s\n", all_ok ? "PASS" : "FAIL");
  return all_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ModelMix DP-SGD accountant, trainer and verification tools"};
  app.require_subcommand(1);

  mm::AccountantConfig acc;
  std::string family = "gaussian";
  std::string output = "json";
  double target_eps = 1.0;

  auto add_accountant_flags = [&](CLI::App* sub) {
    sub->add_option("--q", acc.q, "Poisson sampling rate in [0,1]");
    sub->add_option("--sigma", acc.sigma, "noise scale");
    sub->add_option("--sensitivity", acc.sensitivity, "per-step shift bound");
    sub->add_option("--p", acc.p, "l-inf truncation parameter");
    sub->add_option("--tau", acc.tau, "mixing threshold");
    sub->add_option("--eta", acc.eta, "step size");
    sub->add_option("--T", acc.T, "iterations");
    sub->add_option("--delta", acc.delta, "target delta");
    sub->add_option("--family", family, "gaussian | laplace");
  };

  CLI::App* account = app.add_subcommand("account", "evaluate the accountant");
  add_accountant_flags(account);
  account->add_option("--output", output, "json | csv");

  CLI::App* calibrate =
      app.add_subcommand("calibrate", "bisect sigma for a target epsilon");
  add_accountant_flags(calibrate);
  calibrate->add_option("--target-eps", target_eps, "target epsilon")
      ->required();

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "run a training loop");
  train->add_option("--problem", train_args.problem,
                    "least-squares | logistic | mlp | example31");
  train->add_option("--n", train_args.n, "sample count");
  train->add_option("--d", train_args.d, "dimension");
  train->add_option("--eta", train_args.eta, "step size");
  train->add_option("--c", train_args.c, "l2 clip threshold");
  train->add_option("--p", train_args.p, "l-inf truncation parameter");
  train->add_option("--tau", train_args.tau, "mixing threshold");
  train->add_option("--q", train_args.q, "Poisson sampling rate");
  train->add_option("--sigma", train_args.sigma, "noise std");
  train->add_option("--T", train_args.T, "iterations");
  train->add_option("--seed", train_args.seed, "master seed");
  train->add_option("--mix", train_args.mix, "on | off");
  train->add_option("--alpha-fixed", train_args.alpha_fixed,
                    "1 pins alpha to 1 (disables mixing draws)");
  train->add_option("--aggregation", train_args.aggregation, "sum | mean");
  train->add_option("--trajectory", train_args.trajectory_path,
                    "ndjson trajectory output path");
  train->add_option("--checkpoint", train_args.checkpoint_path,
                    "binary checkpoint output path");
  train->add_option("--delta", train_args.delta,
                    "delta for the accountant handshake");

  mm::Fig4Spec fig4_spec;
  CLI::App* fig4 = app.add_subcommand(
      "reproduce-fig4", "privacy amplification grid reproduction");
  fig4->add_option("--n", fig4_spec.n, "dataset size");
  fig4->add_option("--delta", fig4_spec.delta, "target delta");
  fig4->add_option("--c", fig4_spec.c, "clip threshold");
  fig4->add_option("--q", fig4_spec.q, "sampling rate");
  fig4->add_option("--T", fig4_spec.T, "iterations");
  fig4->add_option("--target-eps", fig4_spec.target_baseline_eps,
                   "baseline calibration target");
  fig4->add_option("--output", fig4_spec.output_csv, "curve CSV path");
  fig4->add_option("--output-q004", fig4_spec.output_csv_q004,
                   "second grid CSV at q=0.04");
  fig4->add_option("--oracle-samples", fig4_spec.oracle_samples,
                   "MC samples for the moment gate (0 skips)");
  fig4->add_option("--seed", fig4_spec.seed, "oracle seed");

  app.add_subcommand("example31", "three-sample clipping pathology report");

  OracleArgs oracle_args;
  CLI::App* oracle =
      app.add_subcommand("oracle", "Monte-Carlo accountant verification");
  oracle->add_option("--family", oracle_args.family, "gaussian | laplace");
  oracle->add_option("--scale", oracle_args.scale, "base noise scale");
  oracle->add_option("--shift", oracle_args.shift, "mean shift");
  oracle->add_option("--halfwidth", oracle_args.halfwidth,
                     "uniform half-width");
  oracle->add_option("--k", oracle_args.ks, "moment orders");
  oracle->add_option("--samples", oracle_args.samples, "sample count");
  oracle->add_option("--seed", oracle_args.seed, "seed");
  oracle->add_flag("--pointwise", oracle_args.pointwise,
                   "estimate pointwise-loss moments instead");

  try {
    app.parse(argc, argv);
    acc.family = mm::noise_family_from_string(family);
    if (account->parsed()) return cmd_account(acc, output);
    if (calibrate->parsed()) return cmd_calibrate(acc, target_eps);
    if (train->parsed()) return cmd_train(train_args);
    if (fig4->parsed()) return cmd_fig4(fig4_spec);
    if (app.get_subcommand("example31")->parsed()) return cmd_example31();
    if (oracle->parsed()) return cmd_oracle(oracle_args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const mm::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const mm::ContractError& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
