#include "modelmix/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "modelmix/errors.hpp"

namespace modelmix {
namespace {

void write_fig4_csv(const std::string& path,
                    const std::vector<Fig4Cell>& cells) {
  std::ofstream out(path);
  if (!out) throw ContractError("cannot open " + path);
  out << "tau_over_eta,p,T,epsilon,delta,alpha_star\n";
  char line[160];
  for (const Fig4Cell& cell : cells) {
    std::snprintf(line, sizeof(line), "%.6g,%d,%ld,%.10g,%.3g,%d\n",
                  cell.tau_over_eta, cell.p, cell.T, cell.epsilon, cell.delta,
                  cell.alpha_star);
    out << line;
  }
}

// Accountant grid for one Fig. 4 panel: the tau = 0 baseline plus the
// tau x p grid, each with 50 evenly spaced composition checkpoints.
struct PanelResult {
  std::vector<Fig4Cell> endpoints;
  std::vector<Fig4Cell> curve;
  bool ordering_ok = true;
};

PanelResult run_panel(const Fig4Spec& spec, double q, double sigma) {
  const double sensitivity = spec.c / (static_cast<double>(spec.n) * q);
  const std::vector<double> taus = {0.0, 0.075, 0.15, 0.3};
  const std::vector<int> ps = {1, 25, 100};
  const int checkpoints = 50;

  PanelResult panel;
  // eps[tau index][p index][checkpoint]
  std::vector<std::vector<std::vector<double>>> eps(
      taus.size(), std::vector<std::vector<double>>(ps.size()));
  for (std::size_t ti = 0; ti < taus.size(); ++ti) {
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
      if (taus[ti] == 0.0 && ps[pi] != 1) continue;  // baseline is p = 1 only
      AccountantConfig cfg;
      cfg.q = q;
      cfg.sigma = sigma;
      cfg.sensitivity = sensitivity;
      cfg.p = ps[pi];
      cfg.tau = taus[ti];
      cfg.eta = 1.0;  // tau is specified in units of eta
      cfg.T = spec.T;
      cfg.delta = spec.delta;
      const RdpCurve curve = rdp_curve(cfg);
      for (int i = 1; i <= checkpoints; ++i) {
        const long t = spec.T * i / checkpoints;
        const PrivacySpend spend = compose_to_dp(curve, t, spec.delta);
        eps[ti][pi].push_back(spend.epsilon);
        Fig4Cell cell{taus[ti], ps[pi], t, spend.epsilon, spec.delta,
                      spend.argmin_alpha};
        panel.curve.push_back(cell);
        if (t == spec.T && taus[ti] > 0.0) panel.endpoints.push_back(cell);
      }
    }
  }
  // Amplification ordering at every checkpoint:
  // eps(p=100) <= eps(p=25) <= eps(p=1, tau) <= eps(baseline).
  const double slack = 1e-9;
  for (std::size_t ti = 1; ti < taus.size(); ++ti) {
    for (int i = 0; i < checkpoints; ++i) {
      if (eps[ti][2][i] > eps[ti][1][i] + slack ||
          eps[ti][1][i] > eps[ti][0][i] + slack ||
          eps[ti][0][i] > eps[0][0][i] + slack) {
        panel.ordering_ok = false;
      }
    }
  }
  return panel;
}

// MC moment gate for one endpoint config: every order up to the argmin
// alpha must agree with the quadrature within 3 standard errors.
bool oracle_gate(const AccountantConfig& cfg, int alpha_star, long n_samples,
                 std::uint64_t seed) {
  const double w = cfg.halfwidth();
  const MixtureKernel p0{cfg.family, cfg.sigma, 0.0, w};
  const MixtureKernel p1{cfg.family, cfg.sigma, cfg.coordinate_shift(), w};
  std::vector<int> ks;
  for (int k = 2; k <= alpha_star; ++k) ks.push_back(k);
  if (ks.empty()) return true;
  const auto estimates = mc_validate_moments(p0, p1, ks, n_samples, seed);
  for (const MomentEstimate& est : estimates) {
    const double exact = moment_ratio(p0, p1, est.k);
    if (std::fabs(est.estimate - exact) > 3.0 * est.std_error) return false;
  }
  return true;
}

}  // namespace

double sample_kernel(const MixtureKernel& kernel, Rng& rng) {
  kernel.validate();
  double z = kernel.family == NoiseFamily::gaussian
                 ? kernel.scale * rng.normal()
                 : rng.laplace(kernel.scale);
  if (kernel.halfwidth > 0.0) {
    z += rng.uniform(-kernel.halfwidth, kernel.halfwidth);
  }
  return kernel.shift + z;
}

std::vector<MomentEstimate> mc_validate_moments(const MixtureKernel& p0,
                                                const MixtureKernel& p1,
                                                const std::vector<int>& k_list,
                                                long n_samples,
                                                std::uint64_t seed) {
  if (n_samples < 100000) {
    throw ContractError("mc_validate_moments: n_samples >= 1e5");
  }
  Rng rng(seed);
  std::vector<double> sums(k_list.size(), 0.0);
  std::vector<double> sq_sums(k_list.size(), 0.0);
  for (long t = 0; t < n_samples; ++t) {
    const double z = sample_kernel(p0, rng);
    const double llr = log_pdf(p1, z) - log_pdf(p0, z);
    for (std::size_t i = 0; i < k_list.size(); ++i) {
      const double e = std::exp(k_list[i] * llr);
      sums[i] += e;
      sq_sums[i] += e * e;
    }
  }
  std::vector<MomentEstimate> out(k_list.size());
  for (std::size_t i = 0; i < k_list.size(); ++i) {
    const double mean = sums[i] / n_samples;
    const double var =
        std::max(0.0, sq_sums[i] / n_samples - mean * mean);
    out[i] = {k_list[i], mean, std::sqrt(var / n_samples)};
  }
  return out;
}

PointwiseLossStats mc_pointwise_loss(const MixtureKernel& p0,
                                     const MixtureKernel& p1, long n_samples,
                                     std::uint64_t seed) {
  if (n_samples < 100000) {
    throw ContractError("mc_pointwise_loss: n_samples >= 1e5");
  }
  Rng rng(seed);
  std::vector<double> losses(n_samples);
  double sum = 0.0, sq = 0.0;
  for (long t = 0; t < n_samples; ++t) {
    const double z = sample_kernel(p0, rng);
    const double eps = log_pdf(p0, z) - log_pdf(p1, z);
    losses[t] = eps;
    sum += eps;
    sq += eps * eps;
  }
  PointwiseLossStats stats;
  stats.mean = sum / n_samples;
  stats.variance = std::max(0.0, sq / n_samples - stats.mean * stats.mean);
  std::sort(losses.begin(), losses.end());
  auto quantile = [&](double f) {
    return losses[static_cast<std::size_t>(f * (n_samples - 1))];
  };
  stats.q50 = quantile(0.5);
  stats.q90 = quantile(0.9);
  stats.q99 = quantile(0.99);
  return stats;
}

std::string content_hash(const std::string& payload) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : payload) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json make_envelope(const nlohmann::json& spec,
                             const std::string& input_payload,
                             const nlohmann::json& results,
                             std::uint64_t seed) {
  return nlohmann::json{{"spec", spec},
                        {"input_hash", content_hash(input_payload)},
                        {"results", results},
                        {"seed", seed}};
}

Fig4Result run_fig4(const Fig4Spec& spec) {
  if (spec.n < 1 || !(spec.q > 0.0) || spec.T < 1) {
    throw ContractError("run_fig4: invalid panel parameters");
  }
  Fig4Result result;
  result.sensitivity = spec.c / (static_cast<double>(spec.n) * spec.q);

  AccountantConfig baseline;
  baseline.q = spec.q;
  baseline.sensitivity = result.sensitivity;
  baseline.p = 1;
  baseline.tau = 0.0;
  baseline.eta = 1.0;
  baseline.T = spec.T;
  baseline.delta = spec.delta;
  result.sigma = calibrate_sigma(spec.target_baseline_eps, baseline);

  PanelResult panel = run_panel(spec, spec.q, result.sigma);
  result.endpoints = panel.endpoints;
  result.curve = panel.curve;
  result.ordering_ok = panel.ordering_ok;

  if (spec.oracle_samples > 0) {
    result.oracle_ok = true;
    std::uint64_t stream = 0;
    for (const Fig4Cell& cell : result.endpoints) {
      AccountantConfig cfg = baseline;
      cfg.sigma = result.sigma;
      cfg.tau = cell.tau_over_eta;
      cfg.p = cell.p;
      if (!oracle_gate(cfg, cell.alpha_star, spec.oracle_samples,
                       spec.seed + 977 * ++stream)) {
        result.oracle_ok = false;
      }
    }
  }

  if (!spec.output_csv.empty()) write_fig4_csv(spec.output_csv, result.curve);
  if (!spec.output_csv_q004.empty()) {
    AccountantConfig alt = baseline;
    alt.q = 0.04;
    alt.sensitivity = spec.c / (static_cast<double>(spec.n) * 0.04);
    const double sigma_alt =
        calibrate_sigma(spec.target_baseline_eps, alt);
    const PanelResult alt_panel = run_panel(spec, 0.04, sigma_alt);
    write_fig4_csv(spec.output_csv_q004, alt_panel.curve);
  }
  return result;
}

ConvergenceResult run_convergence(const ConvergenceSpec& spec) {
  if (spec.horizons.empty()) throw ContractError("run_convergence: horizons");
  const Problem problem = make_least_squares(spec.n, spec.d, spec.seed);
  const std::vector<double>& w_star = *problem.optimum;
  const double loss_star = problem.loss(w_star);

  auto max_per_sample_norm = [&](const std::vector<double>& w) {
    double m = 0.0;
    for (long i = 0; i < problem.n; ++i) {
      m = std::max(m, l2_norm(problem.per_sample_grad(w, i)));
    }
    return m;
  };
  auto dist_to_opt = [&](const std::vector<double>& w) {
    double s = 0.0;
    for (int j = 0; j < problem.d; ++j) {
      const double diff = w[j] - w_star[j];
      s += diff * diff;
    }
    return std::sqrt(s);
  };

  ConvergenceResult result;
  std::vector<double> log_t, log_gap;
  for (long T : spec.horizons) {
    const double eta =
        spec.gamma / (static_cast<double>(spec.n) * std::sqrt(double(T)));
    MixConfig cfg;
    cfg.eta = eta;
    cfg.clip = {1e12, 1};  // threshold above every per-sample norm
    cfg.tau_schedule = TauSchedule::constant(spec.tau_factor * eta);
    cfg.q = 1.0;
    cfg.sigma = spec.sigma;
    cfg.T = T;
    cfg.seed = spec.seed;
    cfg.aggregation = Aggregation::sum;

    std::ofstream traj;
    std::ostream* traj_out = nullptr;
    if (!spec.trajectory_path.empty() && T == spec.horizons.back()) {
      traj.open(spec.trajectory_path);
      if (!traj) throw ContractError("cannot open " + spec.trajectory_path);
      traj_out = &traj;
    }
    const RunResult run = train(problem, cfg, Variant::modelmix, nullptr,
                                traj_out);
    const double gap =
        std::max(problem.loss(run.average_iterate) - loss_star, 1e-300);
    result.gaps.push_back(gap);
    log_t.push_back(std::log(double(T)));
    log_gap.push_back(std::log(gap));

    Thm31Params params;
    params.w0 = std::max(dist_to_opt(std::vector<double>(problem.d, 0.0)),
                         dist_to_opt(run.final_state.w_curr));
    params.lipschitz = std::max(
        {max_per_sample_norm(std::vector<double>(problem.d, 0.0)),
         max_per_sample_norm(run.average_iterate),
         max_per_sample_norm(run.final_state.w_curr)});
    params.beta = *problem.beta;
    params.gamma = spec.gamma;
    params.q = 1.0;
    params.n = spec.n;
    params.T = T;
    params.d = spec.d;
    params.tau_sq_sum = cfg.tau_schedule.sum_sq(T);
    result.bounds.push_back(thm31_bound(params));
  }

  // Least-squares fit of log gap against log T.
  const std::size_t m = log_t.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += log_t[i];
    my += log_gap[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (log_t[i] - mx) * (log_t[i] - mx);
    sxy += (log_t[i] - mx) * (log_gap[i] - my);
  }
  result.slope = sxx > 0.0 ? sxy / sxx : 0.0;

  // Head-to-head on the longest horizon at a shared noise level.
  {
    const long T = spec.horizons.back();
    const double eta =
        spec.gamma / (static_cast<double>(spec.n) * std::sqrt(double(T)));
    MixConfig cfg;
    cfg.eta = eta;
    cfg.clip = {1e12, 1};
    cfg.tau_schedule = TauSchedule::constant(spec.tau_factor * eta);
    cfg.q = 1.0;
    cfg.sigma = spec.sigma;
    cfg.T = std::min<long>(T, 2000);  // comparison runs kept short
    cfg.seed = spec.seed;
    cfg.aggregation = Aggregation::sum;
    result.final_loss_modelmix =
        train(problem, cfg, Variant::modelmix).trajectory.back().loss;
    result.final_loss_dpsgd =
        train(problem, cfg, Variant::dpsgd).trajectory.back().loss;
    result.final_loss_sgd =
        train(problem, cfg, Variant::sgd).trajectory.back().loss;
    result.final_loss_strawman =
        train(problem, cfg, Variant::strawman).trajectory.back().loss;
  }
  return result;
}

Example31Report run_example31() {
  const Problem problem = example_31();
  Example31Report report;
  report.expected_clip_at_opt =
      expected_clipped_gradient(problem, {20.0}, 1.0)[0];
  report.expected_clip_at_zero =
      expected_clipped_gradient(problem, {0.0}, 1.0)[0];
  // Exact per-sample gradient std: RMS deviation from the mean gradient.
  {
    const std::vector<double> g = problem.full_grad({0.0});
    double sq = 0.0;
    for (long i = 0; i < problem.n; ++i) {
      const double dev = problem.per_sample_grad({0.0}, i)[0] - g[0];
      sq += dev * dev;
    }
    report.grad_std = std::sqrt(sq / problem.n);
  }
  // Expected-update recursion w <- w - eta * E[clip(grad, c)] from w0 = 0.
  double w = 0.0;
  for (int step = 0; step < 100; ++step) {
    w -= 0.1 * expected_clipped_gradient(problem, {w}, 1.0)[0];
  }
  report.final_w_small_c = w;
  w = 0.0;
  for (int step = 0; step < 400; ++step) {
    w -= 0.1 * expected_clipped_gradient(problem, {w}, 200.0)[0];
  }
  report.final_w_large_c = w;
  return report;
}

}  // namespace modelmix
