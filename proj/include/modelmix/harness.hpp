#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modelmix/accountant.hpp"
#include "modelmix/optimizer.hpp"

#include "json.hpp"

namespace modelmix {

// Draw one observation from the kernel law: base noise plus the centered
// uniform.
double sample_kernel(const MixtureKernel& kernel, Rng& rng);

struct MomentEstimate {
  int k = 0;
  double estimate = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo oracle for the quadrature moments: samples z ~ P0 directly
// and averages exp(k * (log_pdf(P1, z) - log_pdf(P0, z))). One sample set
// is shared across all k.
std::vector<MomentEstimate> mc_validate_moments(const MixtureKernel& p0,
                                                const MixtureKernel& p1,
                                                const std::vector<int>& k_list,
                                                long n_samples,
                                                std::uint64_t seed);

struct PointwiseLossStats {
  double mean = 0.0;
  double variance = 0.0;
  double q50 = 0.0;
  double q90 = 0.0;
  double q99 = 0.0;
};

// Empirical moments and tail quantiles of the pointwise loss
// log(pdf(P0,z)/pdf(P1,z)) under z ~ P0.
PointwiseLossStats mc_pointwise_loss(const MixtureKernel& p0,
                                     const MixtureKernel& p1, long n_samples,
                                     std::uint64_t seed);

// FNV-1a 64-bit content hash, hex string; used to stamp result envelopes.
std::string content_hash(const std::string& payload);

// Common result envelope {spec, input_hash, results, seed}; no timestamps
// so reruns are byte-identical.
nlohmann::json make_envelope(const nlohmann::json& spec,
                             const std::string& input_payload,
                             const nlohmann::json& results,
                             std::uint64_t seed);

struct Fig4Cell {
  double tau_over_eta = 0.0;
  int p = 1;
  long T = 0;
  double epsilon = 0.0;
  double delta = 0.0;
  int alpha_star = 0;
};

struct Fig4Spec {
  long n = 50000;
  double delta = 1e-5;
  double c = 20.0;
  double q = 0.02;
  long T = 5000;
  double target_baseline_eps = 200.0;
  std::string output_csv;           // endpoint + curve CSV; empty = no file
  std::string output_csv_q004;      // optional second grid at q = 0.04
  long oracle_samples = 10000000;
  std::uint64_t seed = 20260824;
};

struct Fig4Result {
  double sigma = 0.0;               // calibrated baseline noise
  double sensitivity = 0.0;         // c / (n q), mean-aggregation units
  std::vector<Fig4Cell> endpoints;  // 9 cells, tau x p grid, T = spec.T
  std::vector<Fig4Cell> curve;      // 50 checkpoints per grid cell
  bool ordering_ok = false;         // eps(p=100) <= eps(p=25) <= eps(p=1)
  bool oracle_ok = false;           // MC moment gate on the endpoint configs
};

Fig4Result run_fig4(const Fig4Spec& spec);

struct ConvergenceSpec {
  long n = 1000;
  int d = 20;
  double gamma = 2.0;
  double tau_factor = 0.05;  // tau = tau_factor * eta
  std::vector<long> horizons{100, 1000, 10000};
  double sigma = 0.0;
  std::uint64_t seed = 42;
  std::string trajectory_path;  // optional ndjson output for the longest run
};

struct ConvergenceResult {
  // One entry per horizon: loss gap of the averaged iterate and the
  // explicit convex bound evaluated with measured quantities.
  std::vector<double> gaps;
  std::vector<double> bounds;
  double slope = 0.0;  // log-log fit of gap vs T
  // Head-to-head final losses on the longest horizon at shared noise.
  double final_loss_sgd = 0.0;
  double final_loss_dpsgd = 0.0;
  double final_loss_modelmix = 0.0;
  double final_loss_strawman = 0.0;
};

ConvergenceResult run_convergence(const ConvergenceSpec& spec);

struct Example31Report {
  double expected_clip_at_opt = 0.0;   // w = 20, c = 1
  double expected_clip_at_zero = 0.0;  // w = 0, c = 1
  double grad_std = 0.0;
  double final_w_small_c = 0.0;  // c = 1, 100 expected-update steps
  double final_w_large_c = 0.0;  // c = 200, run to convergence
};

Example31Report run_example31();

}  // namespace modelmix
