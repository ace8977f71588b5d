#pragma once

#include <vector>

#include "modelmix/dist_kernel.hpp"

#include "json.hpp"

namespace modelmix {

// Default integer Renyi order grid: dense up to 64, then sparse high orders.
std::vector<int> default_alpha_grid();

// Full description of one subsampled ModelMix mechanism, in "sum
// aggregation" units: sensitivity is the shift contributed by the differing
// element's clipped gradient and sigma the noise std on the aggregate.
// Callers running mean aggregation rescale before building the config.
struct AccountantConfig {
  double q = 1.0;            // Poisson sampling rate, (0, 1]
  double sigma = 1.0;        // noise scale (std for Gaussian, scale for Laplace)
  double sensitivity = 1.0;  // l2 (Gaussian) or l1 (Laplace) shift bound
  int p = 1;                 // l-inf truncation parameter, 1 = plain l2 clip
  double tau = 0.0;          // mixing threshold
  double eta = 1.0;          // step size; uniform halfwidth is tau/(2*eta)
  long T = 1;                // iterations
  double delta = 1e-5;       // target delta
  NoiseFamily family = NoiseFamily::gaussian;
  std::vector<int> alpha_grid = default_alpha_grid();

  double halfwidth() const { return tau / (2.0 * eta); }
  // Shift of the per-coordinate worst case: sensitivity/sqrt(p) for the
  // Gaussian l2 budget, sensitivity/p for the Laplace l1 budget.
  double coordinate_shift() const;
  void validate() const;
};

struct RdpPoint {
  int alpha;
  double eps_alpha;  // per-step Renyi loss, nats
};

struct RdpCurve {
  std::vector<RdpPoint> entries;
};

struct PrivacySpend {
  double epsilon = 0.0;
  double delta = 0.0;
  int argmin_alpha = 0;
};

// log E_{z ~ P0}[(pdf(P1, z) / pdf(P0, z))^k] by adaptive quadrature in the
// log domain. Requires P0 and P1 to share family, scale and halfwidth.
// Throws NumericalError if the quadrature error estimate exceeds 1e-10
// relative.
double log_moment_ratio(const MixtureKernel& p0, const MixtureKernel& p1,
                        int k);

// exp(log_moment_ratio); overflows to +inf for very large moments, use the
// log form in composition arithmetic.
double moment_ratio(const MixtureKernel& p0, const MixtureKernel& p1, int k);

// Per-step divergence D_alpha((1-q) P0 + q P1 || P0) of the subsampled
// mechanism, via the binomial moment expansion with each inner moment raised
// to the p-th power. Integer alpha >= 2.
double rdp_step(const AccountantConfig& config, int alpha);

RdpCurve rdp_curve(const AccountantConfig& config);

// min over curve entries of T * eps_alpha + log(1/delta) / (alpha - 1).
PrivacySpend compose_to_dp(const RdpCurve& curve, long T, double delta);

// Convenience: curve + composition for the config's own T and delta.
PrivacySpend account(const AccountantConfig& config);

// sqrt(2 T log(1/delta_tilde)) * eps + T * eps * (e^eps - 1). The caller
// tracks the T*delta + delta_tilde growth of the additive slack separately.
double advanced_composition(double eps, long T, double delta_tilde);

// Bisect sigma in [1e-4, 1e4] * sensitivity until the accounted epsilon is
// within 0.1% of target_eps. Throws NumericalError when the target is not
// bracketed.
double calibrate_sigma(double target_eps, AccountantConfig config);

struct AsymptoticEstimate {
  double epsilon = 0.0;
  double delta = 0.0;
  double linear_term = 0.0;  // first (composition) term of epsilon
  double sqrt_term = 0.0;    // second (concentration) term of epsilon
};

// Order-of-magnitude bound evaluation with all suppressed constants set to 1
// and polylog factors dropped; for trend plots only, not comparable to the
// exact accountant. n is the dataset size, delta_tilde the free slack.
AsymptoticEstimate asymptotic_epsilon(const AccountantConfig& config, long n,
                                      double delta_tilde);

// D_alpha when the differing element's shift is spread over several
// coordinates. masses are nonnegative and sum to sensitivity^2; coordinate
// j gets shift sqrt(mass_j) (Gaussian) or mass_j/sensitivity (Laplace, so
// the l1 budget is preserved). Testing aid for the one-hot reduction.
double worst_case_split_divergence(const AccountantConfig& config,
                                   const std::vector<double>& masses,
                                   int alpha);

// JSON record {config, curve:[{alpha,eps}], spend:{eps,delta,alpha}}.
nlohmann::json to_json(const AccountantConfig& config);
AccountantConfig accountant_config_from_json(const nlohmann::json& j);
nlohmann::json account_record(const AccountantConfig& config,
                              const RdpCurve& curve, const PrivacySpend& spend);

}  // namespace modelmix
