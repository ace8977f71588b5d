#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "modelmix/accountant.hpp"
#include "modelmix/errors.hpp"

using namespace modelmix;

namespace {

// Independent subsampled-Gaussian integer-order RDP built directly from the
// analytic W=0 moments; reference for the tau=0, p=1 reduction.
double reference_subsampled_gaussian(double q, double s, double sigma,
                                     int alpha) {
  std::vector<long double> log_terms;
  for (int k = 0; k <= alpha; ++k) {
    log_terms.push_back(std::lgamma(alpha + 1.0) - std::lgamma(k + 1.0) -
                        std::lgamma(alpha - k + 1.0) + k * std::log(q) +
                        (alpha - k) * std::log1p(-q) +
                        0.5L * k * (k - 1.0L) * s * s / (sigma * sigma));
  }
  const long double top = *std::max_element(log_terms.begin(),
                                            log_terms.end());
  long double acc = 0.0L;
  for (long double lt : log_terms) acc += std::exp(lt - top);
  return (double)((top + std::log(acc)) / (alpha - 1));
}

AccountantConfig small_config() {
  AccountantConfig cfg;
  cfg.q = 0.05;
  cfg.sigma = 0.5;
  cfg.sensitivity = 1.0;
  cfg.p = 1;
  cfg.tau = 0.0;
  cfg.eta = 1.0;
  cfg.T = 100;
  cfg.delta = 1e-5;
  cfg.alpha_grid = {2, 3, 4, 6, 8, 12, 16, 24, 32};
  return cfg;
}

}  // namespace

TEST_CASE("moment normalization: A_0 = A_1 = 1 exactly") {
  const MixtureKernel p0{NoiseFamily::gaussian, 1.0, 0.0, 2.0};
  const MixtureKernel p1{NoiseFamily::gaussian, 1.0, 1.0, 2.0};
  CHECK(log_moment_ratio(p0, p1, 0) == 0.0);
  CHECK(log_moment_ratio(p0, p1, 1) == 0.0);
}

TEST_CASE("halfwidth zero gaussian moments match the closed form") {
  for (double sigma : {0.3, 1.0, 4.0}) {
    for (double c : {0.5, 1.0, 2.0}) {
      const MixtureKernel p0{NoiseFamily::gaussian, sigma, 0.0, 0.0};
      const MixtureKernel p1{NoiseFamily::gaussian, sigma, c, 0.0};
      for (int k : {2, 3, 5, 8, 16}) {
        const double exact = 0.5 * k * (k - 1.0) * c * c / (sigma * sigma);
        CHECK(log_moment_ratio(p0, p1, k) ==
              doctest::Approx(exact).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("mixture moments match 50-digit reference integrals") {
  // Gaussian sigma=1, shift 1, halfwidth 2, k=3.
  const MixtureKernel g0{NoiseFamily::gaussian, 1.0, 0.0, 2.0};
  const MixtureKernel g1{NoiseFamily::gaussian, 1.0, 1.0, 2.0};
  CHECK(moment_ratio(g0, g1, 3) ==
        doctest::Approx(6.6135281344113994313).epsilon(1e-10));
  // Laplace scale=1, shift 0.5, halfwidth 1, k=2 and 3.
  const MixtureKernel l0{NoiseFamily::laplace, 1.0, 0.0, 1.0};
  const MixtureKernel l1{NoiseFamily::laplace, 1.0, 0.5, 1.0};
  CHECK(moment_ratio(l0, l1, 2) ==
        doctest::Approx(1.1383218320944638709).epsilon(1e-10));
  CHECK(moment_ratio(l0, l1, 3) ==
        doctest::Approx(1.4459898663361083125).epsilon(1e-10));
}

TEST_CASE("moment contract checks") {
  const MixtureKernel p0{NoiseFamily::gaussian, 1.0, 0.0, 2.0};
  MixtureKernel p1 = p0;
  p1.shift = 1.0;
  CHECK_THROWS_AS(log_moment_ratio(p0, p1, -1), ContractError);
  p1.scale = 2.0;
  CHECK_THROWS_AS(log_moment_ratio(p0, p1, 2), ContractError);
  p1 = p0;
  p1.family = NoiseFamily::laplace;
  CHECK_THROWS_AS(log_moment_ratio(p0, p1, 2), ContractError);
  p1 = p0;
  p1.halfwidth = 1.0;
  CHECK_THROWS_AS(log_moment_ratio(p0, p1, 2), ContractError);
  // Mirror symmetry: negative shift gives the same moment.
  p1 = p0;
  p1.shift = -1.0;
  MixtureKernel p1pos = p0;
  p1pos.shift = 1.0;
  CHECK(log_moment_ratio(p0, p1, 3) ==
        doctest::Approx(log_moment_ratio(p0, p1pos, 3)).epsilon(1e-12));
}

TEST_CASE("rdp_step: q = 0 gives zero divergence") {
  AccountantConfig cfg = small_config();
  cfg.q = 0.0;
  for (int alpha : {2, 5, 32}) CHECK(rdp_step(cfg, alpha) == 0.0);
}

TEST_CASE("rdp_step: q=1, tau=0, p=1 gaussian closed form") {
  AccountantConfig cfg = small_config();
  cfg.q = 1.0;
  for (int alpha : {2, 3, 8, 16}) {
    const double exact = alpha * cfg.sensitivity * cfg.sensitivity /
                         (2.0 * cfg.sigma * cfg.sigma);
    CHECK(rdp_step(cfg, alpha) == doctest::Approx(exact).epsilon(1e-9));
  }
}

TEST_CASE("rdp_step reduces to the reference subsampled gaussian") {
  AccountantConfig cfg = small_config();
  for (double q : {0.01, 0.05, 0.3}) {
    cfg.q = q;
    for (int alpha : {2, 3, 6, 12, 24}) {
      const double ref = reference_subsampled_gaussian(
          q, cfg.sensitivity, cfg.sigma, alpha);
      CHECK(rdp_step(cfg, alpha) == doctest::Approx(ref).epsilon(1e-9));
    }
  }
}

TEST_CASE("renyi curve is finite and nondecreasing in alpha") {
  for (double tau : {0.0, 0.3}) {
    for (int p : {1, 4}) {
      AccountantConfig cfg = small_config();
      cfg.tau = tau;
      cfg.p = p;
      const RdpCurve curve = rdp_curve(cfg);
      REQUIRE(curve.entries.size() == cfg.alpha_grid.size());
      double prev = 0.0;
      for (const RdpPoint& pt : curve.entries) {
        CHECK(std::isfinite(pt.eps_alpha));
        CHECK(pt.eps_alpha >= prev - 1e-12);
        prev = pt.eps_alpha;
      }
    }
  }
}

TEST_CASE("compose_to_dp formula and edge cases") {
  RdpCurve curve;
  curve.entries = {{2, 0.1}};
  const PrivacySpend spend = compose_to_dp(curve, 10, 1e-5);
  CHECK(spend.epsilon ==
        doctest::Approx(1.0 + std::log(1e5)).epsilon(1e-12));
  CHECK(spend.argmin_alpha == 2);

  // Nondecreasing in T.
  curve.entries = {{2, 0.1}, {8, 0.3}, {64, 1.0}};
  double prev = 0.0;
  for (long T : {0L, 1L, 10L, 100L, 1000L}) {
    const double eps = compose_to_dp(curve, T, 1e-5).epsilon;
    CHECK(eps >= prev);
    prev = eps;
  }
  // T = 0 picks the largest stored order.
  const PrivacySpend at_zero = compose_to_dp(curve, 0, 1e-5);
  CHECK(at_zero.argmin_alpha == 64);
  CHECK(at_zero.epsilon == doctest::Approx(std::log(1e5) / 63.0));

  CHECK_THROWS_AS(compose_to_dp(RdpCurve{}, 1, 1e-5), ContractError);
  CHECK_THROWS_AS(compose_to_dp(curve, 1, 0.0), ContractError);
  CHECK_THROWS_AS(compose_to_dp(curve, -1, 1e-5), ContractError);
}

TEST_CASE("advanced composition formula") {
  CHECK(advanced_composition(0.01, 100, 1e-6) ==
        doctest::Approx(0.53570).epsilon(2e-5));
  const double eps = 0.2, dt = 1e-4;
  CHECK(advanced_composition(eps, 1, dt) ==
        doctest::Approx(std::sqrt(2.0 * std::log(1.0 / dt)) * eps +
                        eps * std::expm1(eps))
            .epsilon(1e-12));
  // Exact formula on random inputs.
  for (int i = 1; i <= 100; ++i) {
    const double e = 0.001 * i;
    const long T = 10 * i;
    const double d = 1e-7 * i;
    const double expect =
        std::sqrt(2.0 * T * std::log(1.0 / d)) * e + T * e * std::expm1(e);
    CHECK(advanced_composition(e, T, d) ==
          doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("rdp composition beats advanced composition") {
  // Gaussian mechanism calibrated so each step is (0.05, 1e-6)-DP via the
  // classical tail bound, composed 5000 times.
  const double step_eps = 0.05, step_delta = 1e-6;
  AccountantConfig cfg = small_config();
  cfg.q = 1.0;
  cfg.T = 5000;
  cfg.delta = 1e-6;
  cfg.sigma = cfg.sensitivity *
              std::sqrt(2.0 * std::log(1.25 / step_delta)) / step_eps;
  cfg.alpha_grid = default_alpha_grid();
  const double rdp_route = account(cfg).epsilon;
  const double ac_route = advanced_composition(step_eps, 5000, 1e-6);
  CHECK(rdp_route < ac_route);
}

TEST_CASE("calibration round trip and monotonicity") {
  AccountantConfig cfg = small_config();
  cfg.q = 0.02;
  cfg.sensitivity = 20.0;  // sum-aggregation units: s = c = 20
  cfg.T = 5000;
  cfg.delta = 1e-5;
  cfg.alpha_grid = default_alpha_grid();
  const double sigma = calibrate_sigma(200.0, cfg);
  cfg.sigma = sigma;
  CHECK(account(cfg).epsilon == doctest::Approx(200.0).epsilon(1e-3));
  // The calibrated noise multiplier for the tau=0 baseline.
  CHECK(sigma / cfg.sensitivity == doctest::Approx(0.46752).epsilon(1e-3));
  cfg.sigma = 2.0 * sigma;
  CHECK(account(cfg).epsilon < 200.0);

  cfg.sigma = 1.0;
  CHECK_THROWS_AS(calibrate_sigma(1e18, cfg), NumericalError);
}

TEST_CASE("amplification monotone in tau and p, modelmix never hurts") {
  const std::vector<double> taus = {0.0, 0.075, 0.15, 0.3};
  const std::vector<int> ps = {1, 25, 100};
  AccountantConfig cfg = small_config();
  cfg.sensitivity = 0.02;
  cfg.sigma = 0.00935;
  cfg.q = 0.02;
  cfg.T = 5000;
  std::vector<std::vector<double>> eps(taus.size(),
                                       std::vector<double>(ps.size()));
  for (std::size_t ti = 0; ti < taus.size(); ++ti) {
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
      cfg.tau = taus[ti];
      cfg.p = ps[pi];
      eps[ti][pi] = account(cfg).epsilon;
    }
  }
  for (std::size_t ti = 0; ti < taus.size(); ++ti) {
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
      if (ti > 0) CHECK(eps[ti][pi] <= eps[ti - 1][pi] * (1.0 + 1e-9));
      if (pi > 0) CHECK(eps[ti][pi] <= eps[ti][pi - 1] * (1.0 + 1e-9));
      if (taus[ti] > 0.0) CHECK(eps[ti][pi] <= eps[0][0] * (1.0 + 1e-9));
    }
  }
}

TEST_CASE("asymptotic estimate scaling shapes") {
  AccountantConfig cfg = small_config();
  cfg.tau = 0.1;
  cfg.T = 1000;
  const AsymptoticEstimate base = asymptotic_epsilon(cfg, 10000, 1e-6);
  AccountantConfig quad_tau = cfg;
  quad_tau.tau = 0.4;
  const AsymptoticEstimate scaled = asymptotic_epsilon(quad_tau, 10000, 1e-6);
  CHECK(scaled.sqrt_term ==
        doctest::Approx(base.sqrt_term / 2.0).epsilon(1e-12));
  AccountantConfig double_T = cfg;
  double_T.T = 2000;
  const AsymptoticEstimate stretched =
      asymptotic_epsilon(double_T, 10000, 1e-6);
  CHECK(stretched.linear_term ==
        doctest::Approx(2.0 * base.linear_term).epsilon(1e-12));

  // Laplace branch shares the 1/sqrt(tau) shape.
  cfg.family = NoiseFamily::laplace;
  const AsymptoticEstimate lap = asymptotic_epsilon(cfg, 10000, 1e-6);
  quad_tau.family = NoiseFamily::laplace;
  const AsymptoticEstimate lap4 = asymptotic_epsilon(quad_tau, 10000, 1e-6);
  CHECK(lap4.sqrt_term == doctest::Approx(lap.sqrt_term / 2.0).epsilon(1e-12));
}

TEST_CASE("asymptotic estimate and exact accountant share the tau trend") {
  AccountantConfig cfg = small_config();
  cfg.sensitivity = 0.02;
  cfg.sigma = 0.00935;
  cfg.q = 0.02;
  cfg.T = 5000;
  double prev_exact = 1e300, prev_est = 1e300;
  for (double tau : {0.075, 0.15, 0.3}) {
    cfg.tau = tau;
    const double exact = account(cfg).epsilon;
    const double est = asymptotic_epsilon(cfg, 50000, 1e-6).epsilon;
    CHECK(exact <= prev_exact);
    CHECK(est <= prev_est);
    prev_exact = exact;
    prev_est = est;
  }
}

TEST_CASE("worst case splits never beat the one-hot shift") {
  for (NoiseFamily family : {NoiseFamily::gaussian, NoiseFamily::laplace}) {
    AccountantConfig cfg = small_config();
    cfg.family = family;
    cfg.tau = 0.4;
    const double s2 = cfg.sensitivity * cfg.sensitivity;
    for (int alpha : {2, 3, 6, 12}) {
      const double one_hot =
          worst_case_split_divergence(cfg, {s2}, alpha);
      // One-hot equals the 1-D accountant path (p = 1).
      AccountantConfig flat = cfg;
      flat.p = 1;
      CHECK(one_hot == doctest::Approx(rdp_step(flat, alpha)).epsilon(1e-10));
      for (const std::vector<double>& split :
           {std::vector<double>{s2 / 2, s2 / 2},
            std::vector<double>{s2 / 3, s2 / 3, s2 / 3},
            std::vector<double>{0.7 * s2, 0.2 * s2, 0.1 * s2},
            std::vector<double>{s2 / 4, s2 / 4, s2 / 4, s2 / 4}}) {
        CHECK(worst_case_split_divergence(cfg, split, alpha) <=
              one_hot * (1.0 + 1e-9) + 1e-12);
      }
    }
  }
  AccountantConfig cfg = small_config();
  CHECK_THROWS_AS(worst_case_split_divergence(cfg, {0.5}, 2), ContractError);
}

TEST_CASE("config validation") {
  AccountantConfig cfg = small_config();
  cfg.q = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = small_config();
  cfg.sigma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = small_config();
  cfg.p = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = small_config();
  cfg.delta = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = small_config();
  cfg.alpha_grid = {1};
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = small_config();
  CHECK_THROWS_AS(rdp_step(cfg, 1), ContractError);
}

TEST_CASE("json record round trip") {
  AccountantConfig cfg = small_config();
  cfg.tau = 0.2;
  cfg.p = 4;
  cfg.family = NoiseFamily::laplace;
  const AccountantConfig back = accountant_config_from_json(to_json(cfg));
  CHECK(back.q == cfg.q);
  CHECK(back.sigma == cfg.sigma);
  CHECK(back.sensitivity == cfg.sensitivity);
  CHECK(back.p == cfg.p);
  CHECK(back.tau == cfg.tau);
  CHECK(back.eta == cfg.eta);
  CHECK(back.T == cfg.T);
  CHECK(back.delta == cfg.delta);
  CHECK(back.family == cfg.family);

  cfg = small_config();
  const RdpCurve curve = rdp_curve(cfg);
  const PrivacySpend spend = compose_to_dp(curve, cfg.T, cfg.delta);
  const nlohmann::json record = account_record(cfg, curve, spend);
  CHECK(record.at("curve").size() == curve.entries.size());
  CHECK(record.at("spend").at("eps").get<double>() == spend.epsilon);
  CHECK(record.at("spend").at("alpha").get<int>() == spend.argmin_alpha);
  CHECK(record.at("config").at("q").get<double>() == cfg.q);
}
