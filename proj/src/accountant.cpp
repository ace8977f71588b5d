#include "modelmix/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "modelmix/errors.hpp"
#include "modelmix/quadrature.hpp"

namespace modelmix {
namespace {

constexpr double kMomentRelTol = 1e-10;

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double log_sum_exp(const std::vector<double>& terms) {
  double m = -std::numeric_limits<double>::infinity();
  for (double t : terms) m = std::max(m, t);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - m);
  return m + std::log(acc);
}

// Divergence of the subsampled mechanism from precomputed per-coordinate
// log-moments (log_moments[k] = log A_k before the p-power).
double divergence_from_log_moments(const std::vector<double>& log_moments,
                                   int alpha, double q, int p) {
  if (q == 0.0) return 0.0;
  std::vector<double> terms;
  terms.reserve(alpha + 1);
  const double log_q = std::log(q);
  const double log_1mq = q < 1.0 ? std::log1p(-q)
                                 : -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= alpha; ++k) {
    if (q == 1.0 && k < alpha) continue;
    const double moment = k <= 1 ? 0.0 : p * log_moments[k];
    const double survival = k == alpha ? 0.0 : (alpha - k) * log_1mq;
    terms.push_back(log_binomial(alpha, k) + survival + k * log_q + moment);
  }
  return std::max(0.0, log_sum_exp(terms) / (alpha - 1));
}

std::vector<double> moment_table(const MixtureKernel& p0,
                                 const MixtureKernel& p1, int max_k) {
  std::vector<double> table(max_k + 1, 0.0);
  for (int k = 2; k <= max_k; ++k) {
    table[k] = log_moment_ratio(p0, p1, k);
  }
  return table;
}

}  // namespace

std::vector<int> default_alpha_grid() {
  std::vector<int> grid;
  for (int a = 2; a <= 64; ++a) grid.push_back(a);
  grid.insert(grid.end(), {96, 128, 192, 256});
  return grid;
}

double AccountantConfig::coordinate_shift() const {
  return family == NoiseFamily::gaussian ? sensitivity / std::sqrt(double(p))
                                         : sensitivity / double(p);
}

void AccountantConfig::validate() const {
  if (!(q >= 0.0) || q > 1.0) throw ContractError("q must be in [0, 1]");
  if (!(sigma > 0.0)) throw ContractError("sigma must be positive");
  if (!(sensitivity > 0.0)) throw ContractError("sensitivity must be positive");
  if (p < 1) throw ContractError("p must be a positive integer");
  if (!(tau >= 0.0)) throw ContractError("tau must be nonnegative");
  if (!(eta > 0.0)) throw ContractError("eta must be positive");
  if (T < 0) throw ContractError("T must be nonnegative");
  if (!(delta > 0.0) || !(delta < 1.0)) throw ContractError("delta must be in (0, 1)");
  if (alpha_grid.empty()) throw ContractError("alpha grid must be nonempty");
  for (int a : alpha_grid) {
    if (a < 2) throw ContractError("alpha grid entries must be integers >= 2");
  }
}

double log_moment_ratio(const MixtureKernel& p0, const MixtureKernel& p1,
                        int k) {
  p0.validate();
  p1.validate();
  if (k < 0) throw ContractError("moment order k must be nonnegative");
  if (p0.family != p1.family || p0.scale != p1.scale ||
      p0.halfwidth != p1.halfwidth) {
    throw ContractError(
        "moment kernels must share family, scale and halfwidth");
  }
  if (k <= 1) return 0.0;  // A_0 = A_1 = 1 by normalization
  if (p1.shift < p0.shift) {
    MixtureKernel m0 = p0, m1 = p1;  // mirror, the moment is shift-symmetric
    m0.shift = -p0.shift;
    m1.shift = -p1.shift;
    return log_moment_ratio(m0, m1, k);
  }

  const double dc = p1.shift - p0.shift;
  const double w = p0.halfwidth;

  if (p0.family == NoiseFamily::gaussian && w == 0.0) {
    // Pure Gaussian: the log-integrand minus its maximum collapses to
    // -(y - k dc)^2 / (2 sigma^2) with y = z - shift, which stays
    // well-conditioned even when dc >> sigma (the generic path loses the
    // 1e-10 certificate there to cancellation in exponents of size
    // (dc/sigma)^2). The integral itself is still evaluated adaptively.
    const double sigma = p0.scale;
    const double center = p0.shift + k * dc;
    auto f = [&](double z) {
      const double u = (z - center) / sigma;
      return std::exp(-0.5 * u * u);
    };
    const double lo0 = center - 40.0 * sigma;
    const double hi0 = center + 40.0 * sigma;
    const QuadResult r = integrate_with_breakpoints(
        f,
        {lo0, center - 10.0 * sigma, center - sigma, center,
         center + sigma, center + 10.0 * sigma, hi0},
        1e-12, 0.0, 4000);
    if (!(r.value > 0.0) || r.abs_error > kMomentRelTol * r.value) {
      throw NumericalError("moment quadrature did not converge",
                           r.abs_error / r.value);
    }
    return 0.5 * k * (k - 1.0) * dc * dc / (sigma * sigma) +
           std::log(r.value / (sigma * 2.5066282746310005024));
  }
  // Truncation: for Laplace the log-ratio is globally bounded by dc/scale,
  // so push the window far enough that tail mass * exp(k*dc/scale) vanishes;
  // for Gaussian the integrand is a near-Gaussian bump ending near k*dc.
  double window_tol = 1e-16;
  if (p0.family == NoiseFamily::laplace) {
    window_tol = 1e-14 * std::exp(-std::min(600.0, k * dc / p0.scale));
    window_tol = std::max(window_tol, 1e-290);
  }
  const auto base = support_window(p0, window_tol);
  const double lo = base.first;
  const double hi = std::max(base.second, p0.shift + k * dc + w +
                                              (base.second - p0.shift - w));

  auto log_integrand = [&](double z) {
    const double l0 = log_pdf(p0, z);
    return l0 + k * (log_pdf(p1, z) - l0);
  };

  // Locate the maximum so the exponentials can be shifted. The coarse scan
  // can miss the peak entirely when scale << shift (the integrand is a bump
  // of width ~scale near k*dc), so the analytic W=0 peak location is added
  // as a candidate and both are refined locally by golden-section search.
  auto refine = [&](double a, double b) {
    a = std::max(a, lo);
    b = std::min(b, hi);
    for (int it = 0; it < 120 && b - a > 0.0; ++it) {
      const double m1 = a + (b - a) / 3.0;
      const double m2 = b - (b - a) / 3.0;
      if (log_integrand(m1) < log_integrand(m2)) a = m1;
      else b = m2;
    }
    return 0.5 * (a + b);
  };
  const int scan_points = 1500;
  const double spacing = (hi - lo) / scan_points;
  double scan_best = lo;
  double scan_best_val = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= scan_points; ++i) {
    const double z = lo + spacing * i;
    const double v = log_integrand(z);
    if (v > scan_best_val) {
      scan_best_val = v;
      scan_best = z;
    }
  }
  double peak_z = refine(scan_best - spacing, scan_best + spacing);
  double peak = log_integrand(peak_z);
  const double analytic = p0.shift + k * dc;
  const double bump = w + 4.0 * p0.scale;
  const double alt_z = refine(analytic - bump, analytic + bump);
  const double alt = log_integrand(alt_z);
  if (alt > peak) {
    peak = alt;
    peak_z = alt_z;
  }

  std::vector<double> breakpoints = {lo, hi};
  for (double seam :
       {p0.shift - w, p0.shift + w, p1.shift - w, p1.shift + w, analytic,
        // Bracket the bump so no initial panel can straddle and miss it.
        peak_z, peak_z - w - 10.0 * p0.scale, peak_z + w + 10.0 * p0.scale,
        peak_z - p0.scale, peak_z + p0.scale}) {
    if (seam > lo && seam < hi) breakpoints.push_back(seam);
  }
  const double shift = peak;
  auto f = [&](double z) { return std::exp(log_integrand(z) - shift); };
  const QuadResult r =
      integrate_with_breakpoints(f, breakpoints, 1e-12, 0.0, 4000);
  if (!(r.value > 0.0) || r.abs_error > kMomentRelTol * r.value) {
    throw NumericalError("moment quadrature did not converge",
                         r.value > 0.0 ? r.abs_error / r.value
                                       : std::numeric_limits<double>::infinity());
  }
  return shift + std::log(r.value);
}

double moment_ratio(const MixtureKernel& p0, const MixtureKernel& p1, int k) {
  return std::exp(log_moment_ratio(p0, p1, k));
}

double rdp_step(const AccountantConfig& config, int alpha) {
  config.validate();
  if (alpha < 2) throw ContractError("rdp_step: alpha must be an integer >= 2");
  if (config.q == 0.0) return 0.0;
  const double w = config.halfwidth();
  const MixtureKernel p0{config.family, config.sigma, 0.0, w};
  const MixtureKernel p1{config.family, config.sigma,
                         config.coordinate_shift(), w};
  return divergence_from_log_moments(moment_table(p0, p1, alpha), alpha,
                                     config.q, config.p);
}

RdpCurve rdp_curve(const AccountantConfig& config) {
  config.validate();
  std::vector<int> alphas = config.alpha_grid;
  std::sort(alphas.begin(), alphas.end());
  RdpCurve curve;
  if (config.q == 0.0) {
    for (int a : alphas) curve.entries.push_back({a, 0.0});
    return curve;
  }
  const double w = config.halfwidth();
  const MixtureKernel p0{config.family, config.sigma, 0.0, w};
  const MixtureKernel p1{config.family, config.sigma,
                         config.coordinate_shift(), w};
  const auto moments = moment_table(p0, p1, alphas.back());
  for (int a : alphas) {
    curve.entries.push_back(
        {a, divergence_from_log_moments(moments, a, config.q, config.p)});
  }
  return curve;
}

PrivacySpend compose_to_dp(const RdpCurve& curve, long T, double delta) {
  if (curve.entries.empty()) throw ContractError("compose_to_dp: empty curve");
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw ContractError("compose_to_dp: delta must be in (0, 1)");
  }
  if (T < 0) throw ContractError("compose_to_dp: T must be nonnegative");
  PrivacySpend best{std::numeric_limits<double>::infinity(), delta, 0};
  const double log_inv_delta = std::log(1.0 / delta);
  for (const RdpPoint& pt : curve.entries) {
    const double eps = T * pt.eps_alpha + log_inv_delta / (pt.alpha - 1);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.argmin_alpha = pt.alpha;
    }
  }
  return best;
}

PrivacySpend account(const AccountantConfig& config) {
  return compose_to_dp(rdp_curve(config), config.T, config.delta);
}

double advanced_composition(double eps, long T, double delta_tilde) {
  if (!(eps > 0.0)) throw ContractError("advanced_composition: eps must be positive");
  if (T < 1) throw ContractError("advanced_composition: T must be >= 1");
  if (!(delta_tilde > 0.0) || !(delta_tilde < 1.0)) {
    throw ContractError("advanced_composition: delta_tilde must be in (0, 1)");
  }
  return std::sqrt(2.0 * T * std::log(1.0 / delta_tilde)) * eps +
         T * eps * std::expm1(eps);
}

double calibrate_sigma(double target_eps, AccountantConfig config) {
  if (!(target_eps > 0.0)) {
    throw ContractError("calibrate_sigma: target epsilon must be positive");
  }
  double lo = 1e-4 * config.sensitivity;
  double hi = 1e4 * config.sensitivity;
  auto eps_at = [&](double sigma) {
    config.sigma = sigma;
    return account(config).epsilon;
  };
  const double eps_lo = eps_at(lo);
  const double eps_hi = eps_at(hi);
  if (!(eps_lo >= target_eps && target_eps >= eps_hi)) {
    throw NumericalError("calibrate_sigma: target not reachable in bracket",
                         std::min(std::fabs(eps_lo - target_eps),
                                  std::fabs(eps_hi - target_eps)));
  }
  double f_lo = eps_lo, f_hi = eps_hi;
  for (int i = 0; i < 200; ++i) {
    const double mid = std::sqrt(lo * hi);  // sigma spans decades
    const double f_mid = eps_at(mid);
    if (std::fabs(f_mid - target_eps) <= 1e-3 * target_eps) return mid;
    // Epsilon must stay monotone decreasing in sigma across the bracket.
    if (f_mid > f_lo || f_mid < f_hi) {
      throw NumericalError("calibrate_sigma: epsilon not monotone in sigma",
                           std::fabs(f_mid - target_eps));
    }
    if (f_mid > target_eps) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
      f_hi = f_mid;
    }
  }
  throw NumericalError("calibrate_sigma: bisection did not converge",
                       std::fabs(f_lo - target_eps));
}

AsymptoticEstimate asymptotic_epsilon(const AccountantConfig& config, long n,
                                      double delta_tilde) {
  config.validate();
  if (n < 1) throw ContractError("asymptotic_epsilon: n must be positive");
  const double c = config.sensitivity;
  const double sigma = config.sigma;
  const double tau = config.tau;
  const double eta = config.eta;
  const double T = static_cast<double>(config.T);
  const double nd = static_cast<double>(n);
  AsymptoticEstimate est;
  if (config.family == NoiseFamily::gaussian) {
    est.linear_term = eta * T * (c + sigma) / (tau * nd);
    const double inner = std::pow(c, 4) / (std::pow(nd, 4) * std::pow(sigma, 3)) +
                         c * c / (nd * nd * sigma) + sigma;
    est.sqrt_term =
        std::sqrt(eta * T * std::log(1.0 / delta_tilde) / tau * inner);
    est.delta = T * (c / nd + sigma) / tau + delta_tilde;
  } else {
    const double eps0 = c / sigma;  // single-iteration Laplace loss
    est.linear_term = eta * T * eps0 * std::expm1(eps0) / tau;
    est.sqrt_term =
        eps0 * std::sqrt(eta * T * std::log(1.0 / delta_tilde) / tau);
    est.delta = delta_tilde;
  }
  est.epsilon = est.linear_term + est.sqrt_term;
  return est;
}

double worst_case_split_divergence(const AccountantConfig& config,
                                   const std::vector<double>& masses,
                                   int alpha) {
  config.validate();
  if (alpha < 2) throw ContractError("alpha must be >= 2");
  const double s2 = config.sensitivity * config.sensitivity;
  double total = 0.0;
  for (double m : masses) {
    if (m < 0.0) throw ContractError("split masses must be nonnegative");
    total += m;
  }
  if (std::fabs(total - s2) > 1e-9 * s2) {
    throw ContractError("split masses must sum to sensitivity^2");
  }
  const double w = config.halfwidth();
  const MixtureKernel p0{config.family, config.sigma, 0.0, w};
  // Independence across coordinates: total log-moment is the sum of the
  // per-coordinate log-moments.
  std::vector<double> log_moments(alpha + 1, 0.0);
  for (double m : masses) {
    if (m == 0.0) continue;
    MixtureKernel p1 = p0;
    p1.shift = config.family == NoiseFamily::gaussian
                   ? std::sqrt(m)
                   : m / config.sensitivity;
    for (int k = 2; k <= alpha; ++k) {
      log_moments[k] += log_moment_ratio(p0, p1, k);
    }
  }
  return divergence_from_log_moments(log_moments, alpha, config.q, 1);
}

nlohmann::json to_json(const AccountantConfig& config) {
  return nlohmann::json{{"q", config.q},
                        {"sigma", config.sigma},
                        {"sensitivity", config.sensitivity},
                        {"p", config.p},
                        {"tau", config.tau},
                        {"eta", config.eta},
                        {"T", config.T},
                        {"delta", config.delta},
                        {"family", to_string(config.family)}};
}

AccountantConfig accountant_config_from_json(const nlohmann::json& j) {
  AccountantConfig config;
  config.q = j.at("q").get<double>();
  config.sigma = j.at("sigma").get<double>();
  config.sensitivity = j.at("sensitivity").get<double>();
  config.p = j.at("p").get<int>();
  config.tau = j.at("tau").get<double>();
  config.eta = j.at("eta").get<double>();
  config.T = j.at("T").get<long>();
  config.delta = j.at("delta").get<double>();
  config.family = noise_family_from_string(j.at("family").get<std::string>());
  return config;
}

nlohmann::json account_record(const AccountantConfig& config,
                              const RdpCurve& curve,
                              const PrivacySpend& spend) {
  nlohmann::json curve_json = nlohmann::json::array();
  for (const RdpPoint& pt : curve.entries) {
    curve_json.push_back({{"alpha", pt.alpha}, {"eps", pt.eps_alpha}});
  }
  return nlohmann::json{{"config", to_json(config)},
                        {"curve", curve_json},
                        {"spend",
                         {{"eps", spend.epsilon},
                          {"delta", spend.delta},
                          {"alpha", spend.argmin_alpha}}}};
}

}  // namespace modelmix
