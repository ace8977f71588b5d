#include "modelmix/dist_kernel.hpp"

#include <cmath>

#include "modelmix/errors.hpp"

namespace modelmix {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kSqrt2 = 1.4142135623730950488;

// Mills ratio Q(x)/phi(x) via the Stieltjes continued fraction
// 1/(x + 1/(x + 2/(x + 3/(...)))), evaluated backward. Accurate to machine
// precision for x >= 5.
double mills_ratio(double x) {
  double f = x + 64.0;
  for (int n = 63; n >= 1; --n) f = x + n / f;
  return 1.0 / f;
}

double log_phi(double x) { return -0.5 * x * x - 0.5 * kLog2Pi; }

// log of F(x2) - F(x1) for the standard normal CDF F, x1 < x2, stable when
// both endpoints sit in the same far tail or when the interval is narrow.
double log_cdf_diff(double x1, double x2) {
  const double mid = 0.5 * (x1 + x2);
  const double h = 0.5 * (x2 - x1);
  if (h * (1.0 + std::fabs(mid)) < 0.05) {
    // Narrow interval: expand the integral of phi around the midpoint.
    const double m2 = mid * mid;
    const double s = 1.0 + (m2 - 1.0) * h * h / 6.0 +
                     (m2 * m2 / 24.0 - m2 / 4.0 + 0.125) * h * h * h * h / 5.0;
    return std::log(2.0 * h * s) + log_phi(mid);
  }
  if (x1 >= 5.0) {
    const double la = log_norm_sf(x1);
    const double lb = log_norm_sf(x2);
    return la + std::log1p(-std::exp(lb - la));
  }
  if (x2 <= -5.0) {
    return log_cdf_diff(-x2, -x1);
  }
  // Both endpoints within reach of erfc in linear space.
  const double v =
      0.5 * (std::erfc(x1 / kSqrt2) - std::erfc(x2 / kSqrt2));
  return std::log(v);
}

double log_pdf_gaussian(const MixtureKernel& k, double o) {
  const double t = std::fabs(o - k.shift);  // symmetric about shift
  if (k.halfwidth == 0.0) {
    const double z = t / k.scale;
    return log_phi(z) - std::log(k.scale);
  }
  const double x1 = (t - k.halfwidth) / k.scale;
  const double x2 = (t + k.halfwidth) / k.scale;
  return log_cdf_diff(x1, x2) - std::log(2.0 * k.halfwidth);
}

double log_pdf_laplace(const MixtureKernel& k, double o) {
  const double rate = 1.0 / k.scale;
  const double t = std::fabs(o - k.shift);
  if (k.halfwidth == 0.0) {
    return -rate * t + std::log(0.5 * rate);
  }
  const double span = 2.0 * k.halfwidth;
  if (t >= k.halfwidth) {
    // Outside the uniform support: exponential tail times a constant factor.
    return -rate * (t - k.halfwidth) + std::log1p(-std::exp(-rate * span)) -
           std::log(2.0 * span);
  }
  // Inside: 2 - e^{-rate*u} - e^{-rate*(span-u)} over 2*span, with
  // u = t + halfwidth measured from the left edge.
  const double u = t + k.halfwidth;
  const double core = -std::expm1(-rate * u) - std::expm1(-rate * (span - u));
  return std::log(core) - std::log(2.0 * span);
}

}  // namespace

std::string to_string(NoiseFamily family) {
  return family == NoiseFamily::gaussian ? "gaussian" : "laplace";
}

NoiseFamily noise_family_from_string(const std::string& name) {
  if (name == "gaussian") return NoiseFamily::gaussian;
  if (name == "laplace") return NoiseFamily::laplace;
  throw ContractError("unknown noise family: " + name);
}

void MixtureKernel::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw ContractError("kernel scale must be positive and finite");
  }
  if (!(halfwidth >= 0.0) || !std::isfinite(halfwidth)) {
    throw ContractError("kernel halfwidth must be nonnegative and finite");
  }
  if (!std::isfinite(shift)) {
    throw ContractError("kernel shift must be finite");
  }
}

double log_norm_sf(double x) {
  if (x < -5.0) {
    return std::log1p(-std::exp(log_norm_sf(-x)));
  }
  if (x <= 5.0) {
    return std::log(0.5 * std::erfc(x / kSqrt2));
  }
  return log_phi(x) + std::log(mills_ratio(x));
}

double log_pdf(const MixtureKernel& kernel, double o) {
  kernel.validate();
  return kernel.family == NoiseFamily::gaussian ? log_pdf_gaussian(kernel, o)
                                                : log_pdf_laplace(kernel, o);
}

double pdf(const MixtureKernel& kernel, double o) {
  kernel.validate();
  if (!std::isfinite(o)) {
    throw ContractError("pdf: argument must be finite");
  }
  if (kernel.halfwidth == 0.0) {
    const double t = std::fabs(o - kernel.shift) / kernel.scale;
    if (kernel.family == NoiseFamily::gaussian) {
      return std::exp(log_phi(t)) / kernel.scale;
    }
    return 0.5 / kernel.scale * std::exp(-t);
  }
  if (kernel.family == NoiseFamily::gaussian) {
    const double t = std::fabs(o - kernel.shift);
    const double x1 = (t - kernel.halfwidth) / kernel.scale;
    const double x2 = (t + kernel.halfwidth) / kernel.scale;
    if (x1 <= 8.0 && (x2 - x1) * (1.0 + 0.5 * std::fabs(x1 + x2)) >= 0.05) {
      const double v = 0.5 * (std::erfc(x1 / kSqrt2) - std::erfc(x2 / kSqrt2));
      return v / (2.0 * kernel.halfwidth);
    }
  }
  return std::exp(log_pdf(kernel, o));
}

std::pair<double, double> support_window(const MixtureKernel& kernel,
                                         double mass_tol) {
  kernel.validate();
  if (!(mass_tol > 0.0) || !(mass_tol < 1.0)) {
    throw ContractError("support_window: mass_tol must be in (0, 1)");
  }
  double tail;
  if (kernel.family == NoiseFamily::gaussian) {
    // Smallest z with P(Z > z) <= mass_tol / 2; bisection on the log tail.
    const double target = std::log(0.5 * mass_tol);
    double lo = 0.0, hi = 45.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (log_norm_sf(mid) > target ? lo : hi) = mid;
    }
    tail = kernel.scale * hi;
  } else {
    tail = kernel.scale * std::log(1.0 / mass_tol);
  }
  const double half = kernel.halfwidth + tail;
  return {kernel.shift - half, kernel.shift + half};
}

}  // namespace modelmix
