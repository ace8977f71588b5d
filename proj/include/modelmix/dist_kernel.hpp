#pragma once

#include <string>
#include <utility>

namespace modelmix {

enum class NoiseFamily { gaussian, laplace };

std::string to_string(NoiseFamily family);
NoiseFamily noise_family_from_string(const std::string& name);

// One-dimensional mixing-noise law: a Gaussian or Laplace base distribution
// convolved with a centered uniform of the given half-width. The accountant
// integrates likelihood ratios of two such kernels.
//
// scale is the Gaussian std deviation or the Laplace scale (1/rate), shift
// the mean offset, halfwidth the uniform half-width (0 = pure base noise).
struct MixtureKernel {
  NoiseFamily family = NoiseFamily::gaussian;
  double scale = 1.0;
  double shift = 0.0;
  double halfwidth = 0.0;

  // Throws ContractError on scale <= 0, halfwidth < 0, or non-finite fields.
  void validate() const;
};

// Density at o. Throws ContractError for non-finite o.
double pdf(const MixtureKernel& kernel, double o);

// Log-density, finite far into the tails (log-ratios of two kernels stay
// usable out to |o - shift| >= halfwidth + 12 * scale and beyond).
double log_pdf(const MixtureKernel& kernel, double o);

// Symmetric interval around shift whose complement carries mass <= mass_tol.
std::pair<double, double> support_window(const MixtureKernel& kernel,
                                         double mass_tol);

// Log of the standard normal upper tail probability log P(Z > x), accurate
// for all x (Mills-ratio continued fraction in the far tail).
double log_norm_sf(double x);

}  // namespace modelmix
