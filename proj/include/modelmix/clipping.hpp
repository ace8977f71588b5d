#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "modelmix/errors.hpp"

namespace modelmix {

// l2 threshold c plus the l-inf truncation parameter p; the per-coordinate
// cap is c / sqrt(p).
struct ClipConfig {
  double c = 1.0;
  int p = 1;

  void validate() const {
    if (!(c > 0.0)) throw ContractError("clip threshold c must be positive");
    if (p < 1) throw ContractError("clip parameter p must be >= 1");
  }
  double coord_cap() const { return c / std::sqrt(double(p)); }
};

inline double l2_norm(const std::vector<double>& g) {
  double s = 0.0;
  for (double x : g) s += x * x;
  return std::sqrt(s);
}

inline double linf_norm(const std::vector<double>& g) {
  double m = 0.0;
  for (double x : g) m = std::max(m, std::fabs(x));
  return m;
}

// g * min{1, c / ||g||}; the zero gradient passes through untouched. The
// rescale repeats while rounding leaves the recomputed norm above c, so the
// result is an exact fixed point of another clip at the same threshold.
inline std::vector<double> clip_l2(std::vector<double> g, double c) {
  if (!(c > 0.0)) throw ContractError("clip threshold c must be positive");
  for (int pass = 0; pass < 64; ++pass) {
    const double norm = l2_norm(g);
    if (!(norm > c)) break;
    double scale = c / norm;
    if (scale >= 1.0) scale = 1.0 - std::numeric_limits<double>::epsilon();
    for (double& x : g) x *= scale;
  }
  return g;
}

// l2 clip to c first, then saturate each coordinate at +-c/sqrt(p). No
// re-normalization afterward, so the result can have l2 norm strictly
// below c.
inline std::vector<double> clip_l2_linf(std::vector<double> g,
                                        const ClipConfig& cfg) {
  cfg.validate();
  g = clip_l2(std::move(g), cfg.c);
  const double cap = cfg.coord_cap();
  for (double& x : g) {
    if (x > cap) x = cap;
    else if (x < -cap) x = -cap;
  }
  return g;
}

}  // namespace modelmix
