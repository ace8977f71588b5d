#pragma once

#include <functional>
#include <vector>

namespace modelmix {

struct QuadResult {
  double value = 0.0;
  double abs_error = 0.0;
  int evaluations = 0;
};

// Adaptive Gauss-Kronrod (G7/K15) integration of f over [lo, hi].
// Subdivides the interval with the largest error estimate first and stops
// once the combined estimate meets rel_tol (relative to |value|) or abs_tol.
QuadResult integrate(const std::function<double(double)>& f, double lo,
                     double hi, double rel_tol = 1e-12, double abs_tol = 0.0,
                     int max_intervals = 4000);

// Same, but with the initial subdivision forced through the given sorted
// breakpoints (for piecewise-smooth integrands with interior kinks).
QuadResult integrate_with_breakpoints(const std::function<double(double)>& f,
                                      const std::vector<double>& points,
                                      double rel_tol = 1e-12,
                                      double abs_tol = 0.0,
                                      int max_intervals = 4000);

}  // namespace modelmix
