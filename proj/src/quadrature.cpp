#include "modelmix/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace modelmix {
namespace {

// 15-point Kronrod nodes on [-1, 1] (positive half) and weights, with the
// embedded 7-point Gauss rule on the odd-indexed nodes.
constexpr double kKronrodNodes[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};

constexpr double kKronrodWeights[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};

constexpr double kGaussWeights[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct Segment {
  double lo, hi, value, error;
  bool operator<(const Segment& other) const { return error < other.error; }
};

Segment evaluate_segment(const std::function<double(double)>& f, double lo,
                         double hi) {
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  double fv[15];
  for (int i = 0; i < 7; ++i) {
    fv[i] = f(center - half * kKronrodNodes[i]);
    fv[14 - i] = f(center + half * kKronrodNodes[i]);
  }
  fv[7] = f(center);

  double kronrod = kKronrodWeights[7] * fv[7];
  for (int i = 0; i < 7; ++i) {
    kronrod += kKronrodWeights[i] * (fv[i] + fv[14 - i]);
  }
  double gauss = kGaussWeights[3] * fv[7];
  for (int i = 0; i < 3; ++i) {
    gauss += kGaussWeights[i] * (fv[2 * i + 1] + fv[13 - 2 * i]);
  }
  kronrod *= half;
  gauss *= half;

  const double diff = std::fabs(kronrod - gauss);
  // Standard QUADPACK-style sharpened error estimate.
  const double err = diff > 0.0 ? diff * std::min(1.0, std::pow(200.0 * diff, 1.5))
                                : 0.0;
  return {lo, hi, kronrod, std::max(err, diff * 1e-6)};
}

QuadResult run_adaptive(const std::function<double(double)>& f,
                        const std::vector<double>& edges, double rel_tol,
                        double abs_tol, int max_intervals) {
  std::priority_queue<Segment> queue;
  double total = 0.0, total_err = 0.0;
  int evals = 0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    Segment s = evaluate_segment(f, edges[i], edges[i + 1]);
    evals += 15;
    total += s.value;
    total_err += s.error;
    queue.push(s);
  }
  int intervals = static_cast<int>(edges.size()) - 1;
  while (intervals < max_intervals) {
    const double goal = std::max(abs_tol, rel_tol * std::fabs(total));
    if (total_err <= goal) break;
    Segment worst = queue.top();
    queue.pop();
    const double mid = 0.5 * (worst.lo + worst.hi);
    if (mid <= worst.lo || mid >= worst.hi) {  // interval at ulp resolution
      queue.push(worst);
      break;
    }
    Segment left = evaluate_segment(f, worst.lo, mid);
    Segment right = evaluate_segment(f, mid, worst.hi);
    evals += 30;
    total += left.value + right.value - worst.value;
    total_err += left.error + right.error - worst.error;
    queue.push(left);
    queue.push(right);
    ++intervals;
  }
  return {total, total_err, evals};
}

}  // namespace

QuadResult integrate(const std::function<double(double)>& f, double lo,
                     double hi, double rel_tol, double abs_tol,
                     int max_intervals) {
  return run_adaptive(f, {lo, hi}, rel_tol, abs_tol, max_intervals);
}

QuadResult integrate_with_breakpoints(const std::function<double(double)>& f,
                                      const std::vector<double>& points,
                                      double rel_tol, double abs_tol,
                                      int max_intervals) {
  std::vector<double> edges = points;
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return run_adaptive(f, edges, rel_tol, abs_tol, max_intervals);
}

}  // namespace modelmix
