#include "modelmix/problems.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "modelmix/clipping.hpp"
#include "modelmix/errors.hpp"
#include "modelmix/rng.hpp"

#include "json.hpp"

namespace modelmix {
namespace {

double dot(const double* a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) s += a[j] * b[j];
  return s;
}

// Largest eigenvalue of X^T X / n by power iteration on d x d without
// forming the matrix when d is small anyway; 300 iterations is plenty for
// the well-conditioned synthetic instances.
double top_eigenvalue_second_moment(const std::vector<double>& x, long n,
                                    int d) {
  std::vector<double> gram(static_cast<std::size_t>(d) * d, 0.0);
  for (long i = 0; i < n; ++i) {
    const double* row = &x[static_cast<std::size_t>(i) * d];
    for (int a = 0; a < d; ++a) {
      for (int b = a; b < d; ++b) gram[a * d + b] += row[a] * row[b];
    }
  }
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < a; ++b) gram[a * d + b] = gram[b * d + a];
  }
  for (double& v : gram) v /= static_cast<double>(n);

  std::vector<double> v(d, 1.0 / std::sqrt(double(d))), next(d);
  double lambda = 0.0;
  for (int it = 0; it < 300; ++it) {
    for (int a = 0; a < d; ++a) {
      double s = 0.0;
      for (int b = 0; b < d; ++b) s += gram[a * d + b] * v[b];
      next[a] = s;
    }
    double norm = 0.0;
    for (double t : next) norm += t * t;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    lambda = norm;
    for (int a = 0; a < d; ++a) v[a] = next[a] / norm;
  }
  return lambda;
}

// Solve (X^T X) w = X^T y by Cholesky; the Gaussian designs used here are
// full rank with probability 1.
std::vector<double> normal_equations(const std::vector<double>& x,
                                     const std::vector<double>& y, long n,
                                     int d) {
  std::vector<double> a(static_cast<std::size_t>(d) * d, 0.0);
  std::vector<double> rhs(d, 0.0);
  for (long i = 0; i < n; ++i) {
    const double* row = &x[static_cast<std::size_t>(i) * d];
    for (int p = 0; p < d; ++p) {
      rhs[p] += row[p] * y[i];
      for (int r = p; r < d; ++r) a[p * d + r] += row[p] * row[r];
    }
  }
  for (int p = 0; p < d; ++p) {
    for (int r = 0; r < p; ++r) a[p * d + r] = a[r * d + p];
  }
  // Cholesky A = L L^T.
  std::vector<double> chol(a);
  for (int j = 0; j < d; ++j) {
    for (int k = 0; k < j; ++k) {
      const double f = chol[j * d + k];
      for (int i = j; i < d; ++i) chol[i * d + j] -= chol[i * d + k] * f;
    }
    const double diag = chol[j * d + j];
    if (!(diag > 0.0)) throw NumericalError("singular normal equations", diag);
    const double root = std::sqrt(diag);
    for (int i = j; i < d; ++i) chol[i * d + j] /= root;
  }
  // Forward then backward substitution.
  std::vector<double> w(rhs);
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < i; ++k) w[i] -= chol[i * d + k] * w[k];
    w[i] /= chol[i * d + i];
  }
  for (int i = d - 1; i >= 0; --i) {
    for (int k = i + 1; k < d; ++k) w[i] -= chol[k * d + i] * w[k];
    w[i] /= chol[i * d + i];
  }
  return w;
}

void check_gradients(const Problem& problem, unsigned long long seed) {
  Rng rng(seed ^ 0x6772616469656e74ULL);  // probe stream distinct from data
  const double step = 1e-6;
  for (int probe = 0; probe < 10; ++probe) {
    std::vector<double> w(problem.d);
    for (double& v : w) v = rng.uniform(-1.0, 1.0);
    const long i = static_cast<long>(rng.uniform01() * problem.n);
    const std::vector<double> g = problem.per_sample_grad(w, i);
    for (int j = 0; j < problem.d; ++j) {
      std::vector<double> lo = w, hi = w;
      lo[j] -= step;
      hi[j] += step;
      const double fd = (problem.per_sample_loss(hi, i) -
                         problem.per_sample_loss(lo, i)) /
                        (2.0 * step);
      const double scale = std::max({1.0, std::fabs(g[j]), std::fabs(fd)});
      if (std::fabs(fd - g[j]) > 1e-5 * scale) {
        throw NumericalError("per-sample gradient fails finite differences",
                             std::fabs(fd - g[j]) / scale);
      }
    }
  }
}

std::shared_ptr<Dataset> gaussian_design(const std::string& family, long n,
                                         int d, unsigned long long seed) {
  auto data = std::make_shared<Dataset>();
  data->family = family;
  data->n = n;
  data->x_dim = d;
  data->seed = seed;
  data->features.resize(static_cast<std::size_t>(n) * d);
  data->labels.resize(n);
  Rng rng(seed);
  for (double& v : data->features) v = rng.normal();
  std::vector<double> planted(d);
  for (double& v : planted) v = rng.normal();
  for (long i = 0; i < n; ++i) {
    const double mean = dot(&data->features[static_cast<std::size_t>(i) * d],
                            planted);
    if (family == "least-squares") {
      data->labels[i] = mean + 0.1 * rng.normal();
    } else {  // logistic: +-1 labels from the planted separator plus noise
      data->labels[i] = (mean + 0.1 * rng.normal()) >= 0.0 ? 1.0 : -1.0;
    }
  }
  return data;
}

Problem build_least_squares(std::shared_ptr<const Dataset> data) {
  Problem p;
  p.data = data;
  p.n = data->n;
  p.d = data->x_dim;
  const int d = p.d;
  p.per_sample_loss = [data, d](const std::vector<double>& w, long i) {
    const double r =
        dot(&data->features[static_cast<std::size_t>(i) * d], w) -
        data->labels[i];
    return 0.5 * r * r;
  };
  p.per_sample_grad = [data, d](const std::vector<double>& w, long i) {
    const double* row = &data->features[static_cast<std::size_t>(i) * d];
    const double r = dot(row, w) - data->labels[i];
    std::vector<double> g(d);
    for (int j = 0; j < d; ++j) g[j] = r * row[j];
    return g;
  };
  p.beta = top_eigenvalue_second_moment(data->features, data->n, d);
  p.optimum = normal_equations(data->features, data->labels, data->n, d);
  return p;
}

Problem build_logistic(std::shared_ptr<const Dataset> data) {
  Problem p;
  p.data = data;
  p.n = data->n;
  p.d = data->x_dim;
  const int d = p.d;
  p.per_sample_loss = [data, d](const std::vector<double>& w, long i) {
    const double t = data->labels[i] *
                     dot(&data->features[static_cast<std::size_t>(i) * d], w);
    return t > 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
  };
  p.per_sample_grad = [data, d](const std::vector<double>& w, long i) {
    const double* row = &data->features[static_cast<std::size_t>(i) * d];
    const double y = data->labels[i];
    const double t = y * dot(row, w);
    const double s = t > 0.0 ? std::exp(-t) / (1.0 + std::exp(-t))
                             : 1.0 / (1.0 + std::exp(t));
    std::vector<double> g(d);
    for (int j = 0; j < d; ++j) g[j] = -y * s * row[j];
    return g;
  };
  p.beta = 0.25 * top_eigenvalue_second_moment(data->features, data->n, d);
  return p;
}

// Parameter layout for the 1-hidden-layer tanh net: W1 (h x in), b1 (h),
// w2 (h), b2 (1).
struct MlpShape {
  int in, hidden;
  int dim() const { return hidden * in + hidden + hidden + 1; }
};

double mlp_forward(const MlpShape& s, const std::vector<double>& w,
                   const double* x, std::vector<double>* hidden_out) {
  double out = w[s.hidden * s.in + 2 * s.hidden];  // b2
  for (int h = 0; h < s.hidden; ++h) {
    double z = w[s.hidden * s.in + h];  // b1[h]
    for (int j = 0; j < s.in; ++j) z += w[h * s.in + j] * x[j];
    const double a = std::tanh(z);
    if (hidden_out) (*hidden_out)[h] = a;
    out += w[s.hidden * s.in + s.hidden + h] * a;
  }
  return out;
}

Problem build_mlp(std::shared_ptr<const Dataset> data) {
  if (data->widths.size() != 2) {
    throw ContractError("mlp widths must be {input, hidden}");
  }
  const MlpShape shape{data->widths[0], data->widths[1]};
  Problem p;
  p.data = data;
  p.n = data->n;
  p.d = shape.dim();
  p.per_sample_loss = [data, shape](const std::vector<double>& w, long i) {
    const double* x = &data->features[static_cast<std::size_t>(i) * shape.in];
    const double r = mlp_forward(shape, w, x, nullptr) - data->labels[i];
    return 0.5 * r * r;
  };
  p.per_sample_grad = [data, shape](const std::vector<double>& w, long i) {
    const double* x = &data->features[static_cast<std::size_t>(i) * shape.in];
    std::vector<double> act(shape.hidden);
    const double r = mlp_forward(shape, w, x, &act) - data->labels[i];
    std::vector<double> g(shape.dim(), 0.0);
    g[shape.hidden * shape.in + 2 * shape.hidden] = r;  // b2
    for (int h = 0; h < shape.hidden; ++h) {
      const double w2 = w[shape.hidden * shape.in + shape.hidden + h];
      g[shape.hidden * shape.in + shape.hidden + h] = r * act[h];
      const double dz = r * w2 * (1.0 - act[h] * act[h]);
      g[shape.hidden * shape.in + h] = dz;  // b1
      for (int j = 0; j < shape.in; ++j) g[h * shape.in + j] = dz * x[j];
    }
    return g;
  };
  return p;
}

Problem build_example_31(std::shared_ptr<const Dataset> data) {
  Problem p;
  p.data = data;
  p.n = 3;
  p.d = 1;
  p.per_sample_loss = [data](const std::vector<double>& w, long i) {
    const double r = w[0] - data->features[i];
    return 0.5 * r * r;
  };
  p.per_sample_grad = [data](const std::vector<double>& w, long i) {
    return std::vector<double>{w[0] - data->features[i]};
  };
  p.beta = 1.0;
  p.optimum = std::vector<double>{20.0};
  return p;
}

}  // namespace

double Problem::loss(const std::vector<double>& w) const {
  if (static_cast<int>(w.size()) != d) {
    throw ContractError("loss: dimension mismatch");
  }
  double s = 0.0;
  for (long i = 0; i < n; ++i) s += per_sample_loss(w, i);
  return s / static_cast<double>(n);
}

std::vector<double> Problem::full_grad(const std::vector<double>& w) const {
  if (static_cast<int>(w.size()) != d) {
    throw ContractError("full_grad: dimension mismatch");
  }
  std::vector<double> g(d, 0.0);
  for (long i = 0; i < n; ++i) {
    const std::vector<double> gi = per_sample_grad(w, i);
    for (int j = 0; j < d; ++j) g[j] += gi[j];
  }
  for (double& v : g) v /= static_cast<double>(n);
  return g;
}

Problem problem_from_dataset(std::shared_ptr<const Dataset> data) {
  Problem p;
  if (data->family == "least-squares") p = build_least_squares(data);
  else if (data->family == "logistic") p = build_logistic(data);
  else if (data->family == "mlp") p = build_mlp(data);
  else if (data->family == "example31") p = build_example_31(data);
  else throw ContractError("unknown problem family: " + data->family);
  check_gradients(p, data->seed);
  return p;
}

Problem make_least_squares(long n, int d, unsigned long long seed) {
  if (n < 1 || d < 1) throw ContractError("problem shapes must be positive");
  return problem_from_dataset(gaussian_design("least-squares", n, d, seed));
}

Problem make_logistic(long n, int d, unsigned long long seed) {
  if (n < 1 || d < 1) throw ContractError("problem shapes must be positive");
  return problem_from_dataset(gaussian_design("logistic", n, d, seed));
}

Problem make_mlp(const std::vector<int>& widths, long n,
                 unsigned long long seed) {
  if (widths.size() != 2 || widths[0] < 1 || widths[1] < 1 || n < 1) {
    throw ContractError("mlp wants widths {input >= 1, hidden >= 1}, n >= 1");
  }
  const int in = widths[0];
  auto data = std::make_shared<Dataset>();
  data->family = "mlp";
  data->n = n;
  data->x_dim = in;
  data->seed = seed;
  data->widths = widths;
  data->features.resize(static_cast<std::size_t>(n) * in);
  data->labels.resize(n);
  Rng rng(seed);
  for (double& v : data->features) v = rng.normal();
  // Labels from a planted teacher of the same shape plus small noise.
  const MlpShape shape{in, widths[1]};
  std::vector<double> teacher(shape.dim());
  for (double& v : teacher) v = rng.normal();
  for (long i = 0; i < n; ++i) {
    data->labels[i] =
        mlp_forward(shape, teacher,
                    &data->features[static_cast<std::size_t>(i) * in],
                    nullptr) +
        0.05 * rng.normal();
  }
  return problem_from_dataset(data);
}

Problem example_31() {
  auto data = std::make_shared<Dataset>();
  data->family = "example31";
  data->n = 3;
  data->x_dim = 1;
  data->features = {-20.0, -10.0, 90.0};
  data->labels = {0.0, 0.0, 0.0};
  return problem_from_dataset(data);
}

std::vector<double> expected_clipped_gradient(const Problem& problem,
                                              const std::vector<double>& w,
                                              double c) {
  if (!(c > 0.0)) throw ContractError("clip threshold c must be positive");
  std::vector<double> acc(problem.d, 0.0);
  for (long i = 0; i < problem.n; ++i) {
    const std::vector<double> g = clip_l2(problem.per_sample_grad(w, i), c);
    for (int j = 0; j < problem.d; ++j) acc[j] += g[j];
  }
  for (double& v : acc) v /= static_cast<double>(problem.n);
  return acc;
}

GradStats estimate_kappa(const Problem& problem, const std::vector<double>& w,
                         long n_draws, unsigned long long seed,
                         double tail_fraction) {
  if (n_draws < 1000) throw ContractError("estimate_kappa: n_draws >= 1000");
  if (!(tail_fraction > 0.0) || !(tail_fraction < 1.0)) {
    throw ContractError("estimate_kappa: tail_fraction in (0, 1)");
  }
  const std::vector<double> mean_grad = problem.full_grad(w);
  Rng rng(seed);
  std::vector<double> devs(n_draws);
  double sq = 0.0;
  for (long t = 0; t < n_draws; ++t) {
    const long i = std::min<long>(problem.n - 1,
                                  static_cast<long>(rng.uniform01() * problem.n));
    const std::vector<double> g = problem.per_sample_grad(w, i);
    double s = 0.0;
    for (int j = 0; j < problem.d; ++j) {
      const double diff = g[j] - mean_grad[j];
      s += diff * diff;
    }
    devs[t] = std::sqrt(s);
    sq += s;
  }
  std::sort(devs.begin(), devs.end());
  if (devs.back() <= 0.0) {
    throw ContractError("estimate_kappa: degenerate (all gradients equal)");
  }
  // MLE for the exponential excess law above the (1 - tail_fraction)
  // quantile: kappa = mean excess over the threshold.
  const std::size_t cut =
      static_cast<std::size_t>((1.0 - tail_fraction) * n_draws);
  const double threshold = devs[cut];
  double excess = 0.0;
  for (std::size_t t = cut; t < devs.size(); ++t) excess += devs[t] - threshold;
  GradStats stats;
  stats.kappa_hat = excess / static_cast<double>(devs.size() - cut);
  stats.sampling_noise_std = std::sqrt(sq / static_cast<double>(n_draws));
  return stats;
}

double recommend_clip_threshold(double kappa, long n, int d, double eps,
                                double delta, double psi) {
  if (!(kappa > 0.0) || n < 1 || d < 1 || !(eps > 0.0) || !(delta > 0.0) ||
      !(delta < 1.0) || !(psi > 0.0)) {
    throw ContractError("recommend_clip_threshold: all inputs must be positive");
  }
  const double first = 4.0 * kappa * std::log(10.0);
  const double second =
      -psi * kappa * std::log(kappa) *
      std::log(std::sqrt(d * std::log(1.0 / delta)) / (n * eps));
  return std::max(first, std::max(0.0, second));
}

double thm31_bound(const Thm31Params& p) {
  if (!(p.beta > 0.0) || !(p.lipschitz > 0.0)) {
    throw ContractError("thm31_bound: beta and Lipschitz constants required");
  }
  if (!(p.gamma > 0.0) || p.T < 1 || !(p.q > 0.0) || p.n < 1 || p.d < 1) {
    throw ContractError("thm31_bound: invalid run parameters");
  }
  const double T = static_cast<double>(p.T);
  const double n = static_cast<double>(p.n);
  const double l2 = p.lipschitz * p.lipschitz;
  const double first =
      (3.0 * p.w0 * p.w0 + p.d * p.tau_sq_sum / 12.0) /
      (2.0 * p.gamma * std::sqrt(T));
  const double second = p.gamma *
                        (l2 / (p.q * p.q) +
                         p.noise_sq_mean / (n * n * p.q * p.q)) /
                        std::sqrt(T);
  const double third =
      p.beta * (12.0 * p.w0 * p.w0 / (8.0 * T) +
                2.0 * p.gamma * p.w0 * (p.lipschitz + p.noise_norm_mean / n) /
                    (p.q * std::pow(T, 1.5)) +
                11.0 * p.gamma * p.gamma *
                    (l2 + p.noise_sq_mean / (n * n)) /
                    (8.0 * T * p.q * p.q));
  return first + second + third;
}

Thm32Result thm32_metric_and_bound(const std::vector<double>& grad_norms,
                                   const Thm32Params& p) {
  if (grad_norms.empty()) throw ContractError("thm32: empty trajectory");
  if (!(p.beta > 0.0) || !(p.range_f > 0.0)) {
    throw ContractError("thm32: beta and range of F required");
  }
  Thm32Result r;
  for (double g : grad_norms) {
    r.metric += std::min(0.45 * g * g, p.c / 20.0 * g);
  }
  r.metric /= static_cast<double>(grad_norms.size());

  const double n_eps = static_cast<double>(p.n) * p.eps;
  const double dlog = p.d * std::log(1.0 / p.delta);
  const double first = (0.5 * p.v + 2.5) * p.c *
                       std::sqrt(p.range_f * (101.0 / 12.0) * p.beta * dlog) /
                       n_eps;
  const double second =
      28.0 * p.c * p.beta * dlog * p.w0_tilde / (12.0 * p.q * n_eps * n_eps);
  const double third = p.c * dlog * std::sqrt(101.0 / 12.0) *
                       std::pow(p.beta, 1.5) /
                       (p.q * n_eps * std::sqrt(p.range_f)) *
                       (p.d * p.tau_sq_sum / 12.0 +
                        21.0 * p.w0_tilde * p.w0_tilde / 24.0);
  r.bound = first + second + third;
  return r;
}

void save_snapshot(const Problem& problem, const std::string& path) {
  if (!problem.data) throw ContractError("save_snapshot: problem has no data");
  const Dataset& data = *problem.data;
  nlohmann::json header{{"n", data.n},
                        {"d", data.x_dim},
                        {"family", data.family},
                        {"seed", data.seed}};
  if (!data.widths.empty()) header["widths"] = data.widths;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("save_snapshot: cannot open " + path);
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(data.features.data()),
            static_cast<std::streamsize>(data.features.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(data.labels.data()),
            static_cast<std::streamsize>(data.labels.size() * sizeof(double)));
  if (!out) throw ContractError("save_snapshot: write failed for " + path);
}

Problem load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("load_snapshot: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw ContractError("load_snapshot: missing header in " + path);
  }
  const nlohmann::json header = nlohmann::json::parse(line);
  auto data = std::make_shared<Dataset>();
  data->family = header.at("family").get<std::string>();
  data->n = header.at("n").get<long>();
  data->x_dim = header.at("d").get<int>();
  data->seed = header.at("seed").get<unsigned long long>();
  if (header.contains("widths")) {
    data->widths = header.at("widths").get<std::vector<int>>();
  }
  data->features.resize(static_cast<std::size_t>(data->n) * data->x_dim);
  data->labels.resize(data->n);
  in.read(reinterpret_cast<char*>(data->features.data()),
          static_cast<std::streamsize>(data->features.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(data->labels.data()),
          static_cast<std::streamsize>(data->labels.size() * sizeof(double)));
  if (!in) throw ContractError("load_snapshot: truncated payload in " + path);
  return problem_from_dataset(data);
}

}  // namespace modelmix
