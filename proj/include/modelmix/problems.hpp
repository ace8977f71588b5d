#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace modelmix {

// Raw synthetic dataset behind a Problem; kept shared so gradient closures
// and snapshot IO see the same storage.
struct Dataset {
  std::string family;  // least-squares | logistic | mlp | example31
  long n = 0;
  int x_dim = 0;
  unsigned long long seed = 0;
  std::vector<int> widths;        // mlp only: {input, hidden}
  std::vector<double> features;   // n * x_dim, row-major
  std::vector<double> labels;     // n
};

// ERM instance with per-sample oracles. loss/full_grad average the
// per-sample quantities, so the mean-of-per-sample identity holds by
// construction and is re-verified in tests.
struct Problem {
  std::shared_ptr<const Dataset> data;
  long n = 0;
  int d = 0;  // parameter dimension (not always x_dim)
  std::function<double(const std::vector<double>&, long)> per_sample_loss;
  std::function<std::vector<double>(const std::vector<double>&, long)>
      per_sample_grad;
  std::optional<double> beta;
  std::optional<double> lipschitz;
  std::optional<std::vector<double>> optimum;

  double loss(const std::vector<double>& w) const;
  std::vector<double> full_grad(const std::vector<double>& w) const;
};

struct GradStats {
  double kappa_hat = 0.0;
  double sampling_noise_std = 0.0;  // RMS of ||grad_i - full_grad||
};

Problem make_least_squares(long n, int d, unsigned long long seed);
Problem make_logistic(long n, int d, unsigned long long seed);
// widths = {input dim, hidden width}; single tanh hidden layer, scalar
// linear output, squared loss.
Problem make_mlp(const std::vector<int>& widths, long n,
                 unsigned long long seed);
// The 1-D three-sample instance with samples {-20, -10, 90} and loss
// (w - x)^2 / 2; optimum w* = 20.
Problem example_31();

// Exact average over all n samples of clip_l2(per_sample_grad, c).
std::vector<double> expected_clipped_gradient(const Problem& problem,
                                              const std::vector<double>& w,
                                              double c);

// Fits the sub-exponential tail constant by the exponential MLE on the
// upper tail_fraction of sampled deviation norms (mean excess over the
// threshold). Throws ContractError when all deviations vanish.
GradStats estimate_kappa(const Problem& problem, const std::vector<double>& w,
                         long n_draws, unsigned long long seed,
                         double tail_fraction = 0.5);

// max{4 kappa log 10, -psi kappa log(kappa) log(sqrt(d log(1/delta))/(n eps))}
// with the second term floored at 0.
double recommend_clip_threshold(double kappa, long n, int d, double eps,
                                double delta, double psi = 1.0);

struct Thm31Params {
  double w0 = 0.0;       // sup_w ||w - w*||
  double lipschitz = 0.0;
  double beta = 0.0;
  double gamma = 0.0;    // eta = gamma / (n q sqrt(T))
  double q = 1.0;
  long n = 1;
  long T = 1;
  int d = 1;
  double tau_sq_sum = 0.0;       // sum_k tau_k^2
  double noise_norm_mean = 0.0;  // E||Delta||
  double noise_sq_mean = 0.0;    // E||Delta||^2
};
double thm31_bound(const Thm31Params& params);

struct Thm32Params {
  double c = 0.0;
  double beta = 0.0;
  int d = 1;
  double delta = 1e-5;
  double eps = 1.0;
  long n = 1;
  double q = 1.0;
  double range_f = 0.0;    // sup F - inf F
  double w0_tilde = 0.0;   // ||w_0 - w_{-1}||
  double tau_sq_sum = 0.0;
  double v = 1.0;          // noise-mechanism constant, caller-supplied
};
struct Thm32Result {
  double metric = 0.0;
  double bound = 0.0;
};
// grad_norms are the logged full-batch gradient norms ||grad F(w_k)||.
Thm32Result thm32_metric_and_bound(const std::vector<double>& grad_norms,
                                   const Thm32Params& params);

// JSON header line (n, d, family, seed, widths) followed by flat binary
// feature and label arrays.
void save_snapshot(const Problem& problem, const std::string& path);
Problem load_snapshot(const std::string& path);

// Rebuild a Problem (oracles, beta, optimum) from stored data.
Problem problem_from_dataset(std::shared_ptr<const Dataset> data);

}  // namespace modelmix
