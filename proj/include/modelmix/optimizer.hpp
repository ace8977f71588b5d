#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "modelmix/accountant.hpp"
#include "modelmix/clipping.hpp"
#include "modelmix/problems.hpp"
#include "modelmix/rng.hpp"

namespace modelmix {

// tau_k as a piecewise-constant function of the epoch fraction k/T. A
// single piece starting at 0 is a constant schedule.
struct TauSchedule {
  struct Piece {
    double start_fraction;  // in [0, 1)
    double tau;             // >= 0
  };
  std::vector<Piece> pieces{{0.0, 0.0}};

  static TauSchedule constant(double tau) { return {{{0.0, tau}}}; }
  void validate() const;
  double at(long k, long T) const;
  double sum_sq(long T) const;  // sum over k of tau_k^2
  double min_tau() const;
};

enum class Aggregation { sum, mean };

struct MixConfig {
  double eta = 0.1;
  ClipConfig clip;
  TauSchedule tau_schedule;
  double q = 1.0;
  double sigma = 0.0;  // per-coordinate noise std on the aggregate G
  long T = 1;
  std::uint64_t seed = 0;
  Aggregation aggregation = Aggregation::sum;
  NoiseFamily family = NoiseFamily::gaussian;
  // Mixing-disabled switch: alpha fixed to 1 and tau ignored, which makes
  // modelmix_step coincide with dpsgd_step draw for draw.
  bool mix_enabled = true;

  void validate() const;
};

struct TrainerState {
  std::vector<double> w_curr;  // w_{k-1}
  std::vector<double> w_prev;  // w_{k-2}
  long k = 0;
  std::uint64_t master_seed = 0;
  long last_batch_size = 0;
};

TrainerState make_state(std::vector<double> w0, std::vector<double> w_prev,
                        std::uint64_t master_seed);

// Each index kept independently with probability q.
std::vector<long> poisson_sample(long n, double q, Rng& rng);

// One iteration of Algorithm 1: subsample, sum clipped gradients, enforce
// the coordinate separation tau_k, mix per-coordinate with fresh uniform
// alpha, apply the noisy gradient step.
TrainerState modelmix_step(const TrainerState& state, const Problem& problem,
                           const MixConfig& cfg);

// Clipped DP-SGD baseline sharing the subsample and noise substreams with
// modelmix_step.
TrainerState dpsgd_step(const TrainerState& state, const Problem& problem,
                        const MixConfig& cfg);

// Unclipped, unnoised reference dynamics; the sampled minibatch gradient
// mean (full-batch gradient descent at q=1).
TrainerState sgd_step(const TrainerState& state, const Problem& problem,
                      double eta, double q, Rng& rng);

// Two-model alternating variant: odd sub-step updates model A by mixing
// toward model B, even sub-step symmetric. Comparison runs only.
void strawman_alternating_step(TrainerState& a, TrainerState& b,
                               const Problem& problem, const MixConfig& cfg);

// The (q, sigma, c, p, tau, eta, T) actually used by a run, in the
// accountant's sum-aggregation units: sensitivity c for sum runs and
// c/(n q) for mean runs. The schedule's minimum tau is used, which is the
// conservative choice for a varying schedule.
AccountantConfig to_accountant_config(const MixConfig& cfg, long n,
                                      double delta);

struct TrajectoryRecord {
  long k = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double min_coord_gap = 0.0;
  long batch_size = 0;
};

// One newline-delimited JSON record {k, loss, grad_norm, min_coord_gap,
// batch_size}.
void append_trajectory_record(std::ostream& out, const TrajectoryRecord& rec);

// Flat binary of 64-bit floats with an 8-byte dimension header.
void write_checkpoint(const std::string& path, const std::vector<double>& w);
std::vector<double> read_checkpoint(const std::string& path);

enum class Variant { sgd, dpsgd, modelmix, strawman };
Variant variant_from_string(const std::string& name);
std::string to_string(Variant v);

struct RunResult {
  TrainerState final_state;
  std::vector<TrajectoryRecord> trajectory;
  std::vector<double> average_iterate;  // mean of (w_{k-1}+w_{k-2})/2
};

// Runs T iterations of the chosen variant from w0 = w_{-1} = 0 unless an
// initial point is supplied. Logs one record per iteration.
RunResult train(const Problem& problem, const MixConfig& cfg, Variant variant,
                const std::vector<double>* w0 = nullptr,
                std::ostream* trajectory_out = nullptr);

}  // namespace modelmix
