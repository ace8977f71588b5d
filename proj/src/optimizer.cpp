#include "modelmix/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "modelmix/errors.hpp"

#include "json.hpp"

namespace modelmix {
namespace {

// Fixed substream ids per iteration; keeping them keyed (rather than drawn
// in sequence) means disabling the mixing draws leaves the other streams
// untouched, which the reduction tests rely on.
constexpr std::uint64_t kStreamSubsample = 0;
constexpr std::uint64_t kStreamAlpha = 1;
constexpr std::uint64_t kStreamNoise = 2;

void check_dims(const TrainerState& state, const Problem& problem) {
  if (static_cast<int>(state.w_curr.size()) != problem.d ||
      state.w_curr.size() != state.w_prev.size()) {
    throw ContractError("trainer state dimension mismatch");
  }
}

// Summed clipped minibatch gradient at w; mean aggregation divides by the
// expected batch size n q.
std::vector<double> aggregate_gradient(const Problem& problem,
                                       const std::vector<double>& w,
                                       const std::vector<long>& batch,
                                       const MixConfig& cfg) {
  std::vector<double> g(problem.d, 0.0);
  for (long i : batch) {
    const std::vector<double> gi =
        clip_l2_linf(problem.per_sample_grad(w, i), cfg.clip);
    for (int j = 0; j < problem.d; ++j) g[j] += gi[j];
  }
  if (cfg.aggregation == Aggregation::mean) {
    const double denom = static_cast<double>(problem.n) * cfg.q;
    for (double& v : g) v /= denom;
  }
  return g;
}

std::vector<double> draw_noise(int d, const MixConfig& cfg, Rng& rng) {
  std::vector<double> delta(d, 0.0);
  if (cfg.sigma == 0.0) return delta;
  for (double& v : delta) {
    v = cfg.family == NoiseFamily::gaussian ? cfg.sigma * rng.normal()
                                            : rng.laplace(cfg.sigma);
  }
  return delta;
}

}  // namespace

void TauSchedule::validate() const {
  if (pieces.empty()) throw ContractError("tau schedule must be nonempty");
  double prev = -1.0;
  for (const Piece& piece : pieces) {
    if (!(piece.start_fraction >= 0.0) || piece.start_fraction >= 1.0 ||
        piece.start_fraction <= prev) {
      throw ContractError(
          "tau schedule start fractions must be increasing within [0, 1)");
    }
    if (!(piece.tau >= 0.0)) throw ContractError("tau must be nonnegative");
    prev = piece.start_fraction;
  }
  if (pieces.front().start_fraction != 0.0) {
    throw ContractError("tau schedule must start at fraction 0");
  }
}

double TauSchedule::at(long k, long T) const {
  validate();
  if (k < 0 || k >= T) throw ContractError("tau schedule index out of range");
  const double fraction = static_cast<double>(k) / static_cast<double>(T);
  double tau = pieces.front().tau;
  for (const Piece& piece : pieces) {
    if (fraction >= piece.start_fraction) tau = piece.tau;
  }
  return tau;
}

double TauSchedule::sum_sq(long T) const {
  double s = 0.0;
  for (long k = 0; k < T; ++k) {
    const double tau = at(k, T);
    s += tau * tau;
  }
  return s;
}

double TauSchedule::min_tau() const {
  validate();
  double m = std::numeric_limits<double>::infinity();
  for (const Piece& piece : pieces) m = std::min(m, piece.tau);
  return m;
}

void MixConfig::validate() const {
  if (!(eta > 0.0)) throw ContractError("eta must be positive");
  clip.validate();
  tau_schedule.validate();
  if (!(q >= 0.0) || q > 1.0) throw ContractError("q must be in [0, 1]");
  if (!(sigma >= 0.0)) throw ContractError("sigma must be nonnegative");
  if (T < 1) throw ContractError("T must be positive");
  if (aggregation == Aggregation::mean && !(q > 0.0)) {
    throw ContractError("mean aggregation needs q > 0");
  }
}

TrainerState make_state(std::vector<double> w0, std::vector<double> w_prev,
                        std::uint64_t master_seed) {
  if (w0.size() != w_prev.size()) {
    throw ContractError("initial states must share dimension");
  }
  TrainerState state;
  state.w_curr = std::move(w0);
  state.w_prev = std::move(w_prev);
  state.master_seed = master_seed;
  return state;
}

std::vector<long> poisson_sample(long n, double q, Rng& rng) {
  if (!(q >= 0.0) || q > 1.0) throw ContractError("q must be in [0, 1]");
  std::vector<long> batch;
  if (q == 0.0) return batch;
  if (q == 1.0) {
    batch.resize(n);
    for (long i = 0; i < n; ++i) batch[i] = i;
    return batch;
  }
  for (long i = 0; i < n; ++i) {
    if (rng.bernoulli(q)) batch.push_back(i);
  }
  return batch;
}

TrainerState modelmix_step(const TrainerState& state, const Problem& problem,
                           const MixConfig& cfg) {
  cfg.validate();
  check_dims(state, problem);
  const int d = problem.d;

  Rng sample_rng =
      Rng::substream(state.master_seed, state.k, kStreamSubsample);
  const std::vector<long> batch = poisson_sample(problem.n, cfg.q, sample_rng);
  const std::vector<double> g =
      aggregate_gradient(problem, state.w_curr, batch, cfg);

  TrainerState next = state;
  next.last_batch_size = static_cast<long>(batch.size());

  if (cfg.mix_enabled) {
    const double tau = cfg.tau_schedule.at(std::min(state.k, cfg.T - 1), cfg.T);
    for (int j = 0; j < d; ++j) {
      const double gap = next.w_curr[j] - next.w_prev[j];
      if (std::fabs(gap) < tau) {
        const double sign = gap >= 0.0 ? 1.0 : -1.0;  // sign(0) = +1
        next.w_curr[j] += sign * tau / 2.0;
        next.w_prev[j] -= sign * tau / 2.0;
      }
    }
  }

  std::vector<double> alpha(d, 1.0);
  if (cfg.mix_enabled) {
    Rng alpha_rng = Rng::substream(state.master_seed, state.k, kStreamAlpha);
    for (double& a : alpha) a = alpha_rng.uniform01();
  }

  Rng noise_rng = Rng::substream(state.master_seed, state.k, kStreamNoise);
  const std::vector<double> delta = draw_noise(d, cfg, noise_rng);

  std::vector<double> w_next(d);
  for (int j = 0; j < d; ++j) {
    w_next[j] = alpha[j] * next.w_curr[j] +
                (1.0 - alpha[j]) * next.w_prev[j] -
                cfg.eta * (g[j] + delta[j]);
  }
  next.w_prev = std::move(next.w_curr);  // the separation-adjusted w_{k-1}
  next.w_curr = std::move(w_next);
  next.k = state.k + 1;
  return next;
}

TrainerState dpsgd_step(const TrainerState& state, const Problem& problem,
                        const MixConfig& cfg) {
  cfg.validate();
  check_dims(state, problem);
  Rng sample_rng =
      Rng::substream(state.master_seed, state.k, kStreamSubsample);
  const std::vector<long> batch = poisson_sample(problem.n, cfg.q, sample_rng);
  const std::vector<double> g =
      aggregate_gradient(problem, state.w_curr, batch, cfg);
  Rng noise_rng = Rng::substream(state.master_seed, state.k, kStreamNoise);
  const std::vector<double> delta = draw_noise(problem.d, cfg, noise_rng);

  TrainerState next = state;
  next.last_batch_size = static_cast<long>(batch.size());
  std::vector<double> w_next(problem.d);
  for (int j = 0; j < problem.d; ++j) {
    w_next[j] = state.w_curr[j] - cfg.eta * (g[j] + delta[j]);
  }
  next.w_prev = state.w_curr;
  next.w_curr = std::move(w_next);
  next.k = state.k + 1;
  return next;
}

TrainerState sgd_step(const TrainerState& state, const Problem& problem,
                      double eta, double q, Rng& rng) {
  check_dims(state, problem);
  if (!(eta > 0.0)) throw ContractError("eta must be positive");
  const std::vector<long> batch = poisson_sample(problem.n, q, rng);
  std::vector<double> g(problem.d, 0.0);
  for (long i : batch) {
    const std::vector<double> gi = problem.per_sample_grad(state.w_curr, i);
    for (int j = 0; j < problem.d; ++j) g[j] += gi[j];
  }
  if (!batch.empty()) {
    for (double& v : g) v /= static_cast<double>(batch.size());
  }
  TrainerState next = state;
  next.last_batch_size = static_cast<long>(batch.size());
  std::vector<double> w_next(problem.d);
  for (int j = 0; j < problem.d; ++j) {
    w_next[j] = state.w_curr[j] - eta * g[j];
  }
  next.w_prev = state.w_curr;
  next.w_curr = std::move(w_next);
  next.k = state.k + 1;
  return next;
}

void strawman_alternating_step(TrainerState& a, TrainerState& b,
                               const Problem& problem, const MixConfig& cfg) {
  cfg.validate();
  check_dims(a, problem);
  check_dims(b, problem);
  const int d = problem.d;
  auto substep = [&](TrainerState& target, const TrainerState& other,
                     std::uint64_t parity) {
    Rng alpha_rng = Rng::substream(target.master_seed, 2 * target.k + parity,
                                   kStreamAlpha);
    Rng noise_rng = Rng::substream(target.master_seed, 2 * target.k + parity,
                                   kStreamNoise);
    std::vector<double> mixed(d);
    for (int j = 0; j < d; ++j) {
      const double al = alpha_rng.uniform01();
      mixed[j] = al * target.w_curr[j] + (1.0 - al) * other.w_curr[j];
    }
    const std::vector<double> grad = problem.full_grad(mixed);
    const std::vector<double> delta = draw_noise(d, cfg, noise_rng);
    std::vector<double> w_next(d);
    for (int j = 0; j < d; ++j) {
      w_next[j] = mixed[j] - cfg.eta * (grad[j] + delta[j]);
    }
    target.w_prev = target.w_curr;
    target.w_curr = std::move(w_next);
    target.k += 1;
  };
  substep(a, b, 1);  // odd sub-step mixes model A toward B
  substep(b, a, 0);  // even sub-step symmetric
}

AccountantConfig to_accountant_config(const MixConfig& cfg, long n,
                                      double delta) {
  cfg.validate();
  if (n < 1) throw ContractError("dataset size must be positive");
  AccountantConfig acc;
  acc.q = cfg.q;
  acc.sigma = cfg.sigma;
  acc.sensitivity = cfg.aggregation == Aggregation::sum
                        ? cfg.clip.c
                        : cfg.clip.c / (static_cast<double>(n) * cfg.q);
  acc.p = cfg.clip.p;
  acc.tau = cfg.mix_enabled ? cfg.tau_schedule.min_tau() : 0.0;
  acc.eta = cfg.eta;
  acc.T = cfg.T;
  acc.delta = delta;
  acc.family = cfg.family;
  return acc;
}

void append_trajectory_record(std::ostream& out,
                              const TrajectoryRecord& rec) {
  out << nlohmann::json{{"k", rec.k},
                        {"loss", rec.loss},
                        {"grad_norm", rec.grad_norm},
                        {"min_coord_gap", rec.min_coord_gap},
                        {"batch_size", rec.batch_size}}
             .dump()
      << '\n';
}

void write_checkpoint(const std::string& path, const std::vector<double>& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("write_checkpoint: cannot open " + path);
  const std::uint64_t dim = w.size();
  out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  out.write(reinterpret_cast<const char*>(w.data()),
            static_cast<std::streamsize>(w.size() * sizeof(double)));
  if (!out) throw ContractError("write_checkpoint: write failed for " + path);
}

std::vector<double> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("read_checkpoint: cannot open " + path);
  std::uint64_t dim = 0;
  in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
  std::vector<double> w(dim);
  in.read(reinterpret_cast<char*>(w.data()),
          static_cast<std::streamsize>(dim * sizeof(double)));
  if (!in) throw ContractError("read_checkpoint: truncated file " + path);
  return w;
}

Variant variant_from_string(const std::string& name) {
  if (name == "sgd") return Variant::sgd;
  if (name == "dpsgd") return Variant::dpsgd;
  if (name == "modelmix") return Variant::modelmix;
  if (name == "strawman") return Variant::strawman;
  throw ContractError("unknown variant: " + name);
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::sgd: return "sgd";
    case Variant::dpsgd: return "dpsgd";
    case Variant::modelmix: return "modelmix";
    case Variant::strawman: return "strawman";
  }
  throw ContractError("unknown variant");
}

RunResult train(const Problem& problem, const MixConfig& cfg, Variant variant,
                const std::vector<double>* w0, std::ostream* trajectory_out) {
  cfg.validate();
  std::vector<double> start(problem.d, 0.0);
  if (w0) {
    if (static_cast<int>(w0->size()) != problem.d) {
      throw ContractError("initial point dimension mismatch");
    }
    start = *w0;
  }
  RunResult result;
  result.final_state = make_state(start, start, cfg.seed);
  TrainerState partner = result.final_state;  // strawman's second model
  result.average_iterate.assign(problem.d, 0.0);
  Rng sgd_rng(cfg.seed);

  for (long k = 0; k < cfg.T; ++k) {
    TrainerState& state = result.final_state;
    for (int j = 0; j < problem.d; ++j) {
      result.average_iterate[j] +=
          0.5 * (state.w_curr[j] + state.w_prev[j]);
    }
    switch (variant) {
      case Variant::sgd:
        state = sgd_step(state, problem, cfg.eta, cfg.q, sgd_rng);
        break;
      case Variant::dpsgd:
        state = dpsgd_step(state, problem, cfg);
        break;
      case Variant::modelmix:
        state = modelmix_step(state, problem, cfg);
        break;
      case Variant::strawman:
        strawman_alternating_step(state, partner, problem, cfg);
        break;
    }
    TrajectoryRecord rec;
    rec.k = state.k;
    rec.loss = problem.loss(state.w_curr);
    const std::vector<double> grad = problem.full_grad(state.w_curr);
    rec.grad_norm = l2_norm(grad);
    double min_gap = std::numeric_limits<double>::infinity();
    for (int j = 0; j < problem.d; ++j) {
      min_gap = std::min(min_gap,
                         std::fabs(state.w_curr[j] - state.w_prev[j]));
    }
    rec.min_coord_gap = min_gap;
    rec.batch_size = state.last_batch_size;
    result.trajectory.push_back(rec);
    if (trajectory_out) append_trajectory_record(*trajectory_out, rec);
  }
  for (double& v : result.average_iterate) {
    v /= static_cast<double>(cfg.T);
  }
  return result;
}

}  // namespace modelmix
