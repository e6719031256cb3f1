#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "advpatch/errors.hpp"
#include "advpatch/objective.hpp"
#include "advpatch/rng.hpp"

namespace advpatch::nes {

struct NesConfig {
  int population_n = 20;  // perturbation directions per iteration
  double sigma = 0.1;
  double alpha = 0.02;
  int iterations = 150;
  std::optional<double> early_stop_loss;
  std::optional<int> plateau_window;
  std::uint64_t seed = 0;
  int parallelism = 1;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  double lower_bound = -std::numeric_limits<double>::infinity();
  double upper_bound = std::numeric_limits<double>::infinity();

  void validate() const {
    if (population_n < 1) throw InvalidArgument("nes.population_n: population_n must be >= 1");
    if (!(sigma > 0.0)) throw InvalidArgument("nes.sigma: sigma must be > 0");
    if (!(alpha > 0.0)) throw InvalidArgument("nes.alpha: alpha must be > 0");
    if (iterations < 1) throw InvalidArgument("nes.iterations: iterations must be >= 1");
    if (parallelism < 1) throw InvalidArgument("nes.parallelism: parallelism must be >= 1");
    if (checkpoint_every < 0) throw InvalidArgument("nes.checkpoint_every: checkpoint_every must be >= 0");
    if (plateau_window && *plateau_window < 1) throw InvalidArgument("nes.plateau_window: plateau_window must be >= 1");
    if (!(lower_bound < upper_bound)) throw InvalidArgument("nes.lower_bound: lower_bound must be < upper_bound");
  }
};

// Linear map from a latent standard-normal draw to a perturbation of the full
// parameter vector. Every output coordinate is marginally N(0, 1).
class PerturbationBasis {
 public:
  virtual ~PerturbationBasis() = default;
  virtual std::size_t dim() const = 0;
  virtual std::size_t latent_dim() const = 0;
  virtual void expand(std::span<const double> latent, std::span<double> out) const = 0;
};

// epsilon ~ N(0, I) directly in parameter space.
class IsotropicBasis final : public PerturbationBasis {
 public:
  explicit IsotropicBasis(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  std::size_t latent_dim() const override { return dim_; }
  void expand(std::span<const double> latent, std::span<double> out) const override {
    std::copy(latent.begin(), latent.end(), out.begin());
  }

 private:
  std::size_t dim_;
};

// Block-constant noise over an interleaved width x height x channels tensor:
// one N(0, 1) draw per (grid cell, channel), replicated across the cell.
class BlockBasis final : public PerturbationBasis {
 public:
  BlockBasis(int width, int height, int channels, int grid_w, int grid_h)
      : width_(width), height_(height), channels_(channels), grid_w_(grid_w), grid_h_(grid_h) {
    if (width < 1 || height < 1 || channels < 1) throw InvalidArgument("BlockBasis: bad tensor shape");
    if (grid_w < 1 || grid_h < 1 || grid_w > width || grid_h > height) throw InvalidArgument("BlockBasis: grid must be within 1..size");
  }
  std::size_t dim() const override { return static_cast<std::size_t>(width_) * height_ * channels_; }
  std::size_t latent_dim() const override { return static_cast<std::size_t>(grid_w_) * grid_h_ * channels_; }
  void expand(std::span<const double> latent, std::span<double> out) const override {
    for (int y = 0; y < height_; ++y) {
      const int by = static_cast<int>(static_cast<long long>(y) * grid_h_ / height_);
      for (int x = 0; x < width_; ++x) {
        const int bx = static_cast<int>(static_cast<long long>(x) * grid_w_ / width_);
        const std::size_t src = (static_cast<std::size_t>(by) * grid_w_ + bx) * channels_;
        const std::size_t dst = (static_cast<std::size_t>(y) * width_ + x) * channels_;
        for (int c = 0; c < channels_; ++c) out[dst + c] = latent[src + c];
      }
    }
  }

 private:
  int width_, height_, channels_, grid_w_, grid_h_;
};

// Objectives take the candidate parameters and the evaluation tag and return
// either a plain loss or an Evaluation (which also carries query counts).
template <class F>
concept Objective = requires(const F& f, std::span<const double> x, const EvalTag& tag) {
  { f(x, tag) };
} && (std::convertible_to<std::invoke_result_t<const F&, std::span<const double>, const EvalTag&>, double> ||
      std::same_as<std::invoke_result_t<const F&, std::span<const double>, const EvalTag&>, Evaluation>);

template <Objective F>
Evaluation evaluate_objective(const F& f, std::span<const double> x, const EvalTag& tag) {
  if constexpr (std::same_as<std::invoke_result_t<const F&, std::span<const double>, const EvalTag&>, Evaluation>) {
    return f(x, tag);
  } else {
    Evaluation ev;
    ev.value = static_cast<double>(f(x, tag));
    ev.semantic_mean = ev.value;
    return ev;
  }
}

// Runs fn(0..count-1) on up to `workers` threads. If any task throws, the
// exception of the lowest failing index is rethrown after all threads join.
inline void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(count);
  const auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) run(i);
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline constexpr std::uint64_t kDirectionStreamTag = 0x6e6573646972ULL;  // "nesdir"

// Latent directions for one iteration, drawn from per-direction streams so the
// draw does not depend on evaluation order or thread count.
inline std::vector<std::vector<double>> sample_directions(const NesConfig& cfg, const PerturbationBasis& basis, std::uint64_t iteration) {
  std::vector<std::vector<double>> dirs(static_cast<std::size_t>(cfg.population_n));
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    RngStream rng(cfg.seed, derive_stream_id({kDirectionStreamTag, iteration, i}));
    dirs[i].resize(basis.latent_dim());
    for (double& e : dirs[i]) e = rng.normal();
  }
  return dirs;
}

struct GradientEstimate {
  std::vector<double> gradient;
  std::vector<double> candidate_values;  // [J(+eps_0), J(-eps_0), J(+eps_1), ...]
  std::uint64_t oracle_queries = 0;
};

// (1 / (N sigma)) sum_i [J(theta + sigma eps_i) - J(theta - sigma eps_i)] eps_i
// for the given latent directions. Candidates are clipped to the box bounds
// before evaluation.
template <Objective F>
GradientEstimate estimate_gradient_with(std::span<const double> theta, const F& f, const NesConfig& cfg, const PerturbationBasis& basis,
                                        const std::vector<std::vector<double>>& directions, std::uint64_t iteration) {
  const std::size_t n = directions.size();
  const std::size_t dim = basis.dim();
  if (theta.size() != dim) throw InvalidArgument("estimate_gradient: theta size does not match perturbation basis");
  std::vector<Evaluation> evals(2 * n);
  parallel_for(2 * n, cfg.parallelism, [&](std::size_t j) {
    const std::size_t i = j / 2;
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    std::vector<double> x(dim);
    basis.expand(directions[i], x);
    for (std::size_t d = 0; d < dim; ++d) x[d] = std::clamp(theta[d] + sign * cfg.sigma * x[d], cfg.lower_bound, cfg.upper_bound);
    evals[j] = evaluate_objective(f, x, EvalTag{cfg.seed, iteration, j, i});
  });

  GradientEstimate out;
  out.candidate_values.reserve(2 * n);
  std::vector<double> latent(basis.latent_dim(), 0.0);
  const double scale = 1.0 / (static_cast<double>(n) * cfg.sigma);
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = evals[2 * i].value - evals[2 * i + 1].value;
    out.candidate_values.push_back(evals[2 * i].value);
    out.candidate_values.push_back(evals[2 * i + 1].value);
    out.oracle_queries += evals[2 * i].oracle_queries + evals[2 * i + 1].oracle_queries;
    if (diff == 0.0) continue;
    for (std::size_t d = 0; d < latent.size(); ++d) latent[d] += diff * directions[i][d];
  }
  for (double& g : latent) g *= scale;
  out.gradient.resize(dim);
  basis.expand(latent, out.gradient);
  return out;
}

template <Objective F>
GradientEstimate estimate_gradient(std::span<const double> theta, const F& f, const NesConfig& cfg, const PerturbationBasis& basis,
                                   std::uint64_t iteration) {
  return estimate_gradient_with(theta, f, cfg, basis, sample_directions(cfg, basis, iteration), iteration);
}

struct OptState {
  std::vector<double> theta;
  std::uint64_t iteration = 0;  // completed iterations
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best_theta;
  std::vector<double> loss_history;  // mean candidate loss per iteration
  std::vector<double> best_history;  // running minimum of loss_history
  std::uint64_t candidate_evals = 0;
  std::uint64_t oracle_queries = 0;

  static OptState initial(std::vector<double> theta) {
    OptState s;
    s.best_theta = theta;
    s.theta = std::move(theta);
    return s;
  }
};

// One update: theta <- clip(theta - alpha * g). The mean candidate loss of
// this iteration is attributed to the pre-update theta for best tracking.
// If an evaluation fails the input state is left untouched.
template <Objective F>
OptState step(const OptState& current, const F& f, const NesConfig& cfg, const PerturbationBasis& basis) {
  cfg.validate();
  if (current.iteration >= static_cast<std::uint64_t>(cfg.iterations)) throw InvalidArgument("nes::step: iteration budget exhausted");
  const GradientEstimate est = estimate_gradient(current.theta, f, cfg, basis, current.iteration);
  OptState state = current;

  double sum = 0.0;
  for (double v : est.candidate_values) sum += v;
  const double mean_loss = sum / static_cast<double>(est.candidate_values.size());
  if (mean_loss < state.best_loss) {
    state.best_loss = mean_loss;
    state.best_theta = state.theta;
  }
  for (std::size_t d = 0; d < state.theta.size(); ++d)
    state.theta[d] = std::clamp(state.theta[d] - cfg.alpha * est.gradient[d], cfg.lower_bound, cfg.upper_bound);

  state.loss_history.push_back(mean_loss);
  state.best_history.push_back(state.best_loss);
  state.candidate_evals += est.candidate_values.size();
  state.oracle_queries += est.oracle_queries;
  ++state.iteration;
  return state;
}

enum class Status { completed, early_stopped, plateaued, aborted, interrupted };

inline std::string_view to_string(Status s) {
  switch (s) {
    case Status::completed: return "completed";
    case Status::early_stopped: return "early_stopped";
    case Status::plateaued: return "plateaued";
    case Status::aborted: return "aborted";
    case Status::interrupted: return "interrupted";
  }
  return "unknown";
}

struct OptResult {
  Status status = Status::completed;
  OptState state;
  std::string message;
};

using CheckpointSink = std::function<void(const OptState&)>;

inline constexpr double kPlateauTolerance = 1e-4;

// Runs up to cfg.iterations updates. Oracle failures end the run with status
// `aborted` and the best state so far; a stop request ends it with
// `interrupted`. The sink sees every checkpoint_every-th state and the final one.
template <Objective F>
OptResult optimize(std::vector<double> initial, const F& f, const NesConfig& cfg, const PerturbationBasis& basis,
                   const CheckpointSink& sink = {}, std::stop_token stop = {}) {
  cfg.validate();
  OptResult result;
  result.state = OptState::initial(std::move(initial));
  double plateau_ref = std::numeric_limits<double>::infinity();
  std::uint64_t last_improvement = 0;

  const auto emit = [&](const OptState& s) {
    if (sink) sink(s);
  };

  while (result.state.iteration < static_cast<std::uint64_t>(cfg.iterations)) {
    if (stop.stop_requested()) {
      result.status = Status::interrupted;
      result.message = "stop requested after iteration " + std::to_string(result.state.iteration);
      emit(result.state);
      return result;
    }
    try {
      result.state = step(result.state, f, cfg, basis);
    } catch (const OracleError& e) {
      result.status = Status::aborted;
      result.message = e.what();
      emit(result.state);
      return result;
    }
    const auto& s = result.state;
    if (cfg.checkpoint_every > 0 && s.iteration % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0) emit(s);

    if (cfg.early_stop_loss && s.best_loss <= *cfg.early_stop_loss) {
      result.status = Status::early_stopped;
      break;
    }
    if (s.best_loss < plateau_ref - kPlateauTolerance) {
      plateau_ref = s.best_loss;
      last_improvement = s.iteration;
    }
    if (cfg.plateau_window && s.iteration - last_improvement >= static_cast<std::uint64_t>(*cfg.plateau_window)) {
      result.status = Status::plateaued;
      break;
    }
  }
  if (cfg.checkpoint_every == 0 || result.state.iteration % static_cast<std::uint64_t>(cfg.checkpoint_every) != 0) emit(result.state);
  return result;
}

}  // namespace advpatch::nes
