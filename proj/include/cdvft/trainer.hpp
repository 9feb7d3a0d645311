#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdvft/chain.hpp"
#include "cdvft/config.hpp"
#include "cdvft/error.hpp"
#include "cdvft/gradcheck.hpp"
#include "cdvft/types.hpp"

// Toy training harness: AdamW over the chain parameters on synthetic
// regression tasks with realizable targets.

namespace cdvft {

struct AdamWParams {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimizerState {
  AdamWParams hyper;
  std::vector<RealVector> m;
  std::vector<RealVector> v;
  std::uint64_t step = 0;

  OptimizerState() = default;
  explicit OptimizerState(AdamWParams h) : hyper(h) {}
};

/// One AdamW update in place. Moments are allocated lazily on the first step.
inline void adamw_step(OptimizerState& state, std::vector<std::span<double>> params,
                       const std::vector<RealVector>& grads) {
  detail::require_same_size(grads.size(), params.size(), "adamw_step gradient blocks");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  detail::require_same_size(state.m.size(), params.size(), "adamw_step moment blocks");
  for (std::size_t b = 0; b < params.size(); ++b) {
    detail::require_same_size(grads[b].size(), params[b].size(), "adamw_step gradient");
    detail::require_same_size(state.m[b].size(), params[b].size(), "adamw_step moment");
    for (double g : grads[b]) {
      if (!std::isfinite(g)) detail::fail(ErrorKind::kTrainingDiverged, "non-finite gradient");
    }
  }

  const AdamWParams& h = state.hyper;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(h.beta1, t);
  const double bias2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    std::span<double> p = params[b];
    RealVector& m = state.m[b];
    RealVector& v = state.v[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = grads[b][i];
      p[i] -= h.lr * h.weight_decay * p[i];
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

enum class TaskKind { kMatrixRecovery, kFrozenLinear };

constexpr std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::kMatrixRecovery ? "matrix-recovery" : "frozen-linear";
}

struct ToyTask {
  TaskKind kind = TaskKind::kMatrixRecovery;
  std::size_t batch = 64;
  std::size_t steps = 2000;
  std::uint32_t seed = 0;
  AdamWParams optimizer{};
  bool zero_target = false;       // delta_W* = 0
  std::size_t test_samples = 256;  // held-out inputs for frozen-linear
  std::size_t verify_every = 0;    // spot finite-difference check period, 0 = off
  std::size_t verify_coordinates = 8;
};

struct TrainLog {
  TaskKind kind = TaskKind::kMatrixRecovery;
  std::vector<double> losses;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double final_relative_error = 0.0;  // ||dense(ch) - target||_F / ||target||_F
  double initial_test_loss = 0.0;
  double final_test_loss = 0.0;
  std::size_t steps = 0;
  bool success = false;
  std::size_t verified_coordinates = 0;
  double gradcheck_max_rel_error = 0.0;
};

struct TrainResult {
  TrainLog log;
  FactorChain chain;
  DenseMatrix target;  // delta_W*
  DenseMatrix frozen;  // W, frozen-linear only
};

inline constexpr double kRecoveryTolerance = 1e-2;
inline constexpr double kFrozenLossFraction = 0.1;

namespace detail {

inline double frobenius(const DenseMatrix& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j) * m(i, j);
  return std::sqrt(s);
}

inline double relative_frobenius(const DenseMatrix& got, const DenseMatrix& want) {
  double diff = 0.0;
  for (std::size_t i = 0; i < want.rows(); ++i)
    for (std::size_t j = 0; j < want.cols(); ++j) diff += (got(i, j) - want(i, j)) * (got(i, j) - want(i, j));
  const double norm = frobenius(want);
  return norm > 0.0 ? std::sqrt(diff) / norm : std::sqrt(diff);
}

inline std::vector<RealVector> normal_batch(std::size_t count, std::size_t dim, std::mt19937_64& rng) {
  std::vector<RealVector> xs;
  xs.reserve(count);
  for (std::size_t b = 0; b < count; ++b) xs.push_back(normal_vector(dim, rng));
  return xs;
}

// Mean over batch and output coordinates of (prediction - target)^2.
// `base` (may be empty) is added to the chain output before comparison.
inline double batch_mse(const FactorChain& ch, const std::vector<RealVector>& xs, const std::vector<RealVector>& ys,
                        const std::vector<RealVector>& base) {
  const BatchChainForward fwd = chain_forward(ch, std::span<const RealVector>(xs));
  double s = 0.0;
  for (std::size_t b = 0; b < xs.size(); ++b) {
    for (std::size_t i = 0; i < ch.d_out(); ++i) {
      const double r = fwd.delta_h[b][i] + (base.empty() ? 0.0 : base[b][i]) - ys[b][i];
      s += r * r;
    }
  }
  return s / static_cast<double>(xs.size() * ch.d_out());
}

struct StepResult {
  double loss = 0.0;
  ChainGradients grads;
};

inline StepResult loss_and_gradients(const FactorChain& ch, const std::vector<RealVector>& xs,
                                     const std::vector<RealVector>& ys, const std::vector<RealVector>& base) {
  const BatchChainForward fwd = chain_forward(ch, std::span<const RealVector>(xs));
  const double scale = 1.0 / static_cast<double>(xs.size() * ch.d_out());
  std::vector<RealVector> d_out(xs.size(), RealVector(ch.d_out()));
  StepResult out;
  for (std::size_t b = 0; b < xs.size(); ++b) {
    for (std::size_t i = 0; i < ch.d_out(); ++i) {
      const double r = fwd.delta_h[b][i] + (base.empty() ? 0.0 : base[b][i]) - ys[b][i];
      out.loss += r * r * scale;
      d_out[b][i] = 2.0 * r * scale;
    }
  }
  if (!std::isfinite(out.loss)) fail(ErrorKind::kTrainingDiverged, "loss became non-finite");
  out.grads = chain_backward(ch, fwd.tape, std::span<const RealVector>(d_out));
  return out;
}

// Central differences on a few randomly chosen parameter coordinates.
inline double spot_check(FactorChain& ch, const ChainGradients& grads, const std::vector<RealVector>& xs,
                         const std::vector<RealVector>& ys, const std::vector<RealVector>& base,
                         std::size_t coordinates, std::mt19937_64& rng, std::size_t& checked) {
  std::uniform_int_distribution<std::size_t> pick_block(0, ch.shape().factor_count() - 1);
  double worst = 0.0;
  auto loss = [&] { return batch_mse(ch, xs, ys, base); };
  for (std::size_t n = 0; n < coordinates; ++n) {
    const std::size_t f = pick_block(rng);
    std::uniform_int_distribution<std::size_t> pick(0, grads.params[f].size() - 1);
    const std::size_t i = pick(rng);
    double scale = 0.0;
    for (double g : grads.params[f]) scale = std::max(scale, std::abs(g));
    double& coordinate = ch.mutable_parameter_block(f)[i];
    const double numeric = central_difference(loss, coordinate);
    worst = std::max(worst, gradient_rel_error(grads.params[f][i], numeric, scale));
    ++checked;
  }
  return worst;
}

inline void require_task(const AdapterConfig& cfg, const ToyTask& task, TaskKind kind) {
  if (task.kind != kind) fail(ErrorKind::kConfig, "task kind does not match the requested run");
  if (cfg.method != Method::kCdvft) fail(ErrorKind::kConfig, "training requires method cdvft");
  if (task.batch == 0) fail(ErrorKind::kConfig, "batch must be >= 1");
  cfg.validate();
}

// A random same-shape chain whose input diagonal is nonnegative. The adapter
// starts from a_1 = ones and a coordinate of a_1 whose target sign is negative
// has to pass through zero, which in practice strands the run in a poor basin.
// The target does not depend on the adapter's alpha.
inline DenseMatrix recovery_target(const ChainShape& shape, std::mt19937_64& rng) {
  FactorChain target = random_chain(shape, 1.0, rng);
  for (double& e : target.mutable_parameter_block(0)) e = std::abs(e);
  return reconstruct_dense(target);
}

// Shared AdamW loop; `make_batch` fills xs/ys/base for the next step.
template <typename MakeBatch>
void optimize(FactorChain& ch, const ToyTask& task, TrainLog& log, std::mt19937_64& rng, MakeBatch&& make_batch) {
  OptimizerState opt(task.optimizer);
  std::vector<RealVector> xs, ys, base;
  for (std::size_t step = 0; step < task.steps; ++step) {
    make_batch(xs, ys, base);
    StepResult r = loss_and_gradients(ch, xs, ys, base);
    log.losses.push_back(r.loss);
    if (task.verify_every > 0 && step % task.verify_every == 0) {
      log.gradcheck_max_rel_error =
          std::max(log.gradcheck_max_rel_error,
                   spot_check(ch, r.grads, xs, ys, base, task.verify_coordinates, rng, log.verified_coordinates));
    }
    adamw_step(opt, ch.mutable_parameters(), r.grads.params);
    for (std::span<const double> block : ch.parameters()) {
      for (double v : block) {
        if (!std::isfinite(v)) fail(ErrorKind::kTrainingDiverged, "parameters became non-finite");
      }
    }
  }
  log.steps = task.steps;
  if (!log.losses.empty()) {
    log.initial_loss = log.losses.front();
    log.final_loss = log.losses.back();
  }
}

}  // namespace detail

/// Fits a zero-initialized chain to delta_W* taken from a random chain of the
/// same shape, sampling fresh Gaussian inputs every step.
inline TrainResult run_matrix_recovery(const AdapterConfig& cfg, const ToyTask& task) {
  detail::require_task(cfg, task, TaskKind::kMatrixRecovery);
  std::mt19937_64 rng(task.seed);
  TrainResult out;
  out.log.kind = task.kind;
  out.chain = init_chain(cfg, rng, task.seed);
  const ChainShape shape = cfg.chain_shape();
  out.target = task.zero_target ? DenseMatrix(shape.d_out, shape.d_in)
                                : detail::recovery_target(shape, rng);

  detail::optimize(out.chain, task, out.log, rng, [&](auto& xs, auto& ys, auto& base) {
    xs = detail::normal_batch(task.batch, shape.d_in, rng);
    ys.clear();
    for (const RealVector& x : xs) ys.push_back(out.target.matvec(x));
    base.clear();
  });

  out.log.final_relative_error = detail::relative_frobenius(reconstruct_dense(out.chain), out.target);
  out.log.success = out.log.final_relative_error < kRecoveryTolerance;
  return out;
}

/// Trains only the adapter on top of a frozen random W toward W + delta_W*.
/// Success means held-out loss below a tenth of its initial value, or an
/// initial loss that is already zero and stays there.
inline TrainResult run_frozen_linear(const AdapterConfig& cfg, const ToyTask& task) {
  detail::require_task(cfg, task, TaskKind::kFrozenLinear);
  std::mt19937_64 rng(task.seed);
  TrainResult out;
  out.log.kind = task.kind;
  out.chain = init_chain(cfg, rng, task.seed);
  const ChainShape shape = cfg.chain_shape();

  out.frozen = DenseMatrix(shape.d_out, shape.d_in);
  std::normal_distribution<double> w_dist(0.0, 1.0 / std::sqrt(static_cast<double>(shape.d_in)));
  for (std::size_t i = 0; i < shape.d_out; ++i)
    for (std::size_t j = 0; j < shape.d_in; ++j) out.frozen(i, j) = w_dist(rng);
  out.target = task.zero_target ? DenseMatrix(shape.d_out, shape.d_in)
                                : detail::recovery_target(shape, rng);
  const DenseMatrix shifted = out.frozen + out.target;

  const std::vector<RealVector> test_x = detail::normal_batch(task.test_samples, shape.d_in, rng);
  std::vector<RealVector> test_y, test_base;
  for (const RealVector& x : test_x) {
    test_y.push_back(shifted.matvec(x));
    test_base.push_back(out.frozen.matvec(x));
  }
  out.log.initial_test_loss = detail::batch_mse(out.chain, test_x, test_y, test_base);

  detail::optimize(out.chain, task, out.log, rng, [&](auto& xs, auto& ys, auto& base) {
    xs = detail::normal_batch(task.batch, shape.d_in, rng);
    ys.clear();
    base.clear();
    for (const RealVector& x : xs) {
      ys.push_back(shifted.matvec(x));
      base.push_back(out.frozen.matvec(x));
    }
  });

  out.log.final_test_loss = detail::batch_mse(out.chain, test_x, test_y, test_base);
  out.log.final_relative_error = detail::relative_frobenius(reconstruct_dense(out.chain), out.target);
  out.log.success = out.log.initial_test_loss == 0.0
                        ? out.log.final_test_loss <= 1e-12
                        : out.log.final_test_loss < kFrozenLossFraction * out.log.initial_test_loss;
  return out;
}

inline TrainResult run_task(const AdapterConfig& cfg, const ToyTask& task) {
  return task.kind == TaskKind::kMatrixRecovery ? run_matrix_recovery(cfg, task) : run_frozen_linear(cfg, task);
}

}  // namespace cdvft
