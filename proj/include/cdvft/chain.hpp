#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdvft/config.hpp"
#include "cdvft/error.hpp"
#include "cdvft/factors.hpp"
#include "cdvft/types.hpp"

// The CDVFT adapter: delta_W = alpha * A_{2m-1} C_{2m-2} ... A_3 C_2 A_1,
// applied right to left without ever materializing delta_W.

namespace cdvft {

class FactorChain {
 public:
  FactorChain() = default;

  /// `parameters` holds one vector per factor in canonical order
  /// a_1, c_2 (block grid, row-major), a_3, c_4, ..., a_{2m-1}.
  FactorChain(ChainShape shape, double alpha, std::vector<RealVector> parameters,
              std::uint32_t seed = 0)
      : shape_(shape), alpha_(alpha), seed_(seed) {
    shape_.validate();
    if (!std::isfinite(alpha_)) detail::fail(ErrorKind::kConfig, "alpha must be finite");
    const std::vector<std::size_t> sizes = shape_.parameter_sizes();
    detail::require_same_size(parameters.size(), sizes.size(), "FactorChain parameter blocks");
    for (std::size_t f = 0; f < sizes.size(); ++f) {
      detail::require_same_size(parameters[f].size(), sizes[f], "FactorChain parameter block");
    }
    for (std::size_t f = 0; f < sizes.size(); ++f) {
      if (f % 2 == 0) {
        diagonals_.emplace_back(std::move(parameters[f]));
      } else if (f == 1) {
        block_ = BlockCirculantFactor(shape_.d_work(), shape_.input_width(), shape_.p,
                                      std::move(parameters[f]));
      } else {
        circulants_.emplace_back(std::move(parameters[f]));
      }
    }
  }

  const ChainShape& shape() const { return shape_; }
  double alpha() const { return alpha_; }
  void set_alpha(double alpha) {
    if (!std::isfinite(alpha)) detail::fail(ErrorKind::kConfig, "alpha must be finite");
    alpha_ = alpha;
    ++alpha_version_;
  }
  std::uint32_t seed() const { return seed_; }

  std::size_t d_in() const { return shape_.d_in; }
  std::size_t d_out() const { return shape_.d_out; }
  std::size_t m() const { return shape_.m; }

  /// A_{2j+1}, j in [0, m).
  const DiagonalFactor& diagonal(std::size_t j) const { return diagonals_.at(j); }
  /// C_2, the (possibly blocked) first circulant. Requires m >= 2.
  const BlockCirculantFactor& input_circulant() const {
    if (shape_.m < 2) detail::fail(ErrorKind::kShape, "chain with m = 1 has no circulant factor");
    return block_;
  }
  /// C_{2k+4}, k in [0, m-2): the square circulants after C_2.
  const CirculantFactor& circulant(std::size_t k) const { return circulants_.at(k); }

  std::size_t parameter_count() const { return shape_.parameter_count(); }

  std::vector<std::span<const double>> parameters() const {
    std::vector<std::span<const double>> out;
    for (std::size_t f = 0; f < shape_.factor_count(); ++f) out.push_back(factor_values(f));
    return out;
  }

  /// Write access to every parameter block; invalidates tapes and spectrum caches.
  std::vector<std::span<double>> mutable_parameters() {
    std::vector<std::span<double>> out;
    for (std::size_t f = 0; f < shape_.factor_count(); ++f) {
      if (f % 2 == 0) {
        out.push_back(diagonals_[f / 2].mutable_values());
      } else if (f == 1) {
        out.push_back(block_.mutable_values());
      } else {
        out.push_back(circulants_[(f - 3) / 2].mutable_values());
      }
    }
    return out;
  }

  std::span<double> mutable_parameter_block(std::size_t f) {
    if (f >= shape_.factor_count()) detail::fail(ErrorKind::kShape, "factor index out of range");
    if (f % 2 == 0) return diagonals_[f / 2].mutable_values();
    if (f == 1) return block_.mutable_values();
    return circulants_[(f - 3) / 2].mutable_values();
  }

  /// Changes whenever any parameter or alpha is written.
  std::uint64_t generation() const {
    std::uint64_t g = alpha_version_;
    for (const auto& d : diagonals_) g += d.version();
    for (const auto& c : circulants_) g += c.version();
    return g + block_.version();
  }

  /// Precompute generator spectra for repeated inference.
  void cache_spectra() {
    if (shape_.m >= 2) block_.cache_spectra();
    for (auto& c : circulants_) c.cache_spectrum();
  }

 private:
  std::span<const double> factor_values(std::size_t f) const {
    if (f % 2 == 0) return diagonals_[f / 2].values();
    if (f == 1) return block_.values();
    return circulants_[(f - 3) / 2].values();
  }

  ChainShape shape_{};
  double alpha_ = 1.0;
  std::uint32_t seed_ = 0;
  std::uint64_t alpha_version_ = 0;
  std::vector<DiagonalFactor> diagonals_;
  BlockCirculantFactor block_;
  std::vector<CirculantFactor> circulants_;
};

/// Everything backward needs from one forward episode.
struct ChainTape {
  const FactorChain* chain = nullptr;
  std::uint64_t generation = 0;
  // intermediates[b][k] = y_k for column b, k = 0..2m-1; y_0 is the zero-extended input.
  std::vector<std::vector<RealVector>> intermediates;
  BlockCirculantFactor::Spectra block_spectra;     // fft(c_ij) of C_2
  std::vector<SpectrumPtr> circulant_spectra;      // fft(c) of C_4, C_6, ...
  // input_spectra[b][k]: spectra of the input to circulant position k (q2 blocks for k = 0).
  std::vector<std::vector<std::vector<ComplexVector>>> input_spectra;

  std::size_t columns() const { return intermediates.size(); }
};

struct ChainForward {
  RealVector delta_h;
  ChainTape tape;
};

struct BatchChainForward {
  std::vector<RealVector> delta_h;
  ChainTape tape;
};

struct ChainGradients {
  std::vector<RealVector> params;     // canonical factor order
  std::vector<RealVector> d_inputs;   // one per batch column

  const RealVector& diagonal(std::size_t j) const { return params.at(2 * j); }
  const RealVector& circulant(std::size_t k) const { return params.at(2 * k + 1); }
  const RealVector& d_input() const { return d_inputs.at(0); }
};

inline BatchChainForward chain_forward(const FactorChain& ch, std::span<const RealVector> xs) {
  const ChainShape& s = ch.shape();
  BatchChainForward out;
  ChainTape& tape = out.tape;
  tape.chain = &ch;
  tape.generation = ch.generation();
  if (s.m >= 2) tape.block_spectra = ch.input_circulant().spectra();
  for (std::size_t k = 0; k + 2 < s.m; ++k) tape.circulant_spectra.push_back(ch.circulant(k).spectrum());

  for (const RealVector& x : xs) {
    detail::require_same_size(x.size(), s.d_in, "chain_forward input");
    std::vector<RealVector> ys;
    std::vector<std::vector<ComplexVector>> spectra;
    ys.reserve(2 * s.m);
    ys.push_back(detail::zero_extend(x, s.input_width()));
    for (std::size_t f = 0; f < s.factor_count(); ++f) {
      const RealVector& in = ys.back();
      if (f % 2 == 0) {
        ys.push_back(ch.diagonal(f / 2).forward(in));
      } else if (f == 1) {
        std::vector<ComplexVector> fx;
        ys.push_back(ch.input_circulant().forward(in, *tape.block_spectra, &fx));
        spectra.push_back(std::move(fx));
      } else {
        const std::size_t k = (f - 3) / 2;
        ComplexVector fx;
        ys.push_back(ch.circulant(k).forward(in, *tape.circulant_spectra[k], &fx));
        spectra.push_back({std::move(fx)});
      }
    }
    RealVector delta(s.d_out);
    const RealVector& last = ys.back();
    for (std::size_t i = 0; i < s.d_out; ++i) delta[i] = ch.alpha() * last[i];
    detail::tally_scale_muls(s.d_out);
    out.delta_h.push_back(std::move(delta));
    tape.intermediates.push_back(std::move(ys));
    tape.input_spectra.push_back(std::move(spectra));
  }
  return out;
}

inline ChainForward chain_forward(const FactorChain& ch, std::span<const double> x) {
  const std::vector<RealVector> xs{RealVector(x.begin(), x.end())};
  BatchChainForward batch = chain_forward(ch, std::span<const RealVector>(xs));
  return ChainForward{std::move(batch.delta_h.front()), std::move(batch.tape)};
}

/// Walks the factors from A_{2m-1} back to A_1. Parameter gradients are summed
/// over batch columns; input gradients are returned per column.
inline ChainGradients chain_backward(const FactorChain& ch, const ChainTape& tape,
                                     std::span<const RealVector> d_delta_h) {
  if (tape.chain != &ch || tape.generation != ch.generation()) {
    detail::fail(ErrorKind::kInvalidTape,
                 "tape does not match the chain's current parameters (stale or foreign tape)");
  }
  detail::require_same_size(d_delta_h.size(), tape.columns(), "chain_backward batch");
  const ChainShape& s = ch.shape();
  ChainGradients grads;
  for (std::size_t size : s.parameter_sizes()) grads.params.emplace_back(size, 0.0);

  for (std::size_t b = 0; b < tape.columns(); ++b) {
    detail::require_same_size(d_delta_h[b].size(), s.d_out, "chain_backward output gradient");
    const std::vector<RealVector>& ys = tape.intermediates[b];
    RealVector g(s.d_work(), 0.0);
    for (std::size_t i = 0; i < s.d_out; ++i) g[i] = ch.alpha() * d_delta_h[b][i];
    detail::tally_scale_muls(s.d_out);

    for (std::size_t f = s.factor_count(); f-- > 0;) {
      const RealVector& in = ys[f];
      FactorGradients fg;
      if (f % 2 == 0) {
        fg = ch.diagonal(f / 2).backward(in, g);
      } else if (f == 1) {
        fg = ch.input_circulant().backward(*tape.block_spectra, tape.input_spectra[b][0], g);
      } else {
        const std::size_t k = (f - 3) / 2;
        fg = ch.circulant(k).backward(*tape.circulant_spectra[k], tape.input_spectra[b][k + 1][0], g);
      }
      RealVector& acc = grads.params[f];
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += fg.d_params[i];
      g = std::move(fg.d_input);
    }
    g.resize(s.d_in);
    grads.d_inputs.push_back(std::move(g));
  }
  return grads;
}

inline ChainGradients chain_backward(const FactorChain& ch, const ChainTape& tape,
                                     std::span<const double> d_delta_h) {
  const std::vector<RealVector> gs{RealVector(d_delta_h.begin(), d_delta_h.end())};
  return chain_backward(ch, tape, std::span<const RealVector>(gs));
}

/// h' = W x + delta_h.
inline RealVector adapter_apply(const DenseMatrix& w, const FactorChain& ch, std::span<const double> x) {
  if (w.rows() != ch.d_out() || w.cols() != ch.d_in()) {
    detail::fail(ErrorKind::kShape, "adapter_apply: W must be d_out x d_in");
  }
  RealVector h = w.matvec(x);
  const RealVector delta = chain_forward(ch, x).delta_h;
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += delta[i];
  return h;
}

namespace detail {

inline DenseMatrix dense_circulant(std::span<const double> c) {
  const std::size_t p = c.size();
  DenseMatrix m(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < p; ++k) m(i, k) = c[(i + p - k) % p];
  }
  return m;
}

inline DenseMatrix dense_block_circulant(const BlockCirculantFactor& f) {
  const std::size_t p = f.block_size();
  DenseMatrix m(f.block_rows() * p, f.block_cols() * p);
  for (std::size_t bi = 0; bi < f.block_rows(); ++bi) {
    for (std::size_t bj = 0; bj < f.block_cols(); ++bj) {
      const auto c = f.block(bi, bj);
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t k = 0; k < p; ++k) m(bi * p + i, bj * p + k) = c[(i + p - k) % p];
      }
    }
  }
  return m;
}

// diag(a) * m, as a row scaling.
inline DenseMatrix scale_rows(std::span<const double> a, DenseMatrix m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) *= a[i];
  }
  return m;
}

}  // namespace detail

/// Materializes alpha * A_{2m-1} ... C_2 A_1 as a d_out x d_in matrix.
inline DenseMatrix reconstruct_dense(const FactorChain& ch) {
  const ChainShape& s = ch.shape();
  DenseMatrix acc(s.input_width(), s.input_width());
  for (std::size_t i = 0; i < s.input_width(); ++i) acc(i, i) = ch.diagonal(0).values()[i];
  for (std::size_t f = 1; f < s.factor_count(); ++f) {
    if (f % 2 == 0) {
      acc = detail::scale_rows(ch.diagonal(f / 2).values(), std::move(acc));
    } else if (f == 1) {
      acc = detail::dense_block_circulant(ch.input_circulant()) * acc;
    } else {
      acc = detail::dense_circulant(ch.circulant((f - 3) / 2).values()) * acc;
    }
  }
  DenseMatrix out(s.d_out, s.d_in);
  for (std::size_t i = 0; i < s.d_out; ++i) {
    for (std::size_t j = 0; j < s.d_in; ++j) out(i, j) = ch.alpha() * acc(i, j);
  }
  return out;
}

inline DenseMatrix merge(const DenseMatrix& w, const FactorChain& ch) {
  if (w.rows() != ch.d_out() || w.cols() != ch.d_in()) {
    detail::fail(ErrorKind::kShape, "merge: W must be d_out x d_in");
  }
  return w + reconstruct_dense(ch);
}

struct InitOptions {
  bool random_interior_diagonals = false;
  // Standard deviation of circulant generator entries; <= 0 selects 1/sqrt(p).
  double generator_scale = 0.0;
};

/// Deterministic zero-output initialization: a_1 and interior diagonals are
/// ones, generators are N(0, 1/p), and a_{2m-1} is zero so delta_W = 0.
/// Draws from `rng`, so a caller can keep one generator for a whole run.
inline FactorChain init_chain(const AdapterConfig& cfg, std::mt19937_64& rng, std::uint32_t seed,
                              const InitOptions& options = {}) {
  if (cfg.method != Method::kCdvft) detail::fail(ErrorKind::kConfig, "init_chain requires method cdvft");
  cfg.validate();
  const ChainShape shape = cfg.chain_shape();
  const double scale =
      options.generator_scale > 0.0 ? options.generator_scale : 1.0 / std::sqrt(static_cast<double>(shape.p));
  std::normal_distribution<double> generator(0.0, scale);
  std::normal_distribution<double> interior(1.0, 0.1);

  std::vector<RealVector> params;
  const std::vector<std::size_t> sizes = shape.parameter_sizes();
  for (std::size_t f = 0; f < sizes.size(); ++f) {
    RealVector v(sizes[f]);
    if (f + 1 == sizes.size()) {
      std::fill(v.begin(), v.end(), 0.0);
    } else if (f % 2 == 1) {
      for (double& e : v) e = generator(rng);
    } else if (f > 0 && options.random_interior_diagonals) {
      for (double& e : v) e = interior(rng);
    } else {
      std::fill(v.begin(), v.end(), 1.0);
    }
    params.push_back(std::move(v));
  }
  return FactorChain(shape, cfg.alpha, std::move(params), seed);
}

inline FactorChain init_chain(const AdapterConfig& cfg, std::uint32_t seed, const InitOptions& options = {}) {
  std::mt19937_64 rng(seed);
  return init_chain(cfg, rng, seed, options);
}

/// Chain with every factor random: diagonals N(0, 1), generators N(0, 1/p).
/// Used for realizable targets and gradient checks.
inline FactorChain random_chain(const ChainShape& shape, double alpha, std::mt19937_64& rng) {
  shape.validate();
  std::normal_distribution<double> diag(0.0, 1.0);
  std::normal_distribution<double> generator(0.0, 1.0 / std::sqrt(static_cast<double>(shape.p)));
  std::vector<RealVector> params;
  const std::vector<std::size_t> sizes = shape.parameter_sizes();
  for (std::size_t f = 0; f < sizes.size(); ++f) {
    RealVector v(sizes[f]);
    for (double& e : v) e = (f % 2 == 0) ? diag(rng) : generator(rng);
    params.push_back(std::move(v));
  }
  return FactorChain(shape, alpha, std::move(params));
}

}  // namespace cdvft
