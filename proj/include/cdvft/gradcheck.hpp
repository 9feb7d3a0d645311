#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cdvft/chain.hpp"
#include "cdvft/factors.hpp"

// Finite-difference verification of every analytic backward path.

namespace cdvft {

inline constexpr double kGradcheckStep = 1e-6;
inline constexpr double kGradcheckTolerance = 1e-5;

/// |analytic - numeric| relative to the larger magnitude, floored at 1e-3 of
/// the gradient's infinity norm so round-off-level coordinates stay meaningful.
inline double gradient_rel_error(double analytic, double numeric, double gradient_scale) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3 * gradient_scale, 1e-12});
  return std::abs(analytic - numeric) / denom;
}

inline double central_difference(const std::function<double()>& loss, double& coordinate,
                                  double step = kGradcheckStep) {
  const double saved = coordinate;
  coordinate = saved + step;
  const double up = loss();
  coordinate = saved - step;
  const double down = loss();
  coordinate = saved;
  return (up - down) / (2.0 * step);
}

struct GradcheckEntry {
  std::string kind;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline RealVector normal_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  RealVector v(n);
  for (double& e : v) e = dist(rng);
  return v;
}

inline void check_coordinates(GradcheckEntry& entry, const std::function<double()>& loss, RealVector& values,
                              const RealVector& analytic) {
  double scale = 0.0;
  for (double g : analytic) scale = std::max(scale, std::abs(g));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double numeric = central_difference(loss, values[i]);
    entry.max_rel_error = std::max(entry.max_rel_error, gradient_rel_error(analytic[i], numeric, scale));
    ++entry.coordinates;
  }
}

// FD over a chain's parameter block f, perturbing through mutable access.
inline void check_chain_block(GradcheckEntry& entry, FactorChain& ch, std::size_t f,
                              const std::function<double()>& loss, const RealVector& analytic) {
  double scale = 0.0;
  for (double g : analytic) scale = std::max(scale, std::abs(g));
  const std::size_t n = ch.parameters()[f].size();
  for (std::size_t i = 0; i < n; ++i) {
    double& coordinate = ch.mutable_parameter_block(f)[i];
    const double numeric = central_difference(loss, coordinate);
    entry.max_rel_error = std::max(entry.max_rel_error, gradient_rel_error(analytic[i], numeric, scale));
    ++entry.coordinates;
  }
}

}  // namespace detail

/// Checks diagonal, circulant, block-circulant and whole-chain gradients on
/// `trials` random instances of `shape` with L = v . output.
inline std::vector<GradcheckEntry> run_gradcheck(const ChainShape& shape, std::uint32_t seed, std::size_t trials = 1) {
  shape.validate();
  std::mt19937_64 rng(seed);
  GradcheckEntry diag{"diagonal"}, circ{"circulant"}, block{"block_circulant"};
  GradcheckEntry chain_params{"chain_parameters"}, chain_input{"chain_input"};
  const std::size_t dw = shape.d_work();

  for (std::size_t t = 0; t < trials; ++t) {
    {
      RealVector a = detail::normal_vector(dw, rng);
      RealVector x = detail::normal_vector(dw, rng);
      const RealVector v = detail::normal_vector(dw, rng);
      const FactorGradients g = DiagonalFactor(a).backward(x, v);
      auto loss = [&] { return detail::dot(v, DiagonalFactor(a).forward(x)); };
      detail::check_coordinates(diag, loss, a, g.d_params);
      detail::check_coordinates(diag, loss, x, g.d_input);
    }
    {
      RealVector c = detail::normal_vector(dw, rng);
      RealVector x = detail::normal_vector(dw, rng);
      const RealVector v = detail::normal_vector(dw, rng);
      const FactorGradients g = CirculantFactor(c).backward(x, v);
      auto loss = [&] { return detail::dot(v, CirculantFactor(c).forward(x)); };
      detail::check_coordinates(circ, loss, c, g.d_params);
      detail::check_coordinates(circ, loss, x, g.d_input);
    }
    if (shape.m >= 2) {
      const std::size_t count = BlockCirculantFactor::parameter_count(shape.d_out, shape.d_in, shape.p);
      RealVector gens = detail::normal_vector(count, rng);
      RealVector x = detail::normal_vector(shape.d_in, rng);
      const RealVector v = detail::normal_vector(shape.d_out, rng);
      const FactorGradients g = BlockCirculantFactor(shape.d_out, shape.d_in, shape.p, gens).backward(x, v);
      auto loss = [&] {
        return detail::dot(v, BlockCirculantFactor(shape.d_out, shape.d_in, shape.p, gens).forward(x));
      };
      detail::check_coordinates(block, loss, gens, g.d_params);
      detail::check_coordinates(block, loss, x, g.d_input);
    }
    {
      FactorChain ch = random_chain(shape, 1.0, rng);
      RealVector x = detail::normal_vector(shape.d_in, rng);
      const RealVector v = detail::normal_vector(shape.d_out, rng);
      ChainForward fwd = chain_forward(ch, x);
      const ChainGradients g = chain_backward(ch, fwd.tape, v);
      auto loss = [&] { return detail::dot(v, chain_forward(ch, x).delta_h); };
      for (std::size_t f = 0; f < shape.factor_count(); ++f) {
        detail::check_chain_block(chain_params, ch, f, loss, g.params[f]);
      }
      detail::check_coordinates(chain_input, loss, x, g.d_input());
    }
  }
  std::vector<GradcheckEntry> out{diag, circ};
  if (shape.m >= 2) out.push_back(block);
  out.push_back(chain_params);
  out.push_back(chain_input);
  return out;
}

}  // namespace cdvft
