#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cdvft/error.hpp"
#include "cdvft/fft.hpp"
#include "cdvft/op_counts.hpp"
#include "cdvft/types.hpp"

// Diagonal and (block-)circulant factors as linear operators with forward
// matvecs and parameter/input gradients.
//
// circ(c) has c as its first column: circ(c)[i][k] = c[(i - k) mod p], so
// circ(c) x is the circular convolution of c and x, evaluated as
// ifft(fft(c) * fft(x)).

namespace cdvft {

struct FactorGradients {
  RealVector d_params;
  RealVector d_input;
};

/// Batched gradients: parameter gradients summed over columns, one input gradient per column.
struct BatchFactorGradients {
  RealVector d_params;
  std::vector<RealVector> d_input;
};

using SpectrumPtr = std::shared_ptr<const ComplexVector>;

namespace detail {

inline void require_finite_values(std::span<const double> v, const char* what) {
  if (!all_finite(v)) {
    fail(ErrorKind::kInvalidInput, std::string(what) + ": non-finite entry");
  }
}

inline ComplexVector hadamard(std::span<const Complex> a, std::span<const Complex> b) {
  ComplexVector out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] * b[k];
  tally_complex_muls(a.size());
  return out;
}

inline ComplexVector conj_hadamard(std::span<const Complex> a, std::span<const Complex> b) {
  ComplexVector out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = std::conj(a[k]) * b[k];
  tally_complex_muls(a.size());
  return out;
}

inline void accumulate_hadamard(std::span<Complex> acc, std::span<const Complex> a,
                                std::span<const Complex> b, bool conj_a) {
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += (conj_a ? std::conj(a[k]) : a[k]) * b[k];
  tally_complex_muls(acc.size());
  tally_complex_adds(acc.size());
}

inline RealVector zero_extend(std::span<const double> x, std::size_t n) {
  RealVector out(n, 0.0);
  std::copy(x.begin(), x.end(), out.begin());
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

class DiagonalFactor {
 public:
  DiagonalFactor() = default;
  explicit DiagonalFactor(RealVector a) : a_(std::move(a)) {
    detail::require_finite_values(a_, "DiagonalFactor");
  }

  std::size_t size() const { return a_.size(); }
  std::span<const double> values() const { return a_; }
  std::span<double> mutable_values() {
    ++version_;
    return a_;
  }
  std::uint64_t version() const { return version_; }

  RealVector forward(std::span<const double> x) const {
    detail::require_same_size(x.size(), a_.size(), "diag_forward input");
    RealVector y(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) y[k] = a_[k] * x[k];
    detail::tally_real_muls(x.size());
    return y;
  }

  FactorGradients backward(std::span<const double> x, std::span<const double> d_out) const {
    detail::require_same_size(x.size(), a_.size(), "diag_backward input");
    detail::require_same_size(d_out.size(), a_.size(), "diag_backward output gradient");
    FactorGradients g{RealVector(a_.size()), RealVector(a_.size())};
    for (std::size_t k = 0; k < a_.size(); ++k) {
      g.d_params[k] = d_out[k] * x[k];
      g.d_input[k] = d_out[k] * a_[k];
    }
    detail::tally_real_muls(2 * a_.size());
    return g;
  }

  std::vector<RealVector> forward(std::span<const RealVector> xs) const {
    std::vector<RealVector> out;
    out.reserve(xs.size());
    for (const RealVector& x : xs) out.push_back(forward(x));
    return out;
  }

  BatchFactorGradients backward(std::span<const RealVector> xs,
                                std::span<const RealVector> d_outs) const {
    detail::require_same_size(d_outs.size(), xs.size(), "diag_backward batch");
    BatchFactorGradients g{RealVector(a_.size(), 0.0), {}};
    for (std::size_t b = 0; b < xs.size(); ++b) {
      FactorGradients col = backward(xs[b], d_outs[b]);
      for (std::size_t k = 0; k < a_.size(); ++k) g.d_params[k] += col.d_params[k];
      g.d_input.push_back(std::move(col.d_input));
    }
    return g;
  }

 private:
  RealVector a_;
  std::uint64_t version_ = 0;
};

// ---------------------------------------------------------------------------

class CirculantFactor {
 public:
  CirculantFactor() = default;
  explicit CirculantFactor(RealVector c) : c_(std::move(c)) {
    detail::require_finite_values(c_, "CirculantFactor");
  }

  std::size_t size() const { return c_.size(); }
  std::span<const double> values() const { return c_; }

  /// Write access; drops the cached spectrum.
  std::span<double> mutable_values() {
    ++version_;
    spectrum_cache_.reset();
    return c_;
  }
  std::uint64_t version() const { return version_; }

  bool has_cached_spectrum() const { return spectrum_cache_ != nullptr; }

  /// Computes and retains fft(c) until the next write (inference mode).
  const ComplexVector& cache_spectrum() {
    if (!spectrum_cache_) spectrum_cache_ = std::make_shared<const ComplexVector>(fft(c_));
    return *spectrum_cache_;
  }

  /// fft(c): the cached copy when present, otherwise freshly transformed.
  SpectrumPtr spectrum() const {
    if (spectrum_cache_) return spectrum_cache_;
    return std::make_shared<const ComplexVector>(fft(c_));
  }

  RealVector forward(std::span<const double> x) const {
    return forward(x, *spectrum(), nullptr);
  }

  /// Forward with an explicit generator spectrum; optionally hands back fft(x) for reuse.
  RealVector forward(std::span<const double> x, std::span<const Complex> gen_spectrum,
                     ComplexVector* input_spectrum) const {
    detail::require_same_size(x.size(), c_.size(), "circ_forward input");
    ComplexVector fx = fft(x);
    RealVector y = detail::real_part_checked(ifft(detail::hadamard(gen_spectrum, fx)));
    if (input_spectrum != nullptr) *input_spectrum = std::move(fx);
    return y;
  }

  FactorGradients backward(std::span<const double> x, std::span<const double> d_out) const {
    detail::require_same_size(x.size(), c_.size(), "circ_backward input");
    const ComplexVector fx = fft(x);
    return backward(*spectrum(), fx, d_out);
  }

  /// Backward reusing forward spectra: one FFT of d_out and two IFFTs.
  FactorGradients backward(std::span<const Complex> gen_spectrum,
                           std::span<const Complex> input_spectrum,
                           std::span<const double> d_out) const {
    detail::require_same_size(d_out.size(), c_.size(), "circ_backward output gradient");
    detail::require_same_size(gen_spectrum.size(), c_.size(), "circ_backward generator spectrum");
    detail::require_same_size(input_spectrum.size(), c_.size(), "circ_backward input spectrum");
    const ComplexVector fy = fft(d_out);
    FactorGradients g;
    g.d_input = detail::real_part_checked(ifft(detail::conj_hadamard(gen_spectrum, fy)));
    g.d_params = detail::real_part_checked(ifft(detail::conj_hadamard(input_spectrum, fy)));
    return g;
  }

  std::vector<RealVector> forward(std::span<const RealVector> xs) const {
    const SpectrumPtr fc = spectrum();
    std::vector<RealVector> out;
    out.reserve(xs.size());
    for (const RealVector& x : xs) out.push_back(forward(x, *fc, nullptr));
    return out;
  }

  BatchFactorGradients backward(std::span<const RealVector> xs,
                                std::span<const RealVector> d_outs) const {
    detail::require_same_size(d_outs.size(), xs.size(), "circ_backward batch");
    const SpectrumPtr fc = spectrum();
    BatchFactorGradients g{RealVector(c_.size(), 0.0), {}};
    for (std::size_t b = 0; b < xs.size(); ++b) {
      detail::require_same_size(xs[b].size(), c_.size(), "circ_backward input");
      FactorGradients col = backward(*fc, fft(xs[b]), d_outs[b]);
      for (std::size_t k = 0; k < c_.size(); ++k) g.d_params[k] += col.d_params[k];
      g.d_input.push_back(std::move(col.d_input));
    }
    return g;
  }

 private:
  RealVector c_;
  SpectrumPtr spectrum_cache_;
  std::uint64_t version_ = 0;
};

// ---------------------------------------------------------------------------

/// q1 x q2 grid of p x p circulant blocks mapping d_in -> d_out.
/// Inputs are zero-extended to q2*p and outputs truncated from q1*p.
/// Generators are stored row-major by block: block (i, j) occupies
/// [(i*q2 + j)*p, (i*q2 + j + 1)*p).
class BlockCirculantFactor {
 public:
  BlockCirculantFactor() = default;
  BlockCirculantFactor(std::size_t d_out, std::size_t d_in, std::size_t p, RealVector generators)
      : d_out_(d_out), d_in_(d_in), p_(p), generators_(std::move(generators)) {
    if (p_ == 0 || d_out_ == 0 || d_in_ == 0) {
      detail::fail(ErrorKind::kConfig, "BlockCirculantFactor: dimensions and block size must be >= 1");
    }
    q1_ = (d_out_ + p_ - 1) / p_;
    q2_ = (d_in_ + p_ - 1) / p_;
    detail::require_same_size(generators_.size(), q1_ * q2_ * p_, "BlockCirculantFactor generators");
    detail::require_finite_values(generators_, "BlockCirculantFactor");
  }

  static std::size_t parameter_count(std::size_t d_out, std::size_t d_in, std::size_t p) {
    return ((d_out + p - 1) / p) * ((d_in + p - 1) / p) * p;
  }

  std::size_t d_out() const { return d_out_; }
  std::size_t d_in() const { return d_in_; }
  std::size_t block_size() const { return p_; }
  std::size_t block_rows() const { return q1_; }
  std::size_t block_cols() const { return q2_; }

  std::span<const double> values() const { return generators_; }
  std::span<double> mutable_values() {
    ++version_;
    spectra_cache_.reset();
    return generators_;
  }
  std::uint64_t version() const { return version_; }

  std::span<const double> block(std::size_t i, std::size_t j) const {
    return std::span<const double>(generators_).subspan((i * q2_ + j) * p_, p_);
  }

  using Spectra = std::shared_ptr<const std::vector<ComplexVector>>;

  bool has_cached_spectra() const { return spectra_cache_ != nullptr; }
  void cache_spectra() {
    if (!spectra_cache_) spectra_cache_ = compute_spectra();
  }

  /// fft(c_ij) for every block, row-major.
  Spectra spectra() const { return spectra_cache_ ? spectra_cache_ : compute_spectra(); }

  RealVector forward(std::span<const double> x) const { return forward(x, *spectra(), nullptr); }

  /// Hoisted form: h_i = ifft(sum_j fft(c_ij) * fft(x_j)), one IFFT per block row.
  RealVector forward(std::span<const double> x, const std::vector<ComplexVector>& gen_spectra,
                     std::vector<ComplexVector>* input_spectra) const {
    std::vector<ComplexVector> fx = block_input_spectra(x);
    RealVector y(d_out_);
    for (std::size_t i = 0; i < q1_; ++i) {
      ComplexVector acc = detail::hadamard(gen_spectra[i * q2_], fx[0]);
      for (std::size_t j = 1; j < q2_; ++j) {
        detail::accumulate_hadamard(acc, gen_spectra[i * q2_ + j], fx[j], false);
      }
      const RealVector h = detail::real_part_checked(ifft(acc));
      for (std::size_t r = 0; r < p_ && i * p_ + r < d_out_; ++r) y[i * p_ + r] = h[r];
    }
    if (input_spectra != nullptr) *input_spectra = std::move(fx);
    return y;
  }

  FactorGradients backward(std::span<const double> x, std::span<const double> d_out) const {
    return backward(*spectra(), block_input_spectra(x), d_out);
  }

  /// fft of each zero-extended input block x_j.
  std::vector<ComplexVector> block_input_spectra(std::span<const double> x) const {
    detail::require_same_size(x.size(), d_in_, "block circulant input");
    const RealVector padded = detail::zero_extend(x, q2_ * p_);
    std::vector<ComplexVector> fx;
    fx.reserve(q2_);
    for (std::size_t j = 0; j < q2_; ++j) {
      fx.push_back(fft(std::span<const double>(padded).subspan(j * p_, p_)));
    }
    return fx;
  }

  /// Reuses forward spectra: q1 FFTs, q1*q2 IFFTs for generator gradients and
  /// q2 hoisted IFFTs for the input gradient.
  FactorGradients backward(const std::vector<ComplexVector>& gen_spectra,
                           const std::vector<ComplexVector>& input_spectra,
                           std::span<const double> d_out) const {
    detail::require_same_size(d_out.size(), d_out_, "block_circ_backward output gradient");
    detail::require_same_size(gen_spectra.size(), q1_ * q2_, "block_circ_backward generator spectra");
    detail::require_same_size(input_spectra.size(), q2_, "block_circ_backward input spectra");
    const RealVector g_padded = detail::zero_extend(d_out, q1_ * p_);
    std::vector<ComplexVector> fg;
    fg.reserve(q1_);
    for (std::size_t i = 0; i < q1_; ++i) {
      fg.push_back(fft(std::span<const double>(g_padded).subspan(i * p_, p_)));
    }

    FactorGradients g{RealVector(generators_.size()), RealVector(d_in_)};
    for (std::size_t i = 0; i < q1_; ++i) {
      for (std::size_t j = 0; j < q2_; ++j) {
        const RealVector dc =
            detail::real_part_checked(ifft(detail::conj_hadamard(input_spectra[j], fg[i])));
        std::copy(dc.begin(), dc.end(), g.d_params.begin() + static_cast<std::ptrdiff_t>((i * q2_ + j) * p_));
      }
    }
    for (std::size_t j = 0; j < q2_; ++j) {
      ComplexVector acc = detail::conj_hadamard(gen_spectra[j], fg[0]);
      for (std::size_t i = 1; i < q1_; ++i) {
        detail::accumulate_hadamard(acc, gen_spectra[i * q2_ + j], fg[i], true);
      }
      const RealVector dx = detail::real_part_checked(ifft(acc));
      for (std::size_t r = 0; r < p_ && j * p_ + r < d_in_; ++r) g.d_input[j * p_ + r] = dx[r];
    }
    return g;
  }

  std::vector<RealVector> forward(std::span<const RealVector> xs) const {
    const Spectra fc = spectra();
    std::vector<RealVector> out;
    out.reserve(xs.size());
    for (const RealVector& x : xs) out.push_back(forward(x, *fc, nullptr));
    return out;
  }

  BatchFactorGradients backward(std::span<const RealVector> xs,
                                std::span<const RealVector> d_outs) const {
    detail::require_same_size(d_outs.size(), xs.size(), "block_circ_backward batch");
    const Spectra fc = spectra();
    BatchFactorGradients g{RealVector(generators_.size(), 0.0), {}};
    for (std::size_t b = 0; b < xs.size(); ++b) {
      FactorGradients col = backward(*fc, block_input_spectra(xs[b]), d_outs[b]);
      for (std::size_t k = 0; k < g.d_params.size(); ++k) g.d_params[k] += col.d_params[k];
      g.d_input.push_back(std::move(col.d_input));
    }
    return g;
  }

 private:
  Spectra compute_spectra() const {
    auto out = std::make_shared<std::vector<ComplexVector>>();
    out->reserve(q1_ * q2_);
    for (std::size_t i = 0; i < q1_; ++i) {
      for (std::size_t j = 0; j < q2_; ++j) out->push_back(fft(block(i, j)));
    }
    return out;
  }

  std::size_t d_out_ = 0;
  std::size_t d_in_ = 0;
  std::size_t p_ = 0;
  std::size_t q1_ = 0;
  std::size_t q2_ = 0;
  RealVector generators_;
  Spectra spectra_cache_;
  std::uint64_t version_ = 0;
};

// Free-function spellings of the factor operations.

inline RealVector diag_forward(const DiagonalFactor& f, std::span<const double> x) { return f.forward(x); }
inline FactorGradients diag_backward(const DiagonalFactor& f, std::span<const double> x,
                                     std::span<const double> d_out) {
  return f.backward(x, d_out);
}
inline RealVector circ_forward(const CirculantFactor& f, std::span<const double> x) { return f.forward(x); }
inline FactorGradients circ_backward(const CirculantFactor& f, std::span<const double> x,
                                     std::span<const double> d_out) {
  return f.backward(x, d_out);
}
inline RealVector block_circ_forward(const BlockCirculantFactor& f, std::span<const double> x) {
  return f.forward(x);
}
inline FactorGradients block_circ_backward(const BlockCirculantFactor& f, std::span<const double> x,
                                           std::span<const double> d_out) {
  return f.backward(x, d_out);
}

}  // namespace cdvft
