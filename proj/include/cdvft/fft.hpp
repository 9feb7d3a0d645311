#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cdvft/error.hpp"
#include "cdvft/op_counts.hpp"
#include "cdvft/types.hpp"

// Length-n discrete Fourier transforms for arbitrary n >= 1.
//
//   fft(v)[p]  = sum_q v[q] exp(-2 pi i p q / n)          (no normalization)
//   ifft(V)[p] = (1/n) sum_q V[q] exp(+2 pi i p q / n)
//
// Lengths whose prime factors are all <= 13 run a Stockham mixed-radix
// transform; anything else goes through Bluestein's chirp-z reduction onto a
// power-of-two length.

namespace cdvft {
namespace detail {

inline constexpr std::size_t kMaxDirectRadix = 13;

class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n) {
    if (n_ == 0) fail(ErrorKind::kInvalidInput, "FFT length must be >= 1");
    std::size_t rest = n_;
    while (rest % 4 == 0) {
      radices_.push_back(4);
      rest /= 4;
    }
    while (rest % 2 == 0) {
      radices_.push_back(2);
      rest /= 2;
    }
    for (std::size_t p = 3; p <= kMaxDirectRadix; p += 2) {
      while (rest % p == 0) {
        radices_.push_back(p);
        rest /= p;
      }
    }
    if (rest != 1) {
      radices_.clear();
      init_bluestein();
      return;
    }
    roots_.resize(n_);
    for (std::size_t k = 0; k < n_; ++k) roots_[k] = unit_root(k, n_);
  }

  std::size_t size() const { return n_; }
  bool uses_bluestein() const { return inner_ != nullptr; }

  /// Unnormalized transform; `inverse` flips the exponent sign.
  void execute(std::span<const Complex> in, std::span<Complex> out, bool inverse) const {
    if (inner_) {
      bluestein(in, out, inverse);
      return;
    }
    ComplexVector a(in.begin(), in.end());
    ComplexVector b(n_);
    Complex* src = a.data();
    Complex* dst = b.data();
    std::size_t stride = 1;
    std::size_t len = n_;
    for (std::size_t radix : radices_) {
      const std::size_t m = len / radix;
      pass(src, dst, radix, m, stride, inverse);
      std::swap(src, dst);
      stride *= radix;
      len = m;
    }
    std::copy(src, src + n_, out.begin());
  }

 private:
  static Complex unit_root(std::size_t k, std::size_t n) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    return {std::cos(angle), std::sin(angle)};
  }

  Complex root(std::size_t k, bool inverse) const {
    return inverse ? std::conj(roots_[k]) : roots_[k];
  }

  // One Stockham stage: `stride` interleaved transforms of length radix * m.
  void pass(const Complex* src, Complex* dst, std::size_t radix, std::size_t m,
            std::size_t stride, bool inverse) const {
    std::array<Complex, kMaxDirectRadix + 3> a{};
    std::array<Complex, kMaxDirectRadix + 3> b{};
    const std::size_t radix_step = n_ / radix;
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < stride; ++k) {
        for (std::size_t q = 0; q < radix; ++q) a[q] = src[k + stride * (j + m * q)];
        butterfly(a.data(), b.data(), radix, radix_step, inverse);
        for (std::size_t t = 0; t < radix; ++t) {
          const Complex tw = root(j * t * stride, inverse);
          dst[k + stride * (t + radix * j)] = (j == 0 || t == 0) ? b[t] : b[t] * tw;
        }
      }
    }
  }

  void butterfly(const Complex* a, Complex* b, std::size_t radix, std::size_t radix_step,
                 bool inverse) const {
    if (radix == 2) {
      b[0] = a[0] + a[1];
      b[1] = a[0] - a[1];
      return;
    }
    if (radix == 4) {
      const Complex s02 = a[0] + a[2];
      const Complex d02 = a[0] - a[2];
      const Complex s13 = a[1] + a[3];
      const Complex d13 = a[1] - a[3];
      // -i * d13 for the forward sign, +i * d13 for the inverse.
      const Complex rot = inverse ? Complex(-d13.imag(), d13.real()) : Complex(d13.imag(), -d13.real());
      b[0] = s02 + s13;
      b[1] = d02 + rot;
      b[2] = s02 - s13;
      b[3] = d02 - rot;
      return;
    }
    for (std::size_t t = 0; t < radix; ++t) {
      Complex acc = a[0];
      for (std::size_t q = 1; q < radix; ++q) acc += a[q] * root(((q * t) % radix) * radix_step, inverse);
      b[t] = acc;
    }
  }

  void init_bluestein() {
    std::size_t m = 1;
    while (m < 2 * n_ - 1) m <<= 1;
    inner_ = std::make_unique<FftPlan>(m);
    chirp_.resize(n_);
    const std::size_t period = 2 * n_;
    for (std::size_t k = 0; k < n_; ++k) {
      // k^2 mod 2n keeps the angle small for large k.
      const std::size_t k2 = static_cast<std::size_t>(
          (static_cast<unsigned __int128>(k) * k) % period);
      const double angle = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n_);
      chirp_[k] = {std::cos(angle), std::sin(angle)};
    }
    ComplexVector filter(m, Complex{});
    filter[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n_; ++k) {
      filter[k] = std::conj(chirp_[k]);
      filter[m - k] = std::conj(chirp_[k]);
    }
    filter_spectrum_.resize(m);
    inner_->execute(filter, filter_spectrum_, false);
  }

  void bluestein(std::span<const Complex> in, std::span<Complex> out, bool inverse) const {
    const std::size_t m = inner_->size();
    ComplexVector work(m, Complex{});
    for (std::size_t k = 0; k < n_; ++k) {
      const Complex v = inverse ? std::conj(in[k]) : in[k];
      work[k] = v * chirp_[k];
    }
    ComplexVector spec(m);
    inner_->execute(work, spec, false);
    for (std::size_t k = 0; k < m; ++k) spec[k] *= filter_spectrum_[k];
    inner_->execute(spec, work, true);
    const double scale = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n_; ++k) {
      const Complex v = work[k] * scale * chirp_[k];
      out[k] = inverse ? std::conj(v) : v;
    }
  }

  std::size_t n_;
  std::vector<std::size_t> radices_;
  ComplexVector roots_;
  std::unique_ptr<FftPlan> inner_;
  ComplexVector chirp_;
  ComplexVector filter_spectrum_;
};

/// Process-wide plan cache. Plans are immutable once published.
inline std::shared_ptr<const FftPlan> plan_for(std::size_t n) {
  static std::mutex mutex;
  static std::unordered_map<std::size_t, std::shared_ptr<const FftPlan>> cache;
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
  }
  auto plan = std::make_shared<const FftPlan>(n);
  std::lock_guard<std::mutex> lock(mutex);
  auto [it, inserted] = cache.emplace(n, std::move(plan));
  return it->second;
}

inline void require_transformable(std::size_t n, bool finite, const char* what) {
  if (n == 0) fail(ErrorKind::kInvalidInput, std::string(what) + ": empty input");
  if (!finite) fail(ErrorKind::kInvalidInput, std::string(what) + ": non-finite input entry");
}

}  // namespace detail

inline ComplexVector fft(std::span<const Complex> v) {
  detail::require_transformable(v.size(), all_finite(v), "fft");
  ComplexVector out(v.size());
  detail::plan_for(v.size())->execute(v, out, false);
  detail::tally_fft(v.size(), false);
  return out;
}

inline ComplexVector fft(std::span<const double> v) {
  detail::require_transformable(v.size(), all_finite(v), "fft");
  ComplexVector in(v.begin(), v.end());
  ComplexVector out(v.size());
  detail::plan_for(v.size())->execute(in, out, false);
  detail::tally_fft(v.size(), false);
  return out;
}

inline ComplexVector ifft(std::span<const Complex> v) {
  detail::require_transformable(v.size(), all_finite(v), "ifft");
  ComplexVector out(v.size());
  detail::plan_for(v.size())->execute(v, out, true);
  const double scale = 1.0 / static_cast<double>(v.size());
  for (Complex& z : out) z *= scale;
  detail::tally_fft(v.size(), true);
  return out;
}

/// Real parts of `v`; any imaginary residue above `tol` means a kernel bug upstream.
inline RealVector real_part_strict(std::span<const Complex> v, double tol) {
  RealVector out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!(std::abs(v[k].imag()) <= tol)) {
      detail::fail(ErrorKind::kNumericalCorruption,
                   "imaginary residue " + std::to_string(v[k].imag()) + " at index " +
                       std::to_string(k) + " exceeds tolerance " + std::to_string(tol));
    }
    out[k] = v[k].real();
  }
  return out;
}

namespace detail {

// Tolerance for intermediates of real-in/real-out spectral products, scaled
// by the magnitude of the result.
inline RealVector real_part_checked(std::span<const Complex> v) {
  double scale = 1.0;
  for (const Complex& z : v) scale = std::max(scale, std::abs(z));
  return real_part_strict(v, 1e-9 * scale);
}

}  // namespace detail
}  // namespace cdvft
