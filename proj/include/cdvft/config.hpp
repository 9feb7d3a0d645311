#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdvft/error.hpp"

namespace cdvft {

enum class Method { kCdvft, kLora, kVera, kFourierFt, kFullFinetune };

constexpr std::string_view to_string(Method method) {
  switch (method) {
    case Method::kCdvft: return "cdvft";
    case Method::kLora: return "lora";
    case Method::kVera: return "vera";
    case Method::kFourierFt: return "fourierft";
    case Method::kFullFinetune: return "ff";
  }
  return "unknown";
}

inline std::optional<Method> parse_method(std::string_view name) {
  for (Method m : {Method::kCdvft, Method::kLora, Method::kVera, Method::kFourierFt,
                   Method::kFullFinetune}) {
    if (name == to_string(m)) return m;
  }
  return std::nullopt;
}

/// Geometry of one CDVFT factor chain mapping d_in -> d_out.
///
/// The first circulant is a q1 x q2 block grid (q1 = ceil(d_out/p),
/// q2 = ceil(d_in/p)); every later factor is square at d_work = q1*p. The
/// input diagonal acts on the zero-extended input of width q2*p. With m = 1
/// the chain is a single diagonal and requires d_in == d_out.
struct ChainShape {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t p = 0;
  std::size_t m = 0;

  std::size_t q1() const { return (d_out + p - 1) / p; }
  std::size_t q2() const { return (d_in + p - 1) / p; }
  std::size_t d_work() const { return m == 1 ? d_in : q1() * p; }
  std::size_t input_width() const { return m == 1 ? d_in : q2() * p; }
  std::size_t factor_count() const { return 2 * m - 1; }

  /// Parameter vector lengths in canonical order a_1, c_2, a_3, c_4, ..., a_{2m-1}.
  std::vector<std::size_t> parameter_sizes() const {
    std::vector<std::size_t> sizes;
    sizes.push_back(input_width());
    for (std::size_t f = 1; f < factor_count(); ++f) {
      if (f == 1) {
        sizes.push_back(q1() * q2() * p);
      } else {
        sizes.push_back(d_work());
      }
    }
    return sizes;
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (std::size_t s : parameter_sizes()) total += s;
    return total;
  }

  void validate() const {
    auto bad = [](const std::string& msg) { detail::fail(ErrorKind::kConfig, msg); };
    if (d_in == 0 || d_out == 0) bad("chain dimensions must be >= 1");
    if (m == 0) bad("m must be >= 1");
    if (p == 0) bad("block size p must be >= 1");
    if (p > std::max(d_in, d_out)) {
      bad("block size p=" + std::to_string(p) + " exceeds max(d_out, d_in)");
    }
    if (m == 1 && d_in != d_out) bad("m = 1 (single diagonal) requires d_in == d_out");
    if (m > d_work()) {
      bad("m=" + std::to_string(m) + " exceeds working dimension " + std::to_string(d_work()));
    }
  }

  friend bool operator==(const ChainShape&, const ChainShape&) = default;
};

struct AdapterConfig {
  Method method = Method::kCdvft;
  std::size_t d_out = 0;
  std::size_t d_in = 0;
  std::size_t layers = 1;  // number of adapted weight matrices
  std::size_t m = 0;       // CDVFT diagonal count
  std::size_t p = 0;       // CDVFT block size
  std::size_t r = 0;       // LoRA / VeRA rank
  std::size_t n_coeffs = 0;  // FourierFT spectral coefficients
  double alpha = 1.0;
  // Treat generator spectra as precomputed (inference); training cost otherwise.
  bool amortize_spectra = false;

  ChainShape chain_shape() const { return ChainShape{d_in, d_out, p, m}; }

  void validate() const {
    auto bad = [](const std::string& msg) { detail::fail(ErrorKind::kConfig, msg); };
    if (d_in == 0 || d_out == 0) bad("d_out and d_in must be >= 1");
    if (layers == 0) bad("layer count must be >= 1");
    switch (method) {
      case Method::kCdvft:
        chain_shape().validate();
        break;
      case Method::kLora:
      case Method::kVera:
        if (r == 0) bad(std::string(to_string(method)) + " requires rank r >= 1");
        break;
      case Method::kFourierFt:
        if (n_coeffs == 0) bad("fourierft requires n_coeffs >= 1");
        if (n_coeffs > d_out * d_in) bad("fourierft n_coeffs exceeds d_out * d_in");
        break;
      case Method::kFullFinetune:
        break;
    }
  }
};

}  // namespace cdvft
