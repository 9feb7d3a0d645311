#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>

// Execution counters for the FLOP convention used throughout the library:
//   length-n FFT or IFFT  -> round(5 n log2 n)
//   complex multiply      -> 6
//   complex add           -> 2
//   real multiply / add   -> 1
// Counting is opt-in per thread through CountingScope.

namespace cdvft {

inline std::uint64_t fft_flops(std::size_t n) {
  if (n <= 1) return 0;
  const double len = static_cast<double>(n);
  return static_cast<std::uint64_t>(std::llround(5.0 * len * std::log2(len)));
}

inline constexpr std::uint64_t kComplexMulFlops = 6;
inline constexpr std::uint64_t kComplexAddFlops = 2;

struct OpCounts {
  std::map<std::size_t, std::uint64_t> forward_ffts;  // length -> calls
  std::map<std::size_t, std::uint64_t> inverse_ffts;
  std::uint64_t complex_muls = 0;
  std::uint64_t complex_adds = 0;
  std::uint64_t real_muls = 0;
  std::uint64_t real_adds = 0;
  // Output scaling by alpha. Tracked, but not part of the factor FLOP total.
  std::uint64_t scale_muls = 0;

  std::uint64_t fft_calls() const {
    std::uint64_t total = 0;
    for (const auto& [len, calls] : forward_ffts) total += calls;
    return total;
  }

  std::uint64_t ifft_calls() const {
    std::uint64_t total = 0;
    for (const auto& [len, calls] : inverse_ffts) total += calls;
    return total;
  }

  std::uint64_t flops() const {
    std::uint64_t total = 0;
    for (const auto& [len, calls] : forward_ffts) total += calls * fft_flops(len);
    for (const auto& [len, calls] : inverse_ffts) total += calls * fft_flops(len);
    total += complex_muls * kComplexMulFlops + complex_adds * kComplexAddFlops;
    total += real_muls + real_adds;
    return total;
  }
};

namespace detail {

inline thread_local OpCounts* active_counts = nullptr;

inline void tally_fft(std::size_t n, bool inverse) {
  if (active_counts == nullptr) return;
  (inverse ? active_counts->inverse_ffts : active_counts->forward_ffts)[n] += 1;
}
inline void tally_complex_muls(std::size_t n) {
  if (active_counts != nullptr) active_counts->complex_muls += n;
}
inline void tally_complex_adds(std::size_t n) {
  if (active_counts != nullptr) active_counts->complex_adds += n;
}
inline void tally_real_muls(std::size_t n) {
  if (active_counts != nullptr) active_counts->real_muls += n;
}
inline void tally_real_adds(std::size_t n) {
  if (active_counts != nullptr) active_counts->real_adds += n;
}
inline void tally_scale_muls(std::size_t n) {
  if (active_counts != nullptr) active_counts->scale_muls += n;
}

}  // namespace detail

/// Routes the current thread's operation tallies into `sink` for the scope's lifetime.
class CountingScope {
 public:
  explicit CountingScope(OpCounts& sink) : previous_(detail::active_counts) {
    detail::active_counts = &sink;
  }
  ~CountingScope() { detail::active_counts = previous_; }

  CountingScope(const CountingScope&) = delete;
  CountingScope& operator=(const CountingScope&) = delete;

 private:
  OpCounts* previous_;
};

}  // namespace cdvft
