#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <thread>

#include "cdvft/fft.hpp"
#include "support/oracles.hpp"

namespace cdvft {
namespace {

using testing::brute_dft;
using testing::max_abs_diff;
using testing::random_complex;
using testing::random_vector;
using testing::Rng;
using testing::to_complex;

void expect_near(const ComplexVector& got, const ComplexVector& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t k = 0; k < got.size(); ++k) {
    EXPECT_NEAR(got[k].real(), want[k].real(), tol) << "index " << k;
    EXPECT_NEAR(got[k].imag(), want[k].imag(), tol) << "index " << k;
  }
}

TEST(Fft, ImpulseTransformsToOnes) {
  expect_near(fft(RealVector{1, 0, 0, 0}), ComplexVector(4, 1.0), 1e-15);
}

TEST(Fft, ConstantTransformsToScaledImpulse) {
  expect_near(fft(RealVector{1, 1, 1, 1}), ComplexVector{4, 0, 0, 0}, 1e-15);
}

TEST(Fft, RampMatchesBruteForce) {
  // Frozen from brute_dft({0,1,2,3}).
  const ComplexVector want{{6, 0}, {-2, 2}, {-2, 0}, {-2, -2}};
  expect_near(brute_dft(ComplexVector{0, 1, 2, 3}), want, 1e-12);
  expect_near(fft(RealVector{0, 1, 2, 3}), want, 1e-12);
}

TEST(Ifft, InverseOfConstantAndImpulse) {
  expect_near(ifft(ComplexVector{4, 0, 0, 0}), ComplexVector(4, 1.0), 1e-15);
  expect_near(ifft(ComplexVector(4, 1.0)), ComplexVector{1, 0, 0, 0}, 1e-15);
}

TEST(Fft, LengthOne) {
  expect_near(fft(RealVector{3.5}), ComplexVector{3.5}, 0.0);
  expect_near(ifft(ComplexVector{{2.0, -1.0}}), ComplexVector{{2.0, -1.0}}, 0.0);
}

TEST(Fft, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(fft(RealVector{}), Error);
  try {
    fft(RealVector{1.0, std::numeric_limits<double>::quiet_NaN()});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidInput);
  }
  try {
    ifft(ComplexVector{{1.0, std::numeric_limits<double>::infinity()}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidInput);
  }
}

TEST(Fft, MatchesBruteForceAcrossLengths) {
  Rng rng(11);
  // Radix 2/4 only, mixed radix, primes <= 13, and Bluestein lengths.
  for (std::size_t n = 1; n <= 256; ++n) {
    const ComplexVector v = random_complex(n, rng);
    EXPECT_LE(max_abs_diff(fft(v), brute_dft(v)), 1e-9) << "n=" << n;
    EXPECT_LE(max_abs_diff(ifft(v), brute_dft(v, true)), 1e-9) << "n=" << n;
  }
}

TEST(Fft, PlanSelection) {
  EXPECT_FALSE(detail::plan_for(768)->uses_bluestein());
  EXPECT_FALSE(detail::plan_for(11 * 13 * 9)->uses_bluestein());
  EXPECT_TRUE(detail::plan_for(17)->uses_bluestein());
  EXPECT_TRUE(detail::plan_for(2 * 1009)->uses_bluestein());
}

TEST(Fft, RoundTrip) {
  Rng rng(3);
  {
    const RealVector v = random_vector(64, rng);
    const ComplexVector back = ifft(fft(v));
    EXPECT_LE(max_abs_diff(back, to_complex(v)), 1e-12);
  }
  for (std::size_t n : {2u, 3u, 97u, 100u, 768u, 1000u, 1031u, 2048u, 4095u, 4096u}) {
    const ComplexVector v = random_complex(n, rng);
    EXPECT_LE(max_abs_diff(ifft(fft(v)), v), 1e-12) << "n=" << n;
  }
}

TEST(Fft, Linearity) {
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> len(2, 1024);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = len(rng);
    const ComplexVector u = random_complex(n, rng);
    const ComplexVector v = random_complex(n, rng);
    const Complex a(coef(rng), coef(rng));
    const Complex b(coef(rng), coef(rng));
    ComplexVector mix(n);
    for (std::size_t k = 0; k < n; ++k) mix[k] = a * u[k] + b * v[k];
    const ComplexVector fu = fft(u);
    const ComplexVector fv = fft(v);
    const ComplexVector fm = fft(mix);
    double err = 0.0;
    double scale = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const Complex want = a * fu[k] + b * fv[k];
      err = std::max(err, std::abs(fm[k] - want));
      scale = std::max(scale, std::abs(want));
    }
    EXPECT_LE(err / scale, 1e-10) << "n=" << n;
  }
}

TEST(Fft, ConjugateSymmetryForRealInput) {
  Rng rng(7);
  for (std::size_t n : {5u, 16u, 30u, 127u, 768u}) {
    const ComplexVector f = fft(random_vector(n, rng));
    for (std::size_t k = 1; k < n; ++k) {
      EXPECT_LE(std::abs(f[n - k] - std::conj(f[k])), 1e-10) << "n=" << n << " k=" << k;
    }
  }
}

TEST(Fft, ShiftReindexGivesConjugateSpectrum) {
  Rng rng(9);
  for (std::size_t n : {1u, 2u, 7u, 16u, 64u, 768u, 1000u}) {
    const RealVector v = random_vector(n, rng);
    const ComplexVector shifted = fft(testing::shift_reindex(v));
    const ComplexVector plain = fft(v);
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_LE(std::abs(shifted[k] - std::conj(plain[k])), 1e-10) << "n=" << n;
    }
  }
}

TEST(RealPartStrict, Examples) {
  EXPECT_EQ(real_part_strict(ComplexVector{{1, 0}, {2, 0}}, 1e-9), (RealVector{1, 2}));
  EXPECT_EQ(real_part_strict(ComplexVector{{1, 1e-13}}, 1e-9), (RealVector{1}));
  try {
    real_part_strict(ComplexVector{{1, 0.5}}, 1e-9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumericalCorruption);
  }
}

TEST(Fft, ConcurrentPlansAgree) {
  Rng rng(13);
  const ComplexVector v = random_complex(1536, rng);
  const ComplexVector want = brute_dft(v);
  std::vector<std::thread> threads;
  std::vector<double> errors(4, 1.0);
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] { errors[t] = max_abs_diff(fft(v), want); });
  }
  for (auto& th : threads) th.join();
  for (double e : errors) EXPECT_LE(e, 1e-8);
}

TEST(Fft, CountsInvocationsWhenScoped) {
  OpCounts counts;
  {
    CountingScope scope(counts);
    fft(RealVector(8, 1.0));
    ifft(ComplexVector(8, 1.0));
    ifft(ComplexVector(12, 1.0));
  }
  fft(RealVector(8, 1.0));  // outside the scope
  EXPECT_EQ(counts.fft_calls(), 1u);
  EXPECT_EQ(counts.ifft_calls(), 2u);
  EXPECT_EQ(counts.flops(), 2 * fft_flops(8) + fft_flops(12));
  EXPECT_EQ(fft_flops(8), 120u);
  EXPECT_EQ(fft_flops(1), 0u);
}

}  // namespace
}  // namespace cdvft
