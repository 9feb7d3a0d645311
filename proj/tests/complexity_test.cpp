#include <gtest/gtest.h>

#include <cmath>

#include "cdvft/chain.hpp"
#include "cdvft/complexity.hpp"
#include "support/oracles.hpp"

namespace cdvft {
namespace {

using testing::random_vector;
using testing::Rng;

AdapterConfig cdvft_cfg(std::size_t d_out, std::size_t d_in, std::size_t p, std::size_t m, std::size_t layers = 1) {
  AdapterConfig c;
  c.method = Method::kCdvft;
  c.d_out = d_out;
  c.d_in = d_in;
  c.p = p;
  c.m = m;
  c.layers = layers;
  return c;
}

AdapterConfig method_cfg(Method method, std::size_t d, std::size_t layers) {
  AdapterConfig c;
  c.method = method;
  c.d_out = d;
  c.d_in = d;
  c.layers = layers;
  c.r = 8;
  c.n_coeffs = 1000;
  return c;
}

double rel(double got, double want) { return std::abs(got - want) / want; }

TEST(CountParams, Examples) {
  const std::uint64_t cdvft = count_params(cdvft_cfg(768, 768, 768, 2, 24));
  EXPECT_EQ(cdvft, 55296u);
  EXPECT_EQ(human_count(cdvft), "55.30K");

  const std::uint64_t lora = count_params(method_cfg(Method::kLora, 768, 24));
  EXPECT_EQ(lora, 294912u);
  EXPECT_NEAR(static_cast<double>(lora) / static_cast<double>(cdvft), 5.33, 0.005);
}

TEST(CountParams, SquareFormulaGrid) {
  for (std::size_t m : {1u, 2u, 3u, 5u}) {
    for (std::size_t d : {8u, 64u, 768u, 1000u}) {
      for (std::size_t layers : {1u, 7u, 24u}) {
        EXPECT_EQ(count_params(cdvft_cfg(d, d, d, m, layers)), (2 * m - 1) * d * layers)
            << "m=" << m << " d=" << d << " L=" << layers;
      }
    }
  }
}

TEST(CountParams, BlockedAndOtherMethods) {
  // m diagonals at q1*p (the first at q2*p), the q1 x q2 grid, (m-2) square circulants.
  EXPECT_EQ(count_params(cdvft_cfg(24, 40, 8, 3)), 40u + 3 * 5 * 8 + 24 + 24 + 24);
  EXPECT_EQ(count_params(cdvft_cfg(5, 3, 4, 2)), 4u + 2 * 1 * 4 + 8);

  AdapterConfig vera = method_cfg(Method::kVera, 768, 24);
  vera.r = 256;
  EXPECT_EQ(count_params(vera), (256u + 768u) * 24u);
  EXPECT_EQ(count_params(method_cfg(Method::kFourierFt, 768, 24)), 24000u);
  EXPECT_EQ(count_params(method_cfg(Method::kFullFinetune, 768, 24)), 768u * 768u * 24u);
}

TEST(CountParams, RejectsInvalidConfigs) {
  AdapterConfig lora = method_cfg(Method::kLora, 768, 24);
  lora.r = 0;
  EXPECT_THROW(count_params(lora), Error);
  AdapterConfig fourier = method_cfg(Method::kFourierFt, 4, 1);
  fourier.n_coeffs = 17;
  EXPECT_THROW(count_params(fourier), Error);
  EXPECT_THROW(count_params(cdvft_cfg(768, 768, 0, 2)), Error);
  EXPECT_THROW(count_params(cdvft_cfg(768, 768, 1024, 2)), Error);
  EXPECT_THROW(count_params(cdvft_cfg(768, 768, 768, 0)), Error);
}

TEST(CountFlops, Examples) {
  EXPECT_LE(rel(static_cast<double>(count_flops(cdvft_cfg(768, 768, 768, 2, 24))), 2.72e6), 0.15);
  EXPECT_LE(rel(static_cast<double>(count_flops(method_cfg(Method::kFourierFt, 768, 24))), 1.41e9), 0.15);
  EXPECT_EQ(count_flops(cdvft_cfg(4, 4, 4, 1)), 4u);
}

TEST(CountFlops, HandComputedSquareLayer) {
  // d = p = 8, m = 2: a_1 (8) + 3 transforms of length 8 + 8 complex products + a_3 (8).
  EXPECT_EQ(count_layer_flops(cdvft_cfg(8, 8, 8, 2)), 8u + 3 * 120 + 8 * 6 + 8);
  AdapterConfig amortized = cdvft_cfg(8, 8, 8, 2);
  amortized.amortize_spectra = true;
  EXPECT_EQ(count_layer_flops(amortized), 8u + 2 * 120 + 8 * 6 + 8);
  EXPECT_EQ(count_layer_flops(method_cfg(Method::kLora, 768, 1)), 2u * 8 * 1536);
  EXPECT_EQ(count_layer_flops(method_cfg(Method::kFullFinetune, 10, 1)), 200u);
}

TEST(SweepReport, LlamaBlockSizes) {
  const Workload& qv = find_workload("llama2-7b-qv");
  const auto p2048 = workload_totals(cdvft_cfg(0, 0, 2048, 2), qv);
  const auto p4096 = workload_totals(cdvft_cfg(0, 0, 4096, 2), qv);
  EXPECT_EQ(human_count(p2048.trainable_params), "1.05M");
  EXPECT_EQ(human_count(p4096.trainable_params), "786.43K");
  EXPECT_NEAR(static_cast<double>(p4096.trainable_params) / 1e6, 0.79, 0.005);

  const auto reports = sweep_report({cdvft_cfg(4096, 4096, 2048, 2, 64), cdvft_cfg(4096, 4096, 4096, 2, 64)});
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(reports[0].trainable_params, 1048576u);
  EXPECT_EQ(reports[1].trainable_params, 786432u);
  EXPECT_EQ(reports[0].index, 0u);
  EXPECT_EQ(reports[1].index, 1u);
}

TEST(SweepReport, LoraOnLlamaQueryValue) {
  // 2 * 4096 * r per matrix over 64 matrices. The 33.55M figure corresponds to r = 64.
  AdapterConfig lora = method_cfg(Method::kLora, 4096, 64);
  EXPECT_EQ(count_params(lora), 4194304u);
  lora.r = 64;
  EXPECT_EQ(count_params(lora), 33554432u);
  EXPECT_EQ(human_count(count_params(lora)), "33.55M");
}

TEST(SweepReport, FullFinetuneBaseline) {
  AdapterConfig ff;
  ff.method = Method::kFullFinetune;
  ff.d_out = 11008;
  ff.d_in = 4096;
  ff.layers = 3;
  const auto reports = sweep_report({ff});
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].trainable_params, 11008u * 4096u * 3u);
  EXPECT_EQ(reports[0].flops_per_token, 2u * 11008u * 4096u * 3u);
}

TEST(SweepReport, ErrorsAreIndexTagged) {
  EXPECT_THROW(sweep_report({}), Error);
  AdapterConfig bad = cdvft_cfg(8, 8, 16, 2);
  try {
    sweep_report({cdvft_cfg(8, 8, 8, 2), cdvft_cfg(8, 8, 4, 2), bad});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    EXPECT_NE(std::string(e.what()).find("config[2]"), std::string::npos) << e.what();
  }
}

TEST(SweepReport, TableIsSortedByFlops) {
  const auto reports = sweep_report({method_cfg(Method::kFourierFt, 768, 24), cdvft_cfg(768, 768, 768, 2, 24),
                                     method_cfg(Method::kLora, 768, 24)});
  const std::string table = render_table(reports);
  const auto lora = table.find("lora");
  const auto cdvft = table.find("cdvft");
  const auto fourier = table.find("fourierft");
  ASSERT_NE(lora, std::string::npos);
  EXPECT_LT(lora, cdvft);
  EXPECT_LT(cdvft, fourier);
  EXPECT_NE(table.find("55,296"), std::string::npos);
}

TEST(Formatting, GroupDigits) {
  EXPECT_EQ(group_digits(0), "0");
  EXPECT_EQ(group_digits(999), "999");
  EXPECT_EQ(group_digits(1000), "1,000");
  EXPECT_EQ(group_digits(55296), "55,296");
  EXPECT_EQ(group_digits(1385127936), "1,385,127,936");
}

TEST(Workloads, PresetsExpand) {
  EXPECT_THROW(find_workload("nope"), Error);
  const auto cfgs = expand_workload(cdvft_cfg(0, 0, 4096, 2), find_workload("llama2-7b-mhsa-ffn"));
  ASSERT_EQ(cfgs.size(), 3u);
  EXPECT_EQ(cfgs[1].d_out, 11008u);
  EXPECT_EQ(cfgs[1].d_in, 4096u);
  EXPECT_EQ(cfgs[1].layers, 64u);
}

TEST(Calibration, AllTargetsWithinTolerance) {
  for (const CalibrationResult& r : run_calibration()) {
    EXPECT_TRUE(r.within_tolerance) << r.target.label << " deviation " << r.relative_deviation;
  }
  const std::string note = ratio_conflict_note();
  EXPECT_NE(note.find("51.81x"), std::string::npos);
  EXPECT_NE(note.find("518x"), std::string::npos);
}

// ---- properties ---------------------------------------------------------------------

TEST(ComplexityProperties, FourierOverCdvftRatioGrowsWithD) {
  double previous = 0.0;
  for (std::size_t d = 64; d <= 4096; d *= 2) {
    const double ratio = static_cast<double>(count_flops(method_cfg(Method::kFourierFt, d, 1))) /
                         static_cast<double>(count_flops(cdvft_cfg(d, d, d, 2)));
    EXPECT_GT(ratio, previous) << "d=" << d;
    previous = ratio;
  }
}

TEST(ComplexityProperties, CdvftFlopsNonincreasingInBlockSize) {
  for (std::size_t d : {256u, 4096u}) {
    for (std::size_t m : {2u, 3u}) {
      std::uint64_t previous = UINT64_MAX;
      for (std::size_t p = 4; p <= d; p *= 2) {
        const std::uint64_t f = count_flops(cdvft_cfg(d, d, p, m));
        EXPECT_LE(f, previous) << "d=" << d << " m=" << m << " p=" << p;
        previous = f;
      }
    }
  }
  // Non-square, blocks along both sides.
  std::uint64_t previous = UINT64_MAX;
  for (std::size_t p : {256u, 512u, 1024u, 2048u, 4096u}) {
    const std::uint64_t f = count_flops(cdvft_cfg(4096, 11008, p, 2));
    EXPECT_LE(f, previous) << "p=" << p;
    previous = f;
  }
}

OpCounts executed_forward(const FactorChain& ch, Rng& rng) {
  const RealVector x = random_vector(ch.d_in(), rng);
  OpCounts counts;
  CountingScope scope(counts);
  chain_forward(ch, x);
  return counts;
}

TEST(ComplexityProperties, ModelMatchesInstrumentedCountsSquare) {
  Rng rng(1);
  for (std::size_t d : {4u, 16u, 17u, 64u, 768u}) {
    for (std::size_t m = 1; m <= 4 && m <= d; ++m) {
      const AdapterConfig cfg = cdvft_cfg(d, d, d, m);
      FactorChain ch = init_chain(cfg, 3);
      EXPECT_EQ(executed_forward(ch, rng).flops(), count_layer_flops(cfg)) << "d=" << d << " m=" << m;

      AdapterConfig amortized = cfg;
      amortized.amortize_spectra = true;
      ch.cache_spectra();
      EXPECT_EQ(executed_forward(ch, rng).flops(), count_layer_flops(amortized))
          << "amortized d=" << d << " m=" << m;
    }
  }
}

TEST(ComplexityProperties, ModelMatchesInstrumentedCountsBlocked) {
  Rng rng(2);
  for (const AdapterConfig& cfg : {cdvft_cfg(24, 40, 8, 2), cdvft_cfg(40, 24, 8, 3), cdvft_cfg(10, 6, 4, 4),
                                   cdvft_cfg(64, 64, 16, 3)}) {
    const FactorChain ch = init_chain(cfg, 4);
    const OpCounts counts = executed_forward(ch, rng);
    EXPECT_EQ(counts.flops(), count_layer_flops(cfg)) << describe(cfg);
    const ChainShape s = cfg.chain_shape();
    EXPECT_EQ(counts.ifft_calls(), s.q1() + (s.m - 2));
  }
}

}  // namespace
}  // namespace cdvft
