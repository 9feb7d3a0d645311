// Fits a 32x32 CDVFT adapter (m = 2) to a random target of the same family,
// then folds it into a frozen weight and checks the merged matvec.

#include <cstdio>
#include <random>

#include "cdvft/cdvft.hpp"

int main() {
  cdvft::AdapterConfig cfg;
  cfg.d_in = 32;
  cfg.d_out = 32;
  cfg.p = 32;
  cfg.m = 2;

  cdvft::ToyTask task;
  task.seed = 7;
  const cdvft::TrainResult run = cdvft::run_matrix_recovery(cfg, task);
  for (std::size_t step = 0; step < run.log.losses.size(); step += 250) {
    std::printf("step %5zu  loss %.3e\n", step, run.log.losses[step]);
  }
  std::printf("relative error %.3e after %zu steps (%s)\n", run.log.final_relative_error, run.log.steps,
              run.log.success ? "recovered" : "not recovered");
  std::printf("trainable parameters: %zu (dense delta_W would need %zu)\n", run.chain.parameter_count(),
              cfg.d_in * cfg.d_out);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> dist;
  cdvft::DenseMatrix w(32, 32);
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t j = 0; j < 32; ++j) w(i, j) = dist(rng);
  cdvft::RealVector x(32);
  for (double& v : x) v = dist(rng);

  const cdvft::RealVector adapted = cdvft::adapter_apply(w, run.chain, x);
  const cdvft::RealVector merged = cdvft::merge(w, run.chain).matvec(x);
  double worst = 0.0;
  for (std::size_t i = 0; i < 32; ++i) worst = std::max(worst, std::abs(adapted[i] - merged[i]));
  std::printf("merged vs adapter path, max abs difference: %.3e\n", worst);
  return run.log.success ? 0 : 1;
}
