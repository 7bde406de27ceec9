// Training and evaluation: linear hyperparameter schedules, the four-term
// rate-distortion loss with a logged decomposition, a deterministic seeded
// loop over frame-pair crops, and an evaluator that scores every pair
// through the real encode -> container bytes -> decode path.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ntc/networks.hpp"

namespace ntc::train {

// Linear ramp across an optimizer run: step 0 returns start exactly, step
// total-1 returns end exactly; a single-step run returns start.
double schedule(double start, double end, int64_t step, int64_t total);

struct TrainConfig {
  int steps = 2000;
  int batch = 8;
  int crop = 64;
  uint32_t seed = 1;
  double lr_start = 1e-3, lr_end = 2e-4;
  double lambda_rate_start = 1e-4, lambda_rate_end = 1e-3;
  double lambda_mask_start = 1e-4, lambda_mask_end = 0.5;
  double beta_start = 0.5, beta_end = 0.3;
};

struct LossWeights {
  double lambda_msssim = 1;  // on 1 - MS-SSIM
  double lambda_mse = 1;     // on mean squared error
  double lambda_rate = 0;    // on the per-sample bit estimate
  double lambda_mask = 0;    // on the importance-budget penalty
  double beta = 0;           // target mean importance
};

// One step's hyperparameters and loss decomposition, mirroring the tape.
struct StepStats {
  int64_t step = 0;
  double lr = 0, lambda_rate = 0, lambda_mask = 0, beta = 0;
  double d_msssim = 0;  // 1 - MS-SSIM(recon, target)
  double d_mse = 0;     // mean squared error
  double rate = 0;      // per-sample bits (unweighted)
  double mask = 0;      // |mean importance - beta| (unweighted)
  double total = 0;
};

// lambda_msssim * (1 - MS-SSIM) + lambda_mse * MSE + lambda_rate * rate
// + lambda_mask * |mean(tau) - beta| as a scalar on the tape. `rate` must
// already be per-sample bits. The mask term is dropped when tau is undefined
// or lambda_mask is zero. `stats`, when non-null, receives the unweighted
// component values.
Tensor total_loss(const Tensor& recon, const Tensor& target,
                  const Tensor& rate, const Tensor& tau, const LossWeights& w,
                  StepStats* stats);

struct FitResult {
  std::vector<StepStats> stats;  // one entry per optimizer step
  int skipped = 0;               // manifest entries that could not be used
};

// Optimizes the model in place over random crops from the manifest's frame
// pairs. Deterministic for a fixed seed. Unusable pairs (missing files, bad
// headers, mismatched dims, frames smaller than the crop) are skipped with a
// note on `warnings`; with steps > 0 and nothing usable, throws FormatError.
// Each step appends one space-separated record to `metrics_log`:
//   step lr lambda_rate lambda_mask beta d_msssim d_mse rate mask total
FitResult fit(net::CodecModel& m, const std::string& manifest_path,
              const TrainConfig& cfg, std::ostream* metrics_log,
              std::ostream* warnings);

struct EvalRow {
  std::string name;        // current-frame file name
  double msssim = 0;       // decoded vs. ground truth
  double psnr = 0;
  double bpp = 0;
  double copy_msssim = 0;  // previous frame vs. ground truth baseline
};

struct EvalResult {
  std::vector<EvalRow> rows;
  EvalRow mean;    // column means, name "mean"
  int skipped = 0;
};

// Scores every manifest pair through encode -> serialized container ->
// decode, so rates are true byte counts and reconstructions are the
// decoder's. Unreadable pairs are skipped with a note on `warnings`.
EvalResult evaluate(const net::CodecModel& m, const std::string& manifest_path,
                    std::ostream* warnings);

// Comma-separated table: pair,msssim,psnr,bpp,copy_msssim; one row per pair
// plus the mean row.
void write_eval_csv(const EvalResult& r, const std::string& path);

}  // namespace ntc::train
