#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cstn/metrics.hpp"
#include "cstn/model.hpp"
#include "cstn/smwi.hpp"

namespace cstn {

struct TrainConfig {
    double learning_rate = 2e-4;  // not from paper
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t batch_size = 1;
    int64_t total_steps = 5000;
    double lambda_mag = 1.0;
    double lambda_phase = 1.0;
    uint64_t seed = 1;
    int64_t checkpoint_every = 500;  // also the validation cadence; 0 = end only
    int64_t patch_size = 96;        // clamped to the volume extent

    void validate() const;
};

/// Base rate, halved once past 50% of total_steps and again past 75%.
/// step is 1-based.
double lr_at_step(const TrainConfig& cfg, int64_t step);

/// lambda_mag * L1(mag) + lambda_phase * L1(phase), with phase compared in the
/// (cos, sin) encoding so values equal mod 2*pi cost nothing. Composed from
/// differentiable ops.
Tensor loss(const Tensor& pred_mag, const Tensor& pred_phase_cs, const Tensor& gt_mag,
            const Tensor& gt_phase_cs, double lambda_mag, double lambda_phase);

/// Same, encoding the ground-truth volume at its native size first.
Tensor loss(const Tensor& pred_mag, const Tensor& pred_phase_cs, const MultiEchoVolume& gt,
            double lambda_mag, double lambda_phase);

struct AdamState {
    int64_t step = 0;
    std::vector<Tensor> m, v;  // first/second moments, aligned with the params
};

AdamState make_adam_state(const std::vector<Tensor*>& params);

/// Bias-corrected Adam update, computed per element in double and stored back
/// to f32. grads align with params; moments advance even where the gradient
/// is zero.
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<std::span<const float>>& grads, AdamState& state,
               const TrainConfig& cfg, double lr);

struct TrainData {
    std::vector<MultiEchoVolume> train_set;  // full-resolution ground truth
    std::vector<MultiEchoVolume> val_set;    // may be empty
    int64_t lowres_h = 256, lowres_w = 256;  // acquisition matrix to simulate
};

struct TrainResult {
    CSTNConfig model;
    CSTNWeights best;  // lowest validation loss; last-step weights without a val set
    CSTNWeights last;
    std::vector<double> losses;      // one entry per step
    std::vector<double> val_losses;  // one entry per validation pass
    double best_val = 0.0;
};

/// Optimizes from make_cstn_weights(model, cfg.seed) on random aligned patch
/// pairs (bicubic-upsampled truncation, ground truth). Writes loss.csv
/// (step,loss,lr), val.csv (step,val_loss), best.cstck, last.cstck and
/// periodic ckpt_NNNNNN.cstck files under run_dir. Deterministic for a fixed
/// seed at a fixed thread count; a non-finite loss aborts the run.
TrainResult train(const TrainConfig& cfg, const CSTNConfig& model, const TrainData& data,
                  const std::string& run_dir);

struct EvalConfig {
    int64_t protocol = 256;  // simulated acquisition matrix, 192 or 256
    SMWIParams smwi;

    void validate() const;
};

/// Echo-averaged magnitude metrics plus metrics on the susceptibility
/// reconstruction, against ref. SSIM is reported x100; its dynamic range is
/// taken from the reference image.
struct VolumeScores {
    double mag_mse = 0.0, mag_mae = 0.0, mag_ssim = 0.0;
    double smwi_mse = 0.0, smwi_mae = 0.0, smwi_ssim = 0.0;
};

VolumeScores score_volume(const MultiEchoVolume& pred, const MultiEchoVolume& ref,
                          const SMWIParams& smwi);

struct EvalResult {
    MetricTable network;
    MetricTable baseline;
};

/// Per scan: simulate the low-res acquisition, reconstruct with the network
/// and with bicubic interpolation alone, and score both against the original.
/// Weights are never mutated.
EvalResult evaluate(const CSTNConfig& model, const CSTNWeights& wts,
                    const std::vector<MultiEchoVolume>& scans, const EvalConfig& cfg,
                    const std::vector<std::string>& scan_ids = {});

}  // namespace cstn
