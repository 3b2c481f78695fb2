#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cstn/mri.hpp"
#include "cstn/swin.hpp"

namespace cstn {

struct CSTNConfig {
    int64_t num_rstb = 6;
    RSTBConfig rstb;
    int64_t in_echoes = 3;
    int64_t target_h = 384;
    int64_t target_w = 384;
    int64_t shallow_channels = 24;
    int64_t head_channels = 24;

    void validate() const;
    std::map<std::string, std::string> to_map() const;
    static CSTNConfig from_map(const std::map<std::string, std::string>& m);
};

struct CSTNWeights {
    Tensor mag_shallow_w, mag_shallow_b;      // [S, E, 3, 3]
    Tensor phase_shallow_w, phase_shallow_b;  // [S, 2E, 3, 3]
    Tensor fusion_w, fusion_b;                // [C, 2S, 3, 3]
    std::vector<RSTBWeights> rstbs;
    Tensor body_w, body_b;                    // [C, C, 3, 3], zero at init
    Tensor mag_head1_w, mag_head1_b;          // [Hc, C, 3, 3]
    Tensor mag_head2_w, mag_head2_b;          // [E, Hc, 3, 3], zero at init
    Tensor phase_head1_w, phase_head1_b;      // [Hc, C, 3, 3]
    Tensor phase_head2_w, phase_head2_b;      // [2E, Hc, 3, 3], zero at init
};

/// Separable Catmull-Rom (a = -0.5) resampling with half-pixel centers and
/// clamped borders; same-size calls copy the input untouched.
std::vector<float> bicubic_resize(const float* src, int64_t sh, int64_t sw, int64_t th,
                                  int64_t tw);

/// Upsamples every echo to target size. Magnitude goes through directly; phase
/// is encoded as unit-modulus (cos, sin) before resampling and renormalized
/// after: channels [0,E) are cos, [E,2E) are sin.
std::pair<Tensor, Tensor> preprocess(const MultiEchoVolume& lr, int64_t target_h,
                                     int64_t target_w);

/// Shallow mag/phase extractors -> channel concat -> fusion conv -> num_rstb
/// residual blocks -> body conv -> +fused residual -> conv/gelu/conv heads
/// with input residuals. Zeroed body and head output layers make this the
/// identity on both branches; (cos, sin) outputs are left unnormalized, the
/// atan2 in postprocess absorbs the modulus.
std::pair<Tensor, Tensor> forward(const Tensor& mag_in, const Tensor& phase_in,
                                  const CSTNConfig& cfg, const CSTNWeights& wts);

/// Clamps magnitude to >= 0 and decodes phase as atan2(sin, cos) in (-pi, pi].
MultiEchoVolume postprocess(const Tensor& hq_mag, const Tensor& hq_phase,
                            const std::vector<double>& echo_times_ms);

/// preprocess -> forward -> postprocess with an echo-count check against cfg.
MultiEchoVolume infer(const MultiEchoVolume& lr, const CSTNConfig& cfg, const CSTNWeights& wts);

/// preprocess -> postprocess only: the interpolation-only reference output.
MultiEchoVolume bicubic_baseline(const MultiEchoVolume& lr, int64_t target_h, int64_t target_w);

CSTNWeights make_cstn_weights(const CSTNConfig& cfg, uint64_t seed);
void visit_weights(CSTNWeights& w, const TensorVisitor& fn);

void save_checkpoint(const std::string& path, const CSTNConfig& cfg, CSTNWeights& wts);
std::pair<CSTNConfig, CSTNWeights> load_checkpoint(const std::string& path);

}  // namespace cstn
