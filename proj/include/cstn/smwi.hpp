#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cstn/mri.hpp"
#include "cstn/tensor.hpp"

namespace cstn {

enum class EchoCombine { Average, Rss };

EchoCombine parse_echo_combine(const std::string& name);
std::string to_string(EchoCombine mode);

struct SMWIParams {
    int64_t highpass_kernel = 33;  // odd Hann low-pass size for homodyne filtering
    double phase_cutoff = kPi / 2;
    int64_t mask_power = 4;
    EchoCombine combine = EchoCombine::Average;
    // positive phase is treated as paramagnetic; set to mask negative phase
    // instead (left-handed acquisitions)
    bool flip_phase_sign = false;

    void validate() const;
};

struct SMWIImage {
    int64_t height = 0, width = 0;
    std::vector<float> values;
    SMWIParams params;
};

/// Homodyne high-pass: arg(z * conj(lowpass(z))) with a normalized separable
/// Hann kernel and zero-padded borders. Zero-magnitude regions come out as
/// phase 0 (atan2(0, 0) convention), so empty background never masks.
Tensor highpass_phase(const ComplexImage& img, int64_t kernel);

/// m = 1 where phase <= 0, clamp(1 - phase/cutoff, 0, 1) where phase > 0.
Tensor compute_mask(const Tensor& phase_hp, double phase_cutoff);

/// average: mean of magnitudes; rss: sqrt(sum(mag^2)/E).
Tensor combine_echoes(const MultiEchoVolume& v, EchoCombine mode);

/// combine_echoes(v) * mean(per-echo masks)^mask_power.
SMWIImage reconstruct_smwi(const MultiEchoVolume& v, const SMWIParams& p);

}  // namespace cstn
