#pragma once

#include <cstdint>
#include <vector>

#include "cstn/common.hpp"

namespace cstn {

/// One echo: magnitude (>= 0) and phase (wrapped into (-pi, pi]) planes, H x W row-major.
struct ComplexImage {
    int64_t height = 0, width = 0;
    std::vector<float> magnitude, phase;
};

/// Centered 2-D complex spectrum; DC lives at (height/2, width/2).
struct KSpace {
    int64_t height = 0, width = 0;
    std::vector<float> re, im;
};

struct MultiEchoVolume {
    std::vector<ComplexImage> echoes;
    std::vector<double> echo_times_ms;
};

void validate(const ComplexImage& img);
void validate(const MultiEchoVolume& v);

/// Orthonormal 2-D DFT (1/sqrt(HW) each way), DC shifted to the center bin.
KSpace to_kspace(const ComplexImage& img);
ComplexImage from_kspace(const KSpace& k);

/// Centered crop to th x tw around DC, rescaled by sqrt(th*tw/(H*W)) so a
/// constant image keeps its value across resolutions.
KSpace truncate_kspace(const KSpace& k, int64_t th, int64_t tw);

/// Per echo: to_kspace -> truncate -> from_kspace. Echo times pass through.
MultiEchoVolume simulate_lowres(const MultiEchoVolume& v, int64_t th, int64_t tw);

/// Ground-truth parameter maps. R2* in 1/ms, off-resonance in kHz, phi0 in rad.
struct PhantomMaps {
    int64_t height = 0, width = 0;
    std::vector<float> m0, r2star_per_ms, delta_f_khz, phi0;
};

struct Phantom {
    MultiEchoVolume volume;
    PhantomMaps maps;
};

/// Signal model per echo: S(TE) = M0 exp(-TE*R2*) exp(i(phi0 + 2*pi*df*TE)).
MultiEchoVolume render_volume(const PhantomMaps& maps, const std::vector<double>& echo_times_ms);

/// Head ellipse with a hard edge, smooth interior structure, and a handful of
/// small high-susceptibility inclusions. Deterministic for a fixed seed.
Phantom generate_phantom(uint64_t seed, int64_t h, int64_t w,
                         const std::vector<double>& echo_times_ms);

}  // namespace cstn
