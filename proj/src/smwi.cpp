#include "cstn/smwi.hpp"

#include <algorithm>
#include <cmath>

namespace cstn {

EchoCombine parse_echo_combine(const std::string& name) {
    if (name == "average") return EchoCombine::Average;
    if (name == "rss") return EchoCombine::Rss;
    throw UsageError("echo combine mode must be 'average' or 'rss', got '" + name + "'");
}

std::string to_string(EchoCombine mode) {
    return mode == EchoCombine::Average ? "average" : "rss";
}

void SMWIParams::validate() const {
    if (highpass_kernel < 3 || highpass_kernel % 2 == 0)
        throw UsageError("highpass kernel must be odd and >= 3, got " +
                         std::to_string(highpass_kernel));
    if (!(phase_cutoff > 0.0) || phase_cutoff > kPi)
        throw UsageError("phase cutoff must lie in (0, pi], got " + std::to_string(phase_cutoff));
    if (mask_power < 1)
        throw UsageError("mask power must be >= 1, got " + std::to_string(mask_power));
}

namespace {

std::vector<double> hann_kernel(int64_t k) {
    std::vector<double> w(static_cast<size_t>(k));
    double total = 0.0;
    for (int64_t i = 0; i < k; ++i) {
        const double s = std::sin(kPi * static_cast<double>(i + 1) / static_cast<double>(k + 1));
        w[static_cast<size_t>(i)] = s * s;
        total += s * s;
    }
    for (double& v : w) v /= total;
    return w;
}

// separable zero-padded convolution of one plane
void lowpass_plane(std::vector<double>& plane, int64_t h, int64_t w,
                   const std::vector<double>& kernel) {
    const int64_t k = static_cast<int64_t>(kernel.size()), half = k / 2;
    std::vector<double> tmp(plane.size());
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double s = 0.0;
            const int64_t lo = std::max<int64_t>(0, x - half), hi = std::min(w - 1, x + half);
            for (int64_t t = lo; t <= hi; ++t)
                s += kernel[static_cast<size_t>(t - x + half)] * plane[static_cast<size_t>(y * w + t)];
            tmp[static_cast<size_t>(y * w + x)] = s;
        }
    for (int64_t x = 0; x < w; ++x)
        for (int64_t y = 0; y < h; ++y) {
            double s = 0.0;
            const int64_t lo = std::max<int64_t>(0, y - half), hi = std::min(h - 1, y + half);
            for (int64_t t = lo; t <= hi; ++t)
                s += kernel[static_cast<size_t>(t - y + half)] * tmp[static_cast<size_t>(t * w + x)];
            plane[static_cast<size_t>(y * w + x)] = s;
        }
}

}  // namespace

Tensor highpass_phase(const ComplexImage& img, int64_t kernel) {
    if (kernel < 3 || kernel % 2 == 0)
        throw UsageError("highpass kernel must be odd and >= 3, got " + std::to_string(kernel));
    validate(img);
    const int64_t h = img.height, w = img.width, n = h * w;
    std::vector<double> re(static_cast<size_t>(n)), im(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const double m = img.magnitude[static_cast<size_t>(i)];
        const double p = img.phase[static_cast<size_t>(i)];
        re[static_cast<size_t>(i)] = m * std::cos(p);
        im[static_cast<size_t>(i)] = m * std::sin(p);
    }
    std::vector<double> lp_re = re, lp_im = im;
    const std::vector<double> k1 = hann_kernel(kernel);
    lowpass_plane(lp_re, h, w, k1);
    lowpass_plane(lp_im, h, w, k1);

    Tensor out({h, w});
    for (int64_t i = 0; i < n; ++i) {
        const size_t s = static_cast<size_t>(i);
        const double pr = re[s] * lp_re[s] + im[s] * lp_im[s];
        const double pi = im[s] * lp_re[s] - re[s] * lp_im[s];
        out.data()[i] = static_cast<float>(wrap_phase(std::atan2(pi, pr)));
    }
    return out;
}

Tensor compute_mask(const Tensor& phase_hp, double phase_cutoff) {
    if (!(phase_cutoff > 0.0) || phase_cutoff > kPi)
        throw UsageError("phase cutoff must lie in (0, pi], got " + std::to_string(phase_cutoff));
    Tensor m(phase_hp.shape());
    for (int64_t i = 0; i < phase_hp.numel(); ++i) {
        const double p = phase_hp.data()[i];
        m.data()[i] = p <= 0.0 ? 1.0f
                               : static_cast<float>(std::clamp(1.0 - p / phase_cutoff, 0.0, 1.0));
    }
    return m;
}

Tensor combine_echoes(const MultiEchoVolume& v, EchoCombine mode) {
    validate(v);
    const int64_t h = v.echoes[0].height, w = v.echoes[0].width, n = h * w;
    const double e = static_cast<double>(v.echoes.size());
    Tensor out({h, w});
    for (int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (const ComplexImage& echo : v.echoes) {
            const double m = echo.magnitude[static_cast<size_t>(i)];
            acc += mode == EchoCombine::Average ? m : m * m;
        }
        out.data()[i] = static_cast<float>(mode == EchoCombine::Average ? acc / e
                                                                        : std::sqrt(acc / e));
    }
    return out;
}

SMWIImage reconstruct_smwi(const MultiEchoVolume& v, const SMWIParams& p) {
    p.validate();
    validate(v);
    const int64_t h = v.echoes[0].height, w = v.echoes[0].width, n = h * w;

    std::vector<double> mask_sum(static_cast<size_t>(n), 0.0);
    for (const ComplexImage& echo : v.echoes) {
        Tensor hp = highpass_phase(echo, p.highpass_kernel);
        if (p.flip_phase_sign)
            for (int64_t i = 0; i < n; ++i) hp.data()[i] = -hp.data()[i];
        Tensor m = compute_mask(hp, p.phase_cutoff);
        for (int64_t i = 0; i < n; ++i) mask_sum[static_cast<size_t>(i)] += m.data()[i];
    }

    Tensor combined = combine_echoes(v, p.combine);
    SMWIImage out;
    out.height = h;
    out.width = w;
    out.params = p;
    out.values.resize(static_cast<size_t>(n));
    const double e = static_cast<double>(v.echoes.size());
    for (int64_t i = 0; i < n; ++i) {
        const double m = mask_sum[static_cast<size_t>(i)] / e;
        double mp = 1.0;
        for (int64_t q = 0; q < p.mask_power; ++q) mp *= m;
        out.values[static_cast<size_t>(i)] = static_cast<float>(combined.data()[i] * mp);
    }
    return out;
}

}  // namespace cstn
