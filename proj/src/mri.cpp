#include "cstn/mri.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "cstn/fft.hpp"
#include "cstn/rng.hpp"

namespace cstn {

namespace {

using cd = std::complex<double>;

// float(pi) rounds up, so this bound accepts every wrapped double phase after
// narrowing to f32
constexpr float kPiF = 3.14159274f;

}  // namespace

void validate(const ComplexImage& img) {
    if (img.height <= 0 || img.width <= 0)
        throw DataError("image extents must be positive, got " + std::to_string(img.height) + "x" +
                        std::to_string(img.width));
    const size_t n = static_cast<size_t>(img.height * img.width);
    if (img.magnitude.size() != n || img.phase.size() != n)
        throw DataError("image plane length does not match " + std::to_string(img.height) + "x" +
                        std::to_string(img.width));
    for (size_t i = 0; i < n; ++i) {
        if (!(img.magnitude[i] >= 0.0f) || !std::isfinite(img.magnitude[i]))
            throw DataError("magnitude must be finite and nonnegative");
        const float p = img.phase[i];
        if (!(p >= -kPiF && p <= kPiF))
            throw DataError("phase must be wrapped into (-pi, pi]");
    }
}

void validate(const MultiEchoVolume& v) {
    if (v.echoes.empty()) throw DataError("volume needs at least one echo");
    if (v.echo_times_ms.size() != v.echoes.size())
        throw DataError("echo count " + std::to_string(v.echoes.size()) +
                        " does not match echo time count " + std::to_string(v.echo_times_ms.size()));
    for (size_t i = 0; i < v.echo_times_ms.size(); ++i) {
        if (v.echo_times_ms[i] <= 0.0)
            throw DataError("echo times must be positive");
        if (i && v.echo_times_ms[i] <= v.echo_times_ms[i - 1])
            throw DataError("echo times must be strictly increasing");
    }
    for (const ComplexImage& e : v.echoes) {
        validate(e);
        if (e.height != v.echoes[0].height || e.width != v.echoes[0].width)
            throw DataError("all echoes must share dimensions");
    }
}

KSpace to_kspace(const ComplexImage& img) {
    const int64_t h = img.height, w = img.width, n = h * w;
    if (h <= 0 || w <= 0 || img.magnitude.size() != static_cast<size_t>(n) ||
        img.phase.size() != static_cast<size_t>(n))
        throw DataError("to_kspace: inconsistent image planes");
    std::vector<cd> z(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        z[static_cast<size_t>(i)] =
            std::polar(static_cast<double>(img.magnitude[static_cast<size_t>(i)]),
                       static_cast<double>(img.phase[static_cast<size_t>(i)]));
    fft::transform_2d(z.data(), h, w, -1);
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    KSpace k;
    k.height = h;
    k.width = w;
    k.re.resize(static_cast<size_t>(n));
    k.im.resize(static_cast<size_t>(n));
    const int64_t sy = h / 2, sx = w / 2;
    for (int64_t y = 0; y < h; ++y) {
        const int64_t ty = (y + sy) % h;
        for (int64_t x = 0; x < w; ++x) {
            const int64_t tx = (x + sx) % w;
            const cd v = z[static_cast<size_t>(y * w + x)] * s;
            k.re[static_cast<size_t>(ty * w + tx)] = static_cast<float>(v.real());
            k.im[static_cast<size_t>(ty * w + tx)] = static_cast<float>(v.imag());
        }
    }
    return k;
}

ComplexImage from_kspace(const KSpace& k) {
    const int64_t h = k.height, w = k.width, n = h * w;
    if (h <= 0 || w <= 0 || k.re.size() != static_cast<size_t>(n) ||
        k.im.size() != static_cast<size_t>(n))
        throw DataError("from_kspace: inconsistent spectrum planes");
    std::vector<cd> z(static_cast<size_t>(n));
    const int64_t sy = h / 2, sx = w / 2;
    for (int64_t y = 0; y < h; ++y) {
        const int64_t ty = (y + sy) % h;
        for (int64_t x = 0; x < w; ++x) {
            const int64_t tx = (x + sx) % w;
            const size_t src = static_cast<size_t>(ty * w + tx);
            z[static_cast<size_t>(y * w + x)] = cd(k.re[src], k.im[src]);
        }
    }
    fft::transform_2d(z.data(), h, w, +1);
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    ComplexImage img;
    img.height = h;
    img.width = w;
    img.magnitude.resize(static_cast<size_t>(n));
    img.phase.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const cd v = z[static_cast<size_t>(i)] * s;
        img.magnitude[static_cast<size_t>(i)] = static_cast<float>(std::hypot(v.real(), v.imag()));
        img.phase[static_cast<size_t>(i)] =
            static_cast<float>(wrap_phase(std::atan2(v.imag(), v.real())));
    }
    return img;
}

KSpace truncate_kspace(const KSpace& k, int64_t th, int64_t tw) {
    if (th <= 0 || tw <= 0 || th > k.height || tw > k.width)
        throw DataError("truncate_kspace: target " + std::to_string(th) + "x" + std::to_string(tw) +
                        " must fit inside " + std::to_string(k.height) + "x" +
                        std::to_string(k.width));
    const int64_t y0 = k.height / 2 - th / 2;
    const int64_t x0 = k.width / 2 - tw / 2;
    const double s = std::sqrt(static_cast<double>(th * tw) /
                               static_cast<double>(k.height * k.width));
    KSpace out;
    out.height = th;
    out.width = tw;
    out.re.resize(static_cast<size_t>(th * tw));
    out.im.resize(static_cast<size_t>(th * tw));
    for (int64_t y = 0; y < th; ++y)
        for (int64_t x = 0; x < tw; ++x) {
            const size_t src = static_cast<size_t>((y0 + y) * k.width + x0 + x);
            const size_t dst = static_cast<size_t>(y * tw + x);
            out.re[dst] = static_cast<float>(k.re[src] * s);
            out.im[dst] = static_cast<float>(k.im[src] * s);
        }
    return out;
}

MultiEchoVolume simulate_lowres(const MultiEchoVolume& v, int64_t th, int64_t tw) {
    validate(v);
    MultiEchoVolume out;
    out.echo_times_ms = v.echo_times_ms;
    out.echoes.reserve(v.echoes.size());
    for (const ComplexImage& e : v.echoes)
        out.echoes.push_back(from_kspace(truncate_kspace(to_kspace(e), th, tw)));
    return out;
}

MultiEchoVolume render_volume(const PhantomMaps& maps, const std::vector<double>& echo_times_ms) {
    const int64_t n = maps.height * maps.width;
    if (n <= 0 || maps.m0.size() != static_cast<size_t>(n) ||
        maps.r2star_per_ms.size() != static_cast<size_t>(n) ||
        maps.delta_f_khz.size() != static_cast<size_t>(n) ||
        maps.phi0.size() != static_cast<size_t>(n))
        throw DataError("render_volume: inconsistent parameter maps");
    MultiEchoVolume v;
    v.echo_times_ms = echo_times_ms;
    for (double te : echo_times_ms) {
        ComplexImage img;
        img.height = maps.height;
        img.width = maps.width;
        img.magnitude.resize(static_cast<size_t>(n));
        img.phase.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            const size_t u = static_cast<size_t>(i);
            img.magnitude[u] = static_cast<float>(
                static_cast<double>(maps.m0[u]) *
                std::exp(-te * static_cast<double>(maps.r2star_per_ms[u])));
            img.phase[u] = static_cast<float>(wrap_phase(
                static_cast<double>(maps.phi0[u]) +
                2.0 * kPi * static_cast<double>(maps.delta_f_khz[u]) * te));
        }
        v.echoes.push_back(std::move(img));
    }
    return v;
}

Phantom generate_phantom(uint64_t seed, int64_t h, int64_t w,
                         const std::vector<double>& echo_times_ms) {
    if (h < 32 || w < 32)
        throw DataError("phantom: minimum size is 32x32, got " + std::to_string(h) + "x" +
                        std::to_string(w));
    if (echo_times_ms.empty()) throw DataError("phantom: at least one echo time required");
    for (size_t i = 0; i < echo_times_ms.size(); ++i) {
        if (echo_times_ms[i] <= 0.0) throw DataError("phantom: echo times must be positive");
        if (i && echo_times_ms[i] <= echo_times_ms[i - 1])
            throw DataError("phantom: echo times must be strictly increasing");
    }

    Rng rng(seed);
    const double cy = static_cast<double>(h) * (0.5 + 0.02 * (rng.uniform() - 0.5));
    const double cx = static_cast<double>(w) * (0.5 + 0.02 * (rng.uniform() - 0.5));
    const double ry = static_cast<double>(h) * (0.38 + 0.03 * rng.uniform());
    const double rx = static_cast<double>(w) * (0.36 + 0.03 * rng.uniform());

    struct Blob {
        double y, x, s, a;
    };
    auto draw_blobs = [&](int count, double amin, double amax, double smin, double smax) {
        std::vector<Blob> bs;
        bs.reserve(static_cast<size_t>(count));
        for (int i = 0; i < count; ++i) {
            Blob b;
            b.y = cy + (rng.uniform() - 0.5) * 1.2 * ry;
            b.x = cx + (rng.uniform() - 0.5) * 1.2 * rx;
            b.s = rng.uniform(smin, smax) * static_cast<double>(std::min(h, w));
            b.a = rng.uniform(amin, amax);
            bs.push_back(b);
        }
        return bs;
    };
    const auto m0_blobs = draw_blobs(5, -0.15, 0.20, 0.08, 0.20);
    const auto r2_blobs = draw_blobs(3, -0.004, 0.006, 0.10, 0.25);
    const auto df_blobs = draw_blobs(3, -0.005, 0.005, 0.10, 0.25);
    const auto p0_blobs = draw_blobs(2, -0.8, 0.8, 0.12, 0.30);
    const double p0_gy = rng.uniform(-1.0, 1.0);
    const double p0_gx = rng.uniform(-1.0, 1.0);
    const double p0_c = rng.uniform(-0.8, 0.8);

    struct Inclusion {
        double y, x, r2, dr2, ddf;
    };
    const int n_inc = 4 + static_cast<int>(rng.uniform_int(4));
    std::vector<Inclusion> incs;
    for (int i = 0; i < n_inc; ++i) {
        Inclusion q;
        const double ang = rng.uniform(0.0, 2.0 * kPi);
        const double rad = std::sqrt(rng.uniform()) * 0.55;
        q.y = cy + std::sin(ang) * rad * ry;
        q.x = cx + std::cos(ang) * rad * rx;
        const double r =
            std::max(2.0, 0.012 * static_cast<double>(std::min(h, w))) * (1.0 + rng.uniform());
        q.r2 = r * r;
        q.dr2 = rng.uniform(0.05, 0.08);
        q.ddf = rng.uniform(0.008, 0.011);
        incs.push_back(q);
    }

    auto blob_sum = [](const std::vector<Blob>& bs, double y, double x) {
        double s = 0.0;
        for (const Blob& b : bs) {
            const double dy = y - b.y, dx = x - b.x;
            s += b.a * std::exp(-(dy * dy + dx * dx) / (2.0 * b.s * b.s));
        }
        return s;
    };

    PhantomMaps maps;
    maps.height = h;
    maps.width = w;
    const size_t n = static_cast<size_t>(h * w);
    maps.m0.assign(n, 0.0f);
    maps.r2star_per_ms.assign(n, 0.0f);
    maps.delta_f_khz.assign(n, 0.0f);
    maps.phi0.assign(n, 0.0f);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            const double yd = static_cast<double>(y), xd = static_cast<double>(x);
            const double ey = (yd - cy) / ry, ex = (xd - cx) / rx;
            if (ey * ey + ex * ex > 1.0) continue;
            double m0 = 0.75 + blob_sum(m0_blobs, yd, xd);
            double r2 = 0.015 + blob_sum(r2_blobs, yd, xd);
            double df = blob_sum(df_blobs, yd, xd);
            const double p0 = p0_c + p0_gy * (yd / static_cast<double>(h) - 0.5) +
                              p0_gx * (xd / static_cast<double>(w) - 0.5) +
                              blob_sum(p0_blobs, yd, xd);
            for (const Inclusion& q : incs) {
                const double dy = yd - q.y, dx = xd - q.x;
                if (dy * dy + dx * dx <= q.r2) {
                    r2 += q.dr2;
                    df += q.ddf;
                    m0 *= 0.9;
                }
            }
            const size_t u = static_cast<size_t>(y * w + x);
            maps.m0[u] = static_cast<float>(std::clamp(m0, 0.05, 1.0));
            maps.r2star_per_ms[u] = static_cast<float>(std::clamp(r2, 0.005, 0.12));
            maps.delta_f_khz[u] = static_cast<float>(df);
            maps.phi0[u] = static_cast<float>(p0);
        }
    }

    Phantom p;
    p.volume = render_volume(maps, echo_times_ms);
    p.maps = std::move(maps);
    return p;
}

}  // namespace cstn
