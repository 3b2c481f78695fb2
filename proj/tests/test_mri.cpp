#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <vector>

#include "cstn/fft.hpp"
#include "cstn/mri.hpp"
#include "cstn/rng.hpp"

using namespace cstn;
using cd = std::complex<double>;

namespace {

constexpr double pi = 3.14159265358979323846;

// Brute-force 1-D DFT straight from the definition.
std::vector<cd> dft_oracle(const std::vector<cd>& a, int sign) {
    const int64_t n = static_cast<int64_t>(a.size());
    std::vector<cd> out(a.size());
    for (int64_t k = 0; k < n; ++k) {
        cd acc{};
        for (int64_t j = 0; j < n; ++j) {
            double ang = sign * 2.0 * pi * static_cast<double>(j) * static_cast<double>(k) /
                         static_cast<double>(n);
            acc += a[static_cast<size_t>(j)] * cd(std::cos(ang), std::sin(ang));
        }
        out[static_cast<size_t>(k)] = acc;
    }
    return out;
}

// Brute-force orthonormal centered 2-D DFT of a magnitude/phase image.
KSpace kspace_oracle(const ComplexImage& img) {
    const int64_t h = img.height, w = img.width;
    KSpace k;
    k.height = h;
    k.width = w;
    k.re.resize(static_cast<size_t>(h * w));
    k.im.resize(static_cast<size_t>(h * w));
    const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
    for (int64_t u = 0; u < h; ++u) {
        const double fy = static_cast<double>(u - h / 2);
        for (int64_t v = 0; v < w; ++v) {
            const double fx = static_cast<double>(v - w / 2);
            cd acc{};
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    const size_t i = static_cast<size_t>(y * w + x);
                    const cd z = std::polar(static_cast<double>(img.magnitude[i]),
                                            static_cast<double>(img.phase[i]));
                    const double ang = -2.0 * pi *
                                       (fy * static_cast<double>(y) / static_cast<double>(h) +
                                        fx * static_cast<double>(x) / static_cast<double>(w));
                    acc += z * cd(std::cos(ang), std::sin(ang));
                }
            acc *= scale;
            k.re[static_cast<size_t>(u * w + v)] = static_cast<float>(acc.real());
            k.im[static_cast<size_t>(u * w + v)] = static_cast<float>(acc.imag());
        }
    }
    return k;
}

ComplexImage random_image(Rng& rng, int64_t h, int64_t w, float mag_lo = 0.0f,
                          float mag_hi = 1.0f) {
    ComplexImage img;
    img.height = h;
    img.width = w;
    img.magnitude.resize(static_cast<size_t>(h * w));
    img.phase.resize(static_cast<size_t>(h * w));
    for (auto& m : img.magnitude) m = static_cast<float>(rng.uniform(mag_lo, mag_hi));
    for (auto& p : img.phase)
        p = static_cast<float>(wrap_phase(rng.uniform(-3.14159, 3.14159)));
    return img;
}

double phase_diff(double a, double b) { return std::fabs(wrap_phase(a - b)); }

double vol_norm(const MultiEchoVolume& v) {
    double s = 0.0;
    for (const auto& e : v.echoes)
        for (float m : e.magnitude) s += static_cast<double>(m) * m;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("1-D transform matches the brute-force DFT at mixed and prime lengths") {
    Rng rng(3);
    for (int64_t n : {4, 6, 8, 12, 60, 61, 77, 97, 101, 128}) {
        std::vector<cd> a(static_cast<size_t>(n));
        for (auto& v : a) v = cd(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        for (int sign : {-1, +1}) {
            std::vector<cd> got = a;
            fft::transform(got.data(), n, sign);
            auto want = dft_oracle(a, sign);
            double worst = 0.0;
            for (size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
            INFO("n=" << n << " sign=" << sign);
            CHECK(worst < 1e-9 * static_cast<double>(n));
        }
    }
}

TEST_CASE("to_kspace matches the 2-D oracle for all small sizes") {
    Rng rng(5);
    for (int64_t h : {4, 6, 8, 12})
        for (int64_t w : {4, 6, 8, 12}) {
            ComplexImage img = random_image(rng, h, w);
            KSpace got = to_kspace(img);
            KSpace want = kspace_oracle(img);
            double worst = 0.0;
            for (size_t i = 0; i < got.re.size(); ++i) {
                worst = std::max(worst, std::fabs(static_cast<double>(got.re[i]) - want.re[i]));
                worst = std::max(worst, std::fabs(static_cast<double>(got.im[i]) - want.im[i]));
            }
            INFO(h << "x" << w);
            CHECK(worst < 1e-4);
        }
}

TEST_CASE("constant image concentrates at the centered DC bin") {
    const int64_t h = 8, w = 6;
    const float c = 0.8125f;
    ComplexImage img;
    img.height = h;
    img.width = w;
    img.magnitude.assign(static_cast<size_t>(h * w), c);
    img.phase.assign(static_cast<size_t>(h * w), 0.0f);
    KSpace k = to_kspace(img);
    const double dc = c * std::sqrt(static_cast<double>(h * w));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y * w + x);
            const double want = (y == h / 2 && x == w / 2) ? dc : 0.0;
            CHECK(std::fabs(k.re[i] - want) < 1e-5);
            CHECK(std::fabs(k.im[i]) < 1e-5);
        }
}

TEST_CASE("delta at DC inverts to a unit constant image") {
    const int64_t h = 6, w = 10;
    KSpace k;
    k.height = h;
    k.width = w;
    k.re.assign(static_cast<size_t>(h * w), 0.0f);
    k.im.assign(static_cast<size_t>(h * w), 0.0f);
    k.re[static_cast<size_t>((h / 2) * w + w / 2)] =
        static_cast<float>(std::sqrt(static_cast<double>(h * w)));
    ComplexImage img = from_kspace(k);
    for (size_t i = 0; i < img.magnitude.size(); ++i) {
        CHECK(std::fabs(img.magnitude[i] - 1.0f) < 1e-5f);
        CHECK(std::fabs(img.phase[i]) < 1e-5f);
    }
}

TEST_CASE("conjugate-symmetric spectrum yields zero phase") {
    Rng rng(9);
    const int64_t h = 8, w = 8;
    KSpace k;
    k.height = h;
    k.width = w;
    k.re.assign(static_cast<size_t>(h * w), 0.0f);
    k.im.assign(static_cast<size_t>(h * w), 0.0f);
    for (int64_t u = 0; u < h; ++u)
        for (int64_t v = 0; v < w; ++v) {
            // frequency of bin (u,v) is (u-h/2, v-w/2); its mirror negates both
            const int64_t mu = ((h / 2 - (u - h / 2)) % h + h) % h;
            const int64_t mv = ((w / 2 - (v - w / 2)) % w + w) % w;
            const size_t i = static_cast<size_t>(u * w + v);
            const size_t mi = static_cast<size_t>(mu * w + mv);
            if (mi < i) continue;
            const float re = static_cast<float>(rng.uniform(-0.2, 0.2));
            const float im = static_cast<float>(rng.uniform(-0.2, 0.2));
            k.re[i] = re;
            k.im[i] = im;
            k.re[mi] = re;
            k.im[mi] = -im;
            if (mi == i) k.im[i] = 0.0f;
        }
    // strong DC keeps the real image positive everywhere
    k.re[static_cast<size_t>((h / 2) * w + w / 2)] = 40.0f;
    k.im[static_cast<size_t>((h / 2) * w + w / 2)] = 0.0f;
    ComplexImage img = from_kspace(k);
    for (float p : img.phase) CHECK(std::fabs(p) < 1e-5f);
}

TEST_CASE("k-space round trip reproduces the image") {
    Rng rng(13);
    for (int64_t n : {12, 16}) {
        ComplexImage img = random_image(rng, n, n, 0.2f, 1.0f);
        ComplexImage back = from_kspace(to_kspace(img));
        for (size_t i = 0; i < img.magnitude.size(); ++i) {
            CHECK(std::fabs(back.magnitude[i] - img.magnitude[i]) < 1e-5f);
            CHECK(phase_diff(back.phase[i], img.phase[i]) < 1e-4);
        }
    }
}

TEST_CASE("Parseval holds under the orthonormal convention") {
    Rng rng(17);
    for (auto [h, w] : {std::pair<int64_t, int64_t>{16, 16}, {24, 18}, {96, 72}}) {
        ComplexImage img = random_image(rng, h, w);
        KSpace k = to_kspace(img);
        double img_e = 0.0, k_e = 0.0;
        for (float m : img.magnitude) img_e += static_cast<double>(m) * m;
        for (size_t i = 0; i < k.re.size(); ++i)
            k_e += static_cast<double>(k.re[i]) * k.re[i] + static_cast<double>(k.im[i]) * k.im[i];
        CHECK(std::fabs(std::sqrt(img_e) - std::sqrt(k_e)) < 1e-5 * std::sqrt(img_e));
    }
}

TEST_CASE("truncate_kspace to the same size is the identity") {
    Rng rng(19);
    ComplexImage img = random_image(rng, 12, 10);
    KSpace k = to_kspace(img);
    KSpace t = truncate_kspace(k, 12, 10);
    for (size_t i = 0; i < k.re.size(); ++i) {
        CHECK(t.re[i] == k.re[i]);
        CHECK(t.im[i] == k.im[i]);
    }
}

TEST_CASE("truncate_kspace rejects enlargement") {
    KSpace k;
    k.height = 8;
    k.width = 8;
    k.re.assign(64, 0.0f);
    k.im.assign(64, 0.0f);
    CHECK_THROWS_AS(truncate_kspace(k, 12, 8), DataError);
    CHECK_THROWS_AS(truncate_kspace(k, 8, 0), DataError);
}

TEST_CASE("truncation preserves a constant image's value") {
    const int64_t h = 48, w = 48;
    const float c = 0.4375f;
    ComplexImage img;
    img.height = h;
    img.width = w;
    img.magnitude.assign(static_cast<size_t>(h * w), c);
    img.phase.assign(static_cast<size_t>(h * w), 0.0f);
    ComplexImage low = from_kspace(truncate_kspace(to_kspace(img), 32, 32));
    REQUIRE(low.height == 32);
    for (float m : low.magnitude) CHECK(std::fabs(m - c) < 1e-4f);
}

TEST_CASE("simulate_lowres keeps echo structure and hits protocol sizes") {
    Phantom p = generate_phantom(42, 384, 384, {14.0, 27.0, 40.0});
    for (int64_t target : {256, 192}) {
        MultiEchoVolume low = simulate_lowres(p.volume, target, target);
        REQUIRE(low.echoes.size() == 3);
        CHECK(low.echo_times_ms == p.volume.echo_times_ms);
        for (const auto& e : low.echoes) {
            CHECK(e.height == target);
            CHECK(e.width == target);
        }
        validate(low);
    }
}

TEST_CASE("simulate_lowres at full size is the identity within tolerance") {
    Phantom p = generate_phantom(7, 64, 64, {14.0, 27.0, 40.0});
    MultiEchoVolume same = simulate_lowres(p.volume, 64, 64);
    for (size_t e = 0; e < same.echoes.size(); ++e)
        for (size_t i = 0; i < same.echoes[e].magnitude.size(); ++i) {
            CHECK(std::fabs(same.echoes[e].magnitude[i] - p.volume.echoes[e].magnitude[i]) <
                  1e-5f);
            if (p.volume.echoes[e].magnitude[i] > 1e-3f)
                CHECK(phase_diff(same.echoes[e].phase[i], p.volume.echoes[e].phase[i]) < 1e-3);
        }
}

TEST_CASE("truncation rings at sharp edges") {
    Phantom p = generate_phantom(3, 128, 128, {14.0});
    MultiEchoVolume low = simulate_lowres(p.volume, 64, 64);
    // reference support from the ground truth, nearest-neighbor downsampled
    const auto& hr = p.volume.echoes[0].magnitude;
    const auto& lr = low.echoes[0].magnitude;
    auto support = [&](int64_t y, int64_t x) { return hr[static_cast<size_t>(2 * y * 128 + 2 * x)] > 0.0f; };
    double overshoot = 0.0;
    for (int64_t y = 0; y < 64; ++y)
        for (int64_t x = 0; x < 64; ++x) {
            bool near_support = false;
            for (int64_t dy = -2; dy <= 2 && !near_support; ++dy)
                for (int64_t dx = -2; dx <= 2; ++dx) {
                    const int64_t yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < 64 && xx >= 0 && xx < 64 && support(yy, xx)) {
                        near_support = true;
                        break;
                    }
                }
            if (!near_support)
                overshoot = std::max(overshoot, static_cast<double>(lr[static_cast<size_t>(y * 64 + x)]));
        }
    INFO("overshoot outside the monotone (zero) region: " << overshoot);
    CHECK(overshoot > 0.005);
}

TEST_CASE("phantom generation is deterministic and seed-sensitive") {
    Phantom a = generate_phantom(123, 64, 64, {14.0, 27.0, 40.0});
    Phantom b = generate_phantom(123, 64, 64, {14.0, 27.0, 40.0});
    Phantom c = generate_phantom(124, 64, 64, {14.0, 27.0, 40.0});
    REQUIRE(a.volume.echoes.size() == b.volume.echoes.size());
    bool all_equal = true, differs = false;
    for (size_t e = 0; e < a.volume.echoes.size(); ++e)
        for (size_t i = 0; i < a.volume.echoes[e].magnitude.size(); ++i) {
            if (a.volume.echoes[e].magnitude[i] != b.volume.echoes[e].magnitude[i]) all_equal = false;
            if (a.volume.echoes[e].phase[i] != b.volume.echoes[e].phase[i]) all_equal = false;
            if (a.volume.echoes[e].magnitude[i] != c.volume.echoes[e].magnitude[i]) differs = true;
        }
    for (size_t i = 0; i < a.maps.m0.size(); ++i)
        if (a.maps.m0[i] != b.maps.m0[i]) all_equal = false;
    CHECK(all_equal);
    CHECK(differs);
}

TEST_CASE("phantom magnitudes stay in [0,1] and phases stay wrapped") {
    Phantom p = generate_phantom(55, 96, 80, {14.0, 27.0, 40.0});
    validate(p.volume);
    for (const auto& e : p.volume.echoes)
        for (float m : e.magnitude) {
            CHECK(m >= 0.0f);
            CHECK(m <= 1.0f);
        }
}

TEST_CASE("decay follows exp(-TE*R2*) with the pinned ratios") {
    PhantomMaps maps;
    maps.height = 1;
    maps.width = 1;
    maps.m0 = {1.0f};
    maps.r2star_per_ms = {0.05f};
    maps.delta_f_khz = {0.0f};
    maps.phi0 = {0.0f};
    MultiEchoVolume v = render_volume(maps, {14.0, 27.0, 40.0});
    CHECK(v.echoes[0].magnitude[0] == doctest::Approx(0.4966).epsilon(1e-3));
    CHECK(v.echoes[1].magnitude[0] == doctest::Approx(0.2592).epsilon(1e-3));
    CHECK(v.echoes[2].magnitude[0] == doctest::Approx(0.1353).epsilon(1e-3));

    Phantom p = generate_phantom(77, 64, 64, {14.0, 27.0, 40.0});
    const size_t i = static_cast<size_t>(32 * 64 + 32);
    for (size_t e = 0; e < 3; ++e) {
        const double want = static_cast<double>(p.maps.m0[i]) *
                            std::exp(-p.volume.echo_times_ms[e] *
                                     static_cast<double>(p.maps.r2star_per_ms[i]));
        CHECK(p.volume.echoes[e].magnitude[i] == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("zero off-resonance makes every echo share the phi0 phase map") {
    Phantom p = generate_phantom(31, 64, 64, {14.0, 27.0, 40.0});
    PhantomMaps maps = p.maps;
    std::fill(maps.delta_f_khz.begin(), maps.delta_f_khz.end(), 0.0f);
    MultiEchoVolume v = render_volume(maps, {14.0, 27.0, 40.0});
    for (size_t i = 0; i < maps.phi0.size(); ++i) {
        const float want = static_cast<float>(wrap_phase(static_cast<double>(maps.phi0[i])));
        for (const auto& e : v.echoes) CHECK(e.phase[i] == want);
    }
}

TEST_CASE("phantom input validation") {
    CHECK_THROWS_AS(generate_phantom(1, 16, 64, {14.0}), DataError);
    CHECK_THROWS_AS(generate_phantom(1, 64, 64, {}), DataError);
    CHECK_THROWS_AS(generate_phantom(1, 64, 64, {14.0, 14.0}), DataError);
    CHECK_THROWS_AS(generate_phantom(1, 64, 64, {-2.0, 14.0}), DataError);
}

TEST_CASE("volume validation catches structural problems") {
    Phantom p = generate_phantom(2, 64, 64, {14.0, 27.0});
    MultiEchoVolume v = p.volume;
    v.echo_times_ms = {27.0, 14.0};
    CHECK_THROWS_AS(validate(v), DataError);
    v = p.volume;
    v.echoes[1].magnitude[5] = -0.5f;
    CHECK_THROWS_AS(validate(v), DataError);
    v = p.volume;
    v.echoes[1].phase[5] = 4.0f;
    CHECK_THROWS_AS(validate(v), DataError);
    v = p.volume;
    v.echoes.pop_back();
    CHECK_THROWS_AS(validate(v), DataError);
}

TEST_CASE("volume norm is preserved through k-space per echo") {
    Phantom p = generate_phantom(91, 64, 64, {14.0, 27.0});
    double before = vol_norm(p.volume);
    double after = 0.0;
    for (const auto& e : p.volume.echoes) {
        KSpace k = to_kspace(e);
        for (size_t i = 0; i < k.re.size(); ++i)
            after += static_cast<double>(k.re[i]) * k.re[i] +
                     static_cast<double>(k.im[i]) * k.im[i];
    }
    CHECK(std::fabs(before - std::sqrt(after)) < 1e-5 * before);
}
