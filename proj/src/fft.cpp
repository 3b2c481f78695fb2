#include "cstn/fft.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cstn/common.hpp"

namespace cstn::fft {

namespace {

using cd = std::complex<double>;

int64_t next_pow2(int64_t n) {
    int64_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

int64_t smallest_factor(int64_t n) {
    if (n % 2 == 0) return 2;
    for (int64_t f = 3; f * f <= n; f += 2)
        if (n % f == 0) return f;
    return n;
}

void dft_naive(cd* a, int64_t n, int sign) {
    std::vector<cd> out(static_cast<size_t>(n));
    const double base = sign * 2.0 * kPi / static_cast<double>(n);
    for (int64_t k = 0; k < n; ++k) {
        cd acc{};
        for (int64_t j = 0; j < n; ++j)
            acc += a[j] * std::polar(1.0, base * static_cast<double>((j * k) % n));
        out[static_cast<size_t>(k)] = acc;
    }
    std::copy(out.begin(), out.end(), a);
}

void fft_rec(cd* a, int64_t n, int sign);

void bluestein(cd* a, int64_t n, int sign) {
    const int64_t m = next_pow2(2 * n - 1);
    std::vector<cd> w(static_cast<size_t>(n));
    for (int64_t j = 0; j < n; ++j) {
        double ang = sign * kPi * static_cast<double>((j * j) % (2 * n)) / static_cast<double>(n);
        w[static_cast<size_t>(j)] = std::polar(1.0, ang);
    }
    std::vector<cd> c(static_cast<size_t>(m)), b(static_cast<size_t>(m));
    for (int64_t j = 0; j < n; ++j) c[static_cast<size_t>(j)] = a[j] * w[static_cast<size_t>(j)];
    for (int64_t j = 0; j < n; ++j) {
        cd h = std::conj(w[static_cast<size_t>(j)]);
        b[static_cast<size_t>(j)] = h;
        if (j) b[static_cast<size_t>(m - j)] = h;
    }
    fft_rec(c.data(), m, -1);
    fft_rec(b.data(), m, -1);
    for (int64_t j = 0; j < m; ++j) c[static_cast<size_t>(j)] *= b[static_cast<size_t>(j)];
    fft_rec(c.data(), m, +1);
    const double inv = 1.0 / static_cast<double>(m);
    for (int64_t k = 0; k < n; ++k) a[k] = w[static_cast<size_t>(k)] * c[static_cast<size_t>(k)] * inv;
}

void fft_rec(cd* a, int64_t n, int sign) {
    if (n <= 1) return;
    const int64_t p = smallest_factor(n);
    if (p == n) {
        if (n <= 64)
            dft_naive(a, n, sign);
        else
            bluestein(a, n, sign);
        return;
    }
    const int64_t m = n / p;
    std::vector<cd> sub(static_cast<size_t>(n));
    for (int64_t r = 0; r < p; ++r)
        for (int64_t q = 0; q < m; ++q) sub[static_cast<size_t>(r * m + q)] = a[q * p + r];
    for (int64_t r = 0; r < p; ++r) fft_rec(sub.data() + r * m, m, sign);
    std::vector<cd> tw(static_cast<size_t>(n));
    const double base = sign * 2.0 * kPi / static_cast<double>(n);
    for (int64_t t = 0; t < n; ++t) tw[static_cast<size_t>(t)] = std::polar(1.0, base * static_cast<double>(t));
    for (int64_t k = 0; k < m; ++k) {
        for (int64_t s = 0; s < p; ++s) {
            const int64_t out_idx = k + s * m;
            cd acc{};
            for (int64_t r = 0; r < p; ++r)
                acc += sub[static_cast<size_t>(r * m + k)] * tw[static_cast<size_t>((r * out_idx) % n)];
            a[out_idx] = acc;
        }
    }
}

}  // namespace

void transform(cd* a, int64_t n, int sign) { fft_rec(a, n, sign); }

void transform_2d(cd* a, int64_t h, int64_t w, int sign) {
    for (int64_t y = 0; y < h; ++y) transform(a + y * w, w, sign);
    std::vector<cd> col(static_cast<size_t>(h));
    for (int64_t x = 0; x < w; ++x) {
        for (int64_t y = 0; y < h; ++y) col[static_cast<size_t>(y)] = a[y * w + x];
        transform(col.data(), h, sign);
        for (int64_t y = 0; y < h; ++y) a[y * w + x] = col[static_cast<size_t>(y)];
    }
}

}  // namespace cstn::fft
