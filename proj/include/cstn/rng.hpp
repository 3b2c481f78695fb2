#pragma once

#include <cstdint>
#include <random>

namespace cstn {

// mt19937 core with hand-rolled distributions. The standard pins the mt19937
// output sequence exactly but not the distribution adaptors, so sampling is
// done here to keep streams identical across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

    uint32_t next_u32() { return gen_(); }

    uint64_t next_u64() {
        uint64_t hi = gen_();
        return (hi << 32) | gen_();
    }

    // [0,1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0,n)
    int64_t uniform_int(int64_t n) {
        return static_cast<int64_t>(static_cast<double>(n) * uniform());
    }

    // Box-Muller, one spare cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // normal clipped by redraw to |x| <= 2 sigma
    double trunc_normal(double sigma) {
        double x = normal();
        while (x < -2.0 || x > 2.0) x = normal();
        return x * sigma;
    }

private:
    std::mt19937 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace cstn
