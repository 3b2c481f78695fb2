#include "cstn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cstn/blas.hpp"
#include "cstn/ops.hpp"
#include "cstn/rng.hpp"

namespace cstn {

namespace {

struct PreciseScope {
    GemmMode saved;
    PreciseScope() : saved(gemm_mode()) { set_gemm_mode(GemmMode::Precise); }
    ~PreciseScope() { set_gemm_mode(saved); }
};

}  // namespace

GradCheckReport gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                          std::vector<Tensor> leaves, double eps, int64_t max_per_leaf,
                          uint64_t seed) {
    PreciseScope precise;
    Rng rng(seed);

    Tensor probe = fn(leaves);
    std::vector<float> r(static_cast<size_t>(probe.numel()));
    for (float& v : r) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor r_t(probe.shape(), r);

    auto functional = [&fn, &r](const std::vector<Tensor>& ls) {
        Tensor y = fn(ls);
        const float* p = y.data().data();
        double acc = 0.0;
        for (size_t i = 0; i < r.size(); ++i)
            acc += static_cast<double>(r[i]) * static_cast<double>(p[i]);
        return acc;
    };

    std::vector<std::vector<float>> analytic(leaves.size());
    {
        Tape tape;
        TapeScope scope(tape);
        for (Tensor& l : leaves) tape.watch(l);
        Tensor y = fn(leaves);
        Tensor loss = sum(mul(y, r_t));
        tape.backward(loss);
        for (size_t i = 0; i < leaves.size(); ++i) {
            auto g = leaves[i].grad();
            analytic[i].assign(g.begin(), g.end());
        }
    }

    GradCheckReport rep;
    const float step = static_cast<float>(eps);
    for (size_t li = 0; li < leaves.size(); ++li) {
        float* data = leaves[li].data().data();
        const int64_t n = leaves[li].numel();
        std::vector<int64_t> idx(static_cast<size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        if (max_per_leaf > 0 && n > max_per_leaf) {
            for (int64_t i = 0; i < max_per_leaf; ++i) {
                int64_t j = i + rng.uniform_int(n - i);
                std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
            }
            idx.resize(static_cast<size_t>(max_per_leaf));
        }
        for (int64_t j : idx) {
            const float orig = data[j];
            const float xp = orig + step;
            const float xm = orig - step;
            const double h = static_cast<double>(xp) - static_cast<double>(xm);
            data[j] = xp;
            const double fp = functional(leaves);
            data[j] = xm;
            const double fm = functional(leaves);
            data[j] = orig;
            const double fd = (fp - fm) / h;
            const double ad = analytic[li][static_cast<size_t>(j)];
            const double rel =
                std::fabs(fd - ad) / std::max({std::fabs(fd), std::fabs(ad), 1.0});
            ++rep.checks;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst = "leaf " + std::to_string(li) + " [" + std::to_string(j) + "]";
            }
        }
    }
    return rep;
}

namespace {

Tensor rand_tensor(Rng& rng, Shape shape, float lo = -1.0f, float hi = 1.0f) {
    std::vector<float> v(static_cast<size_t>(numel_of(shape)));
    for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
    return Tensor(std::move(shape), std::move(v));
}

// magnitudes in [0.3, 1], random sign: keeps abs and div away from their kinks
Tensor rand_signed(Rng& rng, Shape shape) {
    std::vector<float> v(static_cast<size_t>(numel_of(shape)));
    for (float& x : v) {
        float m = static_cast<float>(rng.uniform(0.3, 1.0));
        x = rng.uniform() < 0.5 ? -m : m;
    }
    return Tensor(std::move(shape), std::move(v));
}

}  // namespace

std::vector<OpCheck> gradcheck_all_ops(uint64_t seed) {
    Rng rng(seed);
    std::vector<OpCheck> out;
    auto run = [&](const char* name, std::function<Tensor(const std::vector<Tensor>&)> fn,
                   std::vector<Tensor> leaves) {
        out.push_back({name, gradcheck(fn, std::move(leaves), 1e-3, 0, seed ^ out.size())});
    };

    run("add", [](const std::vector<Tensor>& l) { return add(l[0], l[1]); },
        {rand_tensor(rng, {2, 3}), rand_tensor(rng, {2, 3})});
    run("add_broadcast", [](const std::vector<Tensor>& l) { return add(l[0], l[1]); },
        {rand_tensor(rng, {2, 3, 4}), rand_tensor(rng, {4})});
    run("add_scalar", [](const std::vector<Tensor>& l) { return add(l[0], 0.37f); },
        {rand_tensor(rng, {2, 3})});
    run("sub", [](const std::vector<Tensor>& l) { return sub(l[0], l[1]); },
        {rand_tensor(rng, {2, 3}), rand_tensor(rng, {2, 3})});
    run("sub_broadcast", [](const std::vector<Tensor>& l) { return sub(l[0], l[1]); },
        {rand_tensor(rng, {2, 3, 4}), rand_tensor(rng, {3, 4})});
    run("sub_scalar", [](const std::vector<Tensor>& l) { return sub(l[0], 0.21f); },
        {rand_tensor(rng, {5})});
    run("mul", [](const std::vector<Tensor>& l) { return mul(l[0], l[1]); },
        {rand_tensor(rng, {2, 3}), rand_tensor(rng, {2, 3})});
    run("mul_scalar", [](const std::vector<Tensor>& l) { return mul(l[0], -1.4f); },
        {rand_tensor(rng, {2, 3})});
    run("div", [](const std::vector<Tensor>& l) { return div(l[0], l[1]); },
        {rand_tensor(rng, {2, 3}), rand_signed(rng, {2, 3})});
    run("div_scalar", [](const std::vector<Tensor>& l) { return div(l[0], 0.73f); },
        {rand_tensor(rng, {2, 3})});
    run("neg", [](const std::vector<Tensor>& l) { return neg(l[0]); },
        {rand_tensor(rng, {4})});
    run("sqrt", [](const std::vector<Tensor>& l) { return sqrt(l[0]); },
        {rand_tensor(rng, {2, 4}, 0.5f, 1.5f)});
    run("abs", [](const std::vector<Tensor>& l) { return abs(l[0]); },
        {rand_signed(rng, {2, 4})});
    run("gelu", [](const std::vector<Tensor>& l) { return gelu(l[0]); },
        {rand_tensor(rng, {2, 5})});
    run("softmax", [](const std::vector<Tensor>& l) { return softmax(l[0], -1); },
        {rand_tensor(rng, {3, 5})});
    run("softmax_axis0", [](const std::vector<Tensor>& l) { return softmax(l[0], 0); },
        {rand_tensor(rng, {4, 3})});
    run("sum", [](const std::vector<Tensor>& l) { return sum(l[0]); },
        {rand_tensor(rng, {2, 3})});
    run("mean", [](const std::vector<Tensor>& l) { return mean(l[0]); },
        {rand_tensor(rng, {2, 3})});
    run("reshape", [](const std::vector<Tensor>& l) { return reshape(l[0], {3, 4}); },
        {rand_tensor(rng, {2, 6})});
    run("permute", [](const std::vector<Tensor>& l) { return permute(l[0], {2, 0, 1}); },
        {rand_tensor(rng, {2, 3, 4})});
    run("concat", [](const std::vector<Tensor>& l) { return concat({l[0], l[1]}, 1); },
        {rand_tensor(rng, {2, 3}), rand_tensor(rng, {2, 2})});
    run("slice", [](const std::vector<Tensor>& l) { return slice(l[0], 1, 1, 4); },
        {rand_tensor(rng, {2, 6})});
    run("roll_hw", [](const std::vector<Tensor>& l) { return roll_hw(l[0], 1, -2); },
        {rand_tensor(rng, {1, 4, 5, 2})});
    run("pad_reflect_hw", [](const std::vector<Tensor>& l) { return pad_reflect_hw(l[0], 3, 2); },
        {rand_tensor(rng, {1, 4, 4, 2})});
    run("index_select0",
        [](const std::vector<Tensor>& l) { return index_select0(l[0], {0, 2, 2, 4}); },
        {rand_tensor(rng, {5, 3})});
    run("matmul", [](const std::vector<Tensor>& l) { return matmul(l[0], l[1]); },
        {rand_tensor(rng, {4, 5}), rand_tensor(rng, {5, 3})});
    run("matmul_batched", [](const std::vector<Tensor>& l) { return matmul(l[0], l[1]); },
        {rand_tensor(rng, {2, 3, 4}), rand_tensor(rng, {2, 4, 2})});
    run("matmul_shared_b", [](const std::vector<Tensor>& l) { return matmul(l[0], l[1]); },
        {rand_tensor(rng, {2, 3, 4}), rand_tensor(rng, {4, 2})});
    run("matmul_nt", [](const std::vector<Tensor>& l) { return matmul_nt(l[0], l[1]); },
        {rand_tensor(rng, {3, 4}), rand_tensor(rng, {5, 4})});
    run("linear", [](const std::vector<Tensor>& l) { return linear(l[0], l[1], l[2]); },
        {rand_tensor(rng, {2, 3, 4}), rand_tensor(rng, {5, 4}), rand_tensor(rng, {5})});
    run("linear_nobias", [](const std::vector<Tensor>& l) { return linear(l[0], l[1], Tensor()); },
        {rand_tensor(rng, {3, 4}), rand_tensor(rng, {5, 4})});
    run("conv2d",
        [](const std::vector<Tensor>& l) { return conv2d(l[0], l[1], l[2], PadMode::Zero); },
        {rand_tensor(rng, {1, 2, 6, 6}), rand_tensor(rng, {3, 2, 3, 3}), rand_tensor(rng, {3})});
    run("conv2d_reflect",
        [](const std::vector<Tensor>& l) { return conv2d(l[0], l[1], l[2], PadMode::Reflect); },
        {rand_tensor(rng, {1, 2, 6, 6}), rand_tensor(rng, {3, 2, 3, 3}), rand_tensor(rng, {3})});
    run("layer_norm",
        [](const std::vector<Tensor>& l) { return layer_norm(l[0], l[1], l[2]); },
        {rand_tensor(rng, {2, 4, 8}), rand_tensor(rng, {8}, 0.5f, 1.5f), rand_tensor(rng, {8})});
    return out;
}

}  // namespace cstn
