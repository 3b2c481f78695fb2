#include "cstn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cstn/blas.hpp"

namespace cstn {

namespace {

using detail::accumulate;
using detail::maybe_record;

Tensor raw(Shape shape) { return Tensor(std::move(shape)); }

// Returns true when small's shape is a trailing suffix of big's.
bool is_suffix(const Shape& big, const Shape& small) {
    if (small.size() > big.size()) return false;
    size_t off = big.size() - small.size();
    for (size_t i = 0; i < small.size(); ++i)
        if (big[off + i] != small[i]) return false;
    return true;
}

enum class BinKind { Add, Sub, Mul, Div };

// y = a (op) broadcast(b); b's shape is a suffix of a's (possibly equal).
Tensor binary_suffix(const char* name, BinKind kind, const Tensor& a, const Tensor& b) {
    const int64_t n = a.numel();
    const int64_t s = b.numel();
    Tensor out = raw(a.shape());
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    float* po = out.data().data();
    switch (kind) {
        case BinKind::Add:
            for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i % s];
            break;
        case BinKind::Sub:
            for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i % s];
            break;
        case BinKind::Mul:
            for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i % s];
            break;
        case BinKind::Div:
            for (int64_t i = 0; i < n; ++i) po[i] = pa[i] / pb[i % s];
            break;
    }
    ImplPtr ia = a.impl(), ib = b.impl(), io = out.impl();
    maybe_record(name, {ia, ib}, io, [ia, ib, io, kind, n, s]() {
        const float* dy = io->grad.data();
        if (ia->requires_grad) {
            ia->ensure_grad();
            float* da = ia->grad.data();
            const float* pb2 = ib->data.data();
            switch (kind) {
                case BinKind::Add:
                case BinKind::Sub:
                    for (int64_t i = 0; i < n; ++i) da[i] += dy[i];
                    break;
                case BinKind::Mul:
                    for (int64_t i = 0; i < n; ++i) da[i] += dy[i] * pb2[i % s];
                    break;
                case BinKind::Div:
                    for (int64_t i = 0; i < n; ++i) da[i] += dy[i] / pb2[i % s];
                    break;
            }
        }
        if (ib->requires_grad) {
            ib->ensure_grad();
            float* db = ib->grad.data();
            const float* pa2 = ia->data.data();
            const float* pb2 = ib->data.data();
            switch (kind) {
                case BinKind::Add:
                    for (int64_t i = 0; i < n; ++i) db[i % s] += dy[i];
                    break;
                case BinKind::Sub:
                    for (int64_t i = 0; i < n; ++i) db[i % s] -= dy[i];
                    break;
                case BinKind::Mul:
                    for (int64_t i = 0; i < n; ++i) db[i % s] += dy[i] * pa2[i];
                    break;
                case BinKind::Div:
                    for (int64_t i = 0; i < n; ++i) {
                        float bv = pb2[i % s];
                        db[i % s] += -dy[i] * pa2[i] / (bv * bv);
                    }
                    break;
            }
        }
    });
    return out;
}

Tensor binary(const char* name, BinKind kind, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return binary_suffix(name, kind, a, b);
    if (kind == BinKind::Add || kind == BinKind::Sub) {
        if (is_suffix(a.shape(), b.shape())) return binary_suffix(name, kind, a, b);
        if (kind == BinKind::Add && is_suffix(b.shape(), a.shape()))
            return binary_suffix(name, kind, b, a);
    }
    throw DataError(std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
}

Tensor scalar_binary(const char* name, BinKind kind, const Tensor& a, float s) {
    const int64_t n = a.numel();
    Tensor out = raw(a.shape());
    const float* pa = a.data().data();
    float* po = out.data().data();
    switch (kind) {
        case BinKind::Add:
            for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + s;
            break;
        case BinKind::Sub:
            for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - s;
            break;
        case BinKind::Mul:
            for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * s;
            break;
        case BinKind::Div:
            for (int64_t i = 0; i < n; ++i) po[i] = pa[i] / s;
            break;
    }
    ImplPtr ia = a.impl(), io = out.impl();
    maybe_record(name, {ia}, io, [ia, io, kind, s, n]() {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        const float* dy = io->grad.data();
        float* da = ia->grad.data();
        float f = (kind == BinKind::Mul) ? s : (kind == BinKind::Div) ? 1.0f / s : 1.0f;
        for (int64_t i = 0; i < n; ++i) da[i] += dy[i] * f;
    });
    return out;
}

template <class Fwd, class Bwd>
Tensor unary(const char* name, const Tensor& a, Fwd f, Bwd dfdx_from_xy) {
    const int64_t n = a.numel();
    Tensor out = raw(a.shape());
    const float* pa = a.data().data();
    float* po = out.data().data();
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);
    ImplPtr ia = a.impl(), io = out.impl();
    maybe_record(name, {ia}, io, [ia, io, dfdx_from_xy, n]() {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        const float* dy = io->grad.data();
        const float* px = ia->data.data();
        const float* py = io->data.data();
        float* da = ia->grad.data();
        for (int64_t i = 0; i < n; ++i) da[i] += dy[i] * dfdx_from_xy(px[i], py[i]);
    });
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinKind::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary("div", BinKind::Div, a, b); }
Tensor add(const Tensor& a, float s) { return scalar_binary("add_s", BinKind::Add, a, s); }
Tensor sub(const Tensor& a, float s) { return scalar_binary("sub_s", BinKind::Sub, a, s); }
Tensor mul(const Tensor& a, float s) { return scalar_binary("mul_s", BinKind::Mul, a, s); }
Tensor div(const Tensor& a, float s) { return scalar_binary("div_s", BinKind::Div, a, s); }

Tensor neg(const Tensor& a) { return mul(a, -1.0f); }

Tensor sqrt(const Tensor& a) {
    return unary(
        "sqrt", a, [](float x) { return std::sqrt(x); },
        [](float, float y) { return y > 0.0f ? 0.5f / y : 0.0f; });
}

Tensor abs(const Tensor& a) {
    return unary(
        "abs", a, [](float x) { return std::fabs(x); },
        [](float x, float) { return x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f); });
}

Tensor gelu(const Tensor& a) {
    constexpr float c = 0.7978845608028654f;  // sqrt(2/pi)
    constexpr float q = 0.044715f;
    return unary(
        "gelu", a,
        [](float x) {
            float u = c * (x + q * x * x * x);
            return 0.5f * x * (1.0f + std::tanh(u));
        },
        [](float x, float) {
            float u = c * (x + q * x * x * x);
            float t = std::tanh(u);
            float du = c * (1.0f + 3.0f * q * x * x);
            return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du;
        });
}

namespace {

int normalize_axis(int axis, int ndim, const char* op) {
    int ax = axis < 0 ? axis + ndim : axis;
    if (ax < 0 || ax >= ndim)
        throw DataError(std::string(op) + ": axis " + std::to_string(axis) +
                        " out of range for rank " + std::to_string(ndim));
    return ax;
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
    int ax = normalize_axis(axis, a.ndim(), "softmax");
    const Shape& s = a.shape();
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < ax; ++i) outer *= s[i];
    for (int i = ax + 1; i < a.ndim(); ++i) inner *= s[i];
    const int64_t d = s[ax];
    Tensor out = raw(s);
    const float* px = a.data().data();
    float* py = out.data().data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const float* lane = px + o * d * inner + in;
            float* dst = py + o * d * inner + in;
            float m = lane[0];
            for (int64_t i = 1; i < d; ++i) m = std::max(m, lane[i * inner]);
            double total = 0.0;
            for (int64_t i = 0; i < d; ++i) {
                float e = std::exp(lane[i * inner] - m);
                dst[i * inner] = e;
                total += e;
            }
            float invt = static_cast<float>(1.0 / total);
            for (int64_t i = 0; i < d; ++i) dst[i * inner] *= invt;
        }
    }
    ImplPtr ia = a.impl(), io = out.impl();
    maybe_record("softmax", {ia}, io, [ia, io, outer, inner, d]() {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        const float* dy = io->grad.data();
        const float* py = io->data.data();
        float* da = ia->grad.data();
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t in = 0; in < inner; ++in) {
                const int64_t base = o * d * inner + in;
                double dot = 0.0;
                for (int64_t i = 0; i < d; ++i)
                    dot += static_cast<double>(dy[base + i * inner]) * py[base + i * inner];
                float dot_f = static_cast<float>(dot);
                for (int64_t i = 0; i < d; ++i) {
                    int64_t k = base + i * inner;
                    da[k] += py[k] * (dy[k] - dot_f);
                }
            }
        }
    });
    return out;
}

namespace {

Tensor reduce_all(const char* name, const Tensor& a, double scale) {
    const int64_t n = a.numel();
    const float* pa = a.data().data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += pa[i];
    Tensor out = Tensor::scalar(static_cast<float>(acc * scale));
    ImplPtr ia = a.impl(), io = out.impl();
    maybe_record(name, {ia}, io, [ia, io, scale, n]() {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        float g = io->grad[0] * static_cast<float>(scale);
        float* da = ia->grad.data();
        for (int64_t i = 0; i < n; ++i) da[i] += g;
    });
    return out;
}

}  // namespace

Tensor sum(const Tensor& a) { return reduce_all("sum", a, 1.0); }

Tensor mean(const Tensor& a) { return reduce_all("mean", a, 1.0 / static_cast<double>(a.numel())); }

Tensor reshape(const Tensor& a, Shape to) {
    if (numel_of(to) != a.numel())
        throw DataError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(to));
    Tensor out(std::move(to), std::vector<float>(a.data().begin(), a.data().end()));
    ImplPtr ia = a.impl(), io = out.impl();
    const int64_t n = a.numel();
    maybe_record("reshape", {ia}, io, [ia, io, n]() {
        if (!ia->requires_grad) return;
        accumulate(ia, io->grad.data(), n);
    });
    return out;
}

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
    const int nd = a.ndim();
    if (static_cast<int>(axes.size()) != nd)
        throw DataError("permute: axes rank mismatch for shape " + shape_str(a.shape()));
    std::vector<char> seen(static_cast<size_t>(nd), 0);
    for (int ax : axes) {
        if (ax < 0 || ax >= nd || seen[static_cast<size_t>(ax)])
            throw DataError("permute: invalid axis list");
        seen[static_cast<size_t>(ax)] = 1;
    }
    const Shape& in_shape = a.shape();
    Shape out_shape(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) out_shape[static_cast<size_t>(i)] = in_shape[static_cast<size_t>(axes[static_cast<size_t>(i)])];

    Shape in_strides = strides_of(in_shape);
    // stride in the input for each output axis
    std::vector<int64_t> map(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) map[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(axes[static_cast<size_t>(i)])];

    auto scatter = [nd](const Shape& oshape, const std::vector<int64_t>& strides,
                        const float* src, float* dst, int64_t n, bool add) {
        std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
        int64_t src_off = 0;
        for (int64_t i = 0; i < n; ++i) {
            if (add)
                dst[src_off] += src[i];
            else
                dst[i] = src[src_off];
            for (int d = nd - 1; d >= 0; --d) {
                auto du = static_cast<size_t>(d);
                src_off += strides[du];
                if (++idx[du] < oshape[du]) break;
                src_off -= strides[du] * oshape[du];
                idx[du] = 0;
            }
        }
    };

    Tensor out = raw(out_shape);
    const int64_t n = a.numel();
    scatter(out_shape, map, a.data().data(), out.data().data(), n, false);

    ImplPtr ia = a.impl(), io = out.impl();
    maybe_record("permute", {ia}, io, [ia, io, out_shape, map, scatter, n]() {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        scatter(out_shape, map, io->grad.data(), ia->grad.data(), n, true);
    });
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw DataError("concat: no inputs");
    int ax = normalize_axis(axis, parts[0].ndim(), "concat");
    const Shape& s0 = parts[0].shape();
    Shape out_shape = s0;
    int64_t total_ax = 0;
    for (const Tensor& p : parts) {
        if (p.ndim() != parts[0].ndim())
            throw DataError("concat: rank mismatch");
        for (int i = 0; i < p.ndim(); ++i)
            if (i != ax && p.shape()[static_cast<size_t>(i)] != s0[static_cast<size_t>(i)])
                throw DataError("concat: shape mismatch " + shape_str(s0) + " vs " +
                                shape_str(p.shape()));
        total_ax += p.dim(ax);
    }
    out_shape[static_cast<size_t>(ax)] = total_ax;

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < ax; ++i) outer *= s0[static_cast<size_t>(i)];
    for (int i = ax + 1; i < parts[0].ndim(); ++i) inner *= s0[static_cast<size_t>(i)];

    Tensor out = raw(out_shape);
    float* po = out.data().data();
    const int64_t out_row = total_ax * inner;
    int64_t off = 0;
    std::vector<ImplPtr> impls;
    std::vector<int64_t> offsets;
    for (const Tensor& p : parts) {
        const int64_t rows = p.dim(ax) * inner;
        const float* pp = p.data().data();
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(po + o * out_row + off, pp + o * rows, static_cast<size_t>(rows) * sizeof(float));
        impls.push_back(p.impl());
        offsets.push_back(off);
        off += rows;
    }
    ImplPtr io = out.impl();
    std::vector<ImplPtr> inputs = impls;
    maybe_record("concat", std::move(inputs), io,
                 [impls, offsets, io, outer, inner, out_row, ax]() {
                     const float* dy = io->grad.data();
                     for (size_t pi = 0; pi < impls.size(); ++pi) {
                         const ImplPtr& in = impls[pi];
                         if (!in->requires_grad) continue;
                         in->ensure_grad();
                         const int64_t rows = in->shape[static_cast<size_t>(ax)] * inner;
                         float* da = in->grad.data();
                         for (int64_t o = 0; o < outer; ++o) {
                             const float* src = dy + o * out_row + offsets[pi];
                             float* dst = da + o * rows;
                             for (int64_t i = 0; i < rows; ++i) dst[i] += src[i];
                         }
                     }
                 });
    return out;
}

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t stop) {
    int ax = normalize_axis(axis, a.ndim(), "slice");
    const Shape& s = a.shape();
    const int64_t extent = s[static_cast<size_t>(ax)];
    if (start < 0 || stop > extent || start >= stop)
        throw DataError("slice: range [" + std::to_string(start) + "," + std::to_string(stop) +
                        ") invalid for axis extent " + std::to_string(extent));
    Shape out_shape = s;
    out_shape[static_cast<size_t>(ax)] = stop - start;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < ax; ++i) outer *= s[static_cast<size_t>(i)];
    for (int i = ax + 1; i < a.ndim(); ++i) inner *= s[static_cast<size_t>(i)];

    Tensor out = raw(out_shape);
    const int64_t in_row = extent * inner;
    const int64_t out_row = (stop - start) * inner;
    const float* pa = a.data().data();
    float* po = out.data().data();
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(po + o * out_row, pa + o * in_row + start * inner,
                    static_cast<size_t>(out_row) * sizeof(float));
    ImplPtr ia = a.impl(), io = out.impl();
    maybe_record("slice", {ia}, io, [ia, io, outer, in_row, out_row, start, inner]() {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        const float* dy = io->grad.data();
        float* da = ia->grad.data();
        for (int64_t o = 0; o < outer; ++o) {
            float* dst = da + o * in_row + start * inner;
            const float* src = dy + o * out_row;
            for (int64_t i = 0; i < out_row; ++i) dst[i] += src[i];
        }
    });
    return out;
}

namespace {

void roll_copy(const float* src, float* dst, int64_t n, int64_t h, int64_t w, int64_t c,
               int64_t sh, int64_t sw, bool add) {
    for (int64_t b = 0; b < n; ++b) {
        const float* sp = src + b * h * w * c;
        float* dp = dst + b * h * w * c;
        for (int64_t i = 0; i < h; ++i) {
            int64_t si = i - sh;
            si %= h;
            if (si < 0) si += h;
            for (int64_t j = 0; j < w; ++j) {
                int64_t sj = j - sw;
                sj %= w;
                if (sj < 0) sj += w;
                const float* s = sp + (si * w + sj) * c;
                float* d = dp + (i * w + j) * c;
                if (add)
                    for (int64_t k = 0; k < c; ++k) d[k] += s[k];
                else
                    std::memcpy(d, s, static_cast<size_t>(c) * sizeof(float));
            }
        }
    }
}

}  // namespace

Tensor roll_hw(const Tensor& a, int64_t sh, int64_t sw) {
    if (a.ndim() != 4) throw DataError("roll_hw: expected [N,H,W,C], got " + shape_str(a.shape()));
    const int64_t n = a.dim(0), h = a.dim(1), w = a.dim(2), c = a.dim(3);
    Tensor out = raw(a.shape());
    roll_copy(a.data().data(), out.data().data(), n, h, w, c, sh, sw, false);
    ImplPtr ia = a.impl(), io = out.impl();
    maybe_record("roll_hw", {ia}, io, [ia, io, n, h, w, c, sh, sw]() {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        // inverse roll of the gradient
        roll_copy(io->grad.data(), ia->grad.data(), n, h, w, c, -sh, -sw, true);
    });
    return out;
}

Tensor pad_reflect_hw(const Tensor& a, int64_t ph, int64_t pw) {
    if (a.ndim() != 4)
        throw DataError("pad_reflect_hw: expected [N,H,W,C], got " + shape_str(a.shape()));
    const int64_t n = a.dim(0), h = a.dim(1), w = a.dim(2), c = a.dim(3);
    if (ph < 0 || pw < 0 || ph > h - 1 || pw > w - 1)
        throw DataError("pad_reflect_hw: padding (" + std::to_string(ph) + "," + std::to_string(pw) +
                        ") too large for " + shape_str(a.shape()));
    const int64_t ho = h + ph, wo = w + pw;
    Tensor out = raw({n, ho, wo, c});
    const float* pa = a.data().data();
    float* po = out.data().data();
    auto mirror = [](int64_t i, int64_t extent) {
        return i < extent ? i : 2 * extent - 2 - i;
    };
    for (int64_t b = 0; b < n; ++b)
        for (int64_t i = 0; i < ho; ++i) {
            int64_t si = mirror(i, h);
            for (int64_t j = 0; j < wo; ++j) {
                int64_t sj = mirror(j, w);
                std::memcpy(po + ((b * ho + i) * wo + j) * c, pa + ((b * h + si) * w + sj) * c,
                            static_cast<size_t>(c) * sizeof(float));
            }
        }
    ImplPtr ia = a.impl(), io = out.impl();
    maybe_record("pad_reflect_hw", {ia}, io, [ia, io, n, h, w, c, ho, wo, mirror]() {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        const float* dy = io->grad.data();
        float* da = ia->grad.data();
        for (int64_t b = 0; b < n; ++b)
            for (int64_t i = 0; i < ho; ++i) {
                int64_t si = mirror(i, h);
                for (int64_t j = 0; j < wo; ++j) {
                    int64_t sj = mirror(j, w);
                    const float* src = dy + ((b * ho + i) * wo + j) * c;
                    float* dst = da + ((b * h + si) * w + sj) * c;
                    for (int64_t k = 0; k < c; ++k) dst[k] += src[k];
                }
            }
    });
    return out;
}

Tensor index_select0(const Tensor& table, std::vector<int64_t> idx) {
    if (table.ndim() != 2)
        throw DataError("index_select0: expected rank-2 table, got " + shape_str(table.shape()));
    const int64_t rows = table.dim(0), cols = table.dim(1);
    for (int64_t i : idx)
        if (i < 0 || i >= rows)
            throw DataError("index_select0: index " + std::to_string(i) + " out of range [0," +
                            std::to_string(rows) + ")");
    const int64_t m = static_cast<int64_t>(idx.size());
    Tensor out = raw({m, cols});
    const float* pt = table.data().data();
    float* po = out.data().data();
    for (int64_t i = 0; i < m; ++i)
        std::memcpy(po + i * cols, pt + idx[static_cast<size_t>(i)] * cols,
                    static_cast<size_t>(cols) * sizeof(float));
    ImplPtr it = table.impl(), io = out.impl();
    maybe_record("index_select0", {it}, io, [it, io, idx = std::move(idx), m, cols]() {
        if (!it->requires_grad) return;
        it->ensure_grad();
        const float* dy = io->grad.data();
        float* dt = it->grad.data();
        for (int64_t i = 0; i < m; ++i) {
            float* dst = dt + idx[static_cast<size_t>(i)] * cols;
            const float* src = dy + i * cols;
            for (int64_t k = 0; k < cols; ++k) dst[k] += src[k];
        }
    });
    return out;
}

namespace {

struct MatDims {
    int64_t batch;  // product of leading dims
    int64_t m, k, n;
    bool b_batched;
};

MatDims matmul_dims(const char* op, const Tensor& a, const Tensor& b, bool nt) {
    if (a.ndim() < 2 || b.ndim() < 2)
        throw DataError(std::string(op) + ": operands must have rank >= 2");
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    MatDims d;
    d.m = sa[sa.size() - 2];
    d.k = sa[sa.size() - 1];
    int64_t bk = nt ? sb[sb.size() - 1] : sb[sb.size() - 2];
    d.n = nt ? sb[sb.size() - 2] : sb[sb.size() - 1];
    if (bk != d.k)
        throw DataError(std::string(op) + ": inner dimension mismatch " + shape_str(sa) + " vs " +
                        shape_str(sb));
    d.batch = 1;
    for (size_t i = 0; i + 2 < sa.size(); ++i) d.batch *= sa[i];
    d.b_batched = b.ndim() > 2;
    if (d.b_batched) {
        if (sb.size() != sa.size())
            throw DataError(std::string(op) + ": batch rank mismatch " + shape_str(sa) + " vs " +
                            shape_str(sb));
        for (size_t i = 0; i + 2 < sa.size(); ++i)
            if (sa[i] != sb[i])
                throw DataError(std::string(op) + ": batch dims mismatch " + shape_str(sa) +
                                " vs " + shape_str(sb));
    }
    return d;
}

Tensor matmul_impl(const char* op, const Tensor& a, const Tensor& b, bool nt) {
    MatDims d = matmul_dims(op, a, b, nt);
    Shape out_shape(a.shape().begin(), a.shape().end() - 2);
    out_shape.push_back(d.m);
    out_shape.push_back(d.n);
    Tensor out = raw(out_shape);
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    float* po = out.data().data();
    const int64_t a_step = d.m * d.k;
    const int64_t b_step = d.b_batched ? d.k * d.n : 0;
    const int64_t o_step = d.m * d.n;
    for (int64_t bi = 0; bi < d.batch; ++bi) {
        // NN: [m,k]x[k,n]; NT: [m,k]x[n,k]^T
        gemm(false, nt, d.m, d.n, d.k, 1.0f, pa + bi * a_step, d.k, pb + bi * b_step,
             nt ? d.k : d.n, 0.0f, po + bi * o_step, d.n);
    }
    ImplPtr ia = a.impl(), ib = b.impl(), io = out.impl();
    maybe_record(op, {ia, ib}, io, [ia, ib, io, d, nt, a_step, b_step, o_step]() {
        const float* dy = io->grad.data();
        const float* pa2 = ia->data.data();
        const float* pb2 = ib->data.data();
        if (ia->requires_grad) {
            ia->ensure_grad();
            float* da = ia->grad.data();
            for (int64_t bi = 0; bi < d.batch; ++bi) {
                // NN: dA = dY * B^T ; NT: dA = dY * B
                gemm(false, !nt, d.m, d.k, d.n, 1.0f, dy + bi * o_step, d.n, pb2 + bi * b_step,
                     nt ? d.k : d.n, 1.0f, da + bi * a_step, d.k);
            }
        }
        if (ib->requires_grad) {
            ib->ensure_grad();
            float* db = ib->grad.data();
            for (int64_t bi = 0; bi < d.batch; ++bi) {
                if (!nt) {
                    // dB = A^T * dY   [k,n]
                    gemm(true, false, d.k, d.n, d.m, 1.0f, pa2 + bi * a_step, d.k,
                         dy + bi * o_step, d.n, 1.0f, db + bi * b_step, d.n);
                } else {
                    // dB = dY^T * A   [n,k]
                    gemm(true, false, d.n, d.k, d.m, 1.0f, dy + bi * o_step, d.n,
                         pa2 + bi * a_step, d.k, 1.0f, db + bi * b_step, d.k);
                }
            }
        }
    });
    return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl("matmul", a, b, false); }

Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul_impl("matmul_nt", a, b, true); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.ndim() != 2) throw DataError("linear: weight must be [out,in], got " + shape_str(w.shape()));
    const int64_t k = w.dim(1), n = w.dim(0);
    if (x.ndim() < 1 || x.shape().back() != k)
        throw DataError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                        shape_str(w.shape()));
    if (b.defined() && (b.ndim() != 1 || b.dim(0) != n))
        throw DataError("linear: bias shape " + shape_str(b.shape()) + " != [" + std::to_string(n) + "]");
    const int64_t rows = x.numel() / k;
    Shape out_shape = x.shape();
    out_shape.back() = n;
    Tensor out = raw(out_shape);
    gemm(false, true, rows, n, k, 1.0f, x.data().data(), k, w.data().data(), k, 0.0f,
         out.data().data(), n);
    if (b.defined()) {
        float* po = out.data().data();
        const float* pb = b.data().data();
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < n; ++j) po[r * n + j] += pb[j];
    }
    ImplPtr ix = x.impl(), iw = w.impl(), io = out.impl();
    ImplPtr ibias = b.defined() ? b.impl() : nullptr;
    std::vector<ImplPtr> inputs{ix, iw};
    if (ibias) inputs.push_back(ibias);
    maybe_record("linear", std::move(inputs), io, [ix, iw, ibias, io, rows, n, k]() {
        const float* dy = io->grad.data();
        if (ix->requires_grad) {
            ix->ensure_grad();
            gemm(false, false, rows, k, n, 1.0f, dy, n, iw->data.data(), k, 1.0f, ix->grad.data(), k);
        }
        if (iw->requires_grad) {
            iw->ensure_grad();
            gemm(true, false, n, k, rows, 1.0f, dy, n, ix->data.data(), k, 1.0f, iw->grad.data(), k);
        }
        if (ibias && ibias->requires_grad) {
            ibias->ensure_grad();
            float* db = ibias->grad.data();
            for (int64_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int64_t r = 0; r < rows; ++r) acc += dy[r * n + j];
                db[j] += static_cast<float>(acc);
            }
        }
    });
    return out;
}

namespace {

// Builds the [H*W, Ci*kh*kw] patch matrix for one image.
void im2col(const float* img, int64_t ci, int64_t h, int64_t w, int64_t kh, int64_t kw,
            PadMode pad, float* col) {
    const int64_t ph = kh / 2, pw = kw / 2;
    const int64_t cols = ci * kh * kw;
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            float* dst = col + (y * w + x) * cols;
            int64_t t = 0;
            for (int64_t c = 0; c < ci; ++c) {
                const float* plane = img + c * h * w;
                for (int64_t dy = -ph; dy <= ph; ++dy) {
                    int64_t sy = y + dy;
                    for (int64_t dx = -pw; dx <= pw; ++dx, ++t) {
                        int64_t sx = x + dx;
                        int64_t ry = sy, rx = sx;
                        if (pad == PadMode::Reflect) {
                            if (ry < 0) ry = -ry;
                            if (ry >= h) ry = 2 * h - 2 - ry;
                            if (rx < 0) rx = -rx;
                            if (rx >= w) rx = 2 * w - 2 - rx;
                            dst[t] = plane[ry * w + rx];
                        } else {
                            dst[t] = (sy < 0 || sy >= h || sx < 0 || sx >= w)
                                         ? 0.0f
                                         : plane[sy * w + sx];
                        }
                    }
                }
            }
        }
    }
}

// Scatters the [H*W, Ci*kh*kw] gradient back onto the image.
void col2im_add(const float* dcol, int64_t ci, int64_t h, int64_t w, int64_t kh, int64_t kw,
                PadMode pad, float* dimg) {
    const int64_t ph = kh / 2, pw = kw / 2;
    const int64_t cols = ci * kh * kw;
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            const float* src = dcol + (y * w + x) * cols;
            int64_t t = 0;
            for (int64_t c = 0; c < ci; ++c) {
                float* plane = dimg + c * h * w;
                for (int64_t dy = -ph; dy <= ph; ++dy) {
                    int64_t sy = y + dy;
                    for (int64_t dx = -pw; dx <= pw; ++dx, ++t) {
                        int64_t sx = x + dx;
                        int64_t ry = sy, rx = sx;
                        if (pad == PadMode::Reflect) {
                            if (ry < 0) ry = -ry;
                            if (ry >= h) ry = 2 * h - 2 - ry;
                            if (rx < 0) rx = -rx;
                            if (rx >= w) rx = 2 * w - 2 - rx;
                            plane[ry * w + rx] += src[t];
                        } else if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
                            plane[sy * w + sx] += src[t];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, PadMode pad) {
    if (x.ndim() != 4 || w.ndim() != 4)
        throw DataError("conv2d: expected x [N,C,H,W] and w [O,C,kh,kw], got " +
                        shape_str(x.shape()) + " and " + shape_str(w.shape()));
    const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int64_t o = w.dim(0), wci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    if (wci != ci)
        throw DataError("conv2d: channel mismatch, input " + shape_str(x.shape()) + " vs kernel " +
                        shape_str(w.shape()));
    if (kh % 2 == 0 || kw % 2 == 0) throw DataError("conv2d: kernel extents must be odd");
    if (pad == PadMode::Reflect && (kh / 2 > h - 1 || kw / 2 > wd - 1))
        throw DataError("conv2d: image too small for reflect padding");
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != o))
        throw DataError("conv2d: bias shape " + shape_str(bias.shape()) + " != [" +
                        std::to_string(o) + "]");

    const int64_t hw = h * wd;
    const int64_t cols = ci * kh * kw;
    Tensor out = raw({n, o, h, wd});
    auto col_store = std::make_shared<std::vector<float>>(static_cast<size_t>(n * hw * cols));
    const float* px = x.data().data();
    float* po = out.data().data();
    for (int64_t b = 0; b < n; ++b) {
        float* col = col_store->data() + b * hw * cols;
        im2col(px + b * ci * hw, ci, h, wd, kh, kw, pad, col);
        // out plane [O, HW] = w_flat [O, cols] * col^T
        gemm(false, true, o, hw, cols, 1.0f, w.data().data(), cols, col, cols, 0.0f,
             po + b * o * hw, hw);
    }
    if (bias.defined()) {
        const float* pb = bias.data().data();
        for (int64_t b = 0; b < n; ++b)
            for (int64_t c = 0; c < o; ++c) {
                float* plane = po + (b * o + c) * hw;
                const float bv = pb[c];
                for (int64_t i = 0; i < hw; ++i) plane[i] += bv;
            }
    }

    ImplPtr ix = x.impl(), iw = w.impl(), io = out.impl();
    ImplPtr ibias = bias.defined() ? bias.impl() : nullptr;
    std::vector<ImplPtr> inputs{ix, iw};
    if (ibias) inputs.push_back(ibias);
    maybe_record("conv2d", std::move(inputs), io,
                 [ix, iw, ibias, io, col_store, n, ci, o, h, wd, kh, kw, hw, cols, pad]() {
                     const float* dy = io->grad.data();
                     if (ibias && ibias->requires_grad) {
                         ibias->ensure_grad();
                         float* db = ibias->grad.data();
                         for (int64_t c = 0; c < o; ++c) {
                             double acc = 0.0;
                             for (int64_t b = 0; b < n; ++b) {
                                 const float* plane = dy + (b * o + c) * hw;
                                 for (int64_t i = 0; i < hw; ++i) acc += plane[i];
                             }
                             db[c] += static_cast<float>(acc);
                         }
                     }
                     if (iw->requires_grad) {
                         iw->ensure_grad();
                         for (int64_t b = 0; b < n; ++b) {
                             // dW [O, cols] += dY_b [O, HW] * col [HW, cols]
                             gemm(false, false, o, cols, hw, 1.0f, dy + b * o * hw, hw,
                                  col_store->data() + b * hw * cols, cols, 1.0f, iw->grad.data(),
                                  cols);
                         }
                     }
                     if (ix->requires_grad) {
                         ix->ensure_grad();
                         std::vector<float> dcol(static_cast<size_t>(hw * cols));
                         for (int64_t b = 0; b < n; ++b) {
                             // dcol [HW, cols] = dY_b^T [HW, O] * w_flat [O, cols]
                             gemm(true, false, hw, cols, o, 1.0f, dy + b * o * hw, hw,
                                  iw->data.data(), cols, 0.0f, dcol.data(), cols);
                             col2im_add(dcol.data(), ci, h, wd, kh, kw, pad,
                                        ix->grad.data() + b * ci * hw);
                         }
                     }
                 });
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    if (gamma.ndim() != 1 || beta.ndim() != 1)
        throw DataError("layer_norm: gamma/beta must be rank 1");
    const int64_t d = gamma.dim(0);
    if (beta.dim(0) != d || x.ndim() < 1 || x.shape().back() != d)
        throw DataError("layer_norm: shapes " + shape_str(x.shape()) + ", " +
                        shape_str(gamma.shape()) + ", " + shape_str(beta.shape()) +
                        " inconsistent");
    const int64_t rows = x.numel() / d;
    Tensor out = raw(x.shape());
    auto xhat = std::make_shared<std::vector<float>>(static_cast<size_t>(rows * d));
    auto inv_sd = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
    const float* px = x.data().data();
    const float* pg = gamma.data().data();
    const float* pb = beta.data().data();
    float* po = out.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* row = px + r * d;
        double mu = 0.0;
        for (int64_t i = 0; i < d; ++i) mu += row[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            double c = row[i] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        (*inv_sd)[static_cast<size_t>(r)] = inv;
        float* xh = xhat->data() + r * d;
        float* dst = po + r * d;
        float muf = static_cast<float>(mu);
        for (int64_t i = 0; i < d; ++i) {
            xh[i] = (row[i] - muf) * inv;
            dst[i] = xh[i] * pg[i] + pb[i];
        }
    }
    ImplPtr ix = x.impl(), ig = gamma.impl(), ib = beta.impl(), io = out.impl();
    maybe_record("layer_norm", {ix, ig, ib}, io, [ix, ig, ib, io, xhat, inv_sd, rows, d]() {
        const float* dy = io->grad.data();
        const float* pg2 = ig->data.data();
        if (ig->requires_grad || ib->requires_grad) {
            if (ig->requires_grad) ig->ensure_grad();
            if (ib->requires_grad) ib->ensure_grad();
            std::vector<double> dg(static_cast<size_t>(d), 0.0), db(static_cast<size_t>(d), 0.0);
            for (int64_t r = 0; r < rows; ++r) {
                const float* dyr = dy + r * d;
                const float* xh = xhat->data() + r * d;
                for (int64_t i = 0; i < d; ++i) {
                    dg[static_cast<size_t>(i)] += static_cast<double>(dyr[i]) * xh[i];
                    db[static_cast<size_t>(i)] += dyr[i];
                }
            }
            for (int64_t i = 0; i < d; ++i) {
                if (ig->requires_grad) ig->grad[static_cast<size_t>(i)] += static_cast<float>(dg[static_cast<size_t>(i)]);
                if (ib->requires_grad) ib->grad[static_cast<size_t>(i)] += static_cast<float>(db[static_cast<size_t>(i)]);
            }
        }
        if (ix->requires_grad) {
            ix->ensure_grad();
            float* dx = ix->grad.data();
            for (int64_t r = 0; r < rows; ++r) {
                const float* dyr = dy + r * d;
                const float* xh = xhat->data() + r * d;
                const float inv = (*inv_sd)[static_cast<size_t>(r)];
                double s1 = 0.0, s2 = 0.0;
                for (int64_t i = 0; i < d; ++i) {
                    double g = static_cast<double>(dyr[i]) * pg2[i];
                    s1 += g;
                    s2 += g * xh[i];
                }
                const float m1 = static_cast<float>(s1 / static_cast<double>(d));
                const float m2 = static_cast<float>(s2 / static_cast<double>(d));
                float* dxr = dx + r * d;
                for (int64_t i = 0; i < d; ++i) {
                    float g = dyr[i] * pg2[i];
                    dxr[i] += inv * (g - m1 - xh[i] * m2);
                }
            }
        }
    });
    return out;
}

}  // namespace cstn
