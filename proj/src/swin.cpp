#include "cstn/swin.hpp"

#include <cmath>
#include <string>

#include "cstn/common.hpp"

namespace cstn {

void RSTBConfig::validate() const {
    if (depth <= 0 || num_heads <= 0 || embed_dim <= 0 || mlp_ratio <= 0 || window_size <= 0)
        throw UsageError("rstb config fields must be positive");
    if (embed_dim % num_heads != 0)
        throw UsageError("embed_dim " + std::to_string(embed_dim) +
                         " not divisible by num_heads " + std::to_string(num_heads));
    if (depth % 2 != 0)
        throw UsageError("rstb depth must be even for the alternating shift pattern, got " +
                         std::to_string(depth));
}

Tensor window_partition(const Tensor& x, int64_t w) {
    if (x.ndim() != 4) throw DataError("window_partition expects [N,H,W,C], got " + shape_str(x.shape()));
    const int64_t n = x.dim(0), h = x.dim(1), wi = x.dim(2), c = x.dim(3);
    if (h % w != 0 || wi % w != 0)
        throw DataError("window_partition: " + std::to_string(h) + "x" + std::to_string(wi) +
                        " not divisible by window " + std::to_string(w));
    Tensor t = reshape(x, {n, h / w, w, wi / w, w, c});
    t = permute(t, {0, 1, 3, 2, 4, 5});
    return reshape(t, {n * (h / w) * (wi / w), w, w, c});
}

Tensor window_reverse(const Tensor& windows, int64_t w, int64_t n, int64_t h, int64_t w_img) {
    const int64_t c = windows.dim(windows.ndim() - 1);
    Tensor t = reshape(windows, {n, h / w, w_img / w, w, w, c});
    t = permute(t, {0, 1, 3, 2, 4, 5});
    return reshape(t, {n, h, w_img, c});
}

std::vector<int64_t> relative_position_index(int64_t window) {
    const int64_t n = window * window;
    std::vector<int64_t> idx(static_cast<size_t>(n * n));
    for (int64_t i = 0; i < n; ++i) {
        const int64_t yi = i / window, xi = i % window;
        for (int64_t j = 0; j < n; ++j) {
            const int64_t yj = j / window, xj = j % window;
            const int64_t dy = yi - yj + window - 1;
            const int64_t dx = xi - xj + window - 1;
            idx[static_cast<size_t>(i * n + j)] = dy * (2 * window - 1) + dx;
        }
    }
    return idx;
}

Tensor relative_position_bias(const Tensor& table, int64_t window, int64_t heads) {
    const int64_t rows = (2 * window - 1) * (2 * window - 1);
    if (table.ndim() != 2 || table.dim(0) != rows || table.dim(1) != heads)
        throw DataError("bias table shape " + shape_str(table.shape()) + ", expected [" +
                        std::to_string(rows) + "," + std::to_string(heads) + "]");
    const int64_t n = window * window;
    Tensor flat = index_select0(table, relative_position_index(window));
    return permute(reshape(flat, {n, n, heads}), {2, 0, 1});
}

Tensor shifted_window_mask(int64_t h, int64_t w, int64_t window, int64_t shift, int64_t heads) {
    if (h % window != 0 || w % window != 0)
        throw DataError("mask dims must be window multiples");
    // Region labels in the rolled frame: content wrapped across an edge by the
    // cyclic shift lands in the last `shift` rows/cols and must not attend to
    // its new neighbours.
    auto region = [&](int64_t i, int64_t extent) {
        if (i < extent - window) return int64_t{0};
        if (i < extent - shift) return int64_t{1};
        return int64_t{2};
    };
    std::vector<int64_t> id(static_cast<size_t>(h * w));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            id[static_cast<size_t>(y * w + x)] = region(y, h) * 3 + region(x, w);

    const int64_t wh = h / window, ww = w / window, n = window * window;
    const int64_t num_windows = wh * ww;
    Tensor mask({num_windows, heads, n, n});
    auto m = mask.data();
    for (int64_t b = 0; b < num_windows; ++b) {
        const int64_t y0 = (b / ww) * window, x0 = (b % ww) * window;
        for (int64_t i = 0; i < n; ++i) {
            const int64_t idi = id[static_cast<size_t>((y0 + i / window) * w + x0 + i % window)];
            for (int64_t j = 0; j < n; ++j) {
                const int64_t idj =
                    id[static_cast<size_t>((y0 + j / window) * w + x0 + j % window)];
                if (idi != idj)
                    for (int64_t hd = 0; hd < heads; ++hd)
                        m[static_cast<size_t>(((b * heads + hd) * n + i) * n + j)] = -1e9f;
            }
        }
    }
    return mask;
}

Tensor window_attention(const Tensor& x, const AttentionWeights& wts, int64_t heads,
                        const Tensor& bias, const Tensor* mask) {
    const int64_t b = x.dim(0), n = x.dim(1), c = x.dim(2);
    const int64_t d = c / heads;
    Tensor qkv = linear(x, wts.qkv_w, wts.qkv_b);
    qkv = permute(reshape(qkv, {b, n, 3, heads, d}), {2, 0, 3, 1, 4});
    Tensor q = reshape(slice(qkv, 0, 0, 1), {b, heads, n, d});
    Tensor k = reshape(slice(qkv, 0, 1, 2), {b, heads, n, d});
    Tensor v = reshape(slice(qkv, 0, 2, 3), {b, heads, n, d});

    q = mul(q, 1.0f / std::sqrt(static_cast<float>(d)));
    Tensor attn = add(matmul_nt(q, k), bias);
    if (mask) {
        const int64_t num_windows = mask->dim(0);
        if (mask->ndim() != 4 || b % num_windows != 0 || mask->dim(1) != heads ||
            mask->dim(2) != n || mask->dim(3) != n)
            throw DataError("attention mask shape " + shape_str(mask->shape()) +
                            " does not fit windows " + shape_str(attn.shape()));
        attn = reshape(add(reshape(attn, {b / num_windows, num_windows, heads, n, n}), *mask),
                       {b, heads, n, n});
    }
    attn = softmax(attn, 3);
    Tensor out = reshape(permute(matmul(attn, v), {0, 2, 1, 3}), {b, n, c});
    return linear(out, wts.proj_w, wts.proj_b);
}

Tensor swin_layer(const Tensor& x, int64_t h, int64_t w, const RSTBConfig& cfg,
                  const SwinLayerWeights& wts, int64_t shift) {
    const int64_t window = cfg.window_size;
    if (shift < 0 || shift >= window)
        throw UsageError("shift " + std::to_string(shift) + " outside [0, " +
                         std::to_string(window) + ")");
    const int64_t n = x.dim(0);
    if (x.ndim() != 3 || x.dim(1) != h * w)
        throw DataError("swin_layer tokens " + shape_str(x.shape()) + " do not match " +
                        std::to_string(h) + "x" + std::to_string(w));

    Tensor y = layer_norm(x, wts.norm1_g, wts.norm1_b);
    y = reshape(y, {n, h, w, cfg.embed_dim});
    const int64_t ph = (window - h % window) % window;
    const int64_t pw = (window - w % window) % window;
    if (ph || pw) y = pad_reflect_hw(y, ph, pw);
    const int64_t hp = h + ph, wp = w + pw;
    if (shift) y = roll_hw(y, -shift, -shift);

    Tensor wins = reshape(window_partition(y, window),
                          {n * (hp / window) * (wp / window), window * window, cfg.embed_dim});
    Tensor bias = relative_position_bias(wts.attn.bias_table, window, cfg.num_heads);
    Tensor att;
    if (shift) {
        Tensor mask = shifted_window_mask(hp, wp, window, shift, cfg.num_heads);
        att = window_attention(wins, wts.attn, cfg.num_heads, bias, &mask);
    } else {
        att = window_attention(wins, wts.attn, cfg.num_heads, bias);
    }
    y = window_reverse(reshape(att, {n * (hp / window) * (wp / window), window, window,
                                     cfg.embed_dim}),
                       window, n, hp, wp);
    if (shift) y = roll_hw(y, shift, shift);
    if (ph) y = slice(y, 1, 0, h);
    if (pw) y = slice(y, 2, 0, w);
    y = add(x, reshape(y, {n, h * w, cfg.embed_dim}));

    Tensor m = layer_norm(y, wts.norm2_g, wts.norm2_b);
    m = linear(gelu(linear(m, wts.fc1_w, wts.fc1_b)), wts.fc2_w, wts.fc2_b);
    return add(y, m);
}

Tensor rstb_forward(const Tensor& x, const RSTBConfig& cfg, const RSTBWeights& wts) {
    cfg.validate();
    if (x.ndim() != 4 || x.dim(1) != cfg.embed_dim)
        throw DataError("rstb expects [N," + std::to_string(cfg.embed_dim) + ",H,W], got " +
                        shape_str(x.shape()));
    if (static_cast<int64_t>(wts.layers.size()) != cfg.depth)
        throw DataError("rstb has " + std::to_string(wts.layers.size()) + " layers, config wants " +
                        std::to_string(cfg.depth));
    const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    Tensor t = reshape(permute(x, {0, 2, 3, 1}), {n, h * w, cfg.embed_dim});
    for (int64_t d = 0; d < cfg.depth; ++d)
        t = swin_layer(t, h, w, cfg, wts.layers[static_cast<size_t>(d)],
                       d % 2 ? cfg.window_size / 2 : 0);
    Tensor y = permute(reshape(t, {n, h, w, cfg.embed_dim}), {0, 3, 1, 2});
    y = conv2d(y, wts.conv_w, wts.conv_b);
    return add(x, y);
}

namespace {

Tensor trunc_normal_tensor(Rng& rng, Shape shape, double sigma) {
    std::vector<float> v(static_cast<size_t>(numel_of(shape)));
    for (float& f : v) f = static_cast<float>(rng.trunc_normal(sigma));
    return Tensor(std::move(shape), std::move(v));
}

}  // namespace

Tensor kaiming_uniform_tensor(Rng& rng, Shape shape, int64_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<float> v(static_cast<size_t>(numel_of(shape)));
    for (float& f : v) f = static_cast<float>(rng.uniform(-bound, bound));
    return Tensor(std::move(shape), std::move(v));
}

SwinLayerWeights make_swin_layer_weights(const RSTBConfig& cfg, Rng& rng) {
    const int64_t c = cfg.embed_dim, hid = cfg.hidden_dim();
    const int64_t rows = (2 * cfg.window_size - 1) * (2 * cfg.window_size - 1);
    SwinLayerWeights w;
    w.norm1_g = Tensor({c}, 1.0f);
    w.norm1_b = Tensor({c});
    w.attn.qkv_w = trunc_normal_tensor(rng, {3 * c, c}, 0.02);
    w.attn.qkv_b = Tensor({3 * c});
    w.attn.proj_w = trunc_normal_tensor(rng, {c, c}, 0.02);
    w.attn.proj_b = Tensor({c});
    w.attn.bias_table = trunc_normal_tensor(rng, {rows, cfg.num_heads}, 0.02);
    w.norm2_g = Tensor({c}, 1.0f);
    w.norm2_b = Tensor({c});
    w.fc1_w = trunc_normal_tensor(rng, {hid, c}, 0.02);
    w.fc1_b = Tensor({hid});
    w.fc2_w = trunc_normal_tensor(rng, {c, hid}, 0.02);
    w.fc2_b = Tensor({c});
    return w;
}

RSTBWeights make_rstb_weights(const RSTBConfig& cfg, Rng& rng) {
    RSTBWeights w;
    for (int64_t d = 0; d < cfg.depth; ++d) w.layers.push_back(make_swin_layer_weights(cfg, rng));
    const int64_t c = cfg.embed_dim;
    w.conv_w = kaiming_uniform_tensor(rng, {c, c, 3, 3}, c * 9);
    w.conv_b = Tensor({c});
    return w;
}

void visit_weights(SwinLayerWeights& w, const std::string& prefix, const TensorVisitor& fn) {
    fn(prefix + "norm1.g", w.norm1_g);
    fn(prefix + "norm1.b", w.norm1_b);
    fn(prefix + "attn.qkv.w", w.attn.qkv_w);
    fn(prefix + "attn.qkv.b", w.attn.qkv_b);
    fn(prefix + "attn.proj.w", w.attn.proj_w);
    fn(prefix + "attn.proj.b", w.attn.proj_b);
    fn(prefix + "attn.bias_table", w.attn.bias_table);
    fn(prefix + "norm2.g", w.norm2_g);
    fn(prefix + "norm2.b", w.norm2_b);
    fn(prefix + "mlp.fc1.w", w.fc1_w);
    fn(prefix + "mlp.fc1.b", w.fc1_b);
    fn(prefix + "mlp.fc2.w", w.fc2_w);
    fn(prefix + "mlp.fc2.b", w.fc2_b);
}

void visit_weights(RSTBWeights& w, const std::string& prefix, const TensorVisitor& fn) {
    for (size_t i = 0; i < w.layers.size(); ++i)
        visit_weights(w.layers[i], prefix + "layers." + std::to_string(i) + ".", fn);
    fn(prefix + "conv.w", w.conv_w);
    fn(prefix + "conv.b", w.conv_b);
}

}  // namespace cstn
