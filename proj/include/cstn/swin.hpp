#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cstn/ops.hpp"
#include "cstn/rng.hpp"
#include "cstn/tensor.hpp"

namespace cstn {

struct WindowConfig {
    int64_t window_size = 8;
    int64_t shift = 0;
};

struct RSTBConfig {
    int64_t depth = 2;
    int64_t num_heads = 4;
    int64_t embed_dim = 48;
    int64_t mlp_ratio = 2;
    int64_t window_size = 8;

    void validate() const;
    int64_t head_dim() const { return embed_dim / num_heads; }
    int64_t hidden_dim() const { return embed_dim * mlp_ratio; }
};

struct AttentionWeights {
    Tensor qkv_w;       // [3C, C]
    Tensor qkv_b;       // [3C]
    Tensor proj_w;      // [C, C]
    Tensor proj_b;      // [C]
    Tensor bias_table;  // [(2w-1)^2, heads]
};

struct SwinLayerWeights {
    Tensor norm1_g, norm1_b;
    AttentionWeights attn;
    Tensor norm2_g, norm2_b;
    Tensor fc1_w, fc1_b;  // [hidden, C], [hidden]
    Tensor fc2_w, fc2_b;  // [C, hidden], [C]
};

struct RSTBWeights {
    std::vector<SwinLayerWeights> layers;
    Tensor conv_w, conv_b;  // [C, C, 3, 3], [C]
};

/// [N,H,W,C] -> [N*(H/w)*(W/w), w, w, C]; window_reverse inverts it.
Tensor window_partition(const Tensor& x, int64_t w);
Tensor window_reverse(const Tensor& windows, int64_t w, int64_t n, int64_t h, int64_t w_img);

/// Expands the learnable table to the per-pair bias: out[h, i, j] =
/// table[index(delta(i,j)), h] with index = (dy+w-1)*(2w-1) + (dx+w-1).
Tensor relative_position_bias(const Tensor& table, int64_t window, int64_t heads);
std::vector<int64_t> relative_position_index(int64_t window);

/// Additive mask for shifted windows over an h x w map (multiples of window):
/// [num_windows, heads, n, n] with 0 for same-region pairs, -1e9 across the
/// wrap boundary introduced by the cyclic roll.
Tensor shifted_window_mask(int64_t h, int64_t w, int64_t window, int64_t shift, int64_t heads);

/// Multi-head self-attention over windows [B, n, C]; bias is [heads, n, n],
/// mask (optional) is [num_windows, heads, n, n] with B a multiple of
/// num_windows.
Tensor window_attention(const Tensor& x, const AttentionWeights& wts, int64_t heads,
                        const Tensor& bias, const Tensor* mask = nullptr);

/// LN -> (shifted) window attention -> +residual -> LN -> MLP -> +residual
/// over tokens [N, H*W, C]. Pads H,W to window multiples with bottom/right
/// reflection and crops back.
Tensor swin_layer(const Tensor& x, int64_t h, int64_t w, const RSTBConfig& cfg,
                  const SwinLayerWeights& wts, int64_t shift);

/// depth Swin layers (shift alternating 0, window/2) -> 3x3 conv -> +input
/// residual, over an [N, C, H, W] feature map.
Tensor rstb_forward(const Tensor& x, const RSTBConfig& cfg, const RSTBWeights& wts);

SwinLayerWeights make_swin_layer_weights(const RSTBConfig& cfg, Rng& rng);
RSTBWeights make_rstb_weights(const RSTBConfig& cfg, Rng& rng);
Tensor kaiming_uniform_tensor(Rng& rng, Shape shape, int64_t fan_in);

using TensorVisitor = std::function<void(const std::string&, Tensor&)>;
void visit_weights(SwinLayerWeights& w, const std::string& prefix, const TensorVisitor& fn);
void visit_weights(RSTBWeights& w, const std::string& prefix, const TensorVisitor& fn);

}  // namespace cstn
