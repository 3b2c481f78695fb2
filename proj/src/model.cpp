#include "cstn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cstn/io.hpp"
#include "cstn/ops.hpp"

namespace cstn {

void CSTNConfig::validate() const {
    rstb.validate();
    if (num_rstb <= 0) throw UsageError("num_rstb must be positive");
    if (in_echoes <= 0) throw UsageError("in_echoes must be positive");
    if (target_h < 16 || target_w < 16)
        throw UsageError("target size must be at least 16x16, got " + std::to_string(target_h) +
                         "x" + std::to_string(target_w));
    if (shallow_channels <= 0 || head_channels <= 0)
        throw UsageError("channel counts must be positive");
}

std::map<std::string, std::string> CSTNConfig::to_map() const {
    return {
        {"model.num_rstb", std::to_string(num_rstb)},
        {"model.depth", std::to_string(rstb.depth)},
        {"model.num_heads", std::to_string(rstb.num_heads)},
        {"model.embed_dim", std::to_string(rstb.embed_dim)},
        {"model.mlp_ratio", std::to_string(rstb.mlp_ratio)},
        {"model.window_size", std::to_string(rstb.window_size)},
        {"model.in_echoes", std::to_string(in_echoes)},
        {"model.target_h", std::to_string(target_h)},
        {"model.target_w", std::to_string(target_w)},
        {"model.shallow_channels", std::to_string(shallow_channels)},
        {"model.head_channels", std::to_string(head_channels)},
    };
}

CSTNConfig CSTNConfig::from_map(const std::map<std::string, std::string>& m) {
    auto want = [&](const std::string& key) {
        auto it = m.find(key);
        if (it == m.end()) throw DataError("checkpoint config lacks " + key);
        try {
            size_t used = 0;
            int64_t v = std::stoll(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument(it->second);
            return v;
        } catch (const std::exception&) {
            throw DataError("checkpoint config " + key + " is not an integer: " + it->second);
        }
    };
    CSTNConfig cfg;
    cfg.num_rstb = want("model.num_rstb");
    cfg.rstb.depth = want("model.depth");
    cfg.rstb.num_heads = want("model.num_heads");
    cfg.rstb.embed_dim = want("model.embed_dim");
    cfg.rstb.mlp_ratio = want("model.mlp_ratio");
    cfg.rstb.window_size = want("model.window_size");
    cfg.in_echoes = want("model.in_echoes");
    cfg.target_h = want("model.target_h");
    cfg.target_w = want("model.target_w");
    cfg.shallow_channels = want("model.shallow_channels");
    cfg.head_channels = want("model.head_channels");
    cfg.validate();
    return cfg;
}

namespace {

// Catmull-Rom weights for the 4 taps around a sample at fractional offset f.
void cubic_weights(double f, double w[4]) {
    const double a = -0.5;
    const double d[4] = {1.0 + f, f, 1.0 - f, 2.0 - f};
    for (int i = 0; i < 4; ++i) {
        const double t = std::abs(d[i]);
        if (t <= 1.0)
            w[i] = ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
        else
            w[i] = ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    }
}

struct Taps {
    int64_t idx[4];
    double w[4];
};

std::vector<Taps> make_taps(int64_t src, int64_t dst) {
    std::vector<Taps> taps(static_cast<size_t>(dst));
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (int64_t o = 0; o < dst; ++o) {
        const double center = (static_cast<double>(o) + 0.5) * scale - 0.5;
        const int64_t base = static_cast<int64_t>(std::floor(center));
        const double f = center - static_cast<double>(base);
        Taps& t = taps[static_cast<size_t>(o)];
        cubic_weights(f, t.w);
        for (int i = 0; i < 4; ++i)
            t.idx[i] = std::clamp<int64_t>(base - 1 + i, 0, src - 1);
    }
    return taps;
}

}  // namespace

std::vector<float> bicubic_resize(const float* src, int64_t sh, int64_t sw, int64_t th,
                                  int64_t tw) {
    if (sh <= 0 || sw <= 0 || th <= 0 || tw <= 0) throw DataError("bicubic_resize: empty image");
    std::vector<float> out(static_cast<size_t>(th * tw));
    if (sh == th && sw == tw) {
        std::memcpy(out.data(), src, sizeof(float) * static_cast<size_t>(th * tw));
        return out;
    }
    const std::vector<Taps> ty = make_taps(sh, th), tx = make_taps(sw, tw);
    std::vector<double> rows(static_cast<size_t>(4 * tw));
    for (int64_t y = 0; y < th; ++y) {
        const Taps& r = ty[static_cast<size_t>(y)];
        for (int i = 0; i < 4; ++i) {
            const float* line = src + r.idx[i] * sw;
            for (int64_t x = 0; x < tw; ++x) {
                const Taps& c = tx[static_cast<size_t>(x)];
                rows[static_cast<size_t>(i * tw + x)] =
                    c.w[0] * line[c.idx[0]] + c.w[1] * line[c.idx[1]] + c.w[2] * line[c.idx[2]] +
                    c.w[3] * line[c.idx[3]];
            }
        }
        for (int64_t x = 0; x < tw; ++x)
            out[static_cast<size_t>(y * tw + x)] = static_cast<float>(
                r.w[0] * rows[static_cast<size_t>(x)] + r.w[1] * rows[static_cast<size_t>(tw + x)] +
                r.w[2] * rows[static_cast<size_t>(2 * tw + x)] +
                r.w[3] * rows[static_cast<size_t>(3 * tw + x)]);
    }
    return out;
}

std::pair<Tensor, Tensor> preprocess(const MultiEchoVolume& lr, int64_t target_h,
                                     int64_t target_w) {
    validate(lr);
    const int64_t e = static_cast<int64_t>(lr.echoes.size());
    const int64_t sh = lr.echoes[0].height, sw = lr.echoes[0].width;
    if (target_h < sh || target_w < sw)
        throw DataError("target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                        " smaller than input " + std::to_string(sh) + "x" + std::to_string(sw));
    const int64_t hw = target_h * target_w;
    Tensor mag_in({1, e, target_h, target_w});
    Tensor phase_in({1, 2 * e, target_h, target_w});
    for (int64_t i = 0; i < e; ++i) {
        const ComplexImage& echo = lr.echoes[static_cast<size_t>(i)];
        std::vector<float> m = bicubic_resize(echo.magnitude.data(), sh, sw, target_h, target_w);
        std::copy(m.begin(), m.end(), mag_in.data().begin() + i * hw);

        std::vector<float> c(echo.phase.size()), s(echo.phase.size());
        for (size_t p = 0; p < echo.phase.size(); ++p) {
            c[p] = std::cos(echo.phase[p]);
            s[p] = std::sin(echo.phase[p]);
        }
        std::vector<float> cu = bicubic_resize(c.data(), sh, sw, target_h, target_w);
        std::vector<float> su = bicubic_resize(s.data(), sh, sw, target_h, target_w);
        for (int64_t p = 0; p < hw; ++p) {
            const double cv = cu[static_cast<size_t>(p)], sv = su[static_cast<size_t>(p)];
            const double n = std::sqrt(cv * cv + sv * sv);
            const bool ok = n > 1e-12;
            phase_in.data()[i * hw + p] = ok ? static_cast<float>(cv / n) : 1.0f;
            phase_in.data()[(e + i) * hw + p] = ok ? static_cast<float>(sv / n) : 0.0f;
        }
    }
    return {mag_in, phase_in};
}

std::pair<Tensor, Tensor> forward(const Tensor& mag_in, const Tensor& phase_in,
                                  const CSTNConfig& cfg, const CSTNWeights& wts) {
    cfg.validate();
    if (mag_in.ndim() != 4 || phase_in.ndim() != 4 || mag_in.dim(1) != cfg.in_echoes ||
        phase_in.dim(1) != 2 * cfg.in_echoes || mag_in.dim(2) != phase_in.dim(2) ||
        mag_in.dim(3) != phase_in.dim(3))
        throw DataError("forward expects [N," + std::to_string(cfg.in_echoes) + ",H,W] and [N," +
                        std::to_string(2 * cfg.in_echoes) + ",H,W], got " +
                        shape_str(mag_in.shape()) + " and " + shape_str(phase_in.shape()));
    if (static_cast<int64_t>(wts.rstbs.size()) != cfg.num_rstb)
        throw DataError("weights hold " + std::to_string(wts.rstbs.size()) +
                        " residual blocks, config wants " + std::to_string(cfg.num_rstb));

    Tensor mag_s = conv2d(mag_in, wts.mag_shallow_w, wts.mag_shallow_b);
    Tensor phase_s = conv2d(phase_in, wts.phase_shallow_w, wts.phase_shallow_b);
    Tensor fused = conv2d(concat({mag_s, phase_s}, 1), wts.fusion_w, wts.fusion_b);

    Tensor deep = fused;
    for (const RSTBWeights& block : wts.rstbs) deep = rstb_forward(deep, cfg.rstb, block);
    deep = add(fused, conv2d(deep, wts.body_w, wts.body_b));

    Tensor hq_mag =
        add(mag_in, conv2d(gelu(conv2d(deep, wts.mag_head1_w, wts.mag_head1_b)), wts.mag_head2_w,
                           wts.mag_head2_b));
    Tensor hq_phase =
        add(phase_in, conv2d(gelu(conv2d(deep, wts.phase_head1_w, wts.phase_head1_b)),
                             wts.phase_head2_w, wts.phase_head2_b));
    return {hq_mag, hq_phase};
}

MultiEchoVolume postprocess(const Tensor& hq_mag, const Tensor& hq_phase,
                            const std::vector<double>& echo_times_ms) {
    if (hq_mag.ndim() != 4 || hq_phase.ndim() != 4 || hq_mag.dim(0) != 1 ||
        hq_phase.dim(0) != 1 || hq_phase.dim(1) != 2 * hq_mag.dim(1) ||
        hq_mag.dim(2) != hq_phase.dim(2) || hq_mag.dim(3) != hq_phase.dim(3))
        throw DataError("postprocess expects [1,E,H,W] and [1,2E,H,W], got " +
                        shape_str(hq_mag.shape()) + " and " + shape_str(hq_phase.shape()));
    const int64_t e = hq_mag.dim(1), h = hq_mag.dim(2), w = hq_mag.dim(3), hw = h * w;
    if (static_cast<int64_t>(echo_times_ms.size()) != e)
        throw DataError("postprocess got " + std::to_string(echo_times_ms.size()) +
                        " echo times for " + std::to_string(e) + " echoes");
    MultiEchoVolume v;
    v.echo_times_ms = echo_times_ms;
    for (int64_t i = 0; i < e; ++i) {
        ComplexImage img;
        img.height = h;
        img.width = w;
        img.magnitude.resize(static_cast<size_t>(hw));
        img.phase.resize(static_cast<size_t>(hw));
        for (int64_t p = 0; p < hw; ++p) {
            img.magnitude[static_cast<size_t>(p)] =
                std::max(0.0f, hq_mag.data()[i * hw + p]);
            img.phase[static_cast<size_t>(p)] = wrap_phase(
                std::atan2(hq_phase.data()[(e + i) * hw + p], hq_phase.data()[i * hw + p]));
        }
        v.echoes.push_back(std::move(img));
    }
    return v;
}

MultiEchoVolume infer(const MultiEchoVolume& lr, const CSTNConfig& cfg, const CSTNWeights& wts) {
    if (static_cast<int64_t>(lr.echoes.size()) != cfg.in_echoes)
        throw DataError("volume has " + std::to_string(lr.echoes.size()) +
                        " echoes but the network was built for " + std::to_string(cfg.in_echoes));
    auto [mag_in, phase_in] = preprocess(lr, cfg.target_h, cfg.target_w);
    auto [hq_mag, hq_phase] = forward(mag_in, phase_in, cfg, wts);
    return postprocess(hq_mag, hq_phase, lr.echo_times_ms);
}

MultiEchoVolume bicubic_baseline(const MultiEchoVolume& lr, int64_t target_h, int64_t target_w) {
    auto [mag_in, phase_in] = preprocess(lr, target_h, target_w);
    return postprocess(mag_in, phase_in, lr.echo_times_ms);
}

CSTNWeights make_cstn_weights(const CSTNConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const int64_t e = cfg.in_echoes, s = cfg.shallow_channels, c = cfg.rstb.embed_dim;
    const int64_t hc = cfg.head_channels;
    CSTNWeights w;
    w.mag_shallow_w = kaiming_uniform_tensor(rng, {s, e, 3, 3}, e * 9);
    w.mag_shallow_b = Tensor({s});
    w.phase_shallow_w = kaiming_uniform_tensor(rng, {s, 2 * e, 3, 3}, 2 * e * 9);
    w.phase_shallow_b = Tensor({s});
    w.fusion_w = kaiming_uniform_tensor(rng, {c, 2 * s, 3, 3}, 2 * s * 9);
    w.fusion_b = Tensor({c});
    for (int64_t i = 0; i < cfg.num_rstb; ++i) w.rstbs.push_back(make_rstb_weights(cfg.rstb, rng));
    w.body_w = Tensor({c, c, 3, 3});
    w.body_b = Tensor({c});
    w.mag_head1_w = kaiming_uniform_tensor(rng, {hc, c, 3, 3}, c * 9);
    w.mag_head1_b = Tensor({hc});
    w.mag_head2_w = Tensor({e, hc, 3, 3});
    w.mag_head2_b = Tensor({e});
    w.phase_head1_w = kaiming_uniform_tensor(rng, {hc, c, 3, 3}, c * 9);
    w.phase_head1_b = Tensor({hc});
    w.phase_head2_w = Tensor({2 * e, hc, 3, 3});
    w.phase_head2_b = Tensor({2 * e});
    return w;
}

void visit_weights(CSTNWeights& w, const TensorVisitor& fn) {
    fn("mag_shallow.w", w.mag_shallow_w);
    fn("mag_shallow.b", w.mag_shallow_b);
    fn("phase_shallow.w", w.phase_shallow_w);
    fn("phase_shallow.b", w.phase_shallow_b);
    fn("fusion.w", w.fusion_w);
    fn("fusion.b", w.fusion_b);
    for (size_t i = 0; i < w.rstbs.size(); ++i)
        visit_weights(w.rstbs[i], "rstb." + std::to_string(i) + ".", fn);
    fn("body.w", w.body_w);
    fn("body.b", w.body_b);
    fn("mag_head.conv1.w", w.mag_head1_w);
    fn("mag_head.conv1.b", w.mag_head1_b);
    fn("mag_head.conv2.w", w.mag_head2_w);
    fn("mag_head.conv2.b", w.mag_head2_b);
    fn("phase_head.conv1.w", w.phase_head1_w);
    fn("phase_head.conv1.b", w.phase_head1_b);
    fn("phase_head.conv2.w", w.phase_head2_w);
    fn("phase_head.conv2.b", w.phase_head2_b);
}

void save_checkpoint(const std::string& path, const CSTNConfig& cfg, CSTNWeights& wts) {
    cfg.validate();
    std::vector<NamedTensor> tensors;
    visit_weights(wts, [&](const std::string& name, Tensor& t) {
        if (!t.all_finite()) throw NumericError("checkpoint tensor " + name + " is not finite");
        tensors.push_back({name, t});
    });
    write_cstck(path, cfg.to_map(), tensors);
}

std::pair<CSTNConfig, CSTNWeights> load_checkpoint(const std::string& path) {
    std::map<std::string, std::string> cfg_map;
    std::vector<NamedTensor> tensors;
    read_cstck(path, cfg_map, tensors);
    const CSTNConfig cfg = CSTNConfig::from_map(cfg_map);

    std::map<std::string, Tensor> by_name;
    for (NamedTensor& nt : tensors) {
        if (!by_name.emplace(nt.name, nt.value).second)
            throw DataError("checkpoint repeats tensor " + nt.name);
    }
    CSTNWeights wts = make_cstn_weights(cfg, 0);
    size_t used = 0;
    visit_weights(wts, [&](const std::string& name, Tensor& t) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("checkpoint lacks tensor " + name);
        if (it->second.shape() != t.shape())
            throw DataError("checkpoint tensor " + name + " has shape " +
                            shape_str(it->second.shape()) + ", config implies " +
                            shape_str(t.shape()));
        if (!it->second.all_finite())
            throw DataError("checkpoint tensor " + name + " is not finite");
        t = it->second;
        ++used;
    });
    if (used != by_name.size())
        throw DataError("checkpoint holds " + std::to_string(by_name.size()) +
                        " tensors, config implies " + std::to_string(used));
    return {cfg, wts};
}

}  // namespace cstn
