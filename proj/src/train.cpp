#include "cstn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <tuple>

#include "cstn/ops.hpp"
#include "cstn/rng.hpp"

namespace cstn {

namespace {

std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void require_same(const char* what, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DataError(std::string("loss: ") + what + " shapes " + shape_str(a.shape()) +
                        " and " + shape_str(b.shape()) + " differ");
}

CSTNWeights clone_weights(const CSTNWeights& w) {
    CSTNWeights c = w;  // shares buffers until the visit below
    visit_weights(c, [](const std::string&, Tensor& t) { t = t.clone(); });
    return c;
}

// Preprocessed training pair: bicubic-upsampled truncation and the encoded
// ground truth, both at the volume's native size.
struct Sample {
    Tensor in_mag, in_pcs, gt_mag, gt_pcs;
};

Sample make_sample(const MultiEchoVolume& hr, int64_t lowres_h, int64_t lowres_w) {
    const int64_t h = hr.echoes.front().height, w = hr.echoes.front().width;
    MultiEchoVolume lr = simulate_lowres(hr, lowres_h, lowres_w);
    Sample s;
    std::tie(s.in_mag, s.in_pcs) = preprocess(lr, h, w);
    std::tie(s.gt_mag, s.gt_pcs) = preprocess(hr, h, w);
    return s;
}

Tensor crop_hw(const Tensor& t, int64_t y, int64_t x, int64_t p) {
    return slice(slice(t, 2, y, y + p), 3, x, x + p);
}

double validation_loss(const CSTNConfig& model, const CSTNWeights& wts,
                       const std::vector<Sample>& val, double lm, double lp) {
    double acc = 0.0;
    for (const Sample& s : val) {
        auto [pm, pp] = forward(s.in_mag, s.in_pcs, model, wts);
        acc += loss(pm, pp, s.gt_mag, s.gt_pcs, lm, lp).value();
    }
    return acc / static_cast<double>(val.size());
}

std::ofstream open_log(const std::string& path, const char* header) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os << header;
    return os;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw UsageError("betas must lie in (0, 1)");
    if (!(eps > 0.0)) throw UsageError("eps must be positive");
    if (batch_size < 1) throw UsageError("batch_size must be at least 1");
    if (total_steps < 0) throw UsageError("total_steps must be non-negative");
    if (lambda_mag < 0.0 || lambda_phase < 0.0)
        throw UsageError("loss weights must be non-negative");
    if (checkpoint_every < 0) throw UsageError("checkpoint_every must be non-negative");
    if (patch_size < 8) throw UsageError("patch_size must be at least 8");
}

double lr_at_step(const TrainConfig& cfg, int64_t step) {
    double f = 1.0;
    if (cfg.total_steps > 0) {
        if (step > cfg.total_steps / 2) f *= 0.5;
        if (step > (3 * cfg.total_steps) / 4) f *= 0.5;
    }
    return cfg.learning_rate * f;
}

Tensor loss(const Tensor& pred_mag, const Tensor& pred_phase_cs, const Tensor& gt_mag,
            const Tensor& gt_phase_cs, double lambda_mag, double lambda_phase) {
    require_same("magnitude", pred_mag, gt_mag);
    require_same("phase", pred_phase_cs, gt_phase_cs);
    Tensor l_mag = mean(abs(sub(pred_mag, gt_mag)));
    Tensor l_phase = mean(abs(sub(pred_phase_cs, gt_phase_cs)));
    return add(mul(l_mag, static_cast<float>(lambda_mag)),
               mul(l_phase, static_cast<float>(lambda_phase)));
}

Tensor loss(const Tensor& pred_mag, const Tensor& pred_phase_cs, const MultiEchoVolume& gt,
            double lambda_mag, double lambda_phase) {
    validate(gt);
    const int64_t h = gt.echoes.front().height, w = gt.echoes.front().width;
    auto [gt_mag, gt_pcs] = preprocess(gt, h, w);
    return loss(pred_mag, pred_phase_cs, gt_mag, gt_pcs, lambda_mag, lambda_phase);
}

AdamState make_adam_state(const std::vector<Tensor*>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const Tensor* p : params) {
        st.m.emplace_back(p->shape());
        st.v.emplace_back(p->shape());
    }
    return st;
}

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<std::span<const float>>& grads, AdamState& state,
               const TrainConfig& cfg, double lr) {
    if (grads.size() != params.size() || state.m.size() != params.size())
        throw UsageError("adam_step: parameter, gradient and state counts differ");
    state.step += 1;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        auto w = params[i]->data();
        auto g = grads[i];
        auto m = state.m[i].data();
        auto v = state.v[i].data();
        if (g.size() != w.size() || m.size() != w.size())
            throw UsageError("adam_step: size mismatch on parameter " + std::to_string(i));
        for (size_t j = 0; j < w.size(); ++j) {
            const double gj = g[j];
            const double mj = b1 * m[j] + (1.0 - b1) * gj;
            const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double upd = lr * (mj / c1) / (std::sqrt(vj / c2) + cfg.eps);
            w[j] = static_cast<float>(w[j] - upd);
        }
    }
}

TrainResult train(const TrainConfig& cfg, const CSTNConfig& model, const TrainData& data,
                  const std::string& run_dir) {
    cfg.validate();
    model.validate();
    if (data.train_set.empty()) throw DataError("train: empty training set");
    std::filesystem::create_directories(run_dir);

    int64_t patch = cfg.patch_size;
    auto admit = [&](const MultiEchoVolume& v) {
        validate(v);
        if (static_cast<int64_t>(v.echoes.size()) != model.in_echoes)
            throw DataError("train: volume has " + std::to_string(v.echoes.size()) +
                            " echoes, model expects " + std::to_string(model.in_echoes));
        patch = std::min({patch, v.echoes.front().height, v.echoes.front().width});
    };
    for (const auto& v : data.train_set) admit(v);
    for (const auto& v : data.val_set) admit(v);

    std::vector<Sample> train_cache, val_cache;
    train_cache.reserve(data.train_set.size());
    for (const auto& v : data.train_set)
        train_cache.push_back(make_sample(v, data.lowres_h, data.lowres_w));
    for (const auto& v : data.val_set) {
        Sample full = make_sample(v, data.lowres_h, data.lowres_w);
        const int64_t y = (full.in_mag.dim(2) - patch) / 2;
        const int64_t x = (full.in_mag.dim(3) - patch) / 2;
        Sample c;
        c.in_mag = crop_hw(full.in_mag, y, x, patch);
        c.in_pcs = crop_hw(full.in_pcs, y, x, patch);
        c.gt_mag = crop_hw(full.gt_mag, y, x, patch);
        c.gt_pcs = crop_hw(full.gt_pcs, y, x, patch);
        val_cache.push_back(std::move(c));
    }

    TrainResult result;
    result.model = model;
    CSTNWeights weights = make_cstn_weights(model, cfg.seed);
    std::vector<Tensor*> params;
    visit_weights(weights, [&](const std::string&, Tensor& t) { params.push_back(&t); });
    AdamState opt = make_adam_state(params);
    Rng sampler(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);

    std::ofstream loss_os = open_log(run_dir + "/loss.csv", "step,loss,lr\n");
    std::ofstream val_os = open_log(run_dir + "/val.csv", "step,val_loss\n");

    double best_val = std::numeric_limits<double>::infinity();
    result.best = clone_weights(weights);
    int64_t last_val_step = -1;
    auto run_validation = [&](int64_t step) {
        if (val_cache.empty()) return;
        const double v =
            validation_loss(model, weights, val_cache, cfg.lambda_mag, cfg.lambda_phase);
        if (!std::isfinite(v))
            throw NumericError("train: validation loss is not finite at step " +
                               std::to_string(step));
        result.val_losses.push_back(v);
        val_os << step << ',' << fmt_g(v) << '\n';
        if (v < best_val) {
            best_val = v;
            result.best = clone_weights(weights);
        }
        last_val_step = step;
    };

    for (int64_t step = 1; step <= cfg.total_steps; ++step) {
        std::vector<Tensor> bm, bp, bgm, bgp;
        for (int64_t b = 0; b < cfg.batch_size; ++b) {
            const Sample& s = train_cache[static_cast<size_t>(
                sampler.uniform_int(static_cast<int64_t>(train_cache.size())))];
            const int64_t y = sampler.uniform_int(s.in_mag.dim(2) - patch + 1);
            const int64_t x = sampler.uniform_int(s.in_mag.dim(3) - patch + 1);
            bm.push_back(crop_hw(s.in_mag, y, x, patch));
            bp.push_back(crop_hw(s.in_pcs, y, x, patch));
            bgm.push_back(crop_hw(s.gt_mag, y, x, patch));
            bgp.push_back(crop_hw(s.gt_pcs, y, x, patch));
        }
        Tensor in_mag = concat(bm, 0), in_pcs = concat(bp, 0);
        Tensor gt_mag = concat(bgm, 0), gt_pcs = concat(bgp, 0);

        double step_loss;
        {
            Tape tape;
            TapeScope scope(tape);
            for (Tensor* p : params) tape.watch(*p);
            auto [pm, pp] = forward(in_mag, in_pcs, model, weights);
            Tensor l = loss(pm, pp, gt_mag, gt_pcs, cfg.lambda_mag, cfg.lambda_phase);
            step_loss = l.value();
            if (!std::isfinite(step_loss))
                throw NumericError("train: loss is not finite at step " + std::to_string(step));
            tape.backward(l);
        }

        const double lr = lr_at_step(cfg, step);
        std::vector<std::span<const float>> grads;
        grads.reserve(params.size());
        for (Tensor* p : params) grads.push_back(p->grad());
        adam_step(params, grads, opt, cfg, lr);
        for (Tensor* p : params) p->clear_grad();

        result.losses.push_back(step_loss);
        loss_os << step << ',' << fmt_g(step_loss) << ',' << fmt_g(lr) << '\n';

        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
            char name[40];
            std::snprintf(name, sizeof name, "/ckpt_%06lld.cstck",
                          static_cast<long long>(step));
            save_checkpoint(run_dir + name, model, weights);
            run_validation(step);
        }
    }

    if (last_val_step != cfg.total_steps) run_validation(cfg.total_steps);
    result.last = clone_weights(weights);
    if (val_cache.empty()) result.best = clone_weights(weights);
    result.best_val = val_cache.empty() ? 0.0 : best_val;
    save_checkpoint(run_dir + "/best.cstck", model, result.best);
    save_checkpoint(run_dir + "/last.cstck", model, result.last);
    return result;
}

void EvalConfig::validate() const {
    if (protocol != 192 && protocol != 256)
        throw UsageError("protocol must be 192 or 256, got " + std::to_string(protocol));
    smwi.validate();
}

namespace {

double ref_range(const std::vector<float>& v) {
    float lo = v.empty() ? 0.0f : v.front(), hi = lo;
    for (float x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double r = static_cast<double>(hi) - static_cast<double>(lo);
    return r > 0.0 ? r : 1.0;
}

}  // namespace

VolumeScores score_volume(const MultiEchoVolume& pred, const MultiEchoVolume& ref,
                          const SMWIParams& smwi) {
    validate(pred);
    validate(ref);
    const size_t e = ref.echoes.size();
    if (pred.echoes.size() != e)
        throw DataError("score_volume: echo counts " + std::to_string(pred.echoes.size()) +
                        " and " + std::to_string(e) + " differ");
    const int64_t h = ref.echoes.front().height, w = ref.echoes.front().width;
    if (pred.echoes.front().height != h || pred.echoes.front().width != w)
        throw DataError("score_volume: image sizes differ");

    VolumeScores s;
    for (size_t i = 0; i < e; ++i) {
        Tensor a({h, w}, pred.echoes[i].magnitude);
        Tensor b({h, w}, ref.echoes[i].magnitude);
        s.mag_mse += mse(a, b);
        s.mag_mae += mae(a, b);
        s.mag_ssim += 100.0 * ssim(a, b, ref_range(ref.echoes[i].magnitude));
    }
    s.mag_mse /= static_cast<double>(e);
    s.mag_mae /= static_cast<double>(e);
    s.mag_ssim /= static_cast<double>(e);

    SMWIImage sp = reconstruct_smwi(pred, smwi);
    SMWIImage sr = reconstruct_smwi(ref, smwi);
    Tensor a({h, w}, sp.values);
    Tensor b({h, w}, sr.values);
    s.smwi_mse = mse(a, b);
    s.smwi_mae = mae(a, b);
    s.smwi_ssim = 100.0 * ssim(a, b, ref_range(sr.values));
    return s;
}

EvalResult evaluate(const CSTNConfig& model, const CSTNWeights& wts,
                    const std::vector<MultiEchoVolume>& scans, const EvalConfig& cfg,
                    const std::vector<std::string>& scan_ids) {
    cfg.validate();
    model.validate();
    if (scans.empty()) throw DataError("evaluate: no scans");
    if (!scan_ids.empty() && scan_ids.size() != scans.size())
        throw DataError("evaluate: " + std::to_string(scan_ids.size()) + " ids for " +
                        std::to_string(scans.size()) + " scans");

    std::vector<std::string> ids = scan_ids;
    if (ids.empty())
        for (size_t i = 0; i < scans.size(); ++i) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "scan_%03zu", i);
            ids.emplace_back(buf);
        }

    static const char* kNames[6] = {"mag_mse",  "mag_mae",  "mag_ssim",
                                    "smwi_mse", "smwi_mae", "smwi_ssim"};
    std::vector<double> net_cols[6], base_cols[6];
    for (const MultiEchoVolume& hr : scans) {
        validate(hr);
        const int64_t h = hr.echoes.front().height, w = hr.echoes.front().width;
        if (h != model.target_h || w != model.target_w)
            throw DataError("evaluate: scan is " + std::to_string(h) + "x" +
                            std::to_string(w) + ", model targets " +
                            std::to_string(model.target_h) + "x" +
                            std::to_string(model.target_w));
        MultiEchoVolume lr = simulate_lowres(hr, cfg.protocol, cfg.protocol);
        MultiEchoVolume net = infer(lr, model, wts);
        MultiEchoVolume base = bicubic_baseline(lr, model.target_h, model.target_w);
        const VolumeScores ns = score_volume(net, hr, cfg.smwi);
        const VolumeScores bs = score_volume(base, hr, cfg.smwi);
        const double nv[6] = {ns.mag_mse,  ns.mag_mae,  ns.mag_ssim,
                              ns.smwi_mse, ns.smwi_mae, ns.smwi_ssim};
        const double bv[6] = {bs.mag_mse,  bs.mag_mae,  bs.mag_ssim,
                              bs.smwi_mse, bs.smwi_mae, bs.smwi_ssim};
        for (int k = 0; k < 6; ++k) {
            net_cols[k].push_back(nv[k]);
            base_cols[k].push_back(bv[k]);
        }
    }

    EvalResult r;
    r.network.scan_ids = ids;
    r.baseline.scan_ids = ids;
    for (int k = 0; k < 6; ++k) {
        r.network.columns.push_back(aggregate(kNames[k], net_cols[k]));
        r.baseline.columns.push_back(aggregate(kNames[k], base_cols[k]));
    }
    return r;
}

}  // namespace cstn
