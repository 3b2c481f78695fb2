// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line with
// its wall time; the process exit code is the number of failed criteria.
// Thresholds and runtime caps are fixed here, not configurable.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "cstn/gradcheck.hpp"
#include "cstn/io.hpp"
#include "cstn/metrics.hpp"
#include "cstn/model.hpp"
#include "cstn/ops.hpp"
#include "cstn/rng.hpp"
#include "cstn/smwi.hpp"
#include "cstn/train.hpp"

using namespace cstn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

fs::path g_root;        // scratch directory, removed at exit
std::string g_cli;      // path to the cstn binary, for the staged pipeline

void fill_random(Tensor& t, Rng& rng, double scale) {
    for (float& v : t.data()) v = static_cast<float>(rng.uniform(-scale, scale));
}

double mean_range(const std::vector<double>& v, size_t from, size_t count) {
    double s = 0;
    for (size_t i = from; i < from + count; ++i) s += v[i];
    return s / static_cast<double>(count);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// --- 1: every op and the composed network agree with finite differences ----

Outcome gradient_oracle() {
    double worst_op = 0;
    std::string worst_name;
    for (const OpCheck& c : gradcheck_all_ops(1234)) {
        if (c.report.max_rel_err > worst_op) {
            worst_op = c.report.max_rel_err;
            worst_name = c.op;
        }
        if (!c.report.ok(1e-3)) return {false, "op " + c.op + " rel err " +
                                               fmt("%.3e", c.report.max_rel_err)};
    }

    CSTNConfig cfg;
    cfg.num_rstb = 2;
    cfg.rstb = RSTBConfig{2, 2, 16, 2, 8};
    cfg.in_echoes = 2;
    cfg.target_h = cfg.target_w = 32;
    cfg.shallow_channels = cfg.head_channels = 8;
    CSTNWeights w = make_cstn_weights(cfg, 12);
    Rng rng(13);
    // zero-initialized layers would silence upstream gradients, so liven them
    fill_random(w.body_w, rng, 0.05);
    fill_random(w.body_b, rng, 0.05);
    fill_random(w.mag_head2_w, rng, 0.05);
    fill_random(w.mag_head2_b, rng, 0.05);
    fill_random(w.phase_head2_w, rng, 0.05);
    fill_random(w.phase_head2_b, rng, 0.05);

    Tensor mag_in({1, 2, 32, 32});
    Tensor phase_in({1, 4, 32, 32});
    fill_random(mag_in, rng, 0.5);
    fill_random(phase_in, rng, 0.5);

    std::vector<Tensor> leaves{mag_in, phase_in};
    visit_weights(w, [&](const std::string&, Tensor& t) { leaves.push_back(t); });
    auto fn = [&](const std::vector<Tensor>&) {
        auto [m, p] = forward(leaves[0], leaves[1], cfg, w);
        return add(sum(m), sum(p));
    };
    // wider probe step than the per-op checks: f32 forward noise of the deep
    // composite divided by 2*eps limits agreement
    GradCheckReport rep = gradcheck(fn, leaves, 1e-2, 3, 99);
    if (!rep.ok(1e-3))
        return {false, "network " + rep.worst + " rel err " + fmt("%.3e", rep.max_rel_err)};
    return {true, "worst op " + worst_name + " " + fmt("%.3e", worst_op) + ", network " +
                      fmt("%.3e", rep.max_rel_err)};
}

// --- 2: the transform matches a naive centered DFT ------------------------

ComplexImage random_image(Rng& rng, int64_t h, int64_t w) {
    ComplexImage img;
    img.height = h;
    img.width = w;
    for (int64_t i = 0; i < h * w; ++i) {
        img.magnitude.push_back(static_cast<float>(rng.uniform(0.2, 1.0)));
        img.phase.push_back(static_cast<float>(rng.uniform(-3.1, 3.1)));
    }
    return img;
}

Outcome fft_oracle() {
    Rng rng(42);
    double worst_dft = 0;
    for (int64_t n : {4, 6, 8, 12}) {
        ComplexImage img = random_image(rng, n, n);
        KSpace k = to_kspace(img);
        const double norm = 1.0 / std::sqrt(static_cast<double>(n * n));
        for (int64_t u = 0; u < n; ++u) {
            for (int64_t v = 0; v < n; ++v) {
                std::complex<double> acc = 0;
                for (int64_t y = 0; y < n; ++y) {
                    for (int64_t x = 0; x < n; ++x) {
                        const size_t i = static_cast<size_t>(y * n + x);
                        const std::complex<double> z =
                            std::polar<double>(img.magnitude[i], img.phase[i]);
                        const double ang = -2.0 * kPi *
                                           (static_cast<double>((u - n / 2) * y) / n +
                                            static_cast<double>((v - n / 2) * x) / n);
                        acc += z * std::polar(1.0, ang);
                    }
                }
                acc *= norm;
                const size_t j = static_cast<size_t>(u * n + v);
                worst_dft = std::max(worst_dft, std::abs(acc.real() - k.re[j]));
                worst_dft = std::max(worst_dft, std::abs(acc.imag() - k.im[j]));
            }
        }
    }
    if (worst_dft >= 1e-4) return {false, "naive DFT mismatch " + fmt("%.3e", worst_dft)};

    ComplexImage big = random_image(rng, 384, 384);
    KSpace k = to_kspace(big);
    ComplexImage back = from_kspace(k);
    double worst_rt = 0, power_img = 0, power_k = 0;
    for (size_t i = 0; i < big.magnitude.size(); ++i) {
        const std::complex<double> a = std::polar<double>(big.magnitude[i], big.phase[i]);
        const std::complex<double> b = std::polar<double>(back.magnitude[i], back.phase[i]);
        worst_rt = std::max({worst_rt, std::abs(a.real() - b.real()),
                             std::abs(a.imag() - b.imag())});
        power_img += std::norm(a);
        power_k += static_cast<double>(k.re[i]) * k.re[i] +
                   static_cast<double>(k.im[i]) * k.im[i];
    }
    const double parseval = std::abs(power_img - power_k) / power_img;
    if (worst_rt >= 1e-5) return {false, "384x384 round trip " + fmt("%.3e", worst_rt)};
    if (parseval >= 1e-5) return {false, "Parseval rel err " + fmt("%.3e", parseval)};
    return {true, "DFT " + fmt("%.3e", worst_dft) + ", round trip " + fmt("%.3e", worst_rt) +
                      ", Parseval " + fmt("%.3e", parseval)};
}

// --- 3: exact structural identities ----------------------------------------

Outcome structural_identities() {
    Rng rng(11);
    Tensor x({2, 8, 12, 3});
    fill_random(x, rng, 1.0);
    for (int64_t w : {2, 4}) {
        Tensor back = window_reverse(window_partition(x, w), w, 2, 8, 12);
        if (!bitwise_equal(back, x)) return {false, "window partition/reverse not inverse"};
    }

    CSTNConfig cfg;
    cfg.num_rstb = 2;
    cfg.rstb = RSTBConfig{2, 2, 16, 2, 8};
    cfg.in_echoes = 2;
    cfg.target_h = cfg.target_w = 32;
    cfg.shallow_channels = cfg.head_channels = 8;
    CSTNWeights w = make_cstn_weights(cfg, 21);
    Tensor mag_in({1, 2, 32, 32}), phase_in({1, 4, 32, 32});
    fill_random(mag_in, rng, 1.0);
    fill_random(phase_in, rng, 1.0);
    auto [mag_out, phase_out] = forward(mag_in, phase_in, cfg, w);
    if (!bitwise_equal(mag_out, mag_in) || !bitwise_equal(phase_out, phase_in))
        return {false, "zero-output-weight network is not the identity"};

    Phantom ph = generate_phantom(51, 64, 64, {14.0, 27.0, 40.0});
    KSpace k = to_kspace(ph.volume.echoes[0]);
    KSpace t = truncate_kspace(k, 64, 64);
    if (t.re != k.re || t.im != k.im)
        return {false, "same-size truncation is not the identity"};

    MultiEchoVolume flat = ph.volume;
    for (ComplexImage& echo : flat.echoes)
        std::fill(echo.phase.begin(), echo.phase.end(), 0.0f);
    SMWIImage smwi = reconstruct_smwi(flat, SMWIParams{});
    Tensor combined = combine_echoes(flat, EchoCombine::Average);
    for (int64_t i = 0; i < combined.numel(); ++i)
        if (smwi.values[static_cast<size_t>(i)] != combined.data()[i])
            return {false, "zero-phase susceptibility map deviates from the combined magnitude"};
    return {true, "partition inverse, identity forward, same-size truncation, zero-phase mask"};
}

// --- 4: memorizing a fixed patch set ---------------------------------------

Outcome overfit_convergence() {
    const std::vector<double> times{14.0, 27.0, 40.0};
    CSTNConfig model;
    model.num_rstb = 1;
    model.rstb = RSTBConfig{2, 4, 24, 2, 8};
    model.in_echoes = 3;
    model.target_h = model.target_w = 48;
    model.shallow_channels = model.head_channels = 12;

    TrainData data;
    data.lowres_h = data.lowres_w = 32;
    for (int64_t i = 0; i < 8; ++i)
        data.train_set.push_back(generate_phantom(1000 + static_cast<uint64_t>(i), 48, 48,
                                                  times)
                                     .volume);

    TrainConfig tc;
    tc.learning_rate = 3e-3;
    tc.total_steps = 2000;
    tc.seed = 11;
    tc.checkpoint_every = 0;
    tc.patch_size = 48;

    const fs::path dir = g_root / "overfit";
    TrainResult r = train(tc, model, data, (dir / "full").string());
    // single-patch batches are noisy, so compare one epoch of steps each side
    const double initial = mean_range(r.losses, 0, 8);
    const double final_loss = mean_range(r.losses, r.losses.size() - 8, 8);
    const double ratio = initial / final_loss;

    tc.total_steps = 50;
    train(tc, model, data, (dir / "a").string());
    train(tc, model, data, (dir / "b").string());
    const bool replay =
        read_file_bytes((dir / "a" / "loss.csv").string()) ==
            read_file_bytes((dir / "b" / "loss.csv").string()) &&
        read_file_bytes((dir / "a" / "last.cstck").string()) ==
            read_file_bytes((dir / "b" / "last.cstck").string());

    std::string detail = "loss " + fmt("%.4f", initial) + " -> " + fmt("%.4f", final_loss) +
                         ", ratio " + fmt("%.1f", ratio) + "x (need >= 100x), replay " +
                         (replay ? "exact" : "DIVERGED");
    return {final_loss <= initial / 100.0 && replay, detail};
}

// --- 5: the trained network beats plain interpolation ----------------------

double column_mean(const MetricTable& t, const std::string& name) {
    for (const MetricReport& c : t.columns)
        if (c.metric == name) return c.mean;
    return std::nan("");
}

bool tables_equal(const MetricTable& a, const MetricTable& b) {
    if (a.columns.size() != b.columns.size()) return false;
    for (size_t c = 0; c < a.columns.size(); ++c) {
        if (a.columns[c].values.size() != b.columns[c].values.size()) return false;
        for (size_t i = 0; i < a.columns[c].values.size(); ++i)
            if (a.columns[c].values[i] != b.columns[c].values[i]) return false;
    }
    return true;
}

Outcome baseline_dominance() {
    const std::vector<double> times{14.0, 27.0, 40.0};
    CSTNConfig model;
    model.num_rstb = 2;
    model.rstb = RSTBConfig{2, 4, 24, 2, 8};
    model.in_echoes = 3;
    model.target_h = model.target_w = 384;
    model.shallow_channels = model.head_channels = 12;

    TrainData data;
    data.lowres_h = data.lowres_w = 256;
    for (int64_t i = 0; i < 64; ++i)
        data.train_set.push_back(generate_phantom(1000 + static_cast<uint64_t>(i), 384, 384,
                                                  times)
                                     .volume);

    TrainConfig tc;
    tc.learning_rate = 5e-4;
    tc.total_steps = 5000;
    tc.seed = 11;
    tc.checkpoint_every = 0;
    tc.patch_size = 64;
    TrainResult r = train(tc, model, data, (g_root / "dominance").string());
    data.train_set.clear();

    std::vector<MultiEchoVolume> held;
    for (int64_t i = 0; i < 16; ++i)
        held.push_back(generate_phantom(5000 + static_cast<uint64_t>(i), 384, 384, times)
                           .volume);

    EvalConfig ec;
    ec.protocol = 256;
    EvalResult trained = evaluate(model, r.last, held, ec);
    CSTNWeights identity = make_cstn_weights(model, 999);
    EvalResult untrained = evaluate(model, identity, held, ec);

    const bool tie = tables_equal(untrained.network, untrained.baseline);
    const double net = column_mean(trained.network, "mag_ssim");
    const double base = column_mean(trained.baseline, "mag_ssim");
    std::string detail = "mean SSIM net " + fmt("%.2f", net) + " vs bicubic " +
                         fmt("%.2f", base) + ", identity tie " + (tie ? "exact" : "BROKEN");
    return {tie && net > base, detail};
}

// --- 6: similarity metric against a direct per-window evaluation -----------

Outcome metric_oracle() {
    // canonical parameters: 11x11 Gaussian, sigma 1.5, fully-inside windows
    const int64_t win = 11;
    std::vector<double> g(static_cast<size_t>(win * win));
    double gsum = 0;
    for (int64_t y = 0; y < win; ++y)
        for (int64_t x = 0; x < win; ++x) {
            const double dy = static_cast<double>(y) - 5, dx = static_cast<double>(x) - 5;
            const double v = std::exp(-(dy * dy + dx * dx) / (2 * 1.5 * 1.5));
            g[static_cast<size_t>(y * win + x)] = v;
            gsum += v;
        }
    for (double& v : g) v /= gsum;

    Rng rng(77);
    double worst = 0;
    for (int trial = 0; trial < 10; ++trial) {
        Tensor a({16, 16}), b({16, 16});
        for (float& v : a.data()) v = static_cast<float>(rng.uniform());
        for (float& v : b.data()) v = static_cast<float>(rng.uniform());
        const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
        double acc = 0;
        int64_t windows = 0;
        for (int64_t oy = 0; oy + win <= 16; ++oy)
            for (int64_t ox = 0; ox + win <= 16; ++ox) {
                double mx = 0, my = 0, vx = 0, vy = 0, cov = 0;
                for (int64_t y = 0; y < win; ++y)
                    for (int64_t x = 0; x < win; ++x) {
                        const double wgt = g[static_cast<size_t>(y * win + x)];
                        mx += wgt * a.data()[(oy + y) * 16 + ox + x];
                        my += wgt * b.data()[(oy + y) * 16 + ox + x];
                    }
                for (int64_t y = 0; y < win; ++y)
                    for (int64_t x = 0; x < win; ++x) {
                        const double wgt = g[static_cast<size_t>(y * win + x)];
                        const double da = a.data()[(oy + y) * 16 + ox + x] - mx;
                        const double db = b.data()[(oy + y) * 16 + ox + x] - my;
                        vx += wgt * da * da;
                        vy += wgt * db * db;
                        cov += wgt * da * db;
                    }
                acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
                       ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++windows;
            }
        worst = std::max(worst,
                         std::abs(acc / static_cast<double>(windows) - ssim(a, b, 1.0)));
    }
    if (worst >= 1e-6) return {false, "window formula mismatch " + fmt("%.3e", worst)};

    Tensor self({16, 16});
    for (float& v : self.data()) v = static_cast<float>(rng.uniform());
    if (ssim(self, self, 1.0) != 1.0) return {false, "self similarity is not exactly 1"};

    MetricReport rep = aggregate("x", {2.0, 4.0, 6.0});
    if (rep.mean != 4.0 || rep.std_dev != 2.0)
        return {false, "aggregate([2,4,6]) gave " + fmt("%.6f", rep.mean) + " +/- " +
                           fmt("%.6f", rep.std_dev)};
    return {true, "window formula " + fmt("%.3e", worst) + ", self == 1, aggregate exact"};
}

// --- 7: staged CLI runs and the in-process composition agree byte for byte -

int run_cli(const std::string& args) {
    const std::string cmd = "\"" + g_cli + "\" " + args + " > /dev/null";
    return std::system(cmd.c_str());
}

void staged_pipeline(const fs::path& dir) {
    const std::string d = dir.string();
    fs::create_directories(dir);
    const std::string cfg_path = d + "/train0.txt";
    const std::string cfg_text =
        "model.num_rstb=1\nmodel.embed_dim=16\nmodel.num_heads=4\nmodel.in_echoes=3\n"
        "model.target_h=256\nmodel.target_w=256\nmodel.shallow_channels=8\n"
        "model.head_channels=8\ntrain.total_steps=0\ntrain.seed=77\n"
        "train.checkpoint_every=0\ntrain.volumes=1\ntrain.val_volumes=0\n"
        "train.volume_size=256\ntrain.lowres=192\ntrain.data_seed=601\n";
    write_file_bytes(cfg_path, std::vector<uint8_t>(cfg_text.begin(), cfg_text.end()));
    if (run_cli("phantom --seed 501 --count 2 --size 256 --tes 14,27,40 --out \"" + d +
                "/data\"") != 0)
        throw DataError("phantom stage failed");
    if (run_cli("train --config \"" + cfg_path + "\" --set train.run_dir=\"" + d +
                "/run0\"") != 0)
        throw DataError("train stage failed");
    for (const char* id : {"phantom_000", "phantom_001"}) {
        const std::string s = id;
        if (run_cli("downsample --in \"" + d + "/data/" + s + "\" --target 192 --out \"" + d +
                    "/lr/" + s + "\"") != 0)
            throw DataError("downsample stage failed");
        if (run_cli("infer --ckpt \"" + d + "/run0/best.cstck\" --in \"" + d + "/lr/" + s +
                    "\" --out \"" + d + "/hq/" + s + "\"") != 0)
            throw DataError("infer stage failed");
        if (run_cli("smwi --in \"" + d + "/hq/" + s + "\" --out \"" + d + "/smwi/" + s +
                    ".cst\"") != 0)
            throw DataError("smwi stage failed");
    }
    if (run_cli("eval --ckpt \"" + d + "/run0/best.cstck\" --data \"" + d +
                "/data\" --protocol 192 --out \"" + d + "/evalrun\"") != 0)
        throw DataError("eval stage failed");
}

void inprocess_pipeline(const fs::path& dir) {
    const std::vector<double> times{14.0, 27.0, 40.0};
    const std::string d = dir.string();
    fs::create_directories(dir / "data");
    std::vector<std::string> ids{"phantom_000", "phantom_001"};
    for (int64_t i = 0; i < 2; ++i) {
        Phantom p = generate_phantom(501 + static_cast<uint64_t>(i), 256, 256, times);
        const std::string base = d + "/data/" + ids[static_cast<size_t>(i)];
        write_volume(base, p.volume);
        const int64_t hw = p.maps.height * p.maps.width;
        std::vector<float> planes;
        planes.reserve(static_cast<size_t>(4 * hw));
        for (const auto* m :
             {&p.maps.m0, &p.maps.r2star_per_ms, &p.maps.delta_f_khz, &p.maps.phi0})
            planes.insert(planes.end(), m->begin(), m->end());
        write_cst(base + ".maps.cst", Tensor({4, p.maps.height, p.maps.width},
                                             std::move(planes)));
    }

    CSTNConfig model;
    model.num_rstb = 1;
    model.rstb = RSTBConfig{2, 4, 16, 2, 8};
    model.in_echoes = 3;
    model.target_h = model.target_w = 256;
    model.shallow_channels = model.head_channels = 8;
    TrainConfig tc;
    tc.total_steps = 0;
    tc.seed = 77;
    tc.checkpoint_every = 0;
    TrainData data;
    data.lowres_h = data.lowres_w = 192;
    data.train_set.push_back(generate_phantom(601, 256, 256, times).volume);
    train(tc, model, data, d + "/run0");

    auto [cfg, wts] = load_checkpoint(d + "/run0/best.cstck");
    fs::create_directories(dir / "lr");
    fs::create_directories(dir / "hq");
    fs::create_directories(dir / "smwi");
    for (const std::string& id : ids) {
        MultiEchoVolume hr = read_volume(d + "/data/" + id);
        MultiEchoVolume lr = simulate_lowres(hr, 192, 192);
        write_volume(d + "/lr/" + id, lr);
        MultiEchoVolume hq = infer(lr, cfg, wts);
        write_volume(d + "/hq/" + id, hq);
        SMWIImage smwi = reconstruct_smwi(hq, SMWIParams{});
        write_cst(d + "/smwi/" + id + ".cst", Tensor({smwi.height, smwi.width}, smwi.values));
    }

    std::vector<MultiEchoVolume> scans;
    for (const std::string& id : ids) scans.push_back(read_volume(d + "/data/" + id));
    EvalConfig ec;
    ec.protocol = 192;
    EvalResult r = evaluate(cfg, wts, scans, ec, ids);
    fs::create_directories(dir / "evalrun");
    const std::string report = "network\n" + to_text(r.network) + "\nbaseline\n" +
                               to_text(r.baseline);
    auto put = [&](const std::string& rel, const std::string& text) {
        write_file_bytes(d + "/evalrun/" + rel, std::vector<uint8_t>(text.begin(), text.end()));
    };
    put("network.csv", to_csv(r.network));
    put("baseline.csv", to_csv(r.baseline));
    put("report.txt", report);
}

Outcome pipeline_reproducibility() {
    std::vector<fs::path> dirs;
    for (const char* name : {"staged_a", "staged_b"}) {
        dirs.push_back(g_root / "pipeline" / name);
        staged_pipeline(dirs.back());
    }
    for (const char* name : {"direct_a", "direct_b"}) {
        dirs.push_back(g_root / "pipeline" / name);
        inprocess_pipeline(dirs.back());
    }

    std::vector<std::string> rel;
    for (const std::string id : {"phantom_000", "phantom_001"}) {
        for (const char* ext : {".mag.cst", ".phase.cst", ".echoes.txt"}) {
            rel.push_back("data/" + id + ext);
            rel.push_back("lr/" + id + ext);
            rel.push_back("hq/" + id + ext);
        }
        rel.push_back("data/" + id + ".maps.cst");
        rel.push_back("smwi/" + id + ".cst");
    }
    rel.push_back("run0/best.cstck");
    rel.push_back("run0/last.cstck");
    rel.push_back("run0/loss.csv");
    rel.push_back("evalrun/network.csv");
    rel.push_back("evalrun/baseline.csv");
    rel.push_back("evalrun/report.txt");

    for (const std::string& r : rel) {
        const std::vector<uint8_t> want = read_file_bytes((dirs[0] / r).string());
        for (size_t i = 1; i < dirs.size(); ++i)
            if (read_file_bytes((dirs[i] / r).string()) != want)
                return {false, r + " differs between " + dirs[0].filename().string() +
                                   " and " + dirs[i].filename().string()};
    }
    return {true, std::to_string(rel.size()) + " artifacts byte-identical across 4 runs"};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <path-to-cstn-binary>\n");
        return 64;
    }
    g_cli = argv[1];
    setenv("CSTN_THREADS", "1", 1);
    g_root = fs::temp_directory_path() /
             ("cstn_acceptance_" + std::to_string(static_cast<unsigned>(::getpid())));
    fs::remove_all(g_root);
    fs::create_directories(g_root);

    struct Criterion {
        const char* name;
        Outcome (*run)();
        double limit_s;  // 0 = no runtime cap
    };
    const Criterion criteria[] = {
        {"gradient oracle", gradient_oracle, 300},
        {"k-space transform oracle", fft_oracle, 0},
        {"structural identities", structural_identities, 0},
        {"overfit convergence", overfit_convergence, 600},
        {"baseline dominance", baseline_dominance, 3600},
        {"similarity metric oracle", metric_oracle, 0},
        {"pipeline bit-reproducibility", pipeline_reproducibility, 0},
    };

    int failures = 0;
    for (size_t i = 0; i < std::size(criteria); ++i) {
        const Criterion& c = criteria[i];
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.limit_s > 0 && secs > c.limit_s) {
            out.ok = false;
            out.detail += " [over " + fmt("%.0f", c.limit_s) + "s budget]";
        }
        std::printf("[%zu/7] %s: %s (%.1fs) %s\n", i + 1, c.name, out.ok ? "PASS" : "FAIL",
                    secs, out.detail.c_str());
        std::fflush(stdout);
        if (!out.ok) ++failures;
    }

    fs::remove_all(g_root);
    std::printf("%d/7 criteria passed\n", 7 - failures);
    return failures;
}
