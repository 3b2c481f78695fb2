#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cstn/config.hpp"
#include "cstn/gradcheck.hpp"
#include "cstn/io.hpp"
#include "cstn/model.hpp"
#include "cstn/smwi.hpp"
#include "cstn/train.hpp"

using namespace cstn;
namespace fs = std::filesystem;

namespace {

std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void ensure_parent(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

// Run directories are single-owner: a second run must pick a fresh one.
void create_run_dir(const std::string& dir) {
    ensure_parent(dir);
    std::error_code ec;
    if (!fs::create_directory(dir, ec) || ec)
        throw DataError("run directory already exists or cannot be created: " + dir);
}

void write_text_file(const std::string& path, const std::string& text) {
    write_file_bytes(path, std::vector<uint8_t>(text.begin(), text.end()));
}

std::string utc_stamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

std::vector<double> parse_times(const std::string& what, const std::string& text) {
    std::vector<double> out;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        const std::string item = text.substr(pos, comma - pos);
        size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw UsageError(what + ": malformed number \"" + item + "\"");
        }
        if (used != item.size() || !(v > 0.0))
            throw UsageError(what + ": echo times must be positive numbers, got \"" + item +
                             "\"");
        out.push_back(v);
        pos = comma + 1;
    }
    if (out.empty()) throw UsageError(what + ": at least one echo time required");
    return out;
}

std::string volume_summary(const MultiEchoVolume& v) {
    return std::to_string(v.echoes.size()) + " echoes at " +
           std::to_string(v.echoes.front().height) + "x" +
           std::to_string(v.echoes.front().width);
}

struct SmwiFlags {
    int64_t kernel = 33;
    double cutoff = kPi / 2.0;
    int64_t power = 4;
    std::string combine = "average";
    bool flip_sign = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--kernel", kernel,
                        "odd Hann low-pass size for homodyne filtering [not from paper]")
            ->capture_default_str();
        cmd->add_option("--cutoff", cutoff, "phase mask cutoff in radians [not from paper]")
            ->capture_default_str();
        cmd->add_option("--power", power, "mask exponent [not from paper]")
            ->capture_default_str();
        cmd->add_option("--combine", combine, "echo combination, average or rss [not from paper]")
            ->capture_default_str();
        cmd->add_flag("--flip-sign", flip_sign,
                      "negate phase before masking (opposite-handed acquisitions)");
    }

    SMWIParams params() const {
        SMWIParams p;
        p.highpass_kernel = kernel;
        p.phase_cutoff = cutoff;
        p.mask_power = power;
        p.combine = parse_echo_combine(combine);
        p.flip_phase_sign = flip_sign;
        p.validate();
        return p;
    }
};

struct PhantomCmd {
    uint64_t seed = 1;
    int64_t count = 1;
    int64_t size = 384;
    std::string tes = "14,27,40";
    std::string out;

    void run() const {
        const std::vector<double> times = parse_times("--tes", tes);
        if (size < 32) throw UsageError("--size must be at least 32");
        if (count < 1) throw UsageError("--count must be at least 1");
        fs::create_directories(out);
        for (int64_t i = 0; i < count; ++i) {
            Phantom p = generate_phantom(seed + static_cast<uint64_t>(i), size, size, times);
            char name[32];
            std::snprintf(name, sizeof name, "/phantom_%03lld", static_cast<long long>(i));
            const std::string base = out + name;
            write_volume(base, p.volume);
            const int64_t hw = p.maps.height * p.maps.width;
            std::vector<float> planes;
            planes.reserve(static_cast<size_t>(4 * hw));
            for (const auto* m :
                 {&p.maps.m0, &p.maps.r2star_per_ms, &p.maps.delta_f_khz, &p.maps.phi0})
                planes.insert(planes.end(), m->begin(), m->end());
            write_cst(base + ".maps.cst",
                      Tensor({4, p.maps.height, p.maps.width}, std::move(planes)));
        }
        std::printf("wrote %lld phantom volumes to %s\n", static_cast<long long>(count),
                    out.c_str());
    }
};

struct DownsampleCmd {
    std::string in, out;
    int64_t target = 256;

    void run() const {
        if (target < 1) throw UsageError("--target must be positive");
        MultiEchoVolume v = read_volume(in);
        MultiEchoVolume lr = simulate_lowres(v, target, target);
        ensure_parent(out);
        write_volume(out, lr);
        std::printf("wrote %s (%s)\n", out.c_str(), volume_summary(lr).c_str());
    }
};

struct InferCmd {
    std::string ckpt, in, out;

    void run() const {
        auto [cfg, wts] = load_checkpoint(ckpt);
        MultiEchoVolume lr = read_volume(in);
        MultiEchoVolume hq = infer(lr, cfg, wts);
        ensure_parent(out);
        write_volume(out, hq);
        std::printf("wrote %s (%s)\n", out.c_str(), volume_summary(hq).c_str());
    }
};

struct SmwiCmd {
    std::string in, out;
    SmwiFlags flags;

    void run() const {
        MultiEchoVolume v = read_volume(in);
        SMWIImage img = reconstruct_smwi(v, flags.params());
        ensure_parent(out);
        write_cst(out, Tensor({img.height, img.width}, img.values));
        std::printf("wrote %s (%lldx%lld)\n", out.c_str(), static_cast<long long>(img.height),
                    static_cast<long long>(img.width));
    }
};

struct TrainCmd {
    std::string config;
    std::vector<std::string> overrides;

    void run() const {
        RunConfig rc = RunConfig::load(config);
        for (const std::string& s : overrides) rc.apply_override(s);

        CSTNConfig model;
        model.num_rstb = rc.get_i64("model.num_rstb", model.num_rstb);
        model.rstb.depth = rc.get_i64("model.depth", model.rstb.depth);
        model.rstb.num_heads = rc.get_i64("model.num_heads", model.rstb.num_heads);
        model.rstb.embed_dim = rc.get_i64("model.embed_dim", model.rstb.embed_dim);
        model.rstb.mlp_ratio = rc.get_i64("model.mlp_ratio", model.rstb.mlp_ratio);
        model.rstb.window_size = rc.get_i64("model.window_size", model.rstb.window_size);
        model.in_echoes = rc.get_i64("model.in_echoes", model.in_echoes);
        model.target_h = rc.get_i64("model.target_h", model.target_h);
        model.target_w = rc.get_i64("model.target_w", model.target_w);
        model.shallow_channels = rc.get_i64("model.shallow_channels", model.shallow_channels);
        model.head_channels = rc.get_i64("model.head_channels", model.head_channels);

        TrainConfig tc;
        tc.learning_rate = rc.get_f64("train.learning_rate", tc.learning_rate);
        tc.beta1 = rc.get_f64("train.beta1", tc.beta1);
        tc.beta2 = rc.get_f64("train.beta2", tc.beta2);
        tc.eps = rc.get_f64("train.eps", tc.eps);
        tc.batch_size = rc.get_i64("train.batch_size", tc.batch_size);
        tc.total_steps = rc.get_i64("train.total_steps", tc.total_steps);
        tc.lambda_mag = rc.get_f64("train.lambda_mag", tc.lambda_mag);
        tc.lambda_phase = rc.get_f64("train.lambda_phase", tc.lambda_phase);
        const int64_t seed = rc.get_i64("train.seed", 1);
        if (seed < 0) throw UsageError("train.seed must be non-negative");
        tc.seed = static_cast<uint64_t>(seed);
        tc.checkpoint_every = rc.get_i64("train.checkpoint_every", tc.checkpoint_every);
        tc.patch_size = rc.get_i64("train.patch_size", tc.patch_size);

        const int64_t volumes = rc.get_i64("train.volumes", 64);
        const int64_t val_volumes = rc.get_i64("train.val_volumes", 10);
        const int64_t volume_size = rc.get_i64("train.volume_size", 384);
        const int64_t lowres = rc.get_i64("train.lowres", 256);
        const std::string tes = rc.get_str("train.echo_times", "14,27,40");
        const int64_t data_seed = rc.get_i64("train.data_seed", 1000);
        std::string run_dir = rc.get_str("train.run_dir", "");
        rc.reject_unknown();

        model.validate();
        tc.validate();
        const std::vector<double> times = parse_times("train.echo_times", tes);
        if (static_cast<int64_t>(times.size()) != model.in_echoes)
            throw UsageError("train.echo_times lists " + std::to_string(times.size()) +
                             " echoes, model.in_echoes is " + std::to_string(model.in_echoes));
        if (volumes < 1) throw UsageError("train.volumes must be at least 1");
        if (val_volumes < 0) throw UsageError("train.val_volumes must be non-negative");
        if (volume_size < 32) throw UsageError("train.volume_size must be at least 32");
        if (lowres < 1 || lowres > volume_size)
            throw UsageError("train.lowres must lie in [1, train.volume_size]");
        if (data_seed < 0) throw UsageError("train.data_seed must be non-negative");

        if (run_dir.empty())
            run_dir = "runs/train_" + utc_stamp() + "_" + std::to_string(tc.seed);
        create_run_dir(run_dir);

        std::map<std::string, std::string> eff = model.to_map();
        eff["train.learning_rate"] = fmt_g(tc.learning_rate);
        eff["train.beta1"] = fmt_g(tc.beta1);
        eff["train.beta2"] = fmt_g(tc.beta2);
        eff["train.eps"] = fmt_g(tc.eps);
        eff["train.batch_size"] = std::to_string(tc.batch_size);
        eff["train.total_steps"] = std::to_string(tc.total_steps);
        eff["train.lambda_mag"] = fmt_g(tc.lambda_mag);
        eff["train.lambda_phase"] = fmt_g(tc.lambda_phase);
        eff["train.seed"] = std::to_string(tc.seed);
        eff["train.checkpoint_every"] = std::to_string(tc.checkpoint_every);
        eff["train.patch_size"] = std::to_string(tc.patch_size);
        eff["train.volumes"] = std::to_string(volumes);
        eff["train.val_volumes"] = std::to_string(val_volumes);
        eff["train.volume_size"] = std::to_string(volume_size);
        eff["train.lowres"] = std::to_string(lowres);
        eff["train.echo_times"] = tes;
        eff["train.data_seed"] = std::to_string(data_seed);
        eff["train.run_dir"] = run_dir;
        std::string text;
        for (const auto& [k, v] : eff) text += k + "=" + v + "\n";
        write_text_file(run_dir + "/config.txt", text);

        TrainData data;
        data.lowres_h = data.lowres_w = lowres;
        for (int64_t i = 0; i < volumes; ++i)
            data.train_set.push_back(
                generate_phantom(static_cast<uint64_t>(data_seed + i), volume_size,
                                 volume_size, times)
                    .volume);
        for (int64_t i = 0; i < val_volumes; ++i)
            data.val_set.push_back(
                generate_phantom(static_cast<uint64_t>(data_seed + volumes + i), volume_size,
                                 volume_size, times)
                    .volume);

        TrainResult r = train(tc, model, data, run_dir);
        std::printf("run directory: %s\n", run_dir.c_str());
        if (r.losses.empty())
            std::printf("no optimization steps; checkpoints hold the initialization\n");
        else
            std::printf("final loss: %s\n", fmt_g(r.losses.back()).c_str());
        if (!r.val_losses.empty())
            std::printf("best validation loss: %s\n", fmt_g(r.best_val).c_str());
    }
};

struct EvalCmd {
    std::string ckpt, data, out;
    int64_t protocol = 256;
    SmwiFlags flags;

    void run() const {
        auto [cfg, wts] = load_checkpoint(ckpt);
        std::vector<std::string> ids;
        for (const auto& entry : fs::directory_iterator(data)) {
            const std::string name = entry.path().filename().string();
            const std::string suffix = ".mag.cst";
            if (name.size() > suffix.size() &&
                name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
                ids.push_back(name.substr(0, name.size() - suffix.size()));
        }
        std::sort(ids.begin(), ids.end());
        if (ids.empty()) throw DataError("no volumes (*.mag.cst) found in " + data);
        std::vector<MultiEchoVolume> scans;
        scans.reserve(ids.size());
        for (const std::string& id : ids) scans.push_back(read_volume(data + "/" + id));

        EvalConfig ec;
        ec.protocol = protocol;
        ec.smwi = flags.params();
        EvalResult r = evaluate(cfg, wts, scans, ec, ids);

        create_run_dir(out);
        write_text_file(out + "/network.csv", to_csv(r.network));
        write_text_file(out + "/baseline.csv", to_csv(r.baseline));
        const std::string report = "network\n" + to_text(r.network) + "\nbaseline\n" +
                                   to_text(r.baseline);
        write_text_file(out + "/report.txt", report);
        std::fputs(report.c_str(), stdout);
    }
};

struct ExportPngCmd {
    std::string in, out;

    void run() const {
        Tensor t = read_cst(in);
        ensure_parent(out);
        if (t.ndim() == 2) {
            write_png_gray(out, t.data().data(), t.dim(0), t.dim(1));
            std::printf("wrote %s\n", out.c_str());
            return;
        }
        if (t.ndim() != 3)
            throw DataError("export-png expects a rank 2 or 3 tensor, got rank " +
                            std::to_string(t.ndim()));
        const int64_t n = t.dim(0), h = t.dim(1), w = t.dim(2);
        std::string stem = out, ext = ".png";
        if (stem.size() > 4 && stem.compare(stem.size() - 4, 4, ".png") == 0)
            stem = stem.substr(0, stem.size() - 4);
        for (int64_t i = 0; i < n; ++i) {
            char idx[24];
            std::snprintf(idx, sizeof idx, "_%03lld", static_cast<long long>(i));
            const std::string path = stem + idx + ext;
            write_png_gray(path, t.data().data() + i * h * w, h, w);
            std::printf("wrote %s\n", path.c_str());
        }
    }
};

struct GradcheckCmd {
    void run() const {
        bool all_ok = true;
        for (const OpCheck& c : gradcheck_all_ops()) {
            const bool ok = c.report.ok(1e-3);
            all_ok = all_ok && ok;
            std::printf("%-16s max_rel_err=%.3e checks=%lld %s\n", c.op.c_str(),
                        c.report.max_rel_err, static_cast<long long>(c.report.checks),
                        ok ? "ok" : "FAIL");
        }
        if (!all_ok) throw NumericError("gradient check failed");
        std::printf("all gradients ok\n");
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Swin-transformer super-resolution of multi-echo MRI with susceptibility-weighted "
        "reconstruction"};
    app.require_subcommand(1);

    auto phantom = std::make_shared<PhantomCmd>();
    auto* p = app.add_subcommand("phantom", "generate synthetic multi-echo head volumes");
    p->add_option("--seed", phantom->seed, "base seed; volume i uses seed+i")
        ->capture_default_str();
    p->add_option("--count", phantom->count, "number of volumes")->capture_default_str();
    p->add_option("--size", phantom->size, "square matrix size")->capture_default_str();
    p->add_option("--tes", phantom->tes, "comma-separated echo times in ms")
        ->capture_default_str();
    p->add_option("--out", phantom->out, "output directory")->required();
    p->callback([phantom] { phantom->run(); });

    auto down = std::make_shared<DownsampleCmd>();
    auto* d = app.add_subcommand(
        "downsample", "simulate a low-resolution acquisition by k-space truncation");
    d->add_option("--in", down->in, "input volume base path")->required();
    d->add_option("--target", down->target, "acquisition matrix; 192 and 256 are the studied protocols")
        ->required();
    d->add_option("--out", down->out, "output volume base path")->required();
    d->callback([down] { down->run(); });

    auto infer_cmd = std::make_shared<InferCmd>();
    auto* i = app.add_subcommand("infer", "super-resolve a volume with a trained checkpoint");
    i->add_option("--ckpt", infer_cmd->ckpt, "checkpoint file (.cstck)")->required();
    i->add_option("--in", infer_cmd->in, "input volume base path")->required();
    i->add_option("--out", infer_cmd->out, "output volume base path")->required();
    i->callback([infer_cmd] { infer_cmd->run(); });

    auto smwi_cmd = std::make_shared<SmwiCmd>();
    auto* s = app.add_subcommand("smwi", "reconstruct a susceptibility-weighted image");
    s->add_option("--in", smwi_cmd->in, "input volume base path")->required();
    s->add_option("--out", smwi_cmd->out, "output tensor file (.cst)")->required();
    smwi_cmd->flags.attach(s);
    s->callback([smwi_cmd] { smwi_cmd->run(); });

    auto train_cmd = std::make_shared<TrainCmd>();
    auto* t = app.add_subcommand(
        "train",
        "optimize on synthetic phantom pairs; config keys model.* and train.* (all "
        "optimizer, schedule and architecture defaults are not from paper; echo times "
        "14,27,40 ms, 384 matrix and the 192/256 protocols follow the studied setup)");
    t->add_option("--config", train_cmd->config, "key=value run configuration")->required();
    t->add_option("--set", train_cmd->overrides, "override, e.g. --set train.total_steps=100");
    t->callback([train_cmd] { train_cmd->run(); });

    auto eval_cmd = std::make_shared<EvalCmd>();
    auto* e = app.add_subcommand(
        "eval", "score a checkpoint and the bicubic baseline over a directory of volumes");
    e->add_option("--ckpt", eval_cmd->ckpt, "checkpoint file (.cstck)")->required();
    e->add_option("--data", eval_cmd->data, "directory of ground-truth volumes")->required();
    e->add_option("--protocol", eval_cmd->protocol, "simulated acquisition matrix")
        ->check(CLI::IsMember({192, 256}))
        ->capture_default_str();
    e->add_option("--out", eval_cmd->out, "report directory")->required();
    eval_cmd->flags.attach(e);
    e->callback([eval_cmd] { eval_cmd->run(); });

    auto png = std::make_shared<ExportPngCmd>();
    auto* x = app.add_subcommand("export-png",
                                 "render a .cst tensor to 8-bit grayscale with min-max "
                                 "windowing recorded in a sidecar");
    x->add_option("--in", png->in, "input tensor file (.cst)")->required();
    x->add_option("--out", png->out, "output PNG path (rank-3 input appends _NNN)")
        ->required();
    x->callback([png] { png->run(); });

    auto gc = std::make_shared<GradcheckCmd>();
    auto* g = app.add_subcommand("gradcheck",
                                 "finite-difference audit of every differentiable operation");
    g->callback([gc] { gc->run(); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 1;
    } catch (const UsageError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    } catch (const DataError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    } catch (const NumericError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 3;
    } catch (const fs::filesystem_error& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 3;
    }
    return 0;
}
