#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "cstn/config.hpp"
#include "cstn/io.hpp"
#include "cstn/mri.hpp"
#include "cstn/rng.hpp"

using namespace cstn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("cstn_io_test_" + std::to_string(static_cast<unsigned>(::getpid())) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

Tensor random_tensor(Rng& rng, Shape shape) {
    std::vector<float> v(static_cast<size_t>(numel_of(shape)));
    for (float& x : v) x = static_cast<float>(rng.uniform(-2.0, 2.0));
    return Tensor(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("cst round trip is bit exact") {
    TempDir td;
    Rng rng(1);
    Tensor t = random_tensor(rng, {3, 5, 7});
    const std::string p = td.file("a.cst");
    write_cst(p, t);
    Tensor back = read_cst(p);
    REQUIRE(back.shape() == t.shape());
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(back.data()[i] == t.data()[i]);

    const std::string p2 = td.file("b.cst");
    write_cst(p2, back);
    CHECK(read_file_bytes(p) == read_file_bytes(p2));
}

TEST_CASE("cst header layout matches the format definition") {
    std::vector<uint8_t> bytes;
    append_cst_bytes(bytes, Tensor({1, 2}, {1.0f, -2.5f}));
    const std::vector<uint8_t> want = {
        'C', 'S', 'T', '1', 0, 2,
        1, 0, 0, 0,
        2, 0, 0, 0,
        0x00, 0x00, 0x80, 0x3f,
        0x00, 0x00, 0x20, 0xc0,
    };
    CHECK(bytes == want);
}

TEST_CASE("cst scalar (rank 0) round trips") {
    TempDir td;
    const std::string p = td.file("s.cst");
    write_cst(p, Tensor::scalar(4.25f));
    Tensor back = read_cst(p);
    CHECK(back.ndim() == 0);
    CHECK(back.value() == 4.25f);
}

TEST_CASE("cst reader rejects corruption") {
    TempDir td;
    Rng rng(2);
    Tensor t = random_tensor(rng, {4, 4});
    const std::string p = td.file("c.cst");
    write_cst(p, t);
    auto bytes = read_file_bytes(p);

    auto write_and_read = [&](std::vector<uint8_t> b) {
        const std::string q = td.file("bad.cst");
        write_file_bytes(q, b);
        return read_cst(q);
    };

    std::vector<uint8_t> truncated(bytes.begin(), bytes.end() - 7);
    CHECK_THROWS_AS(write_and_read(truncated), DataError);

    std::vector<uint8_t> magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(write_and_read(magic), DataError);

    std::vector<uint8_t> dtype = bytes;
    dtype[4] = 9;
    CHECK_THROWS_AS(write_and_read(dtype), DataError);

    std::vector<uint8_t> trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(write_and_read(trailing), DataError);

    CHECK_THROWS_AS(read_cst(td.file("missing.cst")), DataError);
}

TEST_CASE("cstck container round trips and is deterministic") {
    TempDir td;
    Rng rng(3);
    std::map<std::string, std::string> cfg{{"model.embed_dim", "48"}, {"model.window", "8"}};
    std::vector<NamedTensor> ts;
    ts.push_back({"alpha", random_tensor(rng, {2, 3})});
    ts.push_back({"beta", random_tensor(rng, {5})});
    const std::string p = td.file("w.cstck");
    write_cstck(p, cfg, ts);

    std::map<std::string, std::string> cfg2;
    std::vector<NamedTensor> ts2;
    read_cstck(p, cfg2, ts2);
    CHECK(cfg2 == cfg);
    REQUIRE(ts2.size() == 2);
    CHECK(ts2[0].name == "alpha");
    CHECK(ts2[1].name == "beta");
    for (size_t i = 0; i < ts.size(); ++i) {
        REQUIRE(ts2[i].value.shape() == ts[i].value.shape());
        for (int64_t j = 0; j < ts[i].value.numel(); ++j)
            CHECK(ts2[i].value.data()[j] == ts[i].value.data()[j]);
    }

    const std::string p2 = td.file("w2.cstck");
    write_cstck(p2, cfg2, ts2);
    CHECK(read_file_bytes(p) == read_file_bytes(p2));
}

TEST_CASE("cstck rejects bad magic, version, and truncation") {
    TempDir td;
    Rng rng(4);
    std::map<std::string, std::string> cfg{{"k", "v"}};
    std::vector<NamedTensor> ts{{"t", random_tensor(rng, {3, 3})}};
    const std::string p = td.file("w.cstck");
    write_cstck(p, cfg, ts);
    auto bytes = read_file_bytes(p);

    auto reread = [&](std::vector<uint8_t> b) {
        const std::string q = td.file("bad.cstck");
        write_file_bytes(q, b);
        std::map<std::string, std::string> c;
        std::vector<NamedTensor> t2;
        read_cstck(q, c, t2);
    };

    std::vector<uint8_t> magic = bytes;
    magic[3] = 'X';
    CHECK_THROWS_AS(reread(magic), DataError);

    std::vector<uint8_t> version = bytes;
    version[4] = 9;
    CHECK_THROWS_AS(reread(version), DataError);

    std::vector<uint8_t> truncated(bytes.begin(), bytes.end() - 11);
    CHECK_THROWS_AS(reread(truncated), DataError);
}

TEST_CASE("volume triplet round trips bit exactly") {
    TempDir td;
    Phantom ph = generate_phantom(9, 48, 40, {14.0, 27.0, 40.0});
    const std::string base = td.file("vol");
    write_volume(base, ph.volume);
    MultiEchoVolume back = read_volume(base);
    REQUIRE(back.echoes.size() == 3);
    CHECK(back.echo_times_ms == ph.volume.echo_times_ms);
    for (size_t e = 0; e < 3; ++e)
        for (size_t i = 0; i < back.echoes[e].magnitude.size(); ++i) {
            CHECK(back.echoes[e].magnitude[i] == ph.volume.echoes[e].magnitude[i]);
            CHECK(back.echoes[e].phase[i] == ph.volume.echoes[e].phase[i]);
        }

    write_volume(td.file("vol2"), back);
    CHECK(read_file_bytes(base + ".mag.cst") == read_file_bytes(td.file("vol2") + ".mag.cst"));
    CHECK(read_file_bytes(base + ".phase.cst") == read_file_bytes(td.file("vol2") + ".phase.cst"));
    CHECK(read_file_bytes(base + ".echoes.txt") == read_file_bytes(td.file("vol2") + ".echoes.txt"));
}

TEST_CASE("volume reader validates structure and content") {
    TempDir td;
    Phantom ph = generate_phantom(10, 48, 48, {14.0, 27.0});
    const std::string base = td.file("vol");
    write_volume(base, ph.volume);

    write_file_bytes(base + ".echoes.txt", {'1', '4', '\n'});
    CHECK_THROWS_AS(read_volume(base), DataError);
    write_file_bytes(base + ".echoes.txt", {'1', '4', '\n', 'o', 'o', 'p', 's', '\n'});
    CHECK_THROWS_AS(read_volume(base), DataError);

    write_volume(base, ph.volume);
    Tensor mag = read_cst(base + ".mag.cst");
    mag.data()[17] = -1.0f;
    write_cst(base + ".mag.cst", mag);
    CHECK_THROWS_AS(read_volume(base), DataError);
}

TEST_CASE("png export writes a valid grayscale image with a window sidecar") {
    TempDir td;
    const int64_t h = 5, w = 9;
    std::vector<float> img(static_cast<size_t>(h * w));
    for (int64_t i = 0; i < h * w; ++i)
        img[static_cast<size_t>(i)] = static_cast<float>(i) / static_cast<float>(h * w - 1);
    const std::string p = td.file("img.png");
    write_png_gray(p, img.data(), h, w);

    auto bytes = read_file_bytes(p);
    REQUIRE(bytes.size() > 45);
    const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    for (int i = 0; i < 8; ++i) CHECK(bytes[static_cast<size_t>(i)] == sig[i]);
    // IHDR payload: width, height big-endian, then depth 8, color type 0
    auto be32 = [&](size_t off) {
        return (static_cast<uint32_t>(bytes[off]) << 24) |
               (static_cast<uint32_t>(bytes[off + 1]) << 16) |
               (static_cast<uint32_t>(bytes[off + 2]) << 8) | bytes[off + 3];
    };
    CHECK(be32(16) == static_cast<uint32_t>(w));
    CHECK(be32(20) == static_cast<uint32_t>(h));
    CHECK(bytes[24] == 8);
    CHECK(bytes[25] == 0);

    // inflate the IDAT payload and check the windowed pixels directly
    size_t off = 33;  // first chunk after IHDR
    std::vector<uint8_t> idat;
    while (off + 8 <= bytes.size()) {
        const uint32_t len = be32(off);
        const std::string type(reinterpret_cast<const char*>(&bytes[off + 4]), 4);
        if (type == "IDAT")
            idat.insert(idat.end(), bytes.begin() + static_cast<long>(off + 8),
                        bytes.begin() + static_cast<long>(off + 8 + len));
        off += 12 + len;
    }
    REQUIRE(!idat.empty());
    std::vector<uint8_t> raw(static_cast<size_t>(h * (w + 1)));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    REQUIRE(uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) == Z_OK);
    REQUIRE(raw_len == raw.size());
    for (int64_t y = 0; y < h; ++y) {
        CHECK(raw[static_cast<size_t>(y * (w + 1))] == 0);
        for (int64_t x = 0; x < w; ++x) {
            const double v = img[static_cast<size_t>(y * w + x)];
            const double want = v * 255.0;  // window is [0,1] here
            const uint8_t got = raw[static_cast<size_t>(y * (w + 1) + 1 + x)];
            CHECK(std::abs(static_cast<double>(got) - want) <= 0.5 + 1e-9);
        }
    }

    auto sidecar = read_file_bytes(p + ".window.txt");
    const std::string txt(sidecar.begin(), sidecar.end());
    CHECK(txt == "min=0\nmax=1\n");

    const std::string p2 = td.file("img2.png");
    write_png_gray(p2, img.data(), h, w);
    CHECK(read_file_bytes(p) == read_file_bytes(p2));
}

TEST_CASE("png export of a constant image") {
    TempDir td;
    std::vector<float> img(16, 0.75f);
    const std::string p = td.file("const.png");
    write_png_gray(p, img.data(), 4, 4);
    auto sidecar = read_file_bytes(p + ".window.txt");
    const std::string txt(sidecar.begin(), sidecar.end());
    CHECK(txt == "min=0.75\nmax=0.75\n");
}

TEST_CASE("config parses comments, overrides, and typed values") {
    RunConfig cfg = RunConfig::parse(
        "# a comment\n"
        "train.lr = 2e-4\n"
        "model.embed_dim=48  # inline comment\n"
        "\n"
        "train.steps=5000\n");
    CHECK(cfg.get_f64("train.lr", 0.0) == doctest::Approx(2e-4));
    CHECK(cfg.get_i64("model.embed_dim", 0) == 48);
    CHECK(cfg.get_i64("train.steps", 0) == 5000);
    CHECK(cfg.get_str("train.out", "runs/default") == "runs/default");

    cfg.apply_override("train.steps=100");
    CHECK(cfg.get_i64("train.steps", 0) == 100);
}

TEST_CASE("config rejects unknown keys by name") {
    RunConfig cfg = RunConfig::parse("train.lr=1e-3\ntrain.lrr=2e-3\n");
    cfg.get_f64("train.lr", 0.0);
    try {
        cfg.reject_unknown();
        FAIL("expected UsageError");
    } catch (const UsageError& e) {
        CHECK(std::string(e.what()).find("train.lrr") != std::string::npos);
    }
}

TEST_CASE("config rejects malformed numbers and lines") {
    RunConfig cfg = RunConfig::parse("train.lr=fast\n");
    CHECK_THROWS_AS(cfg.get_f64("train.lr", 0.0), UsageError);
    CHECK_THROWS_AS(RunConfig::parse("not a key value line\n"), UsageError);
    CHECK_THROWS_AS(RunConfig().apply_override("nonsense"), UsageError);
}

TEST_CASE("config serializes sorted and round trips") {
    RunConfig cfg = RunConfig::parse("b.two=2\na.one=1\n");
    CHECK(cfg.serialize() == "a.one=1\nb.two=2\n");
    RunConfig back = RunConfig::parse(cfg.serialize());
    CHECK(back.values() == cfg.values());
}
