#include "cstn/io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cstn {

namespace {

void put_u32_le(std::vector<uint8_t>& out, uint32_t x) {
    out.push_back(static_cast<uint8_t>(x & 0xff));
    out.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
    out.push_back(static_cast<uint8_t>((x >> 16) & 0xff));
    out.push_back(static_cast<uint8_t>((x >> 24) & 0xff));
}

void put_u16_le(std::vector<uint8_t>& out, uint16_t x) {
    out.push_back(static_cast<uint8_t>(x & 0xff));
    out.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
}

uint32_t get_u32_le(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t get_u16_le(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void need(size_t have, size_t off, size_t want, const char* what) {
    if (off + want > have)
        throw DataError(std::string("truncated data while reading ") + what);
}

constexpr size_t kMaxElements = static_cast<size_t>(1) << 31;

}  // namespace

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    if (f.bad()) throw DataError("read failure on " + path);
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot create " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failure on " + path);
}

void append_cst_bytes(std::vector<uint8_t>& out, const Tensor& t) {
    if (!t.defined()) throw DataError("cannot serialize an undefined tensor");
    const Shape& s = t.shape();
    if (s.size() > 255) throw DataError("tensor rank exceeds the format limit");
    out.push_back('C');
    out.push_back('S');
    out.push_back('T');
    out.push_back('1');
    out.push_back(0);  // dtype f32
    out.push_back(static_cast<uint8_t>(s.size()));
    for (int64_t d : s) {
        if (d <= 0 || d > 0xffffffffLL)
            throw DataError("tensor extent out of range for serialization: " + std::to_string(d));
        put_u32_le(out, static_cast<uint32_t>(d));
    }
    for (float v : t.data()) put_u32_le(out, std::bit_cast<uint32_t>(v));
}

Tensor parse_cst_bytes(const uint8_t* data, size_t size, size_t& off) {
    need(size, off, 6, "tensor header");
    if (std::memcmp(data + off, "CST1", 4) != 0)
        throw DataError("bad tensor magic, expected CST1");
    const uint8_t dtype = data[off + 4];
    if (dtype != 0) throw DataError("unsupported tensor dtype code " + std::to_string(dtype));
    const uint8_t ndim = data[off + 5];
    off += 6;
    Shape shape;
    size_t numel = 1;
    for (uint8_t i = 0; i < ndim; ++i) {
        need(size, off, 4, "tensor extents");
        const uint32_t d = get_u32_le(data + off);
        off += 4;
        if (d == 0) throw DataError("tensor extent of zero");
        numel *= d;
        if (numel > kMaxElements) throw DataError("tensor too large");
        shape.push_back(static_cast<int64_t>(d));
    }
    need(size, off, numel * 4, "tensor payload");
    std::vector<float> vals(numel);
    for (size_t i = 0; i < numel; ++i)
        vals[i] = std::bit_cast<float>(get_u32_le(data + off + 4 * i));
    off += numel * 4;
    return Tensor(std::move(shape), std::move(vals));
}

void write_cst(const std::string& path, const Tensor& t) {
    std::vector<uint8_t> bytes;
    append_cst_bytes(bytes, t);
    write_file_bytes(path, bytes);
}

Tensor read_cst(const std::string& path) {
    std::vector<uint8_t> bytes = read_file_bytes(path);
    size_t off = 0;
    Tensor t = parse_cst_bytes(bytes.data(), bytes.size(), off);
    if (off != bytes.size()) throw DataError("trailing bytes after tensor payload in " + path);
    return t;
}

void write_cstck(const std::string& path, const std::map<std::string, std::string>& config,
                 const std::vector<NamedTensor>& tensors) {
    std::vector<uint8_t> out;
    out.push_back('C');
    out.push_back('S');
    out.push_back('T');
    out.push_back('K');
    put_u16_le(out, 1);
    std::string cfg;
    for (const auto& [k, v] : config) cfg += k + "=" + v + "\n";
    put_u32_le(out, static_cast<uint32_t>(cfg.size()));
    out.insert(out.end(), cfg.begin(), cfg.end());
    put_u32_le(out, static_cast<uint32_t>(tensors.size()));
    for (const NamedTensor& nt : tensors) {
        put_u32_le(out, static_cast<uint32_t>(nt.name.size()));
        out.insert(out.end(), nt.name.begin(), nt.name.end());
        std::vector<uint8_t> blob;
        append_cst_bytes(blob, nt.value);
        put_u32_le(out, static_cast<uint32_t>(blob.size()));
        out.insert(out.end(), blob.begin(), blob.end());
    }
    write_file_bytes(path, out);
}

void read_cstck(const std::string& path, std::map<std::string, std::string>& config,
                std::vector<NamedTensor>& tensors) {
    std::vector<uint8_t> bytes = read_file_bytes(path);
    const uint8_t* p = bytes.data();
    const size_t n = bytes.size();
    size_t off = 0;
    need(n, off, 6, "checkpoint header");
    if (std::memcmp(p, "CSTK", 4) != 0) throw DataError("bad checkpoint magic in " + path);
    const uint16_t version = get_u16_le(p + 4);
    if (version != 1)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    off = 6;
    need(n, off, 4, "config length");
    const uint32_t cfg_len = get_u32_le(p + off);
    off += 4;
    need(n, off, cfg_len, "config text");
    std::string cfg(reinterpret_cast<const char*>(p + off), cfg_len);
    off += cfg_len;
    config.clear();
    std::istringstream is(cfg);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("malformed config line in checkpoint: " + line);
        config[line.substr(0, eq)] = line.substr(eq + 1);
    }
    need(n, off, 4, "tensor count");
    const uint32_t count = get_u32_le(p + off);
    off += 4;
    tensors.clear();
    for (uint32_t i = 0; i < count; ++i) {
        need(n, off, 4, "tensor name length");
        const uint32_t name_len = get_u32_le(p + off);
        off += 4;
        need(n, off, name_len, "tensor name");
        std::string name(reinterpret_cast<const char*>(p + off), name_len);
        off += name_len;
        need(n, off, 4, "tensor blob length");
        const uint32_t blob_len = get_u32_le(p + off);
        off += 4;
        need(n, off, blob_len, "tensor blob");
        size_t blob_off = off;
        Tensor t = parse_cst_bytes(p, off + blob_len, blob_off);
        if (blob_off != off + blob_len)
            throw DataError("tensor blob length mismatch for " + name);
        off += blob_len;
        tensors.push_back({std::move(name), std::move(t)});
    }
    if (off != n) throw DataError("trailing bytes after checkpoint payload in " + path);
}

void write_volume(const std::string& base, const MultiEchoVolume& v) {
    validate(v);
    const int64_t e = static_cast<int64_t>(v.echoes.size());
    const int64_t h = v.echoes[0].height, w = v.echoes[0].width;
    std::vector<float> mag, phase;
    mag.reserve(static_cast<size_t>(e * h * w));
    phase.reserve(static_cast<size_t>(e * h * w));
    for (const ComplexImage& img : v.echoes) {
        mag.insert(mag.end(), img.magnitude.begin(), img.magnitude.end());
        phase.insert(phase.end(), img.phase.begin(), img.phase.end());
    }
    write_cst(base + ".mag.cst", Tensor({e, h, w}, std::move(mag)));
    write_cst(base + ".phase.cst", Tensor({e, h, w}, std::move(phase)));
    std::string txt;
    char buf[64];
    for (double te : v.echo_times_ms) {
        std::snprintf(buf, sizeof buf, "%.9g\n", te);
        txt += buf;
    }
    write_file_bytes(base + ".echoes.txt", std::vector<uint8_t>(txt.begin(), txt.end()));
}

MultiEchoVolume read_volume(const std::string& base) {
    Tensor mag = read_cst(base + ".mag.cst");
    Tensor phase = read_cst(base + ".phase.cst");
    if (mag.ndim() != 3 || phase.ndim() != 3)
        throw DataError("volume stacks must be rank 3, got " + shape_str(mag.shape()) + " and " +
                        shape_str(phase.shape()));
    if (mag.shape() != phase.shape())
        throw DataError("magnitude stack " + shape_str(mag.shape()) + " does not match phase stack " +
                        shape_str(phase.shape()));
    std::vector<uint8_t> tbytes = read_file_bytes(base + ".echoes.txt");
    std::istringstream is(std::string(tbytes.begin(), tbytes.end()));
    std::vector<double> tes;
    std::string tok;
    while (is >> tok) {
        try {
            size_t used = 0;
            double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            tes.push_back(v);
        } catch (const std::exception&) {
            throw DataError("bad echo time '" + tok + "' in " + base + ".echoes.txt");
        }
    }
    const int64_t e = mag.dim(0), h = mag.dim(1), w = mag.dim(2);
    if (static_cast<int64_t>(tes.size()) != e)
        throw DataError("echo time count " + std::to_string(tes.size()) +
                        " does not match stack depth " + std::to_string(e));
    MultiEchoVolume v;
    v.echo_times_ms = std::move(tes);
    for (int64_t i = 0; i < e; ++i) {
        ComplexImage img;
        img.height = h;
        img.width = w;
        const float* mp = mag.data().data() + i * h * w;
        const float* pp = phase.data().data() + i * h * w;
        img.magnitude.assign(mp, mp + h * w);
        img.phase.assign(pp, pp + h * w);
        v.echoes.push_back(std::move(img));
    }
    validate(v);
    return v;
}

namespace {

void put_u32_be(std::vector<uint8_t>& out, uint32_t x) {
    out.push_back(static_cast<uint8_t>((x >> 24) & 0xff));
    out.push_back(static_cast<uint8_t>((x >> 16) & 0xff));
    out.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
    out.push_back(static_cast<uint8_t>(x & 0xff));
}

void png_chunk(std::vector<uint8_t>& out, const char type[5], const std::vector<uint8_t>& payload) {
    put_u32_be(out, static_cast<uint32_t>(payload.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0L, out.data() + start, static_cast<uInt>(4 + payload.size())));
    put_u32_be(out, crc);
}

}  // namespace

void write_png_gray(const std::string& path, const float* data, int64_t h, int64_t w) {
    if (h <= 0 || w <= 0) throw DataError("png export needs positive dimensions");
    const int64_t n = h * w;
    float lo = data[0], hi = data[0];
    for (int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(data[i])) throw DataError("png export requires finite data");
        lo = std::min(lo, data[i]);
        hi = std::max(hi, data[i]);
    }
    std::vector<uint8_t> raw(static_cast<size_t>(h * (w + 1)));
    const double span = static_cast<double>(hi) - static_cast<double>(lo);
    for (int64_t y = 0; y < h; ++y) {
        raw[static_cast<size_t>(y * (w + 1))] = 0;  // filter: none
        for (int64_t x = 0; x < w; ++x) {
            double v = 0.0;
            if (span > 0.0)
                v = (static_cast<double>(data[y * w + x]) - lo) / span * 255.0;
            const long q = std::lround(v);
            raw[static_cast<size_t>(y * (w + 1) + 1 + x)] =
                static_cast<uint8_t>(q < 0 ? 0 : (q > 255 ? 255 : q));
        }
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw DataError("png compression failed");
    comp.resize(comp_len);

    std::vector<uint8_t> out = {137, 80, 78, 71, 13, 10, 26, 10};
    std::vector<uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(w));
    put_u32_be(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    png_chunk(out, "IHDR", ihdr);
    png_chunk(out, "IDAT", comp);
    png_chunk(out, "IEND", {});
    write_file_bytes(path, out);

    char buf[96];
    std::snprintf(buf, sizeof buf, "min=%.9g\nmax=%.9g\n", static_cast<double>(lo),
                  static_cast<double>(hi));
    std::string sidecar(buf);
    write_file_bytes(path + ".window.txt", std::vector<uint8_t>(sidecar.begin(), sidecar.end()));
}

}  // namespace cstn
