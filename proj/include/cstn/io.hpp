#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cstn/mri.hpp"
#include "cstn/tensor.hpp"

namespace cstn {

/// ".cst" tensor file: magic "CST1", u8 dtype (0 = f32), u8 ndim, ndim x u32
/// little-endian extents, then the row-major payload as little-endian f32.
void write_cst(const std::string& path, const Tensor& t);
Tensor read_cst(const std::string& path);

void append_cst_bytes(std::vector<uint8_t>& out, const Tensor& t);
Tensor parse_cst_bytes(const uint8_t* data, size_t size, size_t& off);

struct NamedTensor {
    std::string name;
    Tensor value;
};

/// ".cstck" checkpoint container: magic "CSTK", u16 version, length-prefixed
/// key=value config text, then a count-prefixed sequence of (length-prefixed
/// name, length-prefixed ".cst" blob) entries in writer order.
void write_cstck(const std::string& path, const std::map<std::string, std::string>& config,
                 const std::vector<NamedTensor>& tensors);
void read_cstck(const std::string& path, std::map<std::string, std::string>& config,
                std::vector<NamedTensor>& tensors);

/// Volume triplet: <base>.mag.cst and <base>.phase.cst hold E x H x W stacks,
/// <base>.echoes.txt lists echo times in ms, one per line.
void write_volume(const std::string& base, const MultiEchoVolume& v);
MultiEchoVolume read_volume(const std::string& base);

/// 8-bit grayscale PNG with per-image min-max windowing; the window is
/// recorded as "min=... max=..." lines in <path>.window.txt.
void write_png_gray(const std::string& path, const float* data, int64_t h, int64_t w);

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace cstn
