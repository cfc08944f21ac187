#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "headprobe/neox/tensor.hpp"

namespace headprobe::neox {

enum class DType { kF32, kF16, kBF16 };

// Reads a safetensors file: an 8-byte little-endian header length N, N bytes
// of JSON {name: {dtype, shape, data_offsets}}, then the raw buffer. Every
// tensor is upconverted to float32. Throws LoadError naming the file on any
// structural problem (short read, offsets outside the buffer, size mismatch).
// Tensors with non-float dtypes (masks, integer buffers) raise LoadError
// unless `skip_unsupported` is set, in which case they are dropped.
std::map<std::string, Tensor> read_safetensors(const std::filesystem::path& file, bool skip_unsupported = false);

// Writes tensors in the same layout, sorted by name, with the given dtype.
void write_safetensors(const std::filesystem::path& file, const std::map<std::string, Tensor>& tensors,
                       DType dtype = DType::kF32);

float half_to_float(std::uint16_t h);
std::uint16_t float_to_half(float f);
float bfloat16_to_float(std::uint16_t b);

}  // namespace headprobe::neox
