#include "headprobe/neox/safetensors.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "headprobe/error.hpp"

namespace headprobe::neox {

namespace {

static_assert(std::endian::native == std::endian::little, "safetensors I/O assumes a little-endian host");

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "F32") return 4;
  if (dtype == "F16" || dtype == "BF16") return 2;
  return 0;
}

const char* dtype_name(DType d) {
  switch (d) {
    case DType::kF32:
      return "F32";
    case DType::kF16:
      return "F16";
    case DType::kBF16:
      return "BF16";
  }
  return "F32";
}

}  // namespace

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1fu;
  std::uint32_t mant = h & 0x3ffu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      // Subnormal: renormalize.
      exp = 127 - 15 + 1;
      while ((mant & 0x400u) == 0) {
        mant <<= 1;
        --exp;
      }
      mant &= 0x3ffu;
      bits = sign | (exp << 23) | (mant << 13);
    }
  } else if (exp == 0x1f) {
    bits = sign | 0x7f800000u | (mant << 13);
  } else {
    bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

std::uint16_t float_to_half(float f) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  const std::uint32_t abs = x & 0x7fffffffu;
  if (abs >= 0x7f800000u) {  // inf or nan
    return static_cast<std::uint16_t>(sign | 0x7c00u | (abs > 0x7f800000u ? 0x200u : 0u));
  }
  if (abs >= 0x477ff000u) return static_cast<std::uint16_t>(sign | 0x7c00u);  // overflow
  if (abs < 0x38800000u) {
    // Subnormal half or zero; round to nearest even.
    if (abs < 0x33000000u) return static_cast<std::uint16_t>(sign);
    const std::uint32_t e = abs >> 23;
    const std::uint32_t m = (abs & 0x7fffffu) | 0x800000u;
    const std::uint32_t shift = 126 - e;  // value / 2^-24 == m >> shift
    std::uint32_t half = m >> shift;
    const std::uint32_t rem = m & ((1u << shift) - 1);
    const std::uint32_t mid = 1u << (shift - 1);
    if (rem > mid || (rem == mid && (half & 1u))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  std::uint32_t half = ((abs - 0x38000000u) >> 13);
  const std::uint32_t rem = abs & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;
  return static_cast<std::uint16_t>(sign | half);
}

float bfloat16_to_float(std::uint16_t b) { return std::bit_cast<float>(static_cast<std::uint32_t>(b) << 16); }

std::map<std::string, Tensor> read_safetensors(const std::filesystem::path& file, bool skip_unsupported) {
  const std::string where = file.string();
  std::ifstream in(file, std::ios::binary);
  if (!in) throw LoadError(where + ": cannot open");
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  if (file_size < 8) throw LoadError(where + ": truncated header length");

  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), 8);
  if (!in || header_len > file_size - 8) throw LoadError(where + ": header length exceeds file size");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw LoadError(where + ": truncated header");

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(where + ": malformed header JSON: " + e.what());
  }
  if (!doc.is_object()) throw LoadError(where + ": header is not a JSON object");

  const std::uint64_t buffer_begin = 8 + header_len;
  const std::uint64_t buffer_size = file_size - buffer_begin;

  std::map<std::string, Tensor> out;
  std::vector<char> raw;
  for (const auto& [name, info] : doc.items()) {
    if (name == "__metadata__") continue;
    std::string dtype;
    std::vector<std::int64_t> shape;
    std::uint64_t begin = 0, end = 0;
    try {
      dtype = info.at("dtype").get<std::string>();
      shape = info.at("shape").get<std::vector<std::int64_t>>();
      const auto& offsets = info.at("data_offsets");
      begin = offsets.at(0).get<std::uint64_t>();
      end = offsets.at(1).get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(where + ": bad header entry for tensor '" + name + "': " + e.what());
    }
    const std::size_t width = dtype_size(dtype);
    if (width == 0) {
      if (skip_unsupported) continue;
      throw LoadError(where + ": tensor '" + name + "' has unsupported dtype " + dtype);
    }
    const std::size_t count = element_count(shape);
    if (end < begin || end - begin != count * width) {
      throw LoadError(where + ": tensor '" + name + "' byte range does not match shape " + shape_string(shape));
    }
    if (end > buffer_size) {
      throw LoadError(where + ": tensor '" + name + "' is truncated (needs bytes up to " + std::to_string(end) +
                      ", buffer holds " + std::to_string(buffer_size) + ")");
    }
    raw.resize(end - begin);
    in.seekg(static_cast<std::streamoff>(buffer_begin + begin));
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!in) throw LoadError(where + ": short read for tensor '" + name + "'");

    Tensor t(shape);
    if (dtype == "F32") {
      std::memcpy(t.data.data(), raw.data(), raw.size());
    } else {
      const bool is_half = dtype == "F16";
      for (std::size_t i = 0; i < count; ++i) {
        std::uint16_t v;
        std::memcpy(&v, raw.data() + 2 * i, 2);
        t.data[i] = is_half ? half_to_float(v) : bfloat16_to_float(v);
      }
    }
    out.emplace(name, std::move(t));
  }
  return out;
}

void write_safetensors(const std::filesystem::path& file, const std::map<std::string, Tensor>& tensors, DType dtype) {
  const std::size_t width = dtype == DType::kF32 ? 4 : 2;
  nlohmann::json header = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const std::uint64_t bytes = t.numel() * width;
    header[name] = {{"dtype", dtype_name(dtype)}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string text = header.dump();
  // Pad with spaces so the buffer starts 8-byte aligned.
  while ((text.size() + 8) % 8 != 0) text.push_back(' ');

  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError(file.string() + ": cannot open for writing");
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : tensors) {
    if (dtype == DType::kF32) {
      out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.numel() * 4));
    } else {
      std::vector<std::uint16_t> buf(t.numel());
      for (std::size_t i = 0; i < t.numel(); ++i) {
        buf[i] = dtype == DType::kF16 ? float_to_half(t.data[i])
                                      : static_cast<std::uint16_t>(std::bit_cast<std::uint32_t>(t.data[i]) >> 16);
      }
      out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 2));
    }
  }
  if (!out) throw LoadError(file.string() + ": write failed");
}

}  // namespace headprobe::neox
