#include "headprobe/neox/tensor.hpp"

#include "headprobe/error.hpp"

namespace headprobe::neox {

std::size_t element_count(const std::vector<std::int64_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ValidationError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<std::int64_t> dims) : shape(std::move(dims)), data(element_count(shape), 0.0f) {}

std::span<float> Tensor::row(std::int64_t r) {
  const auto cols = static_cast<std::size_t>(shape.at(1));
  return std::span<float>(data).subspan(static_cast<std::size_t>(r) * cols, cols);
}

std::span<const float> Tensor::row(std::int64_t r) const {
  const auto cols = static_cast<std::size_t>(shape.at(1));
  return std::span<const float>(data).subspan(static_cast<std::size_t>(r) * cols, cols);
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace headprobe::neox
