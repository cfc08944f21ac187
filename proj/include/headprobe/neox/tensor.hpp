#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace headprobe::neox {

// Dense row-major float32 tensor.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> dims);

  std::size_t numel() const { return data.size(); }
  std::int64_t dim(std::size_t i) const { return shape.at(i); }

  std::span<float> span() { return data; }
  std::span<const float> span() const { return data; }

  // Row `r` of a 2-D tensor.
  std::span<float> row(std::int64_t r);
  std::span<const float> row(std::int64_t r) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::string shape_string(const std::vector<std::int64_t>& shape);

std::size_t element_count(const std::vector<std::int64_t>& shape);

}  // namespace headprobe::neox
