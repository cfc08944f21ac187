#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

namespace testing {

inline std::filesystem::path data_dir() { return HEADPROBE_TEST_DATA; }

inline nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

// |a - b| <= tol * max(|b|, 1)
inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(std::abs(b), 1.0); }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  static std::mt19937_64 rng(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() / ("headprobe-test-" + name + "-" + std::to_string(rng() % 1000000));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
