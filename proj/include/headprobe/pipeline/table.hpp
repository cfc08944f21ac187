#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace headprobe::pipeline {

// A CSV table held as strings, the form every result table is written in.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index; throws SchemaError when absent.
  std::size_t column(const std::string& name) const;
  const std::string& at(std::size_t row, const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;  // "nan"/"" -> NaN
  bool empty() const { return rows.empty(); }
};

// Writes through a temporary file and a rename. Returns "sha256:<hex>" of the
// written bytes.
std::string write_table(const std::filesystem::path& file, const Table& table);

// Throws LoadError when unreadable, SchemaError on a ragged row.
Table read_table(const std::filesystem::path& file);

// Number formatting shared by all tables: shortest round-trip, "nan", "inf".
std::string num(double v);
std::string num(std::optional<double> v);  // empty when missing
std::string num(std::int64_t v);

// Writes `bytes` atomically (temp file + rename) and returns its digest.
std::string write_file_atomic(const std::filesystem::path& file, const std::string& bytes);

std::string sha256_bytes(const std::string& bytes);

}  // namespace headprobe::pipeline
