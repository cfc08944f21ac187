#include "headprobe/pipeline/table.hpp"

#include <cmath>
#include <fstream>
#include <unistd.h>

#include <openssl/evp.h>

#include "headprobe/error.hpp"
#include "headprobe/stimuli/csv.hpp"

namespace headprobe::pipeline {

namespace fs = std::filesystem;

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw SchemaError("table has no column '" + name + "'");
}

const std::string& Table::at(std::size_t row, const std::string& name) const { return rows.at(row).at(column(name)); }

double Table::number(std::size_t row, const std::string& name) const {
  const std::string& s = at(row, name);
  if (s.empty() || s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError("column '" + name + "' holds non-numeric value '" + s + "'");
  }
}

std::string sha256_bytes(const std::string& bytes) {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), out, &len, EVP_sha256(), nullptr);
  static const char* digits = "0123456789abcdef";
  std::string hex = "sha256:";
  for (unsigned int i = 0; i < len; ++i) {
    hex += digits[out[i] >> 4];
    hex += digits[out[i] & 15];
  }
  return hex;
}

std::string write_file_atomic(const fs::path& file, const std::string& bytes) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  const fs::path tmp = file.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot write " + tmp.string());
    out << bytes;
    if (!out) throw LoadError("write failed for " + tmp.string());
  }
  fs::rename(tmp, file);
  return sha256_bytes(bytes);
}

std::string write_table(const fs::path& file, const Table& table) {
  std::string bytes = stimuli::csv_row(table.header);
  for (const auto& r : table.rows) bytes += stimuli::csv_row(r);
  return write_file_atomic(file, bytes);
}

Table read_table(const fs::path& file) {
  auto records = stimuli::read_csv(file);
  Table t;
  if (records.empty()) return t;
  for (auto& r : records) {
    if (r.error) throw SchemaError(file.string() + ":" + std::to_string(r.line) + ": " + *r.error);
  }
  t.header = std::move(records[0].fields);
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].fields.size() != t.header.size()) {
      throw SchemaError(file.string() + ":" + std::to_string(records[i].line) + ": expected " +
                        std::to_string(t.header.size()) + " fields");
    }
    t.rows.push_back(std::move(records[i].fields));
  }
  return t;
}

std::string num(double v) { return stimuli::format_double(v); }

std::string num(std::optional<double> v) { return v ? num(*v) : std::string(); }

std::string num(std::int64_t v) { return std::to_string(v); }

}  // namespace headprobe::pipeline
