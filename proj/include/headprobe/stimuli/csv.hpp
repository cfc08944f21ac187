#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace headprobe::stimuli {

// One parsed CSV record. `error` is set when the record could not be parsed
// (an unterminated quote, stray characters after a closing quote).
struct CsvRecord {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
  std::optional<std::string> error;
};

// RFC 4180 parsing: comma separated, double-quoted fields with "" escapes and
// embedded newlines, LF or CRLF line ends, optional UTF-8 BOM. Blank lines are
// skipped.
std::vector<CsvRecord> parse_csv(std::string_view text);

// Reads a file and parses it; throws LoadError if the file cannot be read.
std::vector<CsvRecord> read_csv(const std::filesystem::path& file);

// Quotes a field only when it contains a comma, quote, CR or LF.
std::string csv_field(std::string_view value);
std::string csv_row(const std::vector<std::string>& fields);

// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace headprobe::stimuli
