#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace metrovuln {

// Minimal CSV support: comma separation, double-quote escaping for fields
// that contain commas or quotes. Enough for the pipeline's own schemas.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

// Shortest round-trip decimal form; deterministic and locale-free.
std::string fmt_double(double v);
std::string fmt_fixed(double v, int precision);

class CsvReader {
 public:
  explicit CsvReader(const std::filesystem::path& path);

  // Throws std::runtime_error if the file's header differs from `expected`.
  // When `allow_extra` is set, additional trailing columns are accepted.
  void require_header(const std::vector<std::string>& expected, bool allow_extra = false);

  const std::vector<std::string>& header() const { return header_; }

  // Returns false at end of file. Blank lines are skipped.
  bool next_row(std::vector<std::string>& fields);

  std::size_t line_number() const { return line_no_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::vector<std::string> header_;
  std::size_t line_no_ = 0;
};

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void write_row(const std::vector<std::string>& fields);
  void close();

 private:
  std::ofstream out_;
  std::size_t n_cols_;
};

}  // namespace metrovuln
