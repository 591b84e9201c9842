#include "metrovuln/csv.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace metrovuln {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("fmt_double: conversion failed");
  return std::string(buf, p);
}

std::string fmt_fixed(double v, int precision) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
  if (ec != std::errc{}) throw std::runtime_error("fmt_fixed: conversion failed");
  return std::string(buf, p);
}

CsvReader::CsvReader(const std::filesystem::path& path) : path_(path), in_(path) {
  if (!in_) throw std::runtime_error("cannot open file: " + path.string());
}

void CsvReader::require_header(const std::vector<std::string>& expected, bool allow_extra) {
  std::string line;
  if (!std::getline(in_, line)) throw std::runtime_error(path_.string() + ": empty file, header expected");
  ++line_no_;
  header_ = split_csv_line(line);
  bool ok = allow_extra ? header_.size() >= expected.size() : header_.size() == expected.size();
  if (ok) {
    for (std::size_t i = 0; i < expected.size(); ++i)
      if (header_[i] != expected[i]) { ok = false; break; }
  }
  if (!ok) {
    std::ostringstream msg;
    msg << path_.string() << ": malformed header, expected ";
    for (std::size_t i = 0; i < expected.size(); ++i) msg << (i ? "," : "") << expected[i];
    msg << " got " << line;
    throw std::runtime_error(msg.str());
  }
}

bool CsvReader::next_row(std::vector<std::string>& fields) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (line.empty() || line == "\r") continue;
    fields = split_csv_line(line);
    return true;
  }
  return false;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary), n_cols_(header.size()) {
  if (!out_) throw std::runtime_error("cannot open file for writing: " + path.string());
  write_row(header);
}

void CsvWriter::write_row(const std::vector<std::string>& fields) {
  if (fields.size() != n_cols_)
    throw std::logic_error("csv row width mismatch: expected " + std::to_string(n_cols_) +
                           " got " + std::to_string(fields.size()));
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << csv_escape(fields[i]);
  }
  out_ << '\n';
}

void CsvWriter::close() { out_.close(); }

}  // namespace metrovuln
