#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "migrate/io.hpp"

namespace migrate {

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  fail(ErrorCode::BadFormat, path + ": missing column '" + std::string(name) + "'");
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path);
  CsvTable t;
  t.path = path;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::size_t start = line.find_first_not_of("# ");
      t.comments.push_back(start == std::string::npos ? "" : line.substr(start));
      continue;
    }
    std::vector<std::string> fields;
    std::size_t pos = 0;
    for (;;) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(pos));
        break;
      }
      fields.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
    } else {
      if (fields.size() != t.header.size())
        fail(ErrorCode::BadFormat,
             path + ": row with " + std::to_string(fields.size()) + " fields, header has " +
                 std::to_string(t.header.size()));
      t.rows.push_back(std::move(fields));
    }
  }
  if (!have_header) fail(ErrorCode::BadFormat, path + ": empty file");
  return t;
}

double parse_double(std::string_view text, const std::string& context) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    fail(ErrorCode::BadFormat, context + ": bad number '" + std::string(text) + "'");
  return v;
}

int parse_int(std::string_view text, const std::string& context) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    fail(ErrorCode::BadFormat, context + ": bad integer '" + std::string(text) + "'");
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path);
  out << content;
  if (!out) fail(ErrorCode::IoFailure, "write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t file_digest(const std::string& path) {
  std::string bytes = read_text_file(path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace migrate
