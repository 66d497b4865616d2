#include "utilgen/harness/records.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "utilgen/core/dataset.hpp"
#include "utilgen/core/error.hpp"

namespace utilgen::harness {

std::size_t Records::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ValidationError("records: no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].find_first_of(",\n") != std::string::npos)
      throw ValidationError("records: field contains a delimiter: " + fields[i]);
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_records(const std::filesystem::path& path, const Records& records) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << join(records.header) << '\n';
  for (const auto& row : records.rows) {
    if (row.size() != records.header.size()) throw ValidationError("records: row width does not match header");
    out << join(row) << '\n';
  }
}

Records read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  Records r;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header");
  r.header = split(line);
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    auto row = split(line);
    if (row.size() != r.header.size())
      throw ParseError(path.string() + " line " + std::to_string(number) + ": expected " +
                       std::to_string(r.header.size()) + " fields");
    r.rows.push_back(std::move(row));
  }
  return r;
}

std::string num(double v) { return format_double(v); }
std::string num(long v) { return std::to_string(v); }
std::string num(int v) { return std::to_string(v); }
std::string num(std::size_t v) { return std::to_string(v); }

}  // namespace utilgen::harness
