#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace utilgen::harness {

/// Comma-delimited records with a header row. Fields must not contain commas
/// or newlines.
struct Records {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::size_t column(const std::string& name) const;  // throws ValidationError when absent
};

void write_records(const std::filesystem::path& path, const Records& records);
Records read_records(const std::filesystem::path& path);

std::string num(double v);  // shortest round-trip text
std::string num(long v);
std::string num(int v);
std::string num(std::size_t v);

}  // namespace utilgen::harness
