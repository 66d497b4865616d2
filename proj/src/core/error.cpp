#include "utilgen/core/error.hpp"

#include <atomic>
#include <iostream>

namespace utilgen {
namespace {
std::atomic<bool> g_enabled{true};
std::atomic<int> g_count{0};
}  // namespace

void warn(const std::string& message) {
  ++g_count;
  if (g_enabled) std::cerr << "warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_enabled = enabled; }

int warning_count() { return g_count; }

}  // namespace utilgen
