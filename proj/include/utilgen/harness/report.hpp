#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "utilgen/harness/pipeline.hpp"

namespace utilgen::harness {

struct BarSeries {
  std::string name;
  std::vector<double> lo, hi;  // bin edges
  std::vector<double> counts;
};

struct LineSeries {
  std::string name;
  std::vector<double> x, y;
};

// Minimal SVG renderers; output depends only on the inputs.
std::string render_histograms(const std::string& title, const std::vector<BarSeries>& series);
std::string render_lines(const std::string& title, const std::string& x_label, const std::string& y_label,
                         const std::vector<LineSeries>& series);

/// Renders plots/*.svg and report/report.md from the metrics of a completed
/// run. Missing required metrics throw ConfigError listing every absent file.
/// Returns the files written.
std::vector<std::filesystem::path> emit_report(const RunDir& run);

}  // namespace utilgen::harness
