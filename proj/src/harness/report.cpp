#include "utilgen/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "utilgen/core/dataset.hpp"
#include "utilgen/core/error.hpp"
#include "utilgen/harness/records.hpp"

namespace utilgen::harness {

namespace fs = std::filesystem;

namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" + fmt(kHeight) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + fmt(kWidth / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";
}

struct Frame {
  double x0, x1, y0, y1;
  [[nodiscard]] double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  [[nodiscard]] double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::string axes(const Frame& f, const std::string& x_label, const std::string& y_label) {
  std::string s;
  s += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(f.py(f.y0)) + "\" x2=\"" + fmt(kWidth - kRight) + "\" y2=\"" +
       fmt(f.py(f.y0)) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kTop) + "\" x2=\"" + fmt(kLeft) + "\" y2=\"" + fmt(f.py(f.y0)) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s += "<text x=\"" + fmt(f.px(xv)) + "\" y=\"" + fmt(kHeight - kBottom + 16) + "\" text-anchor=\"middle\">" +
         fmt(xv) + "</text>\n";
    s += "<text x=\"" + fmt(kLeft - 6) + "\" y=\"" + fmt(f.py(yv) + 4) + "\" text-anchor=\"end\">" + fmt(yv) +
         "</text>\n";
  }
  s += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"" + fmt(kHeight - 10) + "\" text-anchor=\"middle\">" + x_label +
       "</text>\n";
  s += "<text x=\"14\" y=\"" + fmt(kHeight / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
       fmt(kHeight / 2) + ")\">" + y_label + "</text>\n";
  return s;
}

std::string legend(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 14.0 * static_cast<double>(i);
    s += "<rect x=\"" + fmt(kWidth - kRight - 110) + "\" y=\"" + fmt(y - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
         kPalette[i % 6] + "\"/>\n";
    s += "<text x=\"" + fmt(kWidth - kRight - 95) + "\" y=\"" + fmt(y) + "\">" + names[i] + "</text>\n";
  }
  return s;
}

}  // namespace

std::string render_histograms(const std::string& title, const std::vector<BarSeries>& series) {
  Frame f{0, 1, 0, 1};
  bool first = true;
  for (const auto& s : series) {
    const double total = std::max(1.0, std::accumulate(s.counts.begin(), s.counts.end(), 0.0));
    for (std::size_t i = 0; i < s.counts.size(); ++i) {
      if (first) {
        f.x0 = s.lo[i];
        f.x1 = s.hi[i];
        first = false;
      }
      f.x0 = std::min(f.x0, s.lo[i]);
      f.x1 = std::max(f.x1, s.hi[i]);
      f.y1 = std::max(f.y1, s.counts[i] / total);
    }
  }
  if (!(f.x1 > f.x0)) f.x1 = f.x0 + 1;
  std::string svg = header(title) + axes(f, "value", "fraction");
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    names.push_back(s.name);
    const double total = std::max(1.0, std::accumulate(s.counts.begin(), s.counts.end(), 0.0));
    for (std::size_t i = 0; i < s.counts.size(); ++i) {
      const double x = f.px(s.lo[i]), w = f.px(s.hi[i]) - x, y = f.py(s.counts[i] / total);
      svg += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(w) + "\" height=\"" +
             fmt(f.py(0) - y) + "\" fill=\"" + kPalette[k % 6] + "\" fill-opacity=\"0.45\"/>\n";
    }
  }
  return svg + legend(names) + "</svg>\n";
}

std::string render_lines(const std::string& title, const std::string& x_label, const std::string& y_label,
                         const std::vector<LineSeries>& series) {
  Frame f{0, 1, 0, 1};
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) f = {s.x[i], s.x[i], s.y[i], s.y[i]}, first = false;
      f.x0 = std::min(f.x0, s.x[i]);
      f.x1 = std::max(f.x1, s.x[i]);
      f.y0 = std::min(f.y0, s.y[i]);
      f.y1 = std::max(f.y1, s.y[i]);
    }
  if (!(f.x1 > f.x0)) f.x1 = f.x0 + 1;
  const double pad = std::max(0.01, 0.1 * (f.y1 - f.y0));
  f.y0 -= pad;
  f.y1 += pad;
  std::string svg = header(title) + axes(f, x_label, y_label);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    names.push_back(s.name);
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      points += fmt(f.px(s.x[i])) + "," + fmt(f.py(s.y[i])) + " ";
      svg += "<circle cx=\"" + fmt(f.px(s.x[i])) + "\" cy=\"" + fmt(f.py(s.y[i])) + "\" r=\"3\" fill=\"" +
             kPalette[k % 6] + "\"/>\n";
    }
    svg += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + kPalette[k % 6] + "\"/>\n";
  }
  return svg + legend(names) + "</svg>\n";
}

namespace {

void write_file(const fs::path& p, const std::string& text, std::vector<fs::path>& written) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
  written.push_back(p);
}

// Histogram records (dataset,bin,lo,hi,count) grouped by dataset, in first-seen order.
std::vector<BarSeries> bars(const Records& r) {
  std::vector<BarSeries> out;
  const auto d = r.column("dataset"), lo = r.column("lo"), hi = r.column("hi"), c = r.column("count");
  for (const auto& row : r.rows) {
    if (out.empty() || out.back().name != row[d]) out.push_back({row[d], {}, {}, {}});
    out.back().lo.push_back(parse_double(row[lo]));
    out.back().hi.push_back(parse_double(row[hi]));
    out.back().counts.push_back(parse_double(row[c]));
  }
  return out;
}

std::string table(const Records& r) {
  std::string s = "|";
  for (const auto& h : r.header) s += " " + h + " |";
  s += "\n|";
  for (std::size_t i = 0; i < r.header.size(); ++i) s += "---|";
  s += "\n";
  for (const auto& row : r.rows) {
    s += "|";
    for (const auto& v : row) s += " " + v + " |";
    s += "\n";
  }
  return s;
}

}  // namespace

std::vector<fs::path> emit_report(const RunDir& run) {
  const std::vector<std::string> required = {"accuracy.csv", "weights.csv", "weight_hist.csv", "influence.csv",
                                             "influence_hist.csv", "diversity.csv", "modes.csv"};
  std::string missing;
  for (const auto& name : required)
    if (!fs::exists(run.metrics() / name)) missing += "\n  " + (run.metrics() / name).string();
  if (!missing.empty()) throw ConfigError("cannot emit report; missing artifacts:" + missing);

  std::vector<fs::path> written;
  std::string md = "# Run report\n\n";
  if (fs::exists(run.root / "config_hash.txt")) {
    std::ifstream in(run.root / "config_hash.txt");
    std::string hash;
    in >> hash;
    md += "Config hash: `" + hash + "`\n\n";
  }

  md += "## Downstream accuracy\n\n" + table(read_records(run.metrics() / "accuracy.csv")) + "\n";
  md += "## Preferred-mode mass\n\n" + table(read_records(run.metrics() / "modes.csv")) + "\n";

  md += "## Weight distributions\n\n" + table(read_records(run.metrics() / "weights.csv")) + "\n";
  const auto wbars = bars(read_records(run.metrics() / "weight_hist.csv"));
  write_file(run.plots() / "weights.svg", render_histograms("Weight-net scores by data source", wbars), written);
  md += "![weights](../plots/weights.svg)\n\n";

  md += "## Influence on validation loss\n\n" + table(read_records(run.metrics() / "influence.csv")) + "\n";
  const auto ibars = bars(read_records(run.metrics() / "influence_hist.csv"));
  for (const auto& b : ibars) {
    const std::string file = "influence_" + b.name + ".svg";
    write_file(run.plots() / file, render_histograms("Influence scores: " + b.name, {b}), written);
    md += "![influence " + b.name + "](../plots/" + file + ")\n\n";
  }

  md += "## Intra-class diversity\n\n" + table(read_records(run.metrics() / "diversity.csv")) + "\n";

  if (fs::exists(run.metrics() / "scaling.csv")) {
    const Records s = read_records(run.metrics() / "scaling.csv");
    md += "## Scaling\n\n" + table(s) + "\n";
    std::map<std::string, LineSeries> lines;
    std::vector<std::string> order;
    for (const auto& row : s.rows) {
      for (const std::string src : {"base", "utilgen"}) {
        const std::string key = src + " / " + row[s.column("regime")];
        if (!lines.count(key)) {
          lines[key] = {key, {}, {}};
          order.push_back(key);
        }
        lines[key].x.push_back(parse_double(row[s.column("budget")]));
        lines[key].y.push_back(parse_double(row[s.column(src + "_accuracy")]));
      }
    }
    std::vector<LineSeries> series;
    for (const auto& k : order) series.push_back(lines[k]);
    if (!series.empty()) {
      write_file(run.plots() / "scaling.svg", render_lines("Accuracy vs synthetic budget", "budget", "test accuracy", series),
                 written);
      md += "![scaling](../plots/scaling.svg)\n\n";
    }
  }
  if (fs::exists(run.metrics() / "reusability.csv"))
    md += "## Cross-architecture reuse\n\n" + table(read_records(run.metrics() / "reusability.csv")) + "\n";
  if (fs::exists(run.metrics() / "todv.csv")) {
    const Records t = read_records(run.metrics() / "todv.csv");
    LineSeries train{"train", {}, {}}, val{"validation", {}, {}};
    for (const auto& row : t.rows) {
      const double ep = parse_double(row[t.column("epoch")]);
      train.x.push_back(ep);
      val.x.push_back(ep);
      train.y.push_back(parse_double(row[t.column("train_accuracy")]));
      val.y.push_back(parse_double(row[t.column("validation_accuracy")]));
    }
    if (!train.x.empty()) {
      write_file(run.plots() / "todv.svg", render_lines("Weighted training trajectory", "epoch", "accuracy", {train, val}),
                 written);
      md += "## Weighted training trajectory\n\n![todv](../plots/todv.svg)\n\n";
    }
  }
  write_file(run.report() / "report.md", md, written);
  return written;
}

}  // namespace utilgen::harness
