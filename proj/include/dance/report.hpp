#pragma once

// Figures and tables from run artifacts. Every figure is an SVG plus the CSV
// it was drawn from; all text in the SVG is copied from CSV cells.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dance/distribution.hpp"
#include "dance/error.hpp"
#include "dance/prune.hpp"
#include "dance/trainer.hpp"

namespace dance::report {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- csv

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw InvalidInputError("csv: no column '" + name + "'");
  }
  const std::string& cell(std::size_t row, const std::string& name) const { return rows.at(row).at(col(name)); }

  std::string str() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return os.str();
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// Throws InvalidInputError on ragged rows; `what` names the source.
inline CsvTable parse_csv(const std::string& text, const std::string& what) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw InvalidInputError(what + ": empty csv");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto r = split_csv_line(line);
    if (r.size() != t.header.size()) throw InvalidInputError(what + ": ragged csv row");
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline double parse_number(const std::string& s, const std::string& what) {
  if (s == "nan" || s == "-nan") return std::nan("");
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidInputError(what + ": not a number: '" + s + "'");
  }
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------- artifacts

struct RunArtifact {
  std::string run_id;
  std::string config_hash;
  fs::path metrics_path, ledger_path, prune_report_path;
  std::map<std::string, std::string> metrics;  // raw cells, exact as written
  CsvTable prune;
  nlohmann::json config;

  const std::string& metric_cell(const std::string& key) const {
    auto it = metrics.find(key);
    if (it == metrics.end()) throw InvalidInputError("run " + run_id + ": metrics.csv lacks '" + key + "'");
    return it->second;
  }
  double metric(const std::string& key) const { return parse_number(metric_cell(key), "run " + run_id); }
};

// Loads one run directory. Any missing or malformed file is an IoError that
// names the run. The ledger totals must reproduce the metrics totals.
inline RunArtifact load_run(const fs::path& dir) {
  RunArtifact a;
  a.run_id = dir.filename().string();
  if (a.run_id.empty()) a.run_id = dir.parent_path().filename().string();
  a.metrics_path = dir / "metrics.csv";
  a.ledger_path = dir / "ledger.csv";
  a.prune_report_path = dir / "prune_report.csv";
  try {
    const std::string cfg = read_file(dir / "config.json");
    a.config_hash = fnv1a_hex(cfg);
    try {
      a.config = nlohmann::json::parse(cfg);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInputError(std::string("config.json: ") + e.what());
    }
    const CsvTable m = parse_csv(read_file(a.metrics_path), "metrics.csv");
    if (m.header != std::vector<std::string>{"metric", "value"}) throw InvalidInputError("metrics.csv: bad header");
    for (const auto& r : m.rows) a.metrics[r[0]] = r[1];
    a.prune = parse_csv(read_file(a.prune_report_path), "prune_report.csv");
    if (a.prune.str().rfind(kPruneCsvHeader, 0) != 0) throw InvalidInputError("prune_report.csv: bad header");

    const CsvTable l = parse_csv(read_file(a.ledger_path), "ledger.csv");
    std::uint64_t flops = 0;
    double energy = 0.0;
    const std::size_t nf = l.col("network_flops"), inf = l.col("indicator_flops"), ej = l.col("energy_j");
    for (const auto& r : l.rows) {
      flops += std::stoull(r[nf]) + std::stoull(r[inf]);
      energy += parse_number(r[ej], "ledger.csv");
    }
    if (static_cast<double>(flops) != a.metric("train_flops") || energy != a.metric("train_energy_j"))
      throw InvalidInputError("ledger.csv totals disagree with metrics.csv");
  } catch (const std::exception& e) {
    throw IoError("run " + a.run_id + ": " + e.what());
  }
  return a;
}

// Every subdirectory of `root` holding a metrics.csv, ordered by run id.
inline std::vector<RunArtifact> load_runs(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "metrics.csv")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<RunArtifact> runs;
  for (const auto& d : dirs) runs.push_back(load_run(d));
  return runs;
}

inline PruneReport prune_report_from_csv(const CsvTable& t) {
  PruneReport r;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    GroupPruneStats g;
    const std::string name = t.cell(i, "group");
    bool found = false;
    for (LayerGroup lg : nn::kAllGroups)
      if (name == nn::to_string(lg)) g.group = lg, found = true;
    if (!found) throw InvalidInputError("prune report: unknown group " + name);
    r.mode = t.cell(i, "mode") == "unstructured" ? PruneMode::Unstructured : PruneMode::Channel;
    const auto total = std::stoull(t.cell(i, "total")), pruned = std::stoull(t.cell(i, "pruned"));
    if (r.mode == PruneMode::Channel) {
      g.channels_total = total;
      g.channels_pruned = pruned;
    } else {
      g.weights_total = total;
      g.weights_pruned = pruned;
    }
    r.target_ratio = parse_number(t.cell(i, "ratio"), "prune report");
    r.groups.push_back(g);
  }
  return r;
}

// ---------------------------------------------------------------- svg

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

class Svg {
 public:
  Svg(double w, double h) {
    os_.setf(std::ios::fixed);
    os_.precision(2);
    os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
        << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os_ << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const char* stroke = "black") {
    os_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2 << "\" stroke=\"" << stroke
        << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const char* fill, const std::string& title = "") {
    os_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h << "\" fill=\"" << fill
        << "\">";
    if (!title.empty()) os_ << "<title>" << xml_escape(title) << "</title>";
    os_ << "</rect>\n";
  }
  void circle(double x, double y, double r, const char* fill, const std::string& title = "") {
    os_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\"" << fill << "\">";
    if (!title.empty()) os_ << "<title>" << xml_escape(title) << "</title>";
    os_ << "</circle>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const char* stroke) {
    os_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) os_ << x << ',' << y << ' ';
    os_ << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, const char* anchor = "start") {
    os_ << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor << "\">" << xml_escape(s)
        << "</text>\n";
  }
  std::string str() const { return os_.str() + "</svg>\n"; }

 private:
  std::ostringstream os_;
};

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  return colors[i % 7];
}

struct Figure {
  std::string name;
  std::string svg;
  CsvTable data;
};

inline void write_figure(const fs::path& dir, const Figure& f) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / (f.name + ".svg"), f.svg);
  write_text(dir / (f.name + ".csv"), f.data.str());
}

// ---------------------------------------------------------------- tradeoff

// Two scatter panels: (training energy, mIoU) and (inference energy, mIoU).
inline Figure render_tradeoff(std::vector<RunArtifact> runs) {
  if (runs.empty()) throw InvalidInputError("render_tradeoff: no runs");
  std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.run_id < b.run_id; });
  Figure f{"tradeoff", "", {{"run_id", "panel", "energy_j", "miou"}, {}}};
  for (const auto& r : runs) f.data.rows.push_back({r.run_id, "training", r.metric_cell("train_energy_j"), r.metric_cell("miou")});
  for (const auto& r : runs)
    f.data.rows.push_back({r.run_id, "inference", r.metric_cell("infer_energy_j_per_image"), r.metric_cell("miou")});

  const double pw = 300, ph = 220, ml = 70, mt = 30, gap = 110;
  Svg svg(2 * (ml + pw) + gap - ml + 20, mt + ph + 70);
  const std::size_t n = runs.size();
  for (int panel = 0; panel < 2; ++panel) {
    const double x0 = ml + panel * (pw + gap);
    std::size_t lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
    auto val = [&](std::size_t i, int c) { return parse_number(f.data.rows[panel * n + i][c], "tradeoff"); };
    for (std::size_t i = 1; i < n; ++i) {
      if (val(i, 2) < val(lo_x, 2)) lo_x = i;
      if (val(i, 2) > val(hi_x, 2)) hi_x = i;
      if (val(i, 3) < val(lo_y, 3)) lo_y = i;
      if (val(i, 3) > val(hi_y, 3)) hi_y = i;
    }
    auto span = [](double lo, double hi) { return hi > lo ? std::make_pair(lo, hi) : std::make_pair(lo - 0.5, lo + 0.5); };
    const auto [xa, xb] = span(val(lo_x, 2), val(hi_x, 2));
    const auto [ya, yb] = span(val(lo_y, 3), val(hi_y, 3));
    auto px = [&](double v) { return x0 + 20 + (v - xa) / (xb - xa) * (pw - 40); };
    auto py = [&](double v) { return mt + ph - 20 - (v - ya) / (yb - ya) * (ph - 40); };
    svg.line(x0, mt + ph, x0 + pw, mt + ph);
    svg.line(x0, mt, x0, mt + ph);
    svg.text(x0 + pw / 2, mt - 10, panel == 0 ? "mIoU vs training energy" : "mIoU vs inference energy per image",
             "middle");
    svg.text(x0 + pw / 2, mt + ph + 45, panel == 0 ? "training energy (J)" : "inference energy per image (J)",
             "middle");
    svg.text(x0 - 8, mt + ph / 2, "mIoU", "end");
    const auto& rows = f.data.rows;
    svg.text(px(val(lo_x, 2)), mt + ph + 15, rows[panel * n + lo_x][2], "middle");
    if (hi_x != lo_x) svg.text(px(val(hi_x, 2)), mt + ph + 28, rows[panel * n + hi_x][2], "middle");
    svg.text(x0 - 4, py(val(lo_y, 3)) + 4, rows[panel * n + lo_y][3], "end");
    if (hi_y != lo_y) svg.text(x0 - 4, py(val(hi_y, 3)) + 4, rows[panel * n + hi_y][3], "end");
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = rows[panel * n + i];
      const double cx = px(val(i, 2)), cy = py(val(i, 3));
      svg.circle(cx, cy, 4, palette(i), r[0]);
      svg.text(cx + 6, cy - 6, r[0]);
    }
  }
  f.svg = svg.str();
  return f;
}

// ---------------------------------------------------------------- prune sweep

struct SweepEntry {
  std::string configuration;
  PruneReport report;
};

// Grouped bars of pruned fraction per layer group, clustered by ratio, one
// bar colour per configuration.
inline Figure render_prune_sweep(std::vector<SweepEntry> entries) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.report.target_ratio < b.report.target_ratio; });
  Figure f{"prune_sweep", "", {{"ratio", "configuration", "group", "total", "pruned", "fraction"}, {}}};
  std::vector<std::string> configs;
  for (const auto& e : entries) {
    if (std::find(configs.begin(), configs.end(), e.configuration) == configs.end()) configs.push_back(e.configuration);
    const bool ch = e.report.mode == PruneMode::Channel;
    for (LayerGroup g : nn::kAllGroups) {
      GroupPruneStats s{g};
      for (const auto& x : e.report.groups)
        if (x.group == g) s = x;
      f.data.rows.push_back({format_double(e.report.target_ratio), e.configuration, nn::to_string(g),
                             std::to_string(ch ? s.channels_total : s.weights_total),
                             std::to_string(ch ? s.channels_pruned : s.weights_pruned),
                             format_double(ch ? s.channel_fraction() : s.weight_fraction())});
    }
  }

  const double bw = 9, ph = 200, mt = 30, ml = 50;
  const std::size_t ng = nn::kAllGroups.size();
  const double cluster = static_cast<double>(ng * std::max<std::size_t>(1, configs.size())) * bw + 24;
  std::vector<std::string> ratios;
  for (const auto& r : f.data.rows)
    if (ratios.empty() || ratios.back() != r[0]) ratios.push_back(r[0]);
  const double width = ml + cluster * std::max<std::size_t>(1, ratios.size()) + 180;
  Svg svg(width, mt + ph + 60);
  svg.line(ml, mt + ph, width - 170, mt + ph);
  svg.line(ml, mt, ml, mt + ph);
  svg.text((ml + width - 170) / 2, 16, "pruned fraction per layer group (axis height = all channels)", "middle");
  for (std::size_t k = 0; k < f.data.rows.size(); ++k) {
    const auto& r = f.data.rows[k];
    const std::size_t ri = std::find(ratios.begin(), ratios.end(), r[0]) - ratios.begin();
    const std::size_t ci = std::find(configs.begin(), configs.end(), r[1]) - configs.begin();
    const std::size_t gi = k % ng;
    const double frac = parse_number(r[5], "prune sweep");
    const double x = ml + 12 + ri * cluster + (gi * configs.size() + ci) * bw;
    svg.rect(x, mt + ph - frac * ph, bw - 1, frac * ph, palette(ci), r[1] + " " + r[2] + " " + r[5]);
  }
  for (std::size_t ri = 0; ri < ratios.size(); ++ri)
    svg.text(ml + 12 + ri * cluster + (cluster - 24) / 2, mt + ph + 16, ratios[ri], "middle");
  svg.text((ml + width - 170) / 2, mt + ph + 40, "target ratio; bars per group in order backbone, aggregation_head, "
                                                 "decoder, classifier", "middle");
  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    svg.rect(width - 160, mt + 14 * ci, 10, 10, palette(ci));
    svg.text(width - 145, mt + 9 + 14 * ci, configs[ci]);
  }
  f.svg = svg.str();
  return f;
}

// "data+network" when the run's policy enables any data-slimming rule,
// "network" otherwise; the run id when the config carries no policy.
inline std::string configuration_label(const RunArtifact& r) {
  if (!r.config.contains("policy")) return r.run_id;
  const auto& p = r.config["policy"];
  for (const char* k : {"cad", "casd", "cal", "rd"})
    if (p.value(k, false)) return "data+network";
  return "network";
}

inline Figure render_prune_sweep(const std::vector<RunArtifact>& runs) {
  std::vector<SweepEntry> e;
  for (const auto& r : runs) e.push_back({configuration_label(r), prune_report_from_csv(r.prune)});
  return render_prune_sweep(std::move(e));
}

// ---------------------------------------------------------------- distribution

// Histogram of training-split SC_mean with the fitted Maxwell pdf and cdf.
inline Figure render_distribution(const ComplexityIndex& index, int bins = 24, int curve_points = 101) {
  std::vector<double> v;
  for (const auto& e : index.entries())
    if (e.split == "train") v.push_back(e.sc_mean);
  if (v.empty())
    for (const auto& e : index.entries()) v.push_back(e.sc_mean);
  if (v.empty()) throw InvalidInputError("render_distribution: empty index");
  if (bins < 1 || curve_points < 2) throw InvalidInputError("render_distribution: bins and points must be positive");
  const double hi = std::max(*std::max_element(v.begin(), v.end()), 1e-12);
  const double wbin = hi / bins;
  std::vector<std::size_t> counts(bins, 0);
  for (double x : v) ++counts[std::min<std::size_t>(bins - 1, static_cast<std::size_t>(x / wbin))];

  Figure f{"distribution", "", {{"series", "x_lo", "x_hi", "value"}, {}}};
  for (int b = 0; b < bins; ++b)
    f.data.rows.push_back({"count", format_double(b * wbin), format_double(b == bins - 1 ? hi : (b + 1) * wbin),
                           std::to_string(counts[b])});
  std::vector<double> xs;
  if (index.fitted()) {
    const double a = index.fit().scale_a;
    for (int k = 0; k < curve_points; ++k) {
      const double x = hi * k / (curve_points - 1);
      xs.push_back(x);
      f.data.rows.push_back({"pdf", format_double(x), format_double(x), format_double(maxwell_pdf(x, a))});
    }
    for (int k = 0; k < curve_points; ++k)
      f.data.rows.push_back({"cdf", format_double(xs[k]), format_double(xs[k]), format_double(maxwell_cdf(xs[k], a))});
  }

  const double pw = 420, ph = 220, ml = 50, mt = 30;
  Svg svg(ml + pw + 60, mt + ph + 50);
  const double n = static_cast<double>(v.size());
  double ymax = 0.0;
  for (int b = 0; b < bins; ++b) ymax = std::max(ymax, counts[b] / (n * wbin));
  for (std::size_t k = 0; k < xs.size(); ++k) ymax = std::max(ymax, parse_number(f.data.rows[bins + k][3], "pdf"));
  auto px = [&](double x) { return ml + x / hi * pw; };
  auto py = [&](double d) { return mt + ph - d / ymax * ph; };
  for (int b = 0; b < bins; ++b) {
    const auto& r = f.data.rows[b];
    const double d = counts[b] / (n * wbin);
    svg.rect(px(b * wbin), py(d), pw / bins - 1, mt + ph - py(d), "#9ecae1", r[1] + " to " + r[2] + ": " + r[3]);
  }
  if (!xs.empty()) {
    std::vector<std::pair<double, double>> pdf, cdf;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      pdf.emplace_back(px(xs[k]), py(parse_number(f.data.rows[bins + k][3], "pdf")));
      cdf.emplace_back(px(xs[k]), mt + ph - parse_number(f.data.rows[bins + xs.size() + k][3], "cdf") * ph);
    }
    svg.polyline(pdf, "#d62728");
    svg.polyline(cdf, "#2ca02c");
    svg.text(ml + pw - 6, mt + 14, "fitted cdf (scaled to axis height)", "end");
    svg.text(ml + pw - 6, mt + 28, "fitted pdf", "end");
  }
  svg.line(ml, mt + ph, ml + pw, mt + ph);
  svg.line(ml, mt, ml, mt + ph);
  svg.text(ml, mt + ph + 15, f.data.rows.front()[1], "middle");
  svg.text(ml + pw, mt + ph + 15, f.data.rows[bins - 1][2], "middle");
  svg.text(ml + pw / 2, mt + ph + 38, "SC_mean (training split)", "middle");
  svg.text(ml + pw / 2, 16, "image complexity distribution", "middle");
  f.svg = svg.str();
  return f;
}

// ---------------------------------------------------------------- tables

// Relative saving of a over baseline b: (b - a) / b.
inline double improvement(double a, double b) {
  if (b == 0.0) throw DomainError("improvement: zero baseline");
  return (b - a) / b;
}

// One row per run against `baseline_id`: energies, savings and mIoU change.
inline CsvTable improvement_table(const std::vector<RunArtifact>& runs, const std::string& baseline_id) {
  const RunArtifact* base = nullptr;
  for (const auto& r : runs)
    if (r.run_id == baseline_id) base = &r;
  if (!base) throw InvalidInputError("improvement_table: no run named " + baseline_id);
  CsvTable t{{"run_id", "train_energy_j", "train_saving", "infer_energy_j", "infer_saving", "miou", "miou_delta_pp"},
             {}};
  const double bt = base->metric("train_energy_j"), bi = base->metric("infer_energy_j_per_image"),
               bm = base->metric("miou");
  for (const auto& r : runs) {
    const double te = r.metric("train_energy_j"), ie = r.metric("infer_energy_j_per_image"), m = r.metric("miou");
    t.rows.push_back({r.run_id, r.metric_cell("train_energy_j"), format_double(improvement(te, bt)),
                      r.metric_cell("infer_energy_j_per_image"), format_double(improvement(ie, bi)),
                      r.metric_cell("miou"), format_double(100.0 * (m - bm))});
  }
  return t;
}

// Cost summary: one row per run, each non-baseline run followed by an
// "improv" row of percentage savings over the baseline (mIoU as a pp change).
inline CsvTable summary_table(const std::vector<RunArtifact>& runs, const std::string& baseline_id) {
  const RunArtifact* base = nullptr;
  for (const auto& r : runs)
    if (r.run_id == baseline_id) base = &r;
  if (!base) throw InvalidInputError("summary_table: no run named " + baseline_id);
  const char* keys[] = {"train_flops", "infer_flops_per_image", "train_energy_j", "infer_energy_j_per_image", "miou"};
  CsvTable t{{"row", "flops_train", "flops_infer", "energy_train_j", "energy_infer_j", "miou"}, {}};
  auto add = [&](const RunArtifact& r) {
    std::vector<std::string> row{r.run_id};
    for (const char* k : keys) row.push_back(r.metric_cell(k));
    t.rows.push_back(row);
  };
  add(*base);
  for (const auto& r : runs) {
    if (&r == base) continue;
    add(r);
    std::vector<std::string> row{"improv " + r.run_id};
    for (int i = 0; i < 4; ++i) row.push_back(format_double(100.0 * improvement(r.metric(keys[i]), base->metric(keys[i]))));
    row.push_back(format_double(100.0 * (r.metric("miou") - base->metric("miou"))));
    t.rows.push_back(row);
  }
  return t;
}

inline std::vector<AblationRow> parse_ablation_csv(const std::string& text) {
  const CsvTable t = parse_csv(text, "ablation.csv");
  if (t.str().rfind(kAblationCsvHeader, 0) != 0) throw InvalidInputError("ablation.csv: bad header");
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    AblationRow r;
    auto num = [&](const char* c) { return parse_number(t.cell(i, c), "ablation.csv"); };
    auto flag = [&](const char* c) { return t.cell(i, c) == "1"; };
    r.study = t.cell(i, "study");
    r.name = t.cell(i, "row");
    r.seed = std::stoull(t.cell(i, "seed"));
    r.toggles = {flag("ans"), flag("cad"), flag("cal"), flag("casd"), flag("rd")};
    r.indicator = parse_indicator_mode(t.cell(i, "indicator"));
    r.train_flops = num("train_flops");
    r.train_energy_j = num("train_energy_j");
    r.infer_flops = num("infer_flops");
    r.infer_energy_j = num("infer_energy_j");
    r.miou = num("miou");
    r.head_pruned_fraction = num("head_pruned_fraction");
    rows.push_back(r);
  }
  return rows;
}

// Seed-averaged rows of one study, in first-appearance order, with savings
// against `baseline_row`.
inline CsvTable ablation_table(const std::vector<AblationRow>& rows, const std::string& study,
                               const std::string& baseline_row) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const AblationRow*>> by;
  for (const auto& r : rows) {
    if (r.study != study) continue;
    if (!by.count(r.name)) order.push_back(r.name);
    by[r.name].push_back(&r);
  }
  if (!by.count(baseline_row)) throw InvalidInputError("ablation_table: study " + study + " lacks row " + baseline_row);
  struct Mean {
    double tf = 0, te = 0, inf = 0, ie = 0, miou = 0, head = 0;
    std::size_t n = 0;
    const AblationRow* first = nullptr;
  };
  auto mean = [&](const std::string& name) {
    Mean m;
    for (const AblationRow* r : by[name]) {
      m.tf += r->train_flops;
      m.te += r->train_energy_j;
      m.inf += r->infer_flops;
      m.ie += r->infer_energy_j;
      m.miou += r->miou;
      m.head += r->head_pruned_fraction;
    }
    m.n = by[name].size();
    m.first = by[name].front();
    for (double* x : {&m.tf, &m.te, &m.inf, &m.ie, &m.miou, &m.head}) *x /= static_cast<double>(m.n);
    return m;
  };
  const Mean b = mean(baseline_row);
  CsvTable t{{"row", "seeds", "ans", "cad", "cal", "casd", "rd", "indicator", "train_flops", "train_energy_j",
              "train_saving", "infer_flops", "infer_energy_j", "infer_saving", "miou", "miou_delta_pp",
              "head_pruned_fraction"},
             {}};
  for (const auto& name : order) {
    const Mean m = mean(name);
    const Toggles& g = m.first->toggles;
    auto yn = [](bool v) { return std::string(v ? "1" : "0"); };
    t.rows.push_back({name, std::to_string(m.n), yn(g.ans), yn(g.cad), yn(g.cal), yn(g.casd), yn(g.rd),
                      to_string(m.first->indicator), format_double(m.tf), format_double(m.te),
                      format_double(improvement(m.te, b.te)), format_double(m.inf), format_double(m.ie),
                      format_double(improvement(m.ie, b.ie)), format_double(m.miou),
                      format_double(100.0 * (m.miou - b.miou)), format_double(m.head)});
  }
  return t;
}

// Markdown rendering; numeric cells shortened to 4 significant digits.
inline std::string markdown(const CsvTable& t) {
  std::ostringstream os;
  os << '|';
  for (const auto& h : t.header) os << ' ' << h << " |";
  os << "\n|";
  for (std::size_t i = 0; i < t.header.size(); ++i) os << " --- |";
  os << '\n';
  for (const auto& r : t.rows) {
    os << '|';
    for (const auto& c : r) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (!c.empty() && end == c.c_str() + c.size() && c.find('.') != std::string::npos) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4g", v);
        os << ' ' << buf << " |";
      } else {
        os << ' ' << c << " |";
      }
    }
    os << '\n';
  }
  return os.str();
}

inline void write_table(const fs::path& dir, const std::string& name, const CsvTable& t) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / (name + ".csv"), t.str());
  write_text(dir / (name + ".md"), markdown(t));
}

}  // namespace dance::report
