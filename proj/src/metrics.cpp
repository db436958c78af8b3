#include "salguide/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "salguide/errors.hpp"

namespace salguide {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line, size_t expected) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  if (out.size() != expected)
    throw DataError("malformed csv row (expected " + std::to_string(expected) + " fields): " + line);
  return out;
}

int64_t parse_i64(const std::string& s) {
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw DataError("trailing junk in integer field '" + s + "'");
    return v;
  } catch (const DataError&) {
    throw;
  } catch (const std::exception&) {
    throw DataError("bad integer field '" + s + "'");
  }
}

double parse_f64(const std::string& s) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw DataError("trailing junk in number field '" + s + "'");
    return v;
  } catch (const DataError&) {
    throw;
  } catch (const std::exception&) {
    throw DataError("bad number field '" + s + "'");
  }
}

// Stable presentation order: source validation first, known targets in their
// canonical order, anything else alphabetically after.
int domain_rank(const std::string& domain) {
  if (domain == "source-val") return 0;
  const auto names = DomainSpec::known_names();
  for (size_t i = 0; i < names.size(); ++i) {
    if (domain == names[i]) return static_cast<int>(i) + 1;
  }
  return 1000;
}

int mode_rank(const std::string& mode) {
  if (mode == "noxai") return 0;
  if (mode == "xai") return 1;
  if (mode == "aug") return 2;
  if (mode == "xai-aug") return 3;
  return 4;
}

const char* series_color(size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

void append_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot open for append: " + path.string());
  if (fresh) out << kMetricsHeader << "\n";
  for (const auto& r : rows) {
    out << r.run_id << ',' << r.epoch << ',' << r.domain << ',' << fmt(r.accuracy) << ','
        << r.pointing_hits << ',' << r.pointing_total << ',' << fmt(r.mean_loss) << "\n";
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics csv: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty metrics csv: " + path.string());
  if (line != kMetricsHeader) throw DataError("unexpected metrics header: " + line);
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_line(line, 7);
    MetricsRow r;
    r.run_id = f[0];
    r.epoch = static_cast<int>(parse_i64(f[1]));
    r.domain = f[2];
    r.accuracy = parse_f64(f[3]);
    r.pointing_hits = parse_i64(f[4]);
    r.pointing_total = parse_i64(f[5]);
    r.mean_loss = parse_f64(f[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for write: " + path.string());
  out << kTraceHeader << "\n";
  for (const auto& e : entries) {
    out << e.epoch << ',' << e.example_id << ',' << e.branch << ',' << e.peak_col << ','
        << e.peak_row << ',' << (e.hit ? 1 : 0) << "\n";
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<BarStat> aggregate_last_epochs(const std::vector<RunSeries>& series, int window) {
  if (window < 1) throw UsageError("aggregation window must be >= 1");
  // (mode, domain) -> per-run (mean over the window, window actually used)
  std::map<std::pair<std::string, std::string>, std::vector<std::pair<double, int>>> buckets;
  for (const auto& run : series) {
    std::map<std::string, std::vector<std::pair<int, double>>> by_domain;
    for (const auto& r : run.rows) by_domain[r.domain].push_back({r.epoch, r.accuracy});
    for (auto& [domain, pts] : by_domain) {
      std::sort(pts.begin(), pts.end());
      const size_t take = std::min(pts.size(), static_cast<size_t>(window));
      double sum = 0.0;
      for (size_t i = pts.size() - take; i < pts.size(); ++i) sum += pts[i].second;
      buckets[{run.mode, domain}].push_back(
          {sum / static_cast<double>(take), static_cast<int>(take)});
    }
  }
  std::vector<BarStat> stats;
  for (const auto& [key, values] : buckets) {
    BarStat s;
    s.mode = key.first;
    s.domain = key.second;
    s.runs = static_cast<int>(values.size());
    s.lo = values[0].first;
    s.hi = values[0].first;
    s.epochs_averaged = values[0].second;
    double sum = 0.0;
    for (const auto& [mean, used] : values) {
      sum += mean;
      s.lo = std::min(s.lo, mean);
      s.hi = std::max(s.hi, mean);
      s.epochs_averaged = std::min(s.epochs_averaged, used);
    }
    s.mean = sum / static_cast<double>(values.size());
    stats.push_back(std::move(s));
  }
  std::sort(stats.begin(), stats.end(), [](const BarStat& a, const BarStat& b) {
    const int da = domain_rank(a.domain), db = domain_rank(b.domain);
    if (da != db) return da < db;
    if (a.domain != b.domain) return a.domain < b.domain;
    const int ma = mode_rank(a.mode), mb = mode_rank(b.mode);
    if (ma != mb) return ma < mb;
    return a.mode < b.mode;
  });
  return stats;
}

std::vector<ChartSeries> pointing_rate_series(const std::vector<RunSeries>& series,
                                              const std::string& domain) {
  // mode -> epoch -> (sum of rates, count)
  std::map<std::string, std::map<int, std::pair<double, int>>> acc;
  for (const auto& run : series) {
    for (const auto& r : run.rows) {
      if (r.domain != domain || r.pointing_total == 0) continue;
      auto& slot = acc[run.mode][r.epoch];
      slot.first += static_cast<double>(r.pointing_hits) / static_cast<double>(r.pointing_total);
      slot.second += 1;
    }
  }
  std::vector<ChartSeries> out;
  std::vector<std::string> modes;
  for (const auto& [mode, _] : acc) modes.push_back(mode);
  std::sort(modes.begin(), modes.end(), [](const std::string& a, const std::string& b) {
    const int ra = mode_rank(a), rb = mode_rank(b);
    return ra != rb ? ra < rb : a < b;
  });
  for (const auto& mode : modes) {
    ChartSeries cs;
    cs.name = mode;
    for (const auto& [epoch, slot] : acc[mode]) {
      cs.points.push_back({static_cast<double>(epoch), slot.first / slot.second});
    }
    out.push_back(std::move(cs));
  }
  return out;
}

void write_line_chart_svg(const std::filesystem::path& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<ChartSeries>& series) {
  const double W = 720, H = 440, L = 60, R = 150, T = 40, B = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 0.0, ymax = -1e300;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymax = std::max(ymax, y);
    }
  }
  if (xmax < xmin) {
    xmin = 0;
    xmax = 1;
  }
  if (ymax <= ymin) ymax = 1.0;
  ymax = std::min(1.0, std::max(ymax * 1.05, 0.1));
  if (xmax == xmin) xmax = xmin + 1;
  const auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<text x='" << W / 2 << "' y='22' text-anchor='middle' font-size='16'>"
      << xml_escape(title) << "</text>\n";
  // axes
  svg << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='" << H - B
      << "' stroke='black'/>\n";
  svg << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R << "' y2='" << H - B
      << "' stroke='black'/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    const double yy = py(yv);
    svg << "<line x1='" << L - 4 << "' y1='" << yy << "' x2='" << W - R << "' y2='" << yy
        << "' stroke='#dddddd'/>\n";
    svg << "<text x='" << L - 8 << "' y='" << yy + 4 << "' text-anchor='end' font-size='11'>"
        << fmt(yv).substr(0, 4) << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    const double xx = px(xv);
    svg << "<text x='" << xx << "' y='" << H - B + 18 << "' text-anchor='middle' font-size='11'>"
        << static_cast<int>(std::lround(xv)) << "</text>\n";
  }
  svg << "<text x='" << (L + W - R) / 2 << "' y='" << H - 12
      << "' text-anchor='middle' font-size='12'>" << xml_escape(x_label) << "</text>\n";
  svg << "<text x='16' y='" << (T + H - B) / 2 << "' text-anchor='middle' font-size='12' "
      << "transform='rotate(-90 16 " << (T + H - B) / 2 << ")'>" << xml_escape(y_label)
      << "</text>\n";
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (s.points.empty()) continue;
    svg << "<polyline fill='none' stroke='" << series_color(si) << "' stroke-width='1.5' points='";
    for (const auto& [x, y] : s.points) svg << px(x) << ',' << py(y) << ' ';
    svg << "'/>\n";
    const double ly = T + 16 + 18 * static_cast<double>(si);
    svg << "<line x1='" << W - R + 10 << "' y1='" << ly << "' x2='" << W - R + 34 << "' y2='" << ly
        << "' stroke='" << series_color(si) << "' stroke-width='2'/>\n";
    svg << "<text x='" << W - R + 40 << "' y='" << ly + 4 << "' font-size='12'>"
        << xml_escape(s.name) << "</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for write: " + path.string());
  out << svg.str();
  if (!out) throw DataError("write failed: " + path.string());
}

void write_bar_chart_svg(const std::filesystem::path& path, const std::string& title,
                         const std::vector<BarStat>& stats) {
  std::vector<std::string> domains, modes;
  for (const auto& s : stats) {
    if (std::find(domains.begin(), domains.end(), s.domain) == domains.end())
      domains.push_back(s.domain);
    if (std::find(modes.begin(), modes.end(), s.mode) == modes.end()) modes.push_back(s.mode);
  }
  const double bar = 22, gap = 6, group_gap = 30;
  const double L = 60, T = 40, B = 70, R = 140;
  const double group_w = static_cast<double>(modes.size()) * (bar + gap) + group_gap;
  const double W = L + R + group_w * static_cast<double>(domains.size());
  const double H = 420;
  const auto py = [&](double y) { return H - B - y * (H - T - B); };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<text x='" << W / 2 << "' y='22' text-anchor='middle' font-size='16'>"
      << xml_escape(title) << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double yv = i / 5.0;
    svg << "<line x1='" << L << "' y1='" << py(yv) << "' x2='" << W - R << "' y2='" << py(yv)
        << "' stroke='#dddddd'/>\n";
    svg << "<text x='" << L - 8 << "' y='" << py(yv) + 4 << "' text-anchor='end' font-size='11'>"
        << fmt(yv).substr(0, 4) << "</text>\n";
  }
  for (size_t di = 0; di < domains.size(); ++di) {
    const double gx = L + group_w * static_cast<double>(di) + group_gap / 2;
    for (size_t mi = 0; mi < modes.size(); ++mi) {
      const BarStat* s = nullptr;
      for (const auto& c : stats) {
        if (c.domain == domains[di] && c.mode == modes[mi]) s = &c;
      }
      if (!s) continue;
      const double x = gx + static_cast<double>(mi) * (bar + gap);
      svg << "<rect x='" << x << "' y='" << py(s->mean) << "' width='" << bar << "' height='"
          << py(0.0) - py(s->mean) << "' fill='" << series_color(mi) << "'/>\n";
      const double cx = x + bar / 2;
      svg << "<line x1='" << cx << "' y1='" << py(s->lo) << "' x2='" << cx << "' y2='"
          << py(s->hi) << "' stroke='black' stroke-width='1.5'/>\n";
      svg << "<line x1='" << cx - 4 << "' y1='" << py(s->lo) << "' x2='" << cx + 4 << "' y2='"
          << py(s->lo) << "' stroke='black'/>\n";
      svg << "<line x1='" << cx - 4 << "' y1='" << py(s->hi) << "' x2='" << cx + 4 << "' y2='"
          << py(s->hi) << "' stroke='black'/>\n";
    }
    svg << "<text x='" << gx + (group_w - group_gap) / 2 << "' y='" << H - B + 18
        << "' text-anchor='middle' font-size='12'>" << xml_escape(domains[di]) << "</text>\n";
  }
  for (size_t mi = 0; mi < modes.size(); ++mi) {
    const double ly = T + 16 + 18 * static_cast<double>(mi);
    svg << "<rect x='" << W - R + 10 << "' y='" << ly - 9 << "' width='14' height='12' fill='"
        << series_color(mi) << "'/>\n";
    svg << "<text x='" << W - R + 30 << "' y='" << ly + 2 << "' font-size='12'>"
        << xml_escape(modes[mi]) << "</text>\n";
  }
  svg << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='" << H - B
      << "' stroke='black'/>\n";
  svg << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R << "' y2='" << H - B
      << "' stroke='black'/>\n";
  svg << "</svg>\n";

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for write: " + path.string());
  out << svg.str();
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace salguide
