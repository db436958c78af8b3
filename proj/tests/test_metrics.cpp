#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "salguide/errors.hpp"
#include "salguide/metrics.hpp"

using namespace salguide;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const char* leaf) : path(fs::temp_directory_path() / leaf) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MetricsRow row(const std::string& run, int epoch, const std::string& domain, double acc,
               int64_t hits, int64_t total, double loss) {
  MetricsRow r;
  r.run_id = run;
  r.epoch = epoch;
  r.domain = domain;
  r.accuracy = acc;
  r.pointing_hits = hits;
  r.pointing_total = total;
  r.mean_loss = loss;
  return r;
}

}  // namespace

TEST_CASE("csv headers are part of the file contract") {
  CHECK(std::string(kMetricsHeader) ==
        "run_id,epoch,domain,accuracy,pointing_hits,pointing_total,mean_loss");
  CHECK(std::string(kTraceHeader) == "epoch,example_id,branch,peak_w,peak_h,hit");
}

TEST_CASE("metrics rows round-trip through append and read") {
  TempDir tmp("salguide_metrics_rt");
  const fs::path p = tmp.path / "metrics.csv";
  append_metrics_csv(p, {row("xai-seed0", 1, "source-val", 0.25, 12, 500, 2.302585),
                         row("xai-seed0", 2, "source-val", 0.5, 40, 500, 1.75)});
  append_metrics_csv(p, {row("xai-seed0", 50, "sketch", 0.123456, 0, 0, 0.875)});

  std::vector<MetricsRow> rows = read_metrics_csv(p);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].run_id == "xai-seed0");
  CHECK(rows[0].epoch == 1);
  CHECK(rows[0].domain == "source-val");
  CHECK(rows[0].accuracy == 0.25);
  CHECK(rows[0].pointing_hits == 12);
  CHECK(rows[0].pointing_total == 500);
  CHECK(rows[1].accuracy == 0.5);
  CHECK(rows[1].mean_loss == 1.75);
  CHECK(rows[2].epoch == 50);
  CHECK(rows[2].domain == "sketch");
  CHECK(rows[2].accuracy == 0.123456);
  CHECK(rows[2].pointing_total == 0);

  // One header line only, even across two appends.
  std::istringstream all(slurp(p));
  std::string line;
  int headers = 0, lines = 0;
  while (std::getline(all, line)) {
    ++lines;
    if (line == kMetricsHeader) ++headers;
  }
  CHECK(headers == 1);
  CHECK(lines == 4);
}

TEST_CASE("malformed metrics files are rejected") {
  TempDir tmp("salguide_metrics_bad");
  const fs::path p = tmp.path / "m.csv";
  auto rewrite = [&](const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    out << text;
  };

  CHECK_THROWS_AS(read_metrics_csv(tmp.path / "absent.csv"), DataError);
  rewrite("");
  CHECK_THROWS_AS(read_metrics_csv(p), DataError);
  rewrite("run,epoch\n");
  CHECK_THROWS_AS(read_metrics_csv(p), DataError);
  rewrite(std::string(kMetricsHeader) + "\nr,1,source-val,0.5,1,2\n");
  CHECK_THROWS_AS(read_metrics_csv(p), DataError);  // six fields
  rewrite(std::string(kMetricsHeader) + "\nr,one,source-val,0.5,1,2,0.1\n");
  CHECK_THROWS_AS(read_metrics_csv(p), DataError);  // bad integer
  rewrite(std::string(kMetricsHeader) + "\nr,1,source-val,half,1,2,0.1\n");
  CHECK_THROWS_AS(read_metrics_csv(p), DataError);  // bad number
  rewrite(std::string(kMetricsHeader) + "\nr,1,source-val,0.5,1,2,0.1junk\n");
  CHECK_THROWS_AS(read_metrics_csv(p), DataError);  // trailing junk
}

TEST_CASE("trace rows serialize peak coordinates as width then height") {
  TempDir tmp("salguide_trace");
  const fs::path p = tmp.path / "trace.csv";
  TraceEntry t;
  t.epoch = 7;
  t.example_id = 42;
  t.branch = 1;
  t.peak_row = 1;
  t.peak_col = 3;
  t.hit = true;
  TraceEntry u;
  u.epoch = 7;
  u.example_id = 43;
  u.branch = 2;
  u.peak_row = 0;
  u.peak_col = 0;
  u.hit = false;
  write_trace_csv(p, {t, u});
  CHECK(slurp(p) == std::string(kTraceHeader) + "\n7,42,1,3,1,1\n7,43,2,0,0,0\n");
}

TEST_CASE("aggregation averages each run's final epochs then spans runs") {
  RunSeries a;
  a.run_id = "xai-seed0";
  a.mode = "xai";
  a.seed = 0;
  a.rows = {row("xai-seed0", 1, "source-val", 0.1, 0, 0, 0), row("xai-seed0", 2, "source-val", 0.2, 0, 0, 0),
            row("xai-seed0", 3, "source-val", 0.3, 0, 0, 0), row("xai-seed0", 4, "source-val", 0.5, 0, 0, 0),
            row("xai-seed0", 4, "sketch", 0.4, 0, 0, 0)};
  RunSeries b = a;
  b.run_id = "xai-seed1";
  b.seed = 1;
  for (auto& r : b.rows) {
    r.run_id = "xai-seed1";
    r.accuracy += 0.1;
  }
  RunSeries c;
  c.run_id = "noxai-seed0";
  c.mode = "noxai";
  c.rows = {row("noxai-seed0", 4, "source-val", 0.9, 0, 0, 0)};

  auto stats = aggregate_last_epochs({a, b, c}, 2);
  REQUIRE(stats.size() == 3);
  // source-val rows sort before targets; noxai before xai within a domain.
  CHECK(stats[0].domain == "source-val");
  CHECK(stats[0].mode == "noxai");
  CHECK(stats[0].mean == 0.9);
  CHECK(stats[0].runs == 1);
  CHECK(stats[0].epochs_averaged == 1);  // only one epoch available
  CHECK(stats[1].domain == "source-val");
  CHECK(stats[1].mode == "xai");
  CHECK(stats[1].mean == doctest::Approx(0.45).epsilon(1e-12));  // (0.4 + 0.5) / 2
  CHECK(stats[1].lo == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(stats[1].hi == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(stats[1].runs == 2);
  CHECK(stats[1].epochs_averaged == 2);
  CHECK(stats[2].domain == "sketch");
  CHECK(stats[2].mode == "xai");

  CHECK_THROWS_AS(aggregate_last_epochs({a}, 0), UsageError);
}

TEST_CASE("pointing series averages rates per epoch within each mode") {
  RunSeries a;
  a.run_id = "xai-seed0";
  a.mode = "xai";
  a.rows = {row("xai-seed0", 1, "source-val", 0, 10, 100, 0),
            row("xai-seed0", 2, "source-val", 0, 20, 100, 0),
            row("xai-seed0", 2, "sketch", 0, 99, 100, 0),
            row("xai-seed0", 3, "source-val", 0, 0, 0, 0)};  // no pointing played
  RunSeries b = a;
  b.run_id = "xai-seed1";
  b.rows[0].pointing_hits = 30;
  RunSeries c;
  c.run_id = "noxai-seed0";
  c.mode = "noxai";
  c.rows = {row("noxai-seed0", 1, "source-val", 0, 50, 100, 0)};

  auto series = pointing_rate_series({a, b, c}, "source-val");
  REQUIRE(series.size() == 2);
  CHECK(series[0].name == "noxai");
  REQUIRE(series[0].points.size() == 1);
  CHECK(series[0].points[0] == std::pair<double, double>{1.0, 0.5});
  CHECK(series[1].name == "xai");
  REQUIRE(series[1].points.size() == 2);  // epoch 3 dropped: pointing not played
  CHECK(series[1].points[0] == std::pair<double, double>{1.0, 0.2});
  CHECK(series[1].points[1] == std::pair<double, double>{2.0, 0.2});
}

TEST_CASE("charts render to proper svg documents") {
  TempDir tmp("salguide_charts");
  ChartSeries cs;
  cs.name = "xai";
  cs.points = {{1, 0.1}, {2, 0.4}, {3, 0.35}};
  const fs::path line = tmp.path / "line.svg";
  write_line_chart_svg(line, "pointing over time", "epoch", "hit rate", {cs});
  std::string text = slurp(line);
  CHECK(text.find("<svg") == 0);
  CHECK(text.find("</svg>") != std::string::npos);
  CHECK(text.find("pointing over time") != std::string::npos);
  CHECK(text.find("xai") != std::string::npos);
  CHECK(text.find("nan") == std::string::npos);

  BarStat s;
  s.mode = "noxai";
  s.domain = "sketch";
  s.mean = 0.42;
  s.lo = 0.40;
  s.hi = 0.44;
  s.runs = 3;
  const fs::path bars = tmp.path / "bars.svg";
  write_bar_chart_svg(bars, "target accuracy", {s});
  text = slurp(bars);
  CHECK(text.find("<svg") == 0);
  CHECK(text.find("</svg>") != std::string::npos);
  CHECK(text.find("sketch") != std::string::npos);
  CHECK(text.find("nan") == std::string::npos);

  // Degenerate inputs still produce a document.
  write_line_chart_svg(tmp.path / "empty.svg", "empty", "x", "y", {});
  CHECK(slurp(tmp.path / "empty.svg").find("</svg>") != std::string::npos);
}
