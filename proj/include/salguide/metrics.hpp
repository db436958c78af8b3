#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "salguide/train.hpp"

namespace salguide {

inline constexpr const char* kMetricsHeader =
    "run_id,epoch,domain,accuracy,pointing_hits,pointing_total,mean_loss";
inline constexpr const char* kTraceHeader = "epoch,example_id,branch,peak_w,peak_h,hit";

// One evaluation snapshot: a model at `epoch` measured on `domain`'s
// examples. pointing_total == 0 means the pointing game was not played.
struct MetricsRow {
  std::string run_id;
  int epoch = 0;
  std::string domain;
  double accuracy = 0.0;
  int64_t pointing_hits = 0;
  int64_t pointing_total = 0;
  double mean_loss = 0.0;
};

void append_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceEntry>& entries);

// All rows of one finished run plus the identity needed for grouping.
struct RunSeries {
  std::string run_id;
  std::string mode;
  uint64_t seed = 0;
  std::vector<MetricsRow> rows;
};

// Per (mode, domain): each run contributes the mean accuracy of its last
// `window` evaluated epochs on that domain; mean/min/max are across runs.
struct BarStat {
  std::string mode;
  std::string domain;
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  int runs = 0;
  int epochs_averaged = 0;  // smallest per-run window actually available
};

std::vector<BarStat> aggregate_last_epochs(const std::vector<RunSeries>& series, int window);

struct ChartSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y)
};

// Mean pointing rate per epoch across each mode's runs, for one domain.
std::vector<ChartSeries> pointing_rate_series(const std::vector<RunSeries>& series,
                                              const std::string& domain);

void write_line_chart_svg(const std::filesystem::path& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<ChartSeries>& series);

// Grouped bars (one group per domain, one bar per mode) with min/max whiskers.
void write_bar_chart_svg(const std::filesystem::path& path, const std::string& title,
                         const std::vector<BarStat>& stats);

}  // namespace salguide
