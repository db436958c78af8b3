#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "salguide/metrics.hpp"
#include "salguide/model.hpp"
#include "salguide/train.hpp"

namespace salguide {

// Experiment orchestration on top of the trainer. One training run owns one
// directory: runs/<run_id>/{manifest.txt, metrics.csv, trace.csv, ckpt_*.bin,
// saliency/}. Metrics are appended per epoch so an interrupted run keeps its
// last checkpoint and every completed row.

struct GenDataOptions {
  std::filesystem::path out;
  uint64_t seed = 0;
  double bias = 1.0;
  int train_per_class = 200;
  int val_per_class = 50;
  int test_per_class = 50;
  bool force = false;  // overwrite a non-empty output directory
};

// Writes <out>/source/{train,val} plus <out>/<target>/test for each default
// target domain.
void run_gen_data(const GenDataOptions& opt);

struct TrainRunOptions {
  std::filesystem::path data_root;  // expects source/train, source/val, <target>/test
  std::filesystem::path runs_root;
  std::string run_id;  // empty -> "<mode>-seed<seed>"
  TrainConfig config;
  int checkpoint_every = 5;
  int target_window = 4;  // evaluate targets on this many final epochs
  bool eval_targets = true;
  int saliency_dump_count = 8;
  bool quiet = false;
};

struct RunResult {
  std::string run_id;
  std::filesystem::path run_dir;
  std::vector<EpochMetrics> history;
  std::vector<MetricsRow> rows;  // everything appended to metrics.csv
};

RunResult run_training(const TrainRunOptions& opt);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> data_dirs;
  int block = 0;  // saliency block for the pointing game; 0 = last
  int batch_size = 32;
  bool with_pointing = false;
  int epoch_label = 0;                 // epoch column for emitted rows
  std::filesystem::path append_csv;   // empty -> do not write
  bool quiet = false;
};

std::vector<MetricsRow> run_eval(const EvalOptions& opt);

struct AblateOptions {
  std::string axis;  // "where" (guide block 1..4) | "when" (freq 5/10/15)
  std::filesystem::path data_root;
  std::filesystem::path out;  // receives runs/ and the table CSV
  TrainConfig base;           // mode forced to Xai
  bool quiet = false;
};

struct AblationTable {
  std::string axis;
  std::vector<std::string> cells;    // column names, e.g. block1..block4
  std::vector<std::string> domains;  // row names
  std::vector<std::vector<double>> accuracy;  // [domain][cell]
};

AblationTable run_ablation(const AblateOptions& opt);

struct DomainEvidenceOptions {
  std::filesystem::path data_a;  // class 0
  std::filesystem::path data_b;  // class 1
  std::filesystem::path out;
  int epochs = 10;
  uint64_t seed = 0;
  double learning_rate = 1e-3;
  int batch_size = 32;
  double holdout_fraction = 0.2;
  bool quiet = false;
};

struct DomainEvidenceResult {
  double test_accuracy = 0.0;
  int64_t test_count = 0;
  std::filesystem::path out;
};

// Trains a 2-class domain discriminator (A -> 0, B -> 1) on an 80/20 split,
// then writes GradCAM maps for both class hypotheses for every held-out
// image: <id>_class0.pgm and <id>_class1.pgm, with the id mapping in
// index.csv and the label mapping in manifest.txt.
DomainEvidenceResult run_domain_evidence(const DomainEvidenceOptions& opt);

struct ReportOptions {
  std::filesystem::path runs_root;
  std::filesystem::path out;
  int window = 4;
  bool quiet = false;
};

struct ReportResult {
  std::vector<BarStat> bars;
  std::filesystem::path summary_csv;
};

// Aggregates finished runs (manifest has a `finished` stamp): summary CSV of
// last-window mean accuracy with min/max whiskers across seeds, a grouped
// bar chart, and a pointing-hits-over-epochs line chart.
ReportResult run_report(const ReportOptions& opt);

struct SaliencyDumpOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data_dir;
  std::filesystem::path out;
  int block = 0;  // 0 = last
  int limit = 16;
  bool quiet = false;
};

// Writes true-class saliency maps for the first `limit` examples as 64x64
// min-max normalized PGMs, and reports the pointing-game score over them.
EvalResult run_saliency_dump(const SaliencyDumpOptions& opt);

}  // namespace salguide
