#include "salguide/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "salguide/errors.hpp"
#include "salguide/rng.hpp"
#include "salguide/saliency.hpp"

namespace salguide {

namespace fs = std::filesystem;

namespace {

std::string timestamp_utc() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string config_hash(const TrainConfig& cfg, const fs::path& data_root) {
  std::ostringstream os;
  os << train_mode_name(cfg.mode) << '|' << cfg.epochs << '|' << cfg.learning_rate << '|'
     << cfg.batch_size << '|' << cfg.freq << '|' << cfg.guide_block << '|' << cfg.seed << '|'
     << data_root.string();
  char hex[24];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(hash_str(os.str().c_str())));
  return hex;
}

void write_manifest(const fs::path& run_dir, const std::string& run_id, const TrainConfig& cfg,
                    const fs::path& data_root, const std::string& started,
                    const std::string& finished) {
  std::ofstream os(run_dir / "manifest.txt", std::ios::trunc);
  if (!os) throw DataError("cannot write " + (run_dir / "manifest.txt").string());
  os << "run_id " << run_id << "\n"
     << "mode " << train_mode_name(cfg.mode) << "\n"
     << "seed " << cfg.seed << "\n"
     << "epochs " << cfg.epochs << "\n"
     << "learning_rate " << cfg.learning_rate << "\n"
     << "batch_size " << cfg.batch_size << "\n"
     << "freq " << cfg.freq << "\n"
     << "guide_block " << cfg.guide_block << "\n"
     << "data_root " << data_root.string() << "\n"
     << "config_hash " << config_hash(cfg, data_root) << "\n"
     << "started " << started << "\n";
  if (!finished.empty()) os << "finished " << finished << "\n";
  if (!os) throw DataError("write failed: " + (run_dir / "manifest.txt").string());
}

int resolve_block(const ModelState& state, int block) {
  if (block == 0) return state.config.num_blocks();
  if (block < 0 || block > state.config.num_blocks())
    throw UsageError("block " + std::to_string(block) + " out of range");
  return block;
}

// True-class saliency PGMs (image-sized) for the first `limit` examples;
// returns the pointing score over the dumped subset.
EvalResult dump_maps(const ModelState& state, const Dataset& ds, int block, const fs::path& dir,
                     int64_t limit, const std::string& prefix) {
  EvalResult res;
  const int64_t n = std::min<int64_t>(limit, static_cast<int64_t>(ds.examples.size()));
  const auto [bh, bw] = state.config.block_extent(block);
  for (int64_t start = 0; start < n; start += 32) {
    const int64_t end = std::min(n, start + 32);
    std::vector<int64_t> chunk(static_cast<size_t>(end - start));
    std::iota(chunk.begin(), chunk.end(), start);
    Batch b = make_batch(ds, chunk);
    const std::vector<SaliencyMap> maps = gradcam_batch(state, b.images, b.labels, block);
    for (size_t i = 0; i < maps.size(); ++i) {
      const int64_t id = b.example_ids[i];
      write_saliency_pgm(maps[i], dir / (prefix + std::to_string(id) + ".pgm"), kImageSize,
                         kImageSize);
      const LayerAnnotation ann =
          downscale_annotation(*b.annotations[i], kImageSize, kImageSize, bh, bw);
      if (pointing_hit(maps[i], ann)) ++res.pointing_hits;
      ++res.pointing_total;
    }
  }
  return res;
}

std::string eval_domain_label(const DatasetMeta& meta) {
  return meta.domain == "source" ? meta.domain + "-" + meta.split : meta.domain;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void run_gen_data(const GenDataOptions& opt) {
  if (opt.out.empty()) throw UsageError("gen-data needs an output directory");
  if (opt.train_per_class < 1 || opt.val_per_class < 1 || opt.test_per_class < 1)
    throw UsageError("per-class counts must be >= 1");
  if (fs::exists(opt.out) && !fs::is_empty(opt.out) && !opt.force)
    throw DataError("output directory " + opt.out.string() +
                    " is not empty (pass --force to overwrite)");
  fs::create_directories(opt.out);

  const DomainSpec src = DomainSpec::source(opt.bias);
  struct Job {
    DomainSpec domain;
    std::string split;
    int per_class;
  };
  std::vector<Job> jobs = {{src, "train", opt.train_per_class}, {src, "val", opt.val_per_class}};
  for (const DomainSpec& t : DomainSpec::default_targets())
    jobs.push_back({t, "test", opt.test_per_class});
  for (const Job& j : jobs) {
    const Dataset ds = generate_split(j.domain, j.split, j.per_class, opt.seed);
    const fs::path dir = opt.out / j.domain.name / j.split;
    fs::create_directories(dir);
    write_dataset(ds, dir);
    std::printf("wrote %s (%lld examples)\n", dir.c_str(),
                static_cast<long long>(ds.meta.count));
  }
}

RunResult run_training(const TrainRunOptions& opt) {
  TrainConfig cfg = opt.config;
  cfg.validate();
  const std::string run_id =
      opt.run_id.empty()
          ? std::string(train_mode_name(cfg.mode)) + "-seed" + std::to_string(cfg.seed)
          : opt.run_id;

  const Dataset train_set = read_dataset(opt.data_root / "source" / "train");
  const Dataset val_set = read_dataset(opt.data_root / "source" / "val");
  std::vector<std::pair<std::string, fs::path>> targets;
  if (opt.eval_targets && opt.target_window > 0) {
    for (const DomainSpec& t : DomainSpec::default_targets()) {
      const fs::path p = opt.data_root / t.name / "test";
      if (fs::exists(p / "manifest.csv")) targets.push_back({t.name, p});
    }
  }

  const fs::path run_dir = opt.runs_root / run_id;
  fs::create_directories(run_dir / "saliency");
  const fs::path metrics_path = run_dir / "metrics.csv";
  fs::remove(metrics_path);  // a rerun under the same id starts clean

  ModelConfig mc = ModelConfig::standard(train_set.meta.num_classes,
                                         derive_seed(cfg.seed, {hash_str("init")}));
  ModelState state = init_model(mc);
  const int block = cfg.resolved_block(mc);

  const std::string started = timestamp_utc();
  write_manifest(run_dir, run_id, cfg, opt.data_root, started, "");

  RunResult res;
  res.run_id = run_id;
  res.run_dir = run_dir;
  std::vector<TraceEntry> trace;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& em, const ModelState& st) {
    std::vector<MetricsRow> rows;
    rows.push_back({run_id, em.epoch, "source-val", em.val_accuracy, em.pointing_hits,
                    em.pointing_total, em.val_loss});
    if (em.epoch > cfg.epochs - opt.target_window) {
      for (const auto& [name, path] : targets) {
        const Dataset tds = read_dataset(path);
        const EvalResult ev = evaluate(st, tds, block, cfg.batch_size, false);
        rows.push_back({run_id, em.epoch, name, ev.accuracy, 0, 0, ev.mean_loss});
      }
    }
    append_metrics_csv(metrics_path, rows);
    res.rows.insert(res.rows.end(), rows.begin(), rows.end());
    if (opt.checkpoint_every > 0 && em.epoch % opt.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_ep%03d.bin", em.epoch);
      save_checkpoint(st, run_dir / name);
    }
    if (!opt.quiet)
      std::printf("[%s] epoch %3d/%d  loss %.4f  val-acc %.4f  pointing %lld/%lld\n",
                  run_id.c_str(), em.epoch, cfg.epochs, em.train_loss, em.val_accuracy,
                  static_cast<long long>(em.pointing_hits),
                  static_cast<long long>(em.pointing_total));
  };

  res.history = train(state, train_set, val_set, cfg, &trace, hooks);
  save_checkpoint(state, run_dir / "ckpt_final.bin");
  write_trace_csv(run_dir / "trace.csv", trace);
  if (opt.saliency_dump_count > 0)
    dump_maps(state, val_set, block, run_dir / "saliency", opt.saliency_dump_count, "val_");
  write_manifest(run_dir, run_id, cfg, opt.data_root, started, timestamp_utc());
  return res;
}

std::vector<MetricsRow> run_eval(const EvalOptions& opt) {
  if (opt.data_dirs.empty()) throw UsageError("eval needs at least one dataset directory");
  if (opt.batch_size < 1) throw UsageError("batch size must be >= 1");
  const ModelState state = load_checkpoint(opt.checkpoint);
  const int block = resolve_block(state, opt.block);
  const std::string run_id = opt.checkpoint.stem().string();
  std::vector<MetricsRow> rows;
  for (const fs::path& dir : opt.data_dirs) {
    const Dataset ds = read_dataset(dir);
    const EvalResult ev = evaluate(state, ds, block, opt.batch_size, opt.with_pointing);
    MetricsRow row{run_id,      opt.epoch_label,  eval_domain_label(ds.meta),
                   ev.accuracy, ev.pointing_hits, ev.pointing_total,
                   ev.mean_loss};
    if (!opt.quiet) {
      std::printf("%-12s accuracy %.4f  loss %.4f", row.domain.c_str(), ev.accuracy,
                  ev.mean_loss);
      if (opt.with_pointing)
        std::printf("  pointing %lld/%lld", static_cast<long long>(ev.pointing_hits),
                    static_cast<long long>(ev.pointing_total));
      std::printf("\n");
    }
    rows.push_back(std::move(row));
  }
  if (!opt.append_csv.empty()) append_metrics_csv(opt.append_csv, rows);
  return rows;
}

AblationTable run_ablation(const AblateOptions& opt) {
  if (opt.axis != "where" && opt.axis != "when")
    throw UsageError("--axis must be 'where' or 'when'");
  TrainConfig base = opt.base;
  base.mode = TrainMode::Xai;

  AblationTable table;
  table.axis = opt.axis;
  std::vector<TrainConfig> cells;
  if (opt.axis == "where") {
    for (int b = 1; b <= 4; ++b) {
      TrainConfig c = base;
      c.guide_block = b;
      cells.push_back(c);
      table.cells.push_back("block" + std::to_string(b));
    }
  } else {
    for (int f : {5, 10, 15}) {
      TrainConfig c = base;
      c.freq = f;
      cells.push_back(c);
      table.cells.push_back("freq" + std::to_string(f));
    }
  }
  for (const DomainSpec& t : DomainSpec::default_targets()) table.domains.push_back(t.name);
  table.accuracy.assign(table.domains.size(),
                        std::vector<double>(cells.size(),
                                            std::numeric_limits<double>::quiet_NaN()));

  for (size_t ci = 0; ci < cells.size(); ++ci) {
    TrainRunOptions ro;
    ro.data_root = opt.data_root;
    ro.runs_root = opt.out / "runs";
    ro.run_id = "ablate-" + opt.axis + "-" + table.cells[ci];
    ro.config = cells[ci];
    ro.target_window = 1;
    ro.checkpoint_every = 0;
    ro.saliency_dump_count = 0;
    ro.quiet = opt.quiet;
    const RunResult rr = run_training(ro);
    for (const MetricsRow& row : rr.rows) {
      if (row.epoch != cells[ci].epochs || row.domain == "source-val") continue;
      const auto it = std::find(table.domains.begin(), table.domains.end(), row.domain);
      if (it != table.domains.end())
        table.accuracy[static_cast<size_t>(it - table.domains.begin())][ci] = row.accuracy;
    }
  }
  for (size_t di = 0; di < table.domains.size(); ++di)
    for (size_t ci = 0; ci < cells.size(); ++ci)
      if (std::isnan(table.accuracy[di][ci]))
        throw DataError("ablation cell " + table.cells[ci] + "/" + table.domains[di] +
                        " missing — are all six target test sets present?");

  fs::create_directories(opt.out);
  const fs::path csv = opt.out / ("ablation_" + opt.axis + ".csv");
  {
    std::ofstream os(csv, std::ios::trunc);
    if (!os) throw DataError("cannot write " + csv.string());
    os << "domain";
    for (const std::string& c : table.cells) os << ',' << c;
    os << "\n";
    for (size_t di = 0; di < table.domains.size(); ++di) {
      os << table.domains[di];
      for (size_t ci = 0; ci < cells.size(); ++ci) os << ',' << fmt6(table.accuracy[di][ci]);
      os << "\n";
    }
    if (!os) throw DataError("write failed: " + csv.string());
  }
  if (!opt.quiet) {
    std::printf("%-10s", "domain");
    for (const std::string& c : table.cells) std::printf(" %9s", c.c_str());
    std::printf("\n");
    for (size_t di = 0; di < table.domains.size(); ++di) {
      std::printf("%-10s", table.domains[di].c_str());
      for (size_t ci = 0; ci < cells.size(); ++ci)
        std::printf(" %9.4f", table.accuracy[di][ci]);
      std::printf("\n");
    }
  }
  return table;
}

DomainEvidenceResult run_domain_evidence(const DomainEvidenceOptions& opt) {
  if (opt.epochs < 1) throw UsageError("epochs must be >= 1");
  if (!(opt.holdout_fraction > 0.0 && opt.holdout_fraction < 1.0))
    throw UsageError("holdout fraction must be in (0,1)");
  const Dataset a = read_dataset(opt.data_a);
  const Dataset b = read_dataset(opt.data_b);

  Dataset all;
  all.meta.domain = a.meta.domain + "+" + b.meta.domain;
  all.meta.split = "mix";
  all.meta.num_classes = 2;
  all.meta.seed = opt.seed;
  struct Origin {
    std::string domain;
    int64_t source_id;
  };
  std::vector<Origin> origin;
  for (const Dataset* src : {&a, &b}) {
    const int label = src == &a ? 0 : 1;
    for (const Example& ex : src->examples) {
      Example copy = ex;
      copy.label = label;
      copy.id = static_cast<int64_t>(all.examples.size());
      origin.push_back({src->meta.domain, ex.id});
      all.examples.push_back(std::move(copy));
    }
  }
  all.meta.count = static_cast<int64_t>(all.examples.size());

  std::vector<int64_t> idx(all.examples.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng holdout_rng(derive_seed(opt.seed, {hash_str("holdout")}));
  holdout_rng.shuffle(idx);
  const int64_t test_n = std::max<int64_t>(
      1, std::llround(static_cast<double>(idx.size()) * opt.holdout_fraction));

  Dataset test_ds, train_ds;
  test_ds.meta = all.meta;
  test_ds.meta.split = "test";
  train_ds.meta = all.meta;
  train_ds.meta.split = "train";
  for (size_t i = 0; i < idx.size(); ++i) {
    Dataset& dst = static_cast<int64_t>(i) < test_n ? test_ds : train_ds;
    dst.examples.push_back(all.examples[static_cast<size_t>(idx[i])]);
  }
  test_ds.meta.count = static_cast<int64_t>(test_ds.examples.size());
  train_ds.meta.count = static_cast<int64_t>(train_ds.examples.size());

  ModelConfig mc = ModelConfig::standard(2, derive_seed(opt.seed, {hash_str("init")}));
  ModelState state = init_model(mc);
  TrainConfig cfg;
  cfg.epochs = opt.epochs;
  cfg.learning_rate = opt.learning_rate;
  cfg.batch_size = opt.batch_size;
  cfg.mode = TrainMode::Standard;
  cfg.seed = opt.seed;
  TrainHooks hooks;
  if (!opt.quiet)
    hooks.on_epoch = [&](const EpochMetrics& em, const ModelState&) {
      std::printf("[domain-evidence] epoch %d/%d  loss %.4f  test-acc %.4f\n", em.epoch,
                  cfg.epochs, em.train_loss, em.val_accuracy);
    };
  train(state, train_ds, test_ds, cfg, nullptr, hooks);
  const EvalResult fin = evaluate(state, test_ds, mc.num_blocks(), cfg.batch_size, false);

  fs::create_directories(opt.out);
  {
    std::ofstream os(opt.out / "manifest.txt", std::ios::trunc);
    if (!os) throw DataError("cannot write " + (opt.out / "manifest.txt").string());
    os << "class0 " << opt.data_a.string() << "\n"
       << "class1 " << opt.data_b.string() << "\n"
       << "seed " << opt.seed << "\n"
       << "epochs " << opt.epochs << "\n"
       << "test_count " << test_ds.meta.count << "\n"
       << "test_accuracy " << fmt6(fin.accuracy) << "\n"
       << "finished " << timestamp_utc() << "\n";
  }
  {
    std::ofstream os(opt.out / "index.csv", std::ios::trunc);
    if (!os) throw DataError("cannot write " + (opt.out / "index.csv").string());
    os << "id,domain,label,source_example_id\n";
    for (const Example& ex : test_ds.examples) {
      const Origin& o = origin[static_cast<size_t>(ex.id)];
      os << ex.id << ',' << o.domain << ',' << ex.label << ',' << o.source_id << "\n";
    }
  }

  const int last = mc.num_blocks();
  for (int64_t start = 0; start < test_ds.meta.count; start += opt.batch_size) {
    const int64_t end = std::min(test_ds.meta.count, start + opt.batch_size);
    std::vector<int64_t> chunk(static_cast<size_t>(end - start));
    std::iota(chunk.begin(), chunk.end(), start);
    Batch batch = make_batch(test_ds, chunk);
    for (int cls = 0; cls < 2; ++cls) {
      const std::vector<int> ids(static_cast<size_t>(end - start), cls);
      const std::vector<SaliencyMap> maps = gradcam_batch(state, batch.images, ids, last);
      for (size_t i = 0; i < maps.size(); ++i) {
        const fs::path p = opt.out / (std::to_string(batch.example_ids[i]) + "_class" +
                                      std::to_string(cls) + ".pgm");
        write_saliency_pgm(maps[i], p, kImageSize, kImageSize);
      }
    }
  }
  if (!opt.quiet)
    std::printf("[domain-evidence] test accuracy %.4f over %lld held-out images\n",
                fin.accuracy, static_cast<long long>(test_ds.meta.count));
  return {fin.accuracy, test_ds.meta.count, opt.out};
}

ReportResult run_report(const ReportOptions& opt) {
  if (!fs::exists(opt.runs_root)) throw DataError("no such runs directory: " +
                                                  opt.runs_root.string());
  std::vector<RunSeries> series;
  for (const auto& entry : fs::directory_iterator(opt.runs_root)) {
    if (!entry.is_directory()) continue;
    const fs::path mf = entry.path() / "manifest.txt";
    const fs::path csv = entry.path() / "metrics.csv";
    if (!fs::exists(mf) || !fs::exists(csv)) continue;
    RunSeries rs;
    bool finished = false;
    std::ifstream is(mf);
    std::string key;
    while (is >> key) {
      std::string rest;
      std::getline(is, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
      if (key == "run_id") rs.run_id = rest;
      else if (key == "mode") rs.mode = rest;
      else if (key == "seed") rs.seed = std::strtoull(rest.c_str(), nullptr, 10);
      else if (key == "finished") finished = !rest.empty();
    }
    if (!finished) {
      if (!opt.quiet)
        std::printf("[report] skipping unfinished run %s\n", entry.path().c_str());
      continue;
    }
    rs.rows = read_metrics_csv(csv);
    series.push_back(std::move(rs));
  }
  if (series.empty()) throw DataError("no finished runs under " + opt.runs_root.string());
  std::sort(series.begin(), series.end(),
            [](const RunSeries& x, const RunSeries& y) { return x.run_id < y.run_id; });

  const std::vector<BarStat> bars = aggregate_last_epochs(series, opt.window);
  fs::create_directories(opt.out);
  const fs::path summary = opt.out / "summary.csv";
  {
    std::ofstream os(summary, std::ios::trunc);
    if (!os) throw DataError("cannot write " + summary.string());
    os << "mode,domain,mean_accuracy,min_accuracy,max_accuracy,runs,epochs_averaged\n";
    for (const BarStat& s : bars)
      os << s.mode << ',' << s.domain << ',' << fmt6(s.mean) << ',' << fmt6(s.lo) << ','
         << fmt6(s.hi) << ',' << s.runs << ',' << s.epochs_averaged << "\n";
    if (!os) throw DataError("write failed: " + summary.string());
  }
  write_bar_chart_svg(opt.out / "accuracy_bars.svg",
                      "mean accuracy over the last " + std::to_string(opt.window) +
                          " evaluated epochs (whiskers: min/max across runs)",
                      bars);

  // Fig. 6 analogue: pointing hits on source-val per epoch, averaged per mode.
  std::map<std::string, std::map<int, std::pair<double, int>>> hits;
  for (const RunSeries& rs : series)
    for (const MetricsRow& r : rs.rows)
      if (r.domain == "source-val" && r.pointing_total > 0) {
        auto& slot = hits[rs.mode][r.epoch];
        slot.first += static_cast<double>(r.pointing_hits);
        slot.second += 1;
      }
  std::vector<ChartSeries> hit_series;
  for (auto& [mode, per_epoch] : hits) {
    ChartSeries cs;
    cs.name = mode;
    for (auto& [epoch, slot] : per_epoch)
      cs.points.push_back({static_cast<double>(epoch), slot.first / slot.second});
    hit_series.push_back(std::move(cs));
  }
  write_line_chart_svg(opt.out / "pointing_hits.svg", "pointing-game hits on source-val",
                       "epoch", "hits", hit_series);

  if (!opt.quiet) {
    std::printf("%-8s %-12s %8s %8s %8s %5s %6s\n", "mode", "domain", "mean", "min", "max",
                "runs", "window");
    for (const BarStat& s : bars)
      std::printf("%-8s %-12s %8.4f %8.4f %8.4f %5d %6d\n", s.mode.c_str(), s.domain.c_str(),
                  s.mean, s.lo, s.hi, s.runs, s.epochs_averaged);
  }
  return {bars, summary};
}

EvalResult run_saliency_dump(const SaliencyDumpOptions& opt) {
  if (opt.limit < 1) throw UsageError("limit must be >= 1");
  const ModelState state = load_checkpoint(opt.checkpoint);
  const int block = resolve_block(state, opt.block);
  const Dataset ds = read_dataset(opt.data_dir);
  fs::create_directories(opt.out);
  const EvalResult res = dump_maps(state, ds, block, opt.out, opt.limit, "sal_");
  if (!opt.quiet)
    std::printf("wrote %lld maps to %s, pointing hits %lld/%lld\n",
                static_cast<long long>(res.pointing_total), opt.out.c_str(),
                static_cast<long long>(res.pointing_hits),
                static_cast<long long>(res.pointing_total));
  return res;
}

}  // namespace salguide
