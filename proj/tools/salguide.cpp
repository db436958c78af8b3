#include <cstdio>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "salguide/errors.hpp"
#include "salguide/harness.hpp"

using namespace salguide;

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training frees and reallocates the same large activation buffers every
  // batch; keep them on the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"saliency-guided training on a synthetic domain-generalization benchmark"};
  app.require_subcommand(1);

  GenDataOptions gen_opt;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "generate source train/val and six target test sets");
  gen->add_option("--out", gen_out, "output root directory")->required();
  gen->add_option("--seed", gen_opt.seed, "generator seed");
  gen->add_option("--bias", gen_opt.bias, "source class<->texture pairing rate (default 1.0)")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--n-per-class", gen_opt.train_per_class, "train images per class (default 200)");
  gen->add_option("--val-per-class", gen_opt.val_per_class, "val images per class (default 50)");
  gen->add_option("--test-per-class", gen_opt.test_per_class,
                  "target test images per class (default 50)");
  gen->add_flag("--force", gen_opt.force, "overwrite a non-empty output directory");

  TrainRunOptions train_opt;
  std::string train_mode = "noxai", train_data, train_out, train_run_id;
  bool no_target_eval = false;
  auto* tr = app.add_subcommand("train", "train one run into <out>/<run-id>/");
  tr->add_option("--mode", train_mode, "noxai|xai|aug|xai-aug")
      ->check(CLI::IsMember({"noxai", "xai", "aug", "xai-aug"}));
  tr->add_option("--data", train_data, "dataset root from gen-data")->required();
  tr->add_option("--out", train_out, "runs directory")->required();
  tr->add_option("--run-id", train_run_id, "run directory name (default <mode>-seed<seed>)");
  tr->add_option("--epochs", train_opt.config.epochs, "training epochs (default 50)");
  tr->add_option("--lr", train_opt.config.learning_rate, "learning rate (default 1e-3)");
  tr->add_option("--batch", train_opt.config.batch_size, "batch size (default 32)");
  tr->add_option("--freq", train_opt.config.freq, "guided-epoch frequency (default 5)");
  tr->add_option("--block", train_opt.config.guide_block, "guided block, 0 = last");
  tr->add_option("--seed", train_opt.config.seed, "training seed");
  tr->add_option("--ckpt-every", train_opt.checkpoint_every,
                 "periodic checkpoint interval (default 5, 0 = final only)");
  tr->add_option("--target-window", train_opt.target_window,
                 "evaluate targets on this many final epochs (default 4)");
  tr->add_flag("--no-target-eval", no_target_eval, "skip target test evaluation");
  tr->add_option("--saliency-dump", train_opt.saliency_dump_count,
                 "validation saliency maps to dump at the end (default 8)");
  tr->add_flag("--quiet", train_opt.quiet, "suppress per-epoch log lines");

  EvalOptions eval_opt;
  std::string eval_ckpt, eval_csv;
  std::vector<std::string> eval_dirs;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on dataset directories");
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  ev->add_option("--data", eval_dirs, "dataset directories")->required()->expected(-1);
  ev->add_option("--block", eval_opt.block, "saliency block for --pointing, 0 = last");
  ev->add_option("--batch", eval_opt.batch_size, "batch size (default 32)");
  ev->add_flag("--pointing", eval_opt.with_pointing, "also play the pointing game");
  ev->add_option("--epoch", eval_opt.epoch_label, "epoch column for emitted rows");
  ev->add_option("--csv", eval_csv, "append rows to this metrics CSV");
  ev->add_flag("--quiet", eval_opt.quiet, "suppress the per-domain summary");

  AblateOptions ab_opt;
  std::string ab_data, ab_out;
  ab_opt.base.epochs = 30;
  auto* ab = app.add_subcommand("ablate", "guided-training ablation over blocks or frequencies");
  ab->add_option("--axis", ab_opt.axis, "where (blocks 1..4) | when (freq 5/10/15)")
      ->required()
      ->check(CLI::IsMember({"where", "when"}));
  ab->add_option("--data", ab_data, "dataset root from gen-data")->required();
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--epochs", ab_opt.base.epochs, "epochs per cell (default 30)");
  ab->add_option("--lr", ab_opt.base.learning_rate, "learning rate");
  ab->add_option("--batch", ab_opt.base.batch_size, "batch size");
  ab->add_option("--freq", ab_opt.base.freq, "base frequency for the where axis");
  ab->add_option("--seed", ab_opt.base.seed, "training seed");
  ab->add_flag("--quiet", ab_opt.quiet, "suppress per-epoch log lines");

  DomainEvidenceOptions de_opt;
  std::vector<std::string> de_domains;
  std::string de_out;
  auto* de = app.add_subcommand(
      "domain-evidence", "train a 2-class domain discriminator and dump per-class saliency");
  de->add_option("--domains", de_domains, "two dataset directories: class0,class1")
      ->required()
      ->expected(2)
      ->delimiter(',');
  de->add_option("--out", de_out, "output directory")->required();
  de->add_option("--epochs", de_opt.epochs, "training epochs (default 10)");
  de->add_option("--seed", de_opt.seed, "seed");
  de->add_option("--lr", de_opt.learning_rate, "learning rate");
  de->add_option("--batch", de_opt.batch_size, "batch size");
  de->add_option("--holdout", de_opt.holdout_fraction, "held-out test fraction (default 0.2)");
  de->add_flag("--quiet", de_opt.quiet, "suppress log lines");

  ReportOptions rp_opt;
  std::string rp_runs, rp_out;
  auto* rp = app.add_subcommand("report", "aggregate finished runs into charts and a summary CSV");
  rp->add_option("--runs", rp_runs, "runs directory")->required();
  rp->add_option("--out", rp_out, "output directory")->required();
  rp->add_option("--window", rp_opt.window, "final epochs to average (default 4)");
  rp->add_flag("--quiet", rp_opt.quiet, "suppress the summary table");

  SaliencyDumpOptions sd_opt;
  std::string sd_ckpt, sd_data, sd_out;
  auto* sd = app.add_subcommand("saliency-dump", "write true-class saliency maps as PGMs");
  sd->add_option("--checkpoint", sd_ckpt, "checkpoint file")->required();
  sd->add_option("--data", sd_data, "dataset directory")->required();
  sd->add_option("--out", sd_out, "output directory")->required();
  sd->add_option("--block", sd_opt.block, "saliency block, 0 = last");
  sd->add_option("--limit", sd_opt.limit, "examples to dump (default 16)");
  sd->add_flag("--quiet", sd_opt.quiet, "suppress the summary line");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      gen_opt.out = gen_out;
      run_gen_data(gen_opt);
    } else if (*tr) {
      train_opt.config.mode = train_mode_from(train_mode);
      train_opt.data_root = train_data;
      train_opt.runs_root = train_out;
      train_opt.run_id = train_run_id;
      train_opt.eval_targets = !no_target_eval;
      run_training(train_opt);
    } else if (*ev) {
      eval_opt.checkpoint = eval_ckpt;
      for (const std::string& d : eval_dirs) eval_opt.data_dirs.push_back(d);
      eval_opt.append_csv = eval_csv;
      run_eval(eval_opt);
    } else if (*ab) {
      ab_opt.data_root = ab_data;
      ab_opt.out = ab_out;
      run_ablation(ab_opt);
    } else if (*de) {
      de_opt.data_a = de_domains.at(0);
      de_opt.data_b = de_domains.at(1);
      de_opt.out = de_out;
      run_domain_evidence(de_opt);
    } else if (*rp) {
      rp_opt.runs_root = rp_runs;
      rp_opt.out = rp_out;
      run_report(rp_opt);
    } else if (*sd) {
      sd_opt.checkpoint = sd_ckpt;
      sd_opt.data_dir = sd_data;
      sd_opt.out = sd_out;
      run_saliency_dump(sd_opt);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
