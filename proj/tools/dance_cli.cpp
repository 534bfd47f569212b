// dance: generate, index, train, evaluate, ablate and report.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dance/config.hpp"
#include "dance/dataset.hpp"
#include "dance/manifest.hpp"
#include "dance/nn/checkpoint.hpp"
#include "dance/report.hpp"
#include "dance/trainer.hpp"

namespace fs = std::filesystem;
using namespace dance;

namespace {

struct Corpus {
  std::vector<Sample> train, test;
  ComplexityIndex index;
};

// Loads a manifest and its samples; scores in memory when the manifest has
// not been indexed.
Corpus load(const fs::path& manifest_path) {
  Manifest m = read_manifest(manifest_path);
  const auto all = load_corpus(m);
  Corpus c;
  c.train = select_split(all, "train");
  c.test = select_split(all, "test");
  bool indexed = m.fit.has_value();
  for (const auto& r : m.records) indexed = indexed && r.sc_mean && r.p;
  c.index = indexed ? to_index(m) : build_index(score_samples(all));
  return c;
}

void print_run_summary(const RunResult& r) {
  std::printf("miou %.4f  pixel_acc %.4f  train %.4g FLOPs (%.4g J)  infer %.4g FLOPs/img (%.4g J)  kept %lld/%lld\n",
              r.eval.metrics.miou, r.eval.metrics.pixel_accuracy, static_cast<double>(r.ledger.training_flops()),
              r.ledger.training_energy(), r.eval.inference_flops_per_image, r.eval.inference_energy_per_image,
              static_cast<long long>(r.samples_kept), static_cast<long long>(r.samples_seen));
  if (!r.prune_events.empty()) std::printf("%s", prune_report_table(r.prune_report).c_str());
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoull(tok));
  if (out.empty()) throw ConfigError("no seeds given");
  return out;
}

std::string ratio_tag(double r) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "r%02d", static_cast<int>(std::lround(r * 100)));
  return buf;
}

int cmd_report(const fs::path& runs_dir, const fs::path& out, const std::string& manifest, std::string baseline) {
  using namespace dance::report;
  const fs::path figs = out / "figures", tabs = out / "tables";
  const auto runs = load_runs(runs_dir);
  if (!runs.empty()) {
    write_figure(figs, render_tradeoff(runs));
    if (baseline.empty()) {
      baseline = runs.front().run_id;
      for (const auto& r : runs)
        if (configuration_label(r) == "network" && !r.config.value("ans", true)) {
          baseline = r.run_id;
          break;
        }
    }
    write_table(tabs, "improvement", improvement_table(runs, baseline));
    write_table(tabs, "summary", summary_table(runs, baseline));
    std::printf("%zu runs, baseline %s\n", runs.size(), baseline.c_str());
  }
  auto sweep_runs = fs::is_directory(runs_dir / "sweep") ? load_runs(runs_dir / "sweep") : runs;
  if (!sweep_runs.empty()) write_figure(figs, render_prune_sweep(sweep_runs));
  if (fs::exists(runs_dir / "ablation.csv")) {
    const auto rows = parse_ablation_csv(read_file(runs_dir / "ablation.csv"));
    const std::pair<const char*, const char*> studies[] = {
        {"components", "1"}, {"pipelines", "baseline"}, {"indicator", "proposed"}};
    for (const auto& [study, base] : studies) {
      bool any = false;
      for (const auto& r : rows) any = any || r.study == study;
      if (any) write_table(tabs, study, ablation_table(rows, study, base));
    }
  }
  if (!manifest.empty()) write_figure(figs, render_distribution(load(manifest).index));
  if (runs.empty() && sweep_runs.empty() && manifest.empty()) throw InvalidInputError("nothing to report in " + runs_dir.string());
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dance: data and network co-slimming for segmentation"};
  app.require_subcommand(1);

  SynthConfig synth;
  std::string gen_out;
  bool gen_no_index = false;
  auto* gen = app.add_subcommand("generate", "write a synthetic shape corpus");
  gen->add_option("--out", gen_out, "corpus directory")->required();
  gen->add_option("--num-images", synth.num_images);
  gen->add_option("--width", synth.width);
  gen->add_option("--height", synth.height);
  gen->add_option("--classes", synth.num_classes);
  gen->add_option("--min-shapes", synth.min_shapes);
  gen->add_option("--max-shapes", synth.max_shapes);
  gen->add_option("--max-noise", synth.max_noise);
  gen->add_option("--seed", synth.seed);
  gen->add_flag("--no-index", gen_no_index, "skip complexity scoring");

  std::string idx_manifest, idx_out;
  auto* idx = app.add_subcommand("index", "score images and fit the complexity distribution");
  idx->add_option("--manifest", idx_manifest)->required()->check(CLI::ExistingFile);
  idx->add_option("--out", idx_out, "output manifest (default: in place)");

  std::string manifest, config_path, out;
  std::optional<std::uint64_t> seed;
  auto* train = app.add_subcommand("train", "train one configuration and write a run directory");
  train->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  train->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "run directory")->required();
  train->add_option("--seed", seed, "override config seed");

  std::string ev_checkpoint, ev_split = "test", ev_out;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  ev->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", ev_checkpoint)->required()->check(CLI::ExistingFile);
  ev->add_option("--split", ev_split)->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--out", ev_out, "metrics csv (default: stdout)");

  std::string seeds = "0,1,2";
  bool sweep = false;
  auto* ab = app.add_subcommand("ablate", "component, pipeline and indicator studies");
  ab->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  ab->add_option("--config", config_path, "base config; its policy ranges apply")->required()->check(CLI::ExistingFile);
  ab->add_option("--out", out)->required();
  ab->add_option("--seeds", seeds, "comma-separated");
  ab->add_flag("--sweep", sweep, "also sweep prune ratios 0.2..0.8 with and without data slimming (first seed)");

  std::string rep_runs, rep_manifest, rep_baseline;
  auto* rep = app.add_subcommand("report", "figures/ and tables/ from a directory of runs");
  rep->add_option("--runs", rep_runs)->required()->check(CLI::ExistingDirectory);
  rep->add_option("--out", out)->required();
  rep->add_option("--manifest", rep_manifest, "adds the complexity distribution figure");
  rep->add_option("--baseline", rep_baseline, "baseline run id");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      Manifest m = generate_synthetic(synth, gen_out);
      if (!gen_no_index) {
        const ComplexityIndex ci = index_corpus(m);
        write_manifest(fs::path(gen_out) / "manifest.jsonl", m);
        std::printf("indexed: a = %.6g over %zu training images (KS %.4f)\n", ci.fit().scale_a, ci.fit().n_samples,
                    ci.fit().ks_stat);
      }
      std::printf("wrote %zu images to %s\n", m.records.size(), gen_out.c_str());
    } else if (*idx) {
      Manifest m = read_manifest(idx_manifest);
      const ComplexityIndex ci = index_corpus(m);
      write_manifest(idx_out.empty() ? fs::path(idx_manifest) : fs::path(idx_out), m);
      std::printf("a = %.6g over %zu training images (KS %.4f)\n", ci.fit().scale_a, ci.fit().n_samples,
                  ci.fit().ks_stat);
    } else if (*train) {
      RunConfig cfg = load_run_config(config_path);
      if (seed) cfg.seed = *seed;
      const Corpus c = load(manifest);
      const RunResult r = run(cfg, c.train, c.test, &c.index);
      write_run_outputs(out, r, cfg);
      print_run_summary(r);
    } else if (*ev) {
      const RunConfig cfg = load_run_config(config_path);
      const Corpus c = load(manifest);
      const nn::SegNet net = nn::load_checkpoint(ev_checkpoint);
      RunResult r{net, evaluate(net, ev_split == "test" ? c.test : c.train, &c.index, cfg.policy, cfg.indicator,
                                cfg.seed, cfg.cost),
                  cost::CostLedger(cfg.cost), pruning_report(net), {}, {}, {}, 0, 0, 0, 0};
      const std::string csv = metrics_csv(r);
      if (ev_out.empty()) std::cout << csv;
      else write_text(ev_out, csv);
    } else if (*ab) {
      const RunConfig base = load_run_config(config_path);
      const Corpus c = load(manifest);
      const auto sv = parse_seeds(seeds);
      fs::create_directories(out);
      const auto rows = ablation_suite(base, c.train, c.test, c.index, sv, [](const AblationRow& r) {
        std::fprintf(stderr, "%-10s %-20s seed %llu  miou %.4f  train %.4g  infer %.4g\n", r.study.c_str(),
                     r.name.c_str(), static_cast<unsigned long long>(r.seed), r.miou, r.train_flops, r.infer_flops);
      });
      write_text(fs::path(out) / "ablation.csv", ablation_csv(rows));
      if (sweep) {
        for (double ratio : {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8})
          for (bool slim : {false, true}) {
            RunConfig cfg = with_toggles(base, {true, slim, slim, slim, false});
            cfg.seed = sv.front();
            cfg.prune_ratio = ratio;
            const RunResult r = run(cfg, c.train, c.test, &c.index);
            const std::string id = std::string(slim ? "dance_" : "ans_") + ratio_tag(ratio);
            write_run_outputs(fs::path(out) / "sweep" / id, r, cfg);
            std::fprintf(stderr, "sweep %s  head pruned %.3f\n", id.c_str(),
                         r.prune_report.group(LayerGroup::AggregationHead).channel_fraction());
          }
      }
      std::printf("wrote %s\n", (fs::path(out) / "ablation.csv").string().c_str());
    } else if (*rep) {
      return cmd_report(rep_runs, out, rep_manifest, rep_baseline);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
