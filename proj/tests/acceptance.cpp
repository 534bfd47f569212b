// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dance/complexity.hpp"
#include "dance/config.hpp"
#include "dance/cost.hpp"
#include "dance/dataset.hpp"
#include "dance/dataslim.hpp"
#include "dance/distribution.hpp"
#include "dance/prune.hpp"
#include "dance/trainer.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace dance;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kData = DANCE_DATA_DIR;
const std::string kConfigs = DANCE_CONFIG_DIR;

int failures = 0;

void report(int id, bool pass, const std::string& what) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", what.c_str());
  std::fflush(stdout);
  failures += !pass;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ------------------------------------------------------------------ 1

void criterion_1() {
  const auto t0 = Clock::now();
  SplitMix64 rng(1);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const int w = 3 + static_cast<int>(rng.below(14)), h = 3 + static_cast<int>(rng.below(14));
    const RasterImage img = oracle::random_image(rng, w, h, 1);
    const double got = spatial_complexity(img).sc_mean, ref = oracle::sobel_mean(img);
    worst = std::max(worst, std::abs(got - ref) / std::max(std::abs(ref), 1e-300));
  }
  const double t = seconds_since(t0);
  report(1, worst <= 1e-12 && t < 5.0, fmt("SC oracle: worst rel err %.3g (<= 1e-12), %.3f s (< 5 s)", worst, t));
}

// ------------------------------------------------------------------ 2, 3

void criterion_2() {
  const auto t0 = Clock::now();
  SplitMix64 rng(2);
  std::vector<double> x(10000);
  for (double& v : x) v = oracle::maxwell_draw(rng, 2.0);
  const double a = fit_maxwell(x).scale_a;
  const double rel = std::abs(a - 2.0) / 2.0;
  double worst = 0.0;
  for (int i = 1; i <= 100; ++i) {
    const double xi = 0.1 * i;
    const double num = oracle::simpson([](double t) { return maxwell_pdf(t, 2.0); }, 0.0, xi, 2000);
    worst = std::max(worst, std::abs(num - maxwell_cdf(xi, 2.0)));
  }
  const double t = seconds_since(t0);
  report(2, rel <= 0.02 && worst <= 1e-6 && t < 5.0,
         fmt("Maxwell fit: a = %.5f (rel err %.4f <= 0.02); cdf vs integrated pdf worst %.3g (<= 1e-6); %.3f s", a,
             rel, worst, t));
}

void criterion_3() {
  SplitMix64 rng(3);
  std::vector<double> x(1000);
  for (double& v : x) v = oracle::maxwell_draw(rng, 1.3);
  const MaxwellFit f = fit_maxwell(x);
  std::vector<double> p;
  for (double v : x) p.push_back(complexity_to_p(v, f));
  const double ks = oracle::ks_uniform(p);
  report(3, ks < 0.05, fmt("PIT uniformity: KS %.4f (< 0.05), n = 1000", ks));
}

// ------------------------------------------------------------------ 4

void criterion_4() {
  bool ok = true;
  const SlimPolicy d;
  for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    ok = ok && downsample_scale(p, d) == 0.5 + 0.5 * p;
    ok = ok && drop_probability(p, d) == 1.0 - p;
    ok = ok && loss_weight(p, d) == p;
  }
  int variants = 0;
  for (Range r : {Range{1.0, 2.0}, Range{1.0, 4.0}, Range{0.0, 1.0}}) {
    SlimPolicy s;
    s.weight_range = r;
    ok = ok && loss_weight(0.0, s) == r.lo && loss_weight(1.0, s) == r.hi;
    ++variants;
  }
  for (Range r : {Range{0.4, 0.6}, Range{0.25, 0.75}, Range{0.0, 1.0}}) {
    SlimPolicy s;
    s.drop_range = r;
    ok = ok && drop_probability(0.0, s) == r.hi && drop_probability(1.0, s) == r.lo;
    ++variants;
  }
  SlimPolicy s;
  s.drop_range = {0.4, 0.6};
  ok = ok && drop_probability(0.5, s) == 0.5;
  s.drop_range = {0.25, 0.75};
  ok = ok && drop_probability(1.0, s) == 0.25;
  s.weight_range = {1.0, 2.0};
  ok = ok && loss_weight(0.5, s) == 1.5;
  s.weight_range = {1.0, 4.0};
  ok = ok && loss_weight(0.0, s) == 1.0;
  report(4, ok, fmt("slimming formulas exact at 5 grid points; %d range variants hit their endpoints", variants));
}

// ------------------------------------------------------------------ 5

void criterion_5() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_where;
  std::size_t checked = 0;
  bool degenerate = false;
  auto scan = [&](const std::vector<oracle::GradCheckResult>& rs, const std::string& tag) {
    for (const auto& r : rs) {
      checked += r.checked;
      degenerate = degenerate || r.checked == 0 || r.skipped > r.checked;
      if (r.rel_error > worst) {
        worst = r.rel_error;
        worst_where = tag + ":" + r.layer;
      }
    }
  };
  for (const auto& name : oracle::layer_case_names()) scan(oracle::check_layer_case(name, 1e-3), name);
  scan(oracle::check_full_net(14, 1e-2, 1e-3, 24), "full_net");
  const double t = seconds_since(t0);
  report(5, worst < 1e-4 && !degenerate && t < 60.0,
         fmt("gradient checks (8 layer cases + full net, eps 1e-3): worst rel err %.3g at %s (< 1e-4), %zu entries, "
             "%.1f s",
             worst, worst_where.c_str(), checked, t));
}

// ------------------------------------------------------------------ 6

void criterion_6() {
  const auto r50 = cost::load_arch(kData + "/arch/resnet50.json");
  const auto dl = cost::load_arch(kData + "/arch/deeplabv3plus_resnet50_os16.json");
  const auto conv = cost::FlopConvention::OnePerMac;
  const double g_r50 = cost::arch_flops(r50, 224, 224, conv).total_flops / 1e9;
  const auto c224 = cost::arch_flops(dl, 224, 224, conv);
  const double g_dl = c224.total_flops / 1e9;
  const double g_big = cost::arch_flops(dl, 1024, 2048, conv).total_flops / 1e9;
  const double share = 100.0 * (c224.share(LayerGroup::AggregationHead) + c224.share(LayerGroup::Decoder));
  const double ind = 100.0 * static_cast<double>(cost::indicator_overhead(224, 224, 3, conv)) / c224.total_flops;
  auto within = [](double v, double target) { return std::abs(v - target) <= 0.15 * target; };
  const bool a = within(g_r50, 4.0), b = within(g_dl, 13.3), c = within(g_big, 435.0);
  const bool d = std::abs(share - 52.98) <= 3.0, e = ind <= 0.5;
  report(6, a && b && c && d && e,
         fmt("FLOPs calibration: ResNet50@224 %.3f G [%s]; DeepLabv3+@224 %.3f G [%s]; @2048x1024 %.1f G vs 435 "
             "(%+.1f%%) [%s]; head share %.2f%% [%s]; indicator %.4f%% [%s]",
             g_r50, a ? "ok" : "out", g_dl, b ? "ok" : "out", g_big, 100.0 * (g_big / 435.0 - 1.0), c ? "ok" : "out",
             share, d ? "ok" : "out", ind, e ? "ok" : "out"));
}

// ------------------------------------------------------------------ 7

nn::SegNet random_gamma_net(std::uint64_t seed) {
  nn::SegNetConfig c;
  c.base_width = 8;
  c.num_classes = 3;
  c.seed = seed;
  nn::SegNet net = nn::build_toy_net(c);
  SplitMix64 rng(seed ^ 0x77);
  for (auto& nd : net.nodes) {
    for (double& g : nd.gamma) g = rng.uniform(-1.0, 1.0);
    for (double& b : nd.beta) b = rng.uniform(-0.3, 0.3);
  }
  return net;
}

void criterion_7() {
  bool exact = true, monotone = true, equal = true;
  double worst_gap = 0.0, worst_diff = 0.0;
  int trial = 0;
  for (double r : {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}) {
    nn::SegNet net = random_gamma_net(300 + trial++);
    const PruneOutcome o = prune_channels(net, r);
    const PruneReport rep = pruning_report(net);
    const double gap = std::abs(static_cast<double>(rep.prunable_pruned) - r * rep.prunable_total);
    worst_gap = std::max(worst_gap, gap);
    exact = exact && (gap <= 1.0 || o.floor_bound);

    nn::SegNet zeroed = net;
    for (auto& nd : zeroed.nodes)
      for (std::size_t c = 0; c < nd.mask.size(); ++c)
        if (!nd.mask[c]) nd.gamma[c] = nd.beta[c] = 0.0, nd.mask[c] = 1;
    SplitMix64 rng(31 + trial);
    nn::Tensor x(2, 3, 16, 16);
    for (double& v : x.v) v = rng.uniform();
    const auto a = nn::forward_eval(net, x), b = nn::forward_eval(zeroed, x);
    for (std::size_t i = 0; i < a.v.size(); ++i) worst_diff = std::max(worst_diff, std::abs(a.v[i] - b.v[i]));
  }
  equal = worst_diff <= 1e-10;

  nn::SegNet net = random_gamma_net(400);
  SplitMix64 rng(41);
  std::vector<std::vector<unsigned char>> prev;
  for (const auto& nd : net.nodes) prev.push_back(nd.mask);
  for (double r : plan_schedule(400, 4, 0.8).targets) {
    for (auto& nd : net.nodes)
      for (std::size_t c = 0; c < nd.gamma.size(); ++c)
        if (nd.mask[c]) nd.gamma[c] = rng.uniform(-1.0, 1.0);
    prune_channels(net, r);
    for (std::size_t i = 0; i < net.nodes.size(); ++i)
      for (std::size_t c = 0; c < prev[i].size(); ++c) monotone = monotone && (prev[i][c] || !net.nodes[i].mask[c]);
    for (std::size_t i = 0; i < net.nodes.size(); ++i) prev[i] = net.nodes[i].mask;
  }
  report(7, exact && monotone && equal,
         fmt("pruning: worst |pruned - target| %.2f channels over 0.2..0.8 (<= 1); masks monotone over 4 stages: %s; "
             "masked vs zeroed forward max diff %.3g (<= 1e-10)",
             worst_gap, monotone ? "yes" : "no", worst_diff));
}

// ------------------------------------------------------------------ 8, 9, 10

struct SeedRuns {
  RunResult baseline, ans, dance, inverse;
  double ans_seconds = 0.0, dance_seconds = 0.0;
};

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

void criteria_8_to_10() {
  const auto all = to_samples(generate_images(SynthConfig{}));
  const auto train = select_split(all, "train"), test = select_split(all, "test");
  const ComplexityIndex index = build_index(score_samples(all));
  const RunConfig base_cfg = load_run_config(kConfigs + "/baseline.json");
  const RunConfig ans_cfg = load_run_config(kConfigs + "/ans.json");
  const RunConfig dance_cfg = load_run_config(kConfigs + "/dance.json");

  std::size_t pruned_on = 0, pruned_off = 0, head_total = 0;
  std::vector<double> head_on, head_off, tf_base, tf_dance, if_base, if_dance, m_base, m_dance, m_inv;
  double budget = 0.0;
  for (std::uint64_t seed : {0, 1, 2}) {
    auto with_seed = [&](RunConfig c) {
      c.seed = seed;
      return c;
    };
    auto t0 = Clock::now();
    const RunResult ans = run(with_seed(ans_cfg), train, test, &index);
    budget += seconds_since(t0);
    t0 = Clock::now();
    const RunResult dance = run(with_seed(dance_cfg), train, test, &index);
    budget += seconds_since(t0);
    const RunResult baseline = run(with_seed(base_cfg), train, test, &index);
    RunConfig inv = with_seed(dance_cfg);
    inv.indicator = IndicatorMode::Inverse;
    const RunResult inverse = run(inv, train, test, &index);

    const auto& h_off = ans.prune_report.group(LayerGroup::AggregationHead);
    const auto& h_on = dance.prune_report.group(LayerGroup::AggregationHead);
    head_off.push_back(h_off.channel_fraction());
    head_on.push_back(h_on.channel_fraction());
    pruned_off += h_off.channels_pruned;
    pruned_on += h_on.channels_pruned;
    head_total += h_on.channels_total;
    tf_base.push_back(static_cast<double>(baseline.ledger.training_flops()));
    tf_dance.push_back(static_cast<double>(dance.ledger.training_flops()));
    if_base.push_back(baseline.eval.inference_flops_per_image);
    if_dance.push_back(dance.eval.inference_flops_per_image);
    m_base.push_back(baseline.eval.metrics.miou);
    m_dance.push_back(dance.eval.metrics.miou);
    m_inv.push_back(inverse.eval.metrics.miou);
    std::printf("  seed %llu: head pruned on %.4f off %.4f | mIoU base %.4f dance %.4f inverse %.4f | train FLOPs "
                "%.4g vs %.4g | infer %.4g vs %.4g\n",
                static_cast<unsigned long long>(seed), head_on.back(), head_off.back(), m_base.back(), m_dance.back(),
                m_inv.back(), tf_dance.back(), tf_base.back(), if_dance.back(), if_base.back());
    std::fflush(stdout);
  }

  // Same head width in every run, so comparing summed counts avoids ties decided by rounding.
  report(8, pruned_on > pruned_off && budget < 1800.0,
         fmt("co-optimization: mean head pruned fraction with data slimming %.4f vs without %.4f (strictly greater); "
             "%zu vs %zu of %zu head channels over 3 seeds; %.0f s (< 1800 s)",
             mean(head_on), mean(head_off), pruned_on, pruned_off, head_total, budget));

  const double tr = 1.0 - mean(tf_dance) / mean(tf_base), ir = 1.0 - mean(if_dance) / mean(if_base);
  const double drop_pp = 100.0 * (mean(m_base) - mean(m_dance));
  report(9, tr >= 0.2 && ir >= 0.2 && drop_pp <= 1.0,
         fmt("all-win: training FLOPs -%.1f%% (>= 20%%), inference FLOPs -%.1f%% (>= 20%%), mIoU %.4f vs %.4f, drop "
             "%.2f pp (<= 1)",
             100.0 * tr, 100.0 * ir, mean(m_dance), mean(m_base), drop_pp));

  report(10, mean(m_dance) >= mean(m_inv),
         fmt("indicator: proposed-p mIoU %.4f vs inverse-p %.4f (>=)", mean(m_dance), mean(m_inv)));
}

// ------------------------------------------------------------------ 11

void criterion_11() {
  const fs::path root = fs::temp_directory_path() / "dance_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cli = DANCE_CLI_PATH;
  RunConfig cfg = load_run_config(kConfigs + "/dance.json");
  cfg.epochs = 4;
  cfg.prune_stages = 2;
  write_text(root / "config.json", run_config_to_json(cfg).dump(2) + "\n");
  auto sh = [](const std::string& cmd) { return std::system((cmd + " > /dev/null").c_str()) == 0; };
  bool ok = sh(cli + " generate --out " + (root / "corpus").string() + " --num-images 32 --width 32 --height 32");
  for (const char* run_dir : {"run_a", "run_b"})
    ok = ok && sh(cli + " train --manifest " + (root / "corpus" / "manifest.jsonl").string() + " --config " +
                  (root / "config.json").string() + " --out " + (root / run_dir).string());
  std::string detail;
  for (const char* f : {"metrics.csv", "ledger.csv", "prune_report.csv"}) {
    const std::string a = slurp(root / "run_a" / f), b = slurp(root / "run_b" / f);
    const bool same = ok && !a.empty() && a == b;
    ok = ok && same;
    detail += fmt(" %s %s (%zu bytes);", f, same ? "identical" : "DIFFERENT", a.size());
  }
  report(11, ok, "determinism: two train invocations:" + detail);
  fs::remove_all(root);
}

// ------------------------------------------------------------------ 12

void criterion_12() {
  const auto all = to_samples(generate_images(SynthConfig{}));
  const auto train = select_split(all, "train");
  const ComplexityIndex index = build_index(score_samples(all));
  RunConfig cfg = load_run_config(kConfigs + "/dance.json");
  cfg.epochs = 200;
  cfg.ans = false;
  cfg.base_width = 8;
  cfg.policy.cad = cfg.policy.cal = false;
  cfg.policy.casd = true;
  cfg.seed = 12;
  const RunResult r = run(cfg, train, {}, &index);
  std::map<std::string, std::pair<int, int>> counts;
  for (const auto& d : r.decisions) {
    counts[d.image_id].first += d.keep;
    ++counts[d.image_id].second;
  }
  double worst = 0.0;
  bool complete = counts.size() == train.size();
  for (const auto& s : train) {
    const auto [kept, seen] = counts[s.id];
    complete = complete && seen == 200;
    const double expect = 1.0 - drop_probability(index.p(s.id), cfg.policy);
    worst = std::max(worst, std::abs(kept / 200.0 - expect));
  }
  report(12, complete && worst <= 0.03,
         fmt("dropping frequency: worst per-image |keep rate - keep probability| %.2f pp over 200 epochs x %zu images "
             "(<= 3 pp)",
             100.0 * worst, train.size()));
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> steps{criterion_1, criterion_2, criterion_3, criterion_4,
                                                 criterion_5, criterion_6, criterion_7, criteria_8_to_10,
                                                 criterion_11, criterion_12};
  for (const auto& s : steps) {
    try {
      s();
    } catch (const std::exception& e) {
      std::printf("error: %s\n", e.what());
      ++failures;
    }
  }
  std::printf("%d criterion check(s) failed\n", failures);
  return failures ? 1 : 0;
}
