#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dance/config.hpp"
#include "dance/cost.hpp"
#include "dance/dataset.hpp"
#include "dance/dataslim.hpp"
#include "dance/distribution.hpp"
#include "dance/error.hpp"
#include "dance/nn/checkpoint.hpp"
#include "dance/nn/segnet.hpp"
#include "dance/prune.hpp"
#include "dance/rng.hpp"

namespace dance {

// ---------------------------------------------------------------- metrics

struct Metrics {
  int num_classes = 0;
  std::vector<std::uint64_t> confusion;  // row = ground truth, column = prediction
  std::vector<double> iou;               // NaN for classes with empty union
  double miou = 0.0;
  double pixel_accuracy = 0.0;
  int classes_evaluated = 0;
};

inline void accumulate_confusion(std::vector<std::uint64_t>& cm, int num_classes, const LabelMap& pred,
                                 const LabelMap& gt) {
  if (pred.width != gt.width || pred.height != gt.height) throw ShapeError("confusion: prediction dims differ");
  if (cm.size() != static_cast<std::size_t>(num_classes) * num_classes) throw ShapeError("confusion: matrix size");
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const int g = gt.labels[i];
    if (g == gt.ignore_id) continue;
    const int p = pred.labels[i];
    if (g >= num_classes || p >= num_classes) throw InvalidInputError("confusion: class id out of range");
    ++cm[static_cast<std::size_t>(g) * num_classes + p];
  }
}

inline Metrics metrics_from_confusion(const std::vector<std::uint64_t>& cm, int num_classes) {
  Metrics m;
  m.num_classes = num_classes;
  m.confusion = cm;
  m.iou.assign(num_classes, std::nan(""));
  std::uint64_t correct = 0, total = 0;
  double sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    std::uint64_t tp = cm[static_cast<std::size_t>(c) * num_classes + c], row = 0, col = 0;
    for (int k = 0; k < num_classes; ++k) {
      row += cm[static_cast<std::size_t>(c) * num_classes + k];
      col += cm[static_cast<std::size_t>(k) * num_classes + c];
    }
    correct += tp;
    total += row;
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    m.iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
    sum += m.iou[c];
    ++m.classes_evaluated;
  }
  m.miou = m.classes_evaluated ? sum / m.classes_evaluated : 0.0;
  m.pixel_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return m;
}

// ---------------------------------------------------------------- padding

inline int round_up(int v, int m) { return (v + m - 1) / m * m; }

inline RasterImage pad_image(const RasterImage& img, int multiple) {
  const int W = round_up(img.width, multiple), H = round_up(img.height, multiple);
  if (W == img.width && H == img.height) return img;
  RasterImage out(W, H, img.channels);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = img.at(std::min(x, img.width - 1), std::min(y, img.height - 1), c);
  return out;
}

inline LabelMap pad_labels(const LabelMap& lm, int multiple) {
  const int W = round_up(lm.width, multiple), H = round_up(lm.height, multiple);
  if (W == lm.width && H == lm.height) return lm;
  LabelMap out(W, H, lm.ignore_id, lm.ignore_id);
  for (int y = 0; y < lm.height; ++y)
    for (int x = 0; x < lm.width; ++x) out.at(x, y) = lm.at(x, y);
  return out;
}

// ---------------------------------------------------------------- indicator

inline double effective_p(double p, IndicatorMode mode, std::uint64_t seed, std::uint64_t stream, std::uint64_t a,
                          std::uint64_t b) {
  switch (mode) {
    case IndicatorMode::Proposed: return p;
    case IndicatorMode::Inverse: return 1.0 - p;
    case IndicatorMode::Random: {
      SplitMix64 r(derive_seed(seed, stream, a, b));
      return r.uniform();
    }
  }
  return p;
}

// ---------------------------------------------------------------- evaluation

struct EvalResult {
  Metrics metrics;
  double inference_flops_per_image = 0.0;
  double inference_bytes_per_image = 0.0;
  double inference_energy_per_image = 0.0;
  std::string resolution;  // e.g. "48x48 (cad)"
};

inline constexpr std::uint64_t kEvalIndicatorStream = 0xe7a1;

// Per-image CAD resize, pad to the encoder stride, forward, crop, bilinear
// upsample of the logits to ground-truth size, argmax.
inline EvalResult evaluate(const nn::SegNet& net, const std::vector<Sample>& samples, const ComplexityIndex* index,
                           const SlimPolicy& policy, IndicatorMode indicator = IndicatorMode::Proposed,
                           std::uint64_t seed = 0, const cost::CostModel& model = {}) {
  if (samples.empty()) throw InvalidInputError("evaluate: empty split");
  if (policy.cad && !index) throw StateError("evaluate: downsampling needs a complexity index");
  const int C = net.num_classes;
  std::vector<std::uint64_t> cm(static_cast<std::size_t>(C) * C, 0);
  cost::NetCostCache costs(net, model.convention);
  double flops = 0.0, bytes = 0.0;
  std::set<std::pair<int, int>> dims_seen;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    int tw = s.image.width, th = s.image.height;
    RasterImage img = s.image;
    if (policy.cad) {
      const double p = effective_p(index->p(s.id), indicator, seed, kEvalIndicatorStream, i, 0);
      std::tie(tw, th) = scaled_dims(s.image.width, s.image.height, downsample_scale(p, policy), policy.min_dim);
      img = resize_image(s.image, tw, th);
      flops += static_cast<double>(cost::indicator_overhead(s.image.width, s.image.height, s.image.channels,
                                                            model.convention));
    }
    const RasterImage padded = pad_image(img, net.total_stride);
    dims_seen.insert({padded.width, padded.height});
    const auto& c = costs.at(padded.width, padded.height);
    flops += static_cast<double>(c.total_flops);
    bytes += static_cast<double>(c.bytes_moved);
    const nn::Tensor logits = nn::forward_eval(net, nn::to_tensor(std::span<const RasterImage>(&padded, 1)));
    nn::Tensor crop(1, C, th, tw);
    for (int k = 0; k < C; ++k)
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x) crop.at(0, k, y, x) = logits.at(0, k, y, x);
    const nn::Tensor up = nn::upsample_forward(crop, s.labels.height, s.labels.width);
    LabelMap pred(s.labels.width, s.labels.height, 0, s.labels.ignore_id);
    for (int y = 0; y < pred.height; ++y)
      for (int x = 0; x < pred.width; ++x) {
        int best = 0;
        for (int k = 1; k < C; ++k)
          if (up.at(0, k, y, x) > up.at(0, best, y, x)) best = k;
        pred.at(x, y) = static_cast<std::uint8_t>(best);
      }
    accumulate_confusion(cm, C, pred, s.labels);
  }
  EvalResult r;
  r.metrics = metrics_from_confusion(cm, C);
  const double n = static_cast<double>(samples.size());
  r.inference_flops_per_image = flops / n;
  r.inference_bytes_per_image = bytes / n;
  r.inference_energy_per_image = cost::energy_estimate(r.inference_flops_per_image, r.inference_bytes_per_image, model);
  std::ostringstream res;
  res << samples[0].image.width << 'x' << samples[0].image.height << (policy.cad ? " (cad)" : "");
  r.resolution = res.str();
  return r;
}

// ---------------------------------------------------------------- training

struct DecisionRow {
  std::string image_id;
  int epoch = 0;
  double p = 0.0;
  double scale = 1.0;
  bool keep = true;
  double weight = 1.0;
};

struct PruneEvent {
  std::int64_t iteration = 0;
  double target = 0.0;
  PruneOutcome outcome;
};

struct RunResult {
  nn::SegNet net;
  EvalResult eval;
  cost::CostLedger ledger;
  PruneReport prune_report;
  std::vector<DecisionRow> decisions;
  std::vector<PruneEvent> prune_events;
  std::vector<double> epoch_loss;  // mean logical-batch loss per epoch
  std::int64_t iterations = 0;
  std::int64_t skipped_iterations = 0;
  std::int64_t samples_seen = 0;
  std::int64_t samples_kept = 0;
};

class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, nn::SegNet last_good, std::int64_t iteration)
      : NumericError(what), last_good_(std::make_shared<nn::SegNet>(std::move(last_good))), iteration_(iteration) {}
  const nn::SegNet& last_good() const { return *last_good_; }
  std::int64_t iteration() const { return iteration_; }

 private:
  std::shared_ptr<nn::SegNet> last_good_;
  std::int64_t iteration_;
};

inline constexpr std::uint64_t kInitStream = 0x1e7;
inline constexpr std::uint64_t kDecisionStream = 0xdec1;
inline constexpr std::uint64_t kTrainIndicatorStream = 0x7a9d;
inline constexpr std::uint64_t kDropOffsetStream = 0xd0ff;

inline nn::SegNet initial_net(const RunConfig& cfg) {
  nn::SegNetConfig nc;
  nc.num_classes = cfg.num_classes;
  nc.base_width = cfg.base_width;
  nc.seed = derive_seed(cfg.seed, kInitStream);
  return nn::build_toy_net(nc);
}

inline std::int64_t iterations_per_epoch(std::size_t n_train, int batch_size) {
  return static_cast<std::int64_t>((n_train + batch_size - 1) / batch_size);
}

// Trains on `train`, evaluates on `test`. `index` supplies p for every image
// (required whenever a slimming rule reads p). `init` continues from an
// existing net, keeping its masks.
inline RunResult run(const RunConfig& cfg, const std::vector<Sample>& train, const std::vector<Sample>& test,
                     const ComplexityIndex* index, const nn::SegNet* init = nullptr) {
  cfg.validate();
  if (train.empty()) throw InvalidInputError("run: empty training split");
  if (cfg.uses_indicator() && !index) throw StateError("run: slimming rules need a complexity index");
  RunResult R{init ? *init : initial_net(cfg), {}, cost::CostLedger(cfg.cost), {}, {}, {}, {}, 0, 0, 0, 0};
  nn::SegNet& net = R.net;
  if (net.num_classes != cfg.num_classes) throw ConfigError("run: initial net class count differs from config");

  const std::int64_t ipe = iterations_per_epoch(train.size(), cfg.batch_size);
  const std::int64_t total = ipe * cfg.epochs;
  std::optional<PruneSchedule> schedule;
  if (cfg.ans) schedule = plan_schedule(total, cfg.prune_stages, cfg.prune_ratio);
  std::size_t next_stage = 0;
  const double lambda = cfg.ans ? cfg.lambda_l1 : 0.0;
  const int stride = net.total_stride;

  std::vector<bool> indicator_charged(train.size(), false);
  nn::Gradients grads(net), velocity(net);
  std::int64_t it = 0;
  bool last_floor = false;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto perm = shuffle(train.size(), cfg.seed, static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    int loss_count = 0;
    for (std::int64_t b = 0; b < ipe; ++b, ++it) {
      const std::size_t lo = static_cast<std::size_t>(b) * cfg.batch_size;
      const std::size_t hi = std::min(train.size(), lo + cfg.batch_size);
      std::map<std::pair<int, int>, std::vector<std::size_t>> groups;  // padded (w, h) -> sample slots
      std::vector<RasterImage> imgs;
      std::vector<LabelMap> lbls;
      std::vector<double> wts;
      std::vector<std::pair<int, int>> kept_dims;
      std::uint64_t indicator_flops = 0;
      for (std::size_t k = lo; k < hi; ++k) {
        const std::size_t idx = perm[k];
        const Sample& s = train[idx];
        ++R.samples_seen;
        double p = 1.0;
        if (cfg.uses_indicator()) {
          p = effective_p(index->p(s.id), cfg.indicator, cfg.seed, kTrainIndicatorStream,
                          static_cast<std::uint64_t>(epoch), idx);
          if (!indicator_charged[idx]) {
            indicator_charged[idx] = true;
            indicator_flops +=
                cost::indicator_overhead(s.image.width, s.image.height, s.image.channels, cfg.cost.convention);
          }
        }
        double u;
        if (cfg.policy.stratified_drop) {
          SplitMix64 orng(derive_seed(cfg.seed, kDropOffsetStream, idx));
          u = stratified_uniform(orng.uniform(), static_cast<std::uint64_t>(epoch));
        } else {
          SplitMix64 drng(derive_seed(cfg.seed, kDecisionStream, static_cast<std::uint64_t>(epoch), idx));
          u = drng.uniform();
        }
        const SlimDecision d = decide(s.id, p, s.image.width, s.image.height, cfg.policy, u);
        if (cfg.log_decisions) R.decisions.push_back({s.id, epoch, d.p, d.scale, d.keep, d.weight});
        if (!d.keep) continue;
        ++R.samples_kept;
        RasterImage img = pad_image(resize_image(s.image, d.target_w, d.target_h), stride);
        LabelMap lbl = pad_labels(resize_labels(s.labels, d.target_w, d.target_h), stride);
        kept_dims.emplace_back(img.width, img.height);
        groups[{img.width, img.height}].push_back(imgs.size());
        imgs.push_back(std::move(img));
        lbls.push_back(std::move(lbl));
        wts.push_back(d.weight);
      }

      bool stepped = false;
      if (!imgs.empty()) {
        std::vector<nn::Batch> micro;
        for (const auto& [dims, slots] : groups) {
          std::vector<RasterImage> gi;
          std::vector<LabelMap> gl;
          std::vector<double> gw;
          for (std::size_t sl : slots) {
            gi.push_back(imgs[sl]);
            gl.push_back(lbls[sl]);
            gw.push_back(wts[sl]);
          }
          micro.push_back(nn::make_batch(gi, std::move(gl), std::move(gw)));
        }
        nn::SegNet backup = net;
        try {
          grads.zero();
          const auto lr = nn::loss_and_grad(net, micro, lambda, &grads);
          if (!std::isfinite(lr.loss)) throw NumericError("non-finite loss");
          for (std::size_t i = 0; i < grads.weight.size(); ++i) {
            auto mix = [&](std::vector<double>& v, const std::vector<double>& g) {
              for (std::size_t j = 0; j < v.size(); ++j) v[j] = cfg.momentum * v[j] + g[j];
            };
            mix(velocity.weight[i], grads.weight[i]);
            mix(velocity.bias[i], grads.bias[i]);
            mix(velocity.gamma[i], grads.gamma[i]);
            mix(velocity.beta[i], grads.beta[i]);
          }
          nn::sgd_step(net, velocity, cfg.learning_rate);
          loss_sum += lr.loss;
          ++loss_count;
          stepped = true;
        } catch (const DegenerateBatchError&) {
          net = std::move(backup);
        } catch (const NumericError& e) {
          throw DivergenceError(std::string("training diverged at iteration ") + std::to_string(it) + ": " + e.what(),
                                std::move(backup), it);
        }
      }
      if (!stepped) ++R.skipped_iterations;
      cost::record_training_iteration(R.ledger, it, epoch, stepped ? kept_dims : std::vector<std::pair<int, int>>{},
                                      net, indicator_flops);

      if (schedule && next_stage < schedule->boundaries.size() && it + 1 == schedule->boundaries[next_stage]) {
        const double target = schedule->targets[next_stage];
        PruneOutcome o = cfg.prune_mode == PruneMode::Channel ? prune_channels(net, target)
                                                              : prune_unstructured(net, target);
        last_floor = o.floor_bound;
        R.prune_events.push_back({it + 1, target, o});
        ++next_stage;
      }
    }
    R.epoch_loss.push_back(loss_count ? loss_sum / loss_count : std::nan(""));
  }
  R.iterations = it;
  R.ledger.finalize();
  R.prune_report = pruning_report(net, cfg.prune_mode, cfg.ans ? cfg.prune_ratio : 0.0, last_floor);
  if (!test.empty()) {
    R.eval = evaluate(net, test, index, cfg.policy, cfg.indicator, cfg.seed, cfg.cost);
    R.ledger.inference_flops_per_image = R.eval.inference_flops_per_image;
    R.ledger.inference_energy_per_image = R.eval.inference_energy_per_image;
    R.ledger.inference_resolution = R.eval.resolution;
  }
  return R;
}

// ---------------------------------------------------------------- artifacts

inline std::string metrics_csv(const RunResult& r) {
  std::ostringstream os;
  os << "metric,value\n";
  auto row = [&](const std::string& k, double v) { os << k << ',' << format_double(v) << '\n'; };
  const Metrics& m = r.eval.metrics;
  row("miou", m.miou);
  row("pixel_accuracy", m.pixel_accuracy);
  row("classes_evaluated", m.classes_evaluated);
  for (int c = 0; c < m.num_classes; ++c) row("iou_class_" + std::to_string(c), m.iou[c]);
  row("train_flops", static_cast<double>(r.ledger.training_flops()));
  row("train_energy_j", r.ledger.training_energy());
  row("infer_flops_per_image", r.eval.inference_flops_per_image);
  row("infer_energy_j_per_image", r.eval.inference_energy_per_image);
  row("iterations", static_cast<double>(r.iterations));
  row("skipped_iterations", static_cast<double>(r.skipped_iterations));
  row("samples_seen", static_cast<double>(r.samples_seen));
  row("samples_kept", static_cast<double>(r.samples_kept));
  row("head_pruned_fraction", r.prune_report.group(LayerGroup::AggregationHead).channel_fraction());
  row("achieved_prune_ratio", r.prune_report.achieved_ratio());
  row("final_loss", r.epoch_loss.empty() ? std::nan("") : r.epoch_loss.back());
  return os.str();
}

inline std::string decisions_csv(const std::vector<DecisionRow>& rows) {
  std::ostringstream os;
  os << "image_id,epoch,p,scale,keep,weight\n";
  for (const auto& d : rows)
    os << d.image_id << ',' << d.epoch << ',' << format_double(d.p) << ',' << format_double(d.scale) << ','
       << (d.keep ? 1 : 0) << ',' << format_double(d.weight) << '\n';
  return os.str();
}

inline void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("failed writing " + file.string());
}

inline void write_run_outputs(const std::filesystem::path& dir, const RunResult& r, const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  nn::save_checkpoint(dir / "checkpoint.bin", r.net);
  write_text(dir / "metrics.csv", metrics_csv(r));
  write_text(dir / "ledger.csv", r.ledger.to_csv());
  write_text(dir / "prune_report.csv", prune_report_csv(r.prune_report));
  write_text(dir / "decisions.csv", decisions_csv(r.decisions));
  write_text(dir / "config.json", run_config_to_json(cfg).dump(2) + "\n");
}

// ---------------------------------------------------------------- ablations

struct Toggles {
  bool ans = false, cad = false, cal = false, casd = false, rd = false;
};

// Applies component toggles to a base config whose policy carries the ranges.
inline RunConfig with_toggles(RunConfig base, const Toggles& t) {
  base.ans = t.ans;
  base.policy.cad = t.cad;
  base.policy.cal = t.cal;
  base.policy.casd = t.casd;
  base.policy.rd = t.rd;
  return base;
}

struct AblationRow {
  std::string study;  // "components", "pipelines" or "indicator"
  std::string name;
  std::uint64_t seed = 0;
  Toggles toggles;
  IndicatorMode indicator = IndicatorMode::Proposed;
  double train_flops = 0.0;
  double train_energy_j = 0.0;
  double infer_flops = 0.0;
  double infer_energy_j = 0.0;
  double miou = 0.0;
  double head_pruned_fraction = 0.0;
};

inline AblationRow make_row(const std::string& study, const std::string& name, const RunConfig& cfg,
                            const Toggles& t, double train_flops, double train_energy, const RunResult& final_run) {
  AblationRow r;
  r.study = study;
  r.name = name;
  r.seed = cfg.seed;
  r.toggles = t;
  r.indicator = cfg.indicator;
  r.train_flops = train_flops;
  r.train_energy_j = train_energy;
  r.infer_flops = final_run.eval.inference_flops_per_image;
  r.infer_energy_j = final_run.eval.inference_energy_per_image;
  r.miou = final_run.eval.metrics.miou;
  r.head_pruned_fraction = final_run.prune_report.group(LayerGroup::AggregationHead).channel_fraction();
  return r;
}

inline AblationRow row_of(const std::string& study, const std::string& name, const RunConfig& cfg, const Toggles& t,
                          const RunResult& r) {
  return make_row(study, name, cfg, t, static_cast<double>(r.ledger.training_flops()), r.ledger.training_energy(), r);
}

struct ComponentRow {
  const char* name;
  Toggles toggles;
};

inline const std::vector<ComponentRow>& component_rows() {
  static const std::vector<ComponentRow> rows{
      {"1", {false, false, false, false, false}}, {"2", {true, false, false, false, false}},
      {"3", {true, true, false, false, false}},   {"4", {true, true, true, false, false}},
      {"5", {true, false, false, false, true}},   {"6", {true, false, false, true, false}},
      {"7", {true, true, true, true, false}},
  };
  return rows;
}

// Sequential pipeline (a): network slimming first, then data slimming on the
// frozen pruned net for half the epochs.
inline std::pair<RunResult, RunResult> data_after_network(const RunConfig& base, const std::vector<Sample>& train,
                                                          const std::vector<Sample>& test,
                                                          const ComplexityIndex* index) {
  RunConfig a = with_toggles(base, {true, false, false, false, false});
  RunResult first = run(a, train, test, index);
  RunConfig b = with_toggles(base, {false, true, true, true, false});
  b.epochs = std::max(1, base.epochs / 2);
  RunResult second = run(b, train, test, index, &first.net);
  second.prune_report = pruning_report(second.net, base.prune_mode, base.prune_ratio, first.prune_report.floor_bound);
  return {std::move(first), std::move(second)};
}

// Sequential pipeline (b): data slimming only, then one-shot pruning to the
// final ratio and a fine-tune of a quarter of the epochs.
inline std::pair<RunResult, RunResult> network_after_data(const RunConfig& base, const std::vector<Sample>& train,
                                                          const std::vector<Sample>& test,
                                                          const ComplexityIndex* index) {
  RunConfig a = with_toggles(base, {false, true, true, true, false});
  RunResult first = run(a, train, test, index);
  nn::SegNet pruned = first.net;
  const PruneOutcome o = base.prune_mode == PruneMode::Channel ? prune_channels(pruned, base.prune_ratio)
                                                               : prune_unstructured(pruned, base.prune_ratio);
  RunConfig b = a;
  b.epochs = std::max(1, base.epochs / 4);
  RunResult second = run(b, train, test, index, &pruned);
  second.prune_report = pruning_report(second.net, base.prune_mode, base.prune_ratio, o.floor_bound);
  return {std::move(first), std::move(second)};
}

// Runs the component rows, the sequential-vs-joint comparison and the
// indicator ablation for every seed. `progress` (optional) is told each row.
template <typename Progress>
std::vector<AblationRow> ablation_suite(const RunConfig& base, const std::vector<Sample>& train,
                                        const std::vector<Sample>& test, const ComplexityIndex& index,
                                        const std::vector<std::uint64_t>& seeds, Progress&& progress) {
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : seeds) {
    RunConfig cfg = base;
    cfg.seed = seed;
    cfg.indicator = IndicatorMode::Proposed;
    std::map<std::string, AblationRow> comp;
    for (const auto& e : component_rows()) {
      const RunConfig c = with_toggles(cfg, e.toggles);
      const RunResult r = run(c, train, test, &index);
      comp[e.name] = row_of("components", e.name, c, e.toggles, r);
      rows.push_back(comp[e.name]);
      progress(rows.back());
    }
    {
      AblationRow b = comp["1"];
      b.study = "pipelines";
      b.name = "baseline";
      rows.push_back(b);
      progress(rows.back());
      auto [a1, a2] = network_after_data(cfg, train, test, &index);
      rows.push_back(make_row("pipelines", "network_after_data", cfg, {true, true, true, true, false},
                              static_cast<double>(a1.ledger.training_flops() + a2.ledger.training_flops()),
                              a1.ledger.training_energy() + a2.ledger.training_energy(), a2));
      progress(rows.back());
      auto [b1, b2] = data_after_network(cfg, train, test, &index);
      rows.push_back(make_row("pipelines", "data_after_network", cfg, {true, true, true, true, false},
                              static_cast<double>(b1.ledger.training_flops() + b2.ledger.training_flops()),
                              b1.ledger.training_energy() + b2.ledger.training_energy(), b2));
      progress(rows.back());
      AblationRow co = comp["7"];
      co.study = "pipelines";
      co.name = "co_optimize";
      rows.push_back(co);
      progress(rows.back());
    }
    {
      AblationRow p = comp["7"];
      p.study = "indicator";
      p.name = "proposed";
      rows.push_back(p);
      progress(rows.back());
      const Toggles full{true, true, true, true, false};
      for (IndicatorMode m : {IndicatorMode::Random, IndicatorMode::Inverse}) {
        RunConfig c = with_toggles(cfg, full);
        c.indicator = m;
        const RunResult r = run(c, train, test, &index);
        rows.push_back(row_of("indicator", to_string(m), c, full, r));
        progress(rows.back());
      }
    }
  }
  return rows;
}

inline std::vector<AblationRow> ablation_suite(const RunConfig& base, const std::vector<Sample>& train,
                                               const std::vector<Sample>& test, const ComplexityIndex& index,
                                               const std::vector<std::uint64_t>& seeds) {
  return ablation_suite(base, train, test, index, seeds, [](const AblationRow&) {});
}

inline const char* kAblationCsvHeader =
    "study,row,seed,ans,cad,cal,casd,rd,indicator,train_flops,train_energy_j,infer_flops,infer_energy_j,miou,"
    "head_pruned_fraction";

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << kAblationCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.study << ',' << r.name << ',' << r.seed << ',' << r.toggles.ans << ',' << r.toggles.cad << ','
       << r.toggles.cal << ',' << r.toggles.casd << ',' << r.toggles.rd << ',' << to_string(r.indicator) << ','
       << format_double(r.train_flops) << ',' << format_double(r.train_energy_j) << ',' << format_double(r.infer_flops)
       << ',' << format_double(r.infer_energy_j) << ',' << format_double(r.miou) << ','
       << format_double(r.head_pruned_fraction) << '\n';
  }
  return os.str();
}

}  // namespace dance
