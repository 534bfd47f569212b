#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "dance/error.hpp"
#include "dance/nn/segnet.hpp"

namespace dance {

using nn::LayerGroup;
using nn::LayerKind;
using nn::SegNet;

// Equal-length stages; pruning happens at the end of each stage and the
// cumulative target ramps linearly to final_ratio.
struct PruneSchedule {
  std::int64_t total_iterations = 0;
  int num_stages = 1;
  double final_ratio = 0.0;
  std::vector<std::int64_t> boundaries;  // iteration count at which stage k ends
  std::vector<double> targets;           // cumulative pruned fraction after stage k

  // Target reached once `iterations_done` iterations have executed, or -1.
  double target_at(std::int64_t iterations_done) const {
    double t = -1.0;
    for (std::size_t k = 0; k < boundaries.size(); ++k)
      if (boundaries[k] == iterations_done) t = targets[k];
    return t;
  }
};

inline PruneSchedule plan_schedule(std::int64_t total_iterations, int stages, double final_ratio) {
  if (stages < 1) throw ConfigError("plan_schedule: need at least one stage");
  if (!(final_ratio >= 0.0 && final_ratio < 1.0)) throw ConfigError("plan_schedule: ratio must be in [0,1)");
  if (total_iterations < stages) throw ConfigError("plan_schedule: fewer iterations than stages");
  PruneSchedule s;
  s.total_iterations = total_iterations;
  s.num_stages = stages;
  s.final_ratio = final_ratio;
  for (int k = 1; k <= stages; ++k) {
    s.boundaries.push_back(k == stages ? total_iterations : total_iterations * k / stages);
    s.targets.push_back(k == stages ? final_ratio : final_ratio * k / stages);
  }
  return s;
}

struct PruneOutcome {
  std::size_t newly_pruned = 0;
  std::size_t pruned_total = 0;
  std::size_t target_count = 0;
  bool floor_bound = false;  // the one-channel-per-layer floor stopped pruning short
};

// Masks the globally smallest |gamma| channels across prunable BN layers until
// the cumulative masked count reaches round(ratio * prunable channels). Each
// layer keeps at least one live channel; masks never revive.
inline PruneOutcome prune_channels(SegNet& net, double cumulative_ratio) {
  if (!(cumulative_ratio >= 0.0 && cumulative_ratio < 1.0))
    throw ConfigError("prune_channels: ratio must be in [0,1)");
  struct Cand {
    double mag;
    int layer;
    int channel;
  };
  std::vector<Cand> cands;
  std::map<int, int> live_per_layer;
  std::size_t total = 0, masked = 0;
  for (int i = 0; i < static_cast<int>(net.nodes.size()); ++i) {
    const auto& nd = net.nodes[i];
    if (nd.spec.kind != LayerKind::BatchNorm || !net.is_prunable(nd.spec.group)) continue;
    for (int c = 0; c < nd.spec.channels; ++c) {
      ++total;
      if (nd.mask[c]) {
        cands.push_back({std::abs(nd.gamma[c]), i, c});
        ++live_per_layer[i];
      } else {
        ++masked;
      }
    }
  }
  if (total == 0) throw ConfigError("prune_channels: no prunable channels");
  PruneOutcome out;
  out.target_count = static_cast<std::size_t>(std::llround(cumulative_ratio * static_cast<double>(total)));
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return std::tie(a.mag, a.layer, a.channel) < std::tie(b.mag, b.layer, b.channel);
  });
  for (const Cand& c : cands) {
    if (masked >= out.target_count) break;
    if (live_per_layer[c.layer] <= 1) continue;
    net.nodes[c.layer].mask[c.channel] = 0;
    --live_per_layer[c.layer];
    ++masked;
    ++out.newly_pruned;
  }
  out.pruned_total = masked;
  out.floor_bound = masked < out.target_count;
  nn::apply_masks(net);
  return out;
}

// Magnitude pruning of individual conv weights in the prunable groups.
inline PruneOutcome prune_unstructured(SegNet& net, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("prune_unstructured: ratio must be in [0,1)");
  struct Cand {
    double mag;
    int layer;
    std::size_t index;
  };
  std::vector<Cand> cands;
  std::size_t total = 0, masked = 0;
  for (int i = 0; i < static_cast<int>(net.nodes.size()); ++i) {
    auto& nd = net.nodes[i];
    if (nd.spec.kind != LayerKind::Conv2d || !net.is_prunable(nd.spec.group)) continue;
    if (nd.weight_mask.empty()) nd.weight_mask.assign(nd.weight.size(), 1);
    for (std::size_t j = 0; j < nd.weight.size(); ++j) {
      ++total;
      if (nd.weight_mask[j])
        cands.push_back({std::abs(nd.weight[j]), i, j});
      else
        ++masked;
    }
  }
  if (total == 0) throw ConfigError("prune_unstructured: no prunable weights");
  PruneOutcome out;
  out.target_count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return std::tie(a.mag, a.layer, a.index) < std::tie(b.mag, b.layer, b.index);
  });
  for (const Cand& c : cands) {
    if (masked >= out.target_count) break;
    net.nodes[c.layer].weight_mask[c.index] = 0;
    ++masked;
    ++out.newly_pruned;
  }
  out.pruned_total = masked;
  nn::apply_masks(net);
  return out;
}

struct GroupPruneStats {
  LayerGroup group{};
  std::size_t channels_total = 0;
  std::size_t channels_pruned = 0;
  std::size_t weights_total = 0;
  std::size_t weights_pruned = 0;

  double channel_fraction() const {
    return channels_total ? static_cast<double>(channels_pruned) / static_cast<double>(channels_total) : 0.0;
  }
  double weight_fraction() const {
    return weights_total ? static_cast<double>(weights_pruned) / static_cast<double>(weights_total) : 0.0;
  }
};

enum class PruneMode { Channel, Unstructured };

inline const char* to_string(PruneMode m) { return m == PruneMode::Channel ? "channel" : "unstructured"; }

struct PruneReport {
  PruneMode mode = PruneMode::Channel;
  double target_ratio = 0.0;
  bool floor_bound = false;
  std::vector<GroupPruneStats> groups;  // one per LayerGroup, fixed order
  std::size_t prunable_total = 0;       // channels (or weights) in prunable groups
  std::size_t prunable_pruned = 0;

  const GroupPruneStats& group(LayerGroup g) const {
    for (const auto& s : groups)
      if (s.group == g) return s;
    throw StateError("prune report missing group");
  }
  double achieved_ratio() const {
    return prunable_total ? static_cast<double>(prunable_pruned) / static_cast<double>(prunable_total) : 0.0;
  }
};

// Per-group totals. Channel counts come from BN masks; weight counts from
// conv weight masks.
inline PruneReport pruning_report(const SegNet& net, PruneMode mode = PruneMode::Channel, double target_ratio = 0.0,
                                  bool floor_bound = false) {
  PruneReport r;
  r.mode = mode;
  r.target_ratio = target_ratio;
  r.floor_bound = floor_bound;
  for (auto g : nn::kAllGroups) r.groups.push_back({g});
  for (const auto& nd : net.nodes) {
    auto& gs = r.groups[static_cast<std::size_t>(nd.spec.group)];
    if (nd.spec.kind == LayerKind::BatchNorm) {
      gs.channels_total += nd.mask.size();
      gs.channels_pruned += static_cast<std::size_t>(std::count(nd.mask.begin(), nd.mask.end(), 0));
    } else if (nd.spec.kind == LayerKind::Conv2d) {
      gs.weights_total += nd.weight.size();
      if (!nd.weight_mask.empty())
        gs.weights_pruned += static_cast<std::size_t>(std::count(nd.weight_mask.begin(), nd.weight_mask.end(), 0));
    }
  }
  for (const auto& gs : r.groups) {
    if (!net.is_prunable(gs.group)) continue;
    r.prunable_total += mode == PruneMode::Channel ? gs.channels_total : gs.weights_total;
    r.prunable_pruned += mode == PruneMode::Channel ? gs.channels_pruned : gs.weights_pruned;
  }
  return r;
}

// Pruned-count deltas (a minus b) per group, e.g. data slimming on vs off.
struct PruneDifferential {
  LayerGroup group{};
  long long channels_delta = 0;
  long long weights_delta = 0;
};

inline std::vector<PruneDifferential> differential(const PruneReport& a, const PruneReport& b) {
  std::vector<PruneDifferential> d;
  for (std::size_t i = 0; i < a.groups.size(); ++i)
    d.push_back({a.groups[i].group,
                 static_cast<long long>(a.groups[i].channels_pruned) - static_cast<long long>(b.groups[i].channels_pruned),
                 static_cast<long long>(a.groups[i].weights_pruned) - static_cast<long long>(b.groups[i].weights_pruned)});
  return d;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline const char* kPruneCsvHeader = "group,total,pruned,fraction,ratio,mode";

// One row per group; total/pruned count channels or weights depending on mode.
inline std::string prune_report_csv(const PruneReport& r, bool header = true) {
  std::ostringstream os;
  if (header) os << kPruneCsvHeader << '\n';
  for (const auto& g : r.groups) {
    const bool ch = r.mode == PruneMode::Channel;
    os << nn::to_string(g.group) << ',' << (ch ? g.channels_total : g.weights_total) << ','
       << (ch ? g.channels_pruned : g.weights_pruned) << ',' << format_double(ch ? g.channel_fraction() : g.weight_fraction())
       << ',' << format_double(r.target_ratio) << ',' << to_string(r.mode) << '\n';
  }
  return os.str();
}

inline std::string prune_report_table(const PruneReport& r) {
  std::ostringstream os;
  const bool ch = r.mode == PruneMode::Channel;
  os << "pruning report (" << to_string(r.mode) << ", target " << std::fixed << std::setprecision(2)
     << r.target_ratio * 100.0 << "%, achieved " << r.achieved_ratio() * 100.0 << "%)\n";
  os << std::left << std::setw(18) << "group" << std::right << std::setw(10) << "total" << std::setw(10) << "pruned"
     << std::setw(10) << "percent" << '\n';
  for (const auto& g : r.groups) {
    os << std::left << std::setw(18) << nn::to_string(g.group) << std::right << std::setw(10)
       << (ch ? g.channels_total : g.weights_total) << std::setw(10) << (ch ? g.channels_pruned : g.weights_pruned)
       << std::setw(9) << std::setprecision(2) << (ch ? g.channel_fraction() : g.weight_fraction()) * 100.0 << "%\n";
  }
  if (r.floor_bound) os << "warning: one-channel floor prevented reaching the target\n";
  return os.str();
}

}  // namespace dance
