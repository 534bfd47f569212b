#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dance/cost.hpp"
#include "dance/dataslim.hpp"
#include "dance/error.hpp"
#include "dance/nn/segnet.hpp"
#include "dance/prune.hpp"

namespace dance {

// Source of the complexity score fed to the slimming rules.
enum class IndicatorMode { Proposed, Inverse, Random };

inline const char* to_string(IndicatorMode m) {
  switch (m) {
    case IndicatorMode::Proposed: return "proposed";
    case IndicatorMode::Inverse: return "inverse";
    case IndicatorMode::Random: return "random";
  }
  return "?";
}

inline IndicatorMode parse_indicator_mode(const std::string& s) {
  if (s == "proposed") return IndicatorMode::Proposed;
  if (s == "inverse") return IndicatorMode::Inverse;
  if (s == "random") return IndicatorMode::Random;
  throw ConfigError("unknown indicator mode: " + s);
}

struct RunConfig {
  std::uint64_t seed = 0;
  int epochs = 30;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double momentum = 0.0;
  double lambda_l1 = 1e-4;

  // Network slimming: L1 on prunable BN scales plus staged pruning.
  bool ans = false;
  int prune_stages = 4;
  double prune_ratio = 0.5;
  PruneMode prune_mode = PruneMode::Channel;

  SlimPolicy policy = SlimPolicy::disabled();
  IndicatorMode indicator = IndicatorMode::Proposed;

  int base_width = 16;
  int num_classes = 4;
  cost::CostModel cost;

  bool log_decisions = true;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (lambda_l1 < 0.0) throw ConfigError("lambda_l1 must be >= 0");
    if (prune_stages < 1) throw ConfigError("prune_stages must be >= 1");
    if (prune_ratio < 0.0 || prune_ratio >= 1.0) throw ConfigError("prune_ratio must be in [0, 1)");
    if (base_width < 8) throw ConfigError("base_width must be >= 8");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    policy.validate();
    cost.validate();
  }

  bool uses_indicator() const { return policy.cad || policy.casd || policy.cal; }
  bool data_slimming() const { return policy.cad || policy.casd || policy.cal || policy.rd; }
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(std::string("unknown key '") + it.key() + "' in " + where);
  }
}

}  // namespace detail

inline SlimPolicy policy_from_json(const nlohmann::json& j, SlimPolicy p = SlimPolicy::disabled()) {
  detail::check_keys(j,
                     {"scale_lo", "scale_hi", "drop_lo", "drop_hi", "weight_lo", "weight_hi", "cad", "casd", "cal",
                      "rd", "rd_probability", "min_dim", "stratified_drop"},
                     "policy");
  detail::read_opt(j, "scale_lo", p.scale_range.lo);
  detail::read_opt(j, "scale_hi", p.scale_range.hi);
  detail::read_opt(j, "drop_lo", p.drop_range.lo);
  detail::read_opt(j, "drop_hi", p.drop_range.hi);
  detail::read_opt(j, "weight_lo", p.weight_range.lo);
  detail::read_opt(j, "weight_hi", p.weight_range.hi);
  detail::read_opt(j, "cad", p.cad);
  detail::read_opt(j, "casd", p.casd);
  detail::read_opt(j, "cal", p.cal);
  detail::read_opt(j, "rd", p.rd);
  detail::read_opt(j, "rd_probability", p.rd_probability);
  detail::read_opt(j, "min_dim", p.min_dim);
  detail::read_opt(j, "stratified_drop", p.stratified_drop);
  p.validate();
  return p;
}

inline nlohmann::ordered_json policy_to_json(const SlimPolicy& p) {
  nlohmann::ordered_json j;
  j["scale_lo"] = p.scale_range.lo;
  j["scale_hi"] = p.scale_range.hi;
  j["drop_lo"] = p.drop_range.lo;
  j["drop_hi"] = p.drop_range.hi;
  j["weight_lo"] = p.weight_range.lo;
  j["weight_hi"] = p.weight_range.hi;
  j["cad"] = p.cad;
  j["casd"] = p.casd;
  j["cal"] = p.cal;
  j["rd"] = p.rd;
  j["rd_probability"] = p.rd_probability;
  j["min_dim"] = p.min_dim;
  j["stratified_drop"] = p.stratified_drop;
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"seed", "epochs", "batch_size", "learning_rate", "momentum", "lambda_l1", "ans", "prune_stages",
                      "prune_ratio", "prune_mode", "policy", "indicator", "base_width", "num_classes", "cost",
                      "log_decisions"},
                     "run config");
  RunConfig c;
  try {
    detail::read_opt(j, "seed", c.seed);
    detail::read_opt(j, "epochs", c.epochs);
    detail::read_opt(j, "batch_size", c.batch_size);
    detail::read_opt(j, "learning_rate", c.learning_rate);
    detail::read_opt(j, "momentum", c.momentum);
    detail::read_opt(j, "lambda_l1", c.lambda_l1);
    detail::read_opt(j, "ans", c.ans);
    detail::read_opt(j, "prune_stages", c.prune_stages);
    detail::read_opt(j, "prune_ratio", c.prune_ratio);
    if (j.contains("prune_mode")) {
      const auto m = j["prune_mode"].get<std::string>();
      if (m == "channel") c.prune_mode = PruneMode::Channel;
      else if (m == "unstructured") c.prune_mode = PruneMode::Unstructured;
      else throw ConfigError("unknown prune_mode: " + m);
    }
    if (j.contains("policy")) c.policy = policy_from_json(j["policy"]);
    if (j.contains("indicator")) c.indicator = parse_indicator_mode(j["indicator"].get<std::string>());
    detail::read_opt(j, "base_width", c.base_width);
    detail::read_opt(j, "num_classes", c.num_classes);
    if (j.contains("cost")) {
      const auto& cj = j["cost"];
      detail::check_keys(cj, {"energy_per_flop", "energy_per_byte", "backward_factor", "flops_per_mac"}, "cost");
      detail::read_opt(cj, "energy_per_flop", c.cost.energy_per_flop);
      detail::read_opt(cj, "energy_per_byte", c.cost.energy_per_byte);
      detail::read_opt(cj, "backward_factor", c.cost.backward_factor);
      if (cj.contains("flops_per_mac")) {
        const int f = cj["flops_per_mac"].get<int>();
        if (f == 1) c.cost.convention = cost::FlopConvention::OnePerMac;
        else if (f == 2) c.cost.convention = cost::FlopConvention::TwoPerMac;
        else throw ConfigError("flops_per_mac must be 1 or 2");
      }
    }
    detail::read_opt(j, "log_decisions", c.log_decisions);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::ordered_json run_config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["momentum"] = c.momentum;
  j["lambda_l1"] = c.lambda_l1;
  j["ans"] = c.ans;
  j["prune_stages"] = c.prune_stages;
  j["prune_ratio"] = c.prune_ratio;
  j["prune_mode"] = to_string(c.prune_mode);
  j["policy"] = policy_to_json(c.policy);
  j["indicator"] = to_string(c.indicator);
  j["base_width"] = c.base_width;
  j["num_classes"] = c.num_classes;
  j["cost"] = {{"energy_per_flop", c.cost.energy_per_flop},
               {"energy_per_byte", c.cost.energy_per_byte},
               {"backward_factor", c.cost.backward_factor},
               {"flops_per_mac", c.cost.convention == cost::FlopConvention::OnePerMac ? 1 : 2}};
  j["log_decisions"] = c.log_decisions;
  return j;
}

inline RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config: " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace dance
