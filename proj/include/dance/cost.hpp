#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dance/error.hpp"
#include "dance/nn/segnet.hpp"

// FLOPs accounting. A multiply-accumulate counts as 2 FLOPs by default; bias
// terms are ignored. FlopConvention::OnePerMac counts it as 1, which is how
// most published "GFLOPs" figures for CNNs are actually quoted.
namespace dance::cost {

using nn::LayerGroup;

enum class FlopConvention { TwoPerMac, OnePerMac };

enum class ArchKind { Conv2d, Linear, BatchNorm, Relu, MaxPool, GlobalAvgPool, Upsample, Concat, Add };

inline const char* to_string(ArchKind k) {
  switch (k) {
    case ArchKind::Conv2d: return "conv2d";
    case ArchKind::Linear: return "linear";
    case ArchKind::BatchNorm: return "batchnorm";
    case ArchKind::Relu: return "relu";
    case ArchKind::MaxPool: return "maxpool";
    case ArchKind::GlobalAvgPool: return "global_avgpool";
    case ArchKind::Upsample: return "bilinear-upsample";
    case ArchKind::Concat: return "concat";
    case ArchKind::Add: return "add";
  }
  return "?";
}

inline ArchKind parse_arch_kind(const std::string& s) {
  for (auto k : {ArchKind::Conv2d, ArchKind::Linear, ArchKind::BatchNorm, ArchKind::Relu, ArchKind::MaxPool,
                 ArchKind::GlobalAvgPool, ArchKind::Upsample, ArchKind::Concat, ArchKind::Add})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown architecture layer kind: " + s);
}

// One layer; its output tensor is named after the layer.
struct ArchLayer {
  std::string name;
  ArchKind kind = ArchKind::Conv2d;
  std::vector<std::string> inputs;
  int in_ch = 0;  // conv/linear: 0 means infer from the input tensor
  int out_ch = 0;
  int kernel = 1, stride = 1, dilation = 1, groups = 1;
  int padding = -1;  // -1 means dilation * (kernel - 1) / 2
  std::string size_of;  // upsample: match this tensor's spatial dims
  int scale = 0;        // upsample: or integer scale factor
  LayerGroup group = LayerGroup::Backbone;

  int pad() const { return padding >= 0 ? padding : dilation * (kernel - 1) / 2; }
};

struct ArchDescription {
  std::string name;
  std::string input_name = "input";
  int input_channels = 3;
  std::vector<ArchLayer> layers;
};

struct Dims {
  int c = 0, h = 0, w = 0;
  std::uint64_t elements() const { return static_cast<std::uint64_t>(c) * h * w; }
  bool operator==(const Dims&) const = default;
};

struct LayerCost {
  std::uint64_t flops = 0;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
  std::uint64_t bytes_moved = 0;  // float32 activations in + out + weights
  Dims out;
};

inline constexpr std::uint64_t kBytesPerValue = 4;

inline int conv_out_dim(int in, int k, int s, int d, int p) { return (in + 2 * p - d * (k - 1) - 1) / s + 1; }

// Cost of one layer given its input dims. For concat/add pass every input.
inline LayerCost layer_flops(const ArchLayer& l, const std::vector<Dims>& in, FlopConvention conv = FlopConvention::TwoPerMac,
                             const Dims* size_ref = nullptr) {
  if (in.empty()) throw ShapeError("layer " + l.name + ": no inputs");
  const std::uint64_t per_mac = conv == FlopConvention::TwoPerMac ? 2 : 1;
  LayerCost c;
  const Dims& x = in[0];
  std::uint64_t in_elems = 0;
  for (const auto& d : in) in_elems += d.elements();
  switch (l.kind) {
    case ArchKind::Conv2d: {
      const int in_ch = l.in_ch > 0 ? l.in_ch : x.c;
      if (in_ch != x.c) throw ShapeError("layer " + l.name + ": expects " + std::to_string(in_ch) + " input channels, got " + std::to_string(x.c));
      if (l.groups < 1 || in_ch % l.groups != 0 || l.out_ch % l.groups != 0 || l.out_ch < 0)
        throw ShapeError("layer " + l.name + ": invalid groups/channels");
      c.out = {l.out_ch, conv_out_dim(x.h, l.kernel, l.stride, l.dilation, l.pad()),
               conv_out_dim(x.w, l.kernel, l.stride, l.dilation, l.pad())};
      if (c.out.h <= 0 || c.out.w <= 0) throw ShapeError("layer " + l.name + ": non-positive output dims");
      c.params = static_cast<std::uint64_t>(l.kernel) * l.kernel * (in_ch / l.groups) * l.out_ch;
      c.macs = c.params * c.out.h * c.out.w;
      c.flops = per_mac * c.macs;
      break;
    }
    case ArchKind::Linear: {
      const std::uint64_t features = x.elements();
      if (l.in_ch > 0 && features != static_cast<std::uint64_t>(l.in_ch))
        throw ShapeError("layer " + l.name + ": linear input feature mismatch");
      c.out = {l.out_ch, 1, 1};
      c.params = features * l.out_ch;
      c.macs = c.params;
      c.flops = per_mac * c.macs;
      break;
    }
    case ArchKind::BatchNorm:  // scale and shift, one multiply-add per element
      c.out = x;
      c.params = 2ULL * x.c;
      c.macs = x.elements();
      c.flops = per_mac * c.macs;
      break;
    case ArchKind::Relu:
      c.out = x;
      c.flops = x.elements();
      break;
    case ArchKind::MaxPool:
      c.out = {x.c, conv_out_dim(x.h, l.kernel, l.stride, l.dilation, l.pad()),
               conv_out_dim(x.w, l.kernel, l.stride, l.dilation, l.pad())};
      if (c.out.h <= 0 || c.out.w <= 0) throw ShapeError("layer " + l.name + ": non-positive output dims");
      c.flops = c.out.elements() * l.kernel * l.kernel;
      break;
    case ArchKind::GlobalAvgPool:
      c.out = {x.c, 1, 1};
      c.flops = x.elements();
      break;
    case ArchKind::Upsample: {  // four-tap weighted sum per output element
      if (size_ref)
        c.out = {x.c, size_ref->h, size_ref->w};
      else if (l.scale > 0)
        c.out = {x.c, x.h * l.scale, x.w * l.scale};
      else
        throw ShapeError("layer " + l.name + ": upsample needs size_of or scale");
      c.macs = 4 * c.out.elements();
      c.flops = per_mac * c.macs;
      break;
    }
    case ArchKind::Concat: {
      int ch = 0;
      for (const auto& d : in) {
        if (d.h != x.h || d.w != x.w) throw ShapeError("layer " + l.name + ": concat spatial mismatch");
        ch += d.c;
      }
      c.out = {ch, x.h, x.w};
      break;
    }
    case ArchKind::Add:
      for (const auto& d : in)
        if (!(d == x)) throw ShapeError("layer " + l.name + ": add shape mismatch");
      c.out = x;
      c.flops = x.elements() * (in.size() - 1);
      break;
  }
  c.bytes_moved = kBytesPerValue * (in_elems + c.out.elements() + c.params);
  return c;
}

struct ArchCost {
  std::uint64_t total_flops = 0;
  std::uint64_t total_macs = 0;
  std::uint64_t bytes_moved = 0;
  std::array<std::uint64_t, 4> group_flops{};  // indexed by LayerGroup
  std::vector<std::pair<std::string, LayerCost>> layers;

  std::uint64_t group(LayerGroup g) const { return group_flops[static_cast<std::size_t>(g)]; }
  double share(LayerGroup g) const {
    return total_flops ? static_cast<double>(group(g)) / static_cast<double>(total_flops) : 0.0;
  }
};

// Propagates shapes through the graph and sums per-layer costs.
inline ArchCost arch_flops(const ArchDescription& arch, int height, int width,
                           FlopConvention conv = FlopConvention::TwoPerMac) {
  if (height < 1 || width < 1) throw ShapeError("arch_flops: non-positive input resolution");
  std::unordered_map<std::string, Dims> tensors;
  tensors[arch.input_name] = {arch.input_channels, height, width};
  ArchCost total;
  for (const auto& l : arch.layers) {
    std::vector<Dims> in;
    for (const auto& name : l.inputs) {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw ShapeError("layer " + l.name + ": unknown input tensor '" + name + "'");
      in.push_back(it->second);
    }
    const Dims* ref = nullptr;
    if (!l.size_of.empty()) {
      auto it = tensors.find(l.size_of);
      if (it == tensors.end()) throw ShapeError("layer " + l.name + ": unknown size_of tensor '" + l.size_of + "'");
      ref = &it->second;
    }
    LayerCost c = layer_flops(l, in, conv, ref);
    if (!tensors.emplace(l.name, c.out).second) throw ShapeError("duplicate tensor name: " + l.name);
    total.total_flops += c.flops;
    total.total_macs += c.macs;
    total.bytes_moved += c.bytes_moved;
    total.group_flops[static_cast<std::size_t>(l.group)] += c.flops;
    total.layers.emplace_back(l.name, c);
  }
  return total;
}

inline ArchDescription parse_arch_json(const nlohmann::json& j) {
  ArchDescription a;
  try {
    a.name = j.value("name", "");
    a.input_name = j.at("input").value("name", "input");
    a.input_channels = j.at("input").at("channels").get<int>();
    for (const auto& e : j.at("layers")) {
      ArchLayer l;
      l.name = e.at("name").get<std::string>();
      l.kind = parse_arch_kind(e.at("kind").get<std::string>());
      if (e.contains("inputs"))
        l.inputs = e["inputs"].get<std::vector<std::string>>();
      else
        l.inputs = {e.at("input").get<std::string>()};
      l.in_ch = e.value("in_ch", 0);
      l.out_ch = e.value("out_ch", 0);
      l.kernel = e.value("kernel", 1);
      l.stride = e.value("stride", 1);
      l.dilation = e.value("dilation", 1);
      l.groups = e.value("groups", 1);
      l.padding = e.value("padding", -1);
      l.size_of = e.value("size_of", "");
      l.scale = e.value("scale", 0);
      l.group = nn::parse_layer_group(e.value("group", "backbone"));
      a.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed architecture description: " + std::string(e.what()));
  }
  return a;
}

inline ArchDescription load_arch(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open architecture description: " + file.string());
  try {
    return parse_arch_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(file.string() + ": " + e.what());
  }
}

// Describes a SegNet with masked channels removed.
inline ArchDescription describe(const nn::SegNet& net) {
  const auto live = nn::live_channels(net);
  ArchDescription a;
  a.name = "segnet";
  a.input_name = net.nodes.at(0).spec.name;
  a.input_channels = static_cast<int>(live[0].size());
  auto tensor = [&](int node) { return net.nodes[node].spec.name; };
  for (std::size_t i = 1; i < net.nodes.size(); ++i) {
    const auto& s = net.nodes[i].spec;
    ArchLayer l;
    l.name = s.name;
    l.group = s.group;
    for (int k : s.inputs) l.inputs.push_back(tensor(k));
    switch (s.kind) {
      case nn::LayerKind::Conv2d:
        l.kind = ArchKind::Conv2d;
        l.in_ch = static_cast<int>(live[s.inputs[0]].size());
        l.out_ch = static_cast<int>(live[i].size());
        l.kernel = s.conv.kernel;
        l.stride = s.conv.stride;
        l.dilation = s.conv.dilation;
        l.padding = s.conv.padding;
        break;
      case nn::LayerKind::BatchNorm: l.kind = ArchKind::BatchNorm; break;
      case nn::LayerKind::Relu: l.kind = ArchKind::Relu; break;
      case nn::LayerKind::Upsample:
        l.kind = ArchKind::Upsample;
        l.size_of = tensor(s.size_ref);
        break;
      case nn::LayerKind::Concat: l.kind = ArchKind::Concat; break;
      case nn::LayerKind::Add: l.kind = ArchKind::Add; break;
      case nn::LayerKind::Input: throw StateError("describe: input node not first");
    }
    a.layers.push_back(std::move(l));
  }
  return a;
}

// FLOPs of computing the spatial complexity score for one image: luma
// conversion, two 3x3 Sobel filters, gradient magnitude and the mean.
inline std::uint64_t indicator_overhead(int width, int height, int channels = 3,
                                        FlopConvention conv = FlopConvention::TwoPerMac) {
  if (width < 3 || height < 3) throw InvalidInputError("indicator_overhead: image smaller than 3x3");
  const std::uint64_t per_mac = conv == FlopConvention::TwoPerMac ? 2 : 1;
  const std::uint64_t px = static_cast<std::uint64_t>(width) * height;
  const std::uint64_t gray = channels == 3 ? 3 * per_mac : 0;
  const std::uint64_t sobel = 2 * 9 * per_mac;
  const std::uint64_t magnitude = per_mac * 2 + 1;  // two squares summed, one sqrt
  const std::uint64_t mean = 1;
  return px * (gray + sobel + magnitude + mean) + 1;
}

// Proxy energy model: joules = flops * energy_per_flop + bytes * energy_per_byte.
// Defaults are the widely quoted 45 nm figures (fp32 multiply-add ~4.6 pJ, i.e.
// 2.3 pJ per FLOP; DRAM access ~640 pJ per 32-bit word). They are a stand-in
// for on-device measurement, not a reproduction of one.
struct CostModel {
  double energy_per_flop = 2.3e-12;
  double energy_per_byte = 160e-12;
  FlopConvention convention = FlopConvention::TwoPerMac;
  double backward_factor = 2.0;  // backward pass ~ 2x forward FLOPs

  void validate() const {
    if (energy_per_flop < 0.0 || energy_per_byte < 0.0 || backward_factor < 0.0)
      throw ConfigError("cost model parameters must be >= 0");
  }
};

inline double energy_estimate(double flops, double bytes_moved, const CostModel& m) {
  if (flops < 0.0 || bytes_moved < 0.0) throw DomainError("energy_estimate: negative input");
  m.validate();
  return flops * m.energy_per_flop + bytes_moved * m.energy_per_byte;
}

struct IterationRecord {
  std::int64_t iteration = 0;
  int epoch = 0;
  int samples_kept = 0;
  std::vector<std::pair<int, int>> dims;  // (w, h) per surviving sample
  int live_channels = 0;                  // surviving BN channels network-wide
  std::uint64_t network_flops = 0;
  std::uint64_t indicator_flops = 0;
  std::uint64_t bytes_moved = 0;
  double energy_j = 0.0;

  std::uint64_t flops() const { return network_flops + indicator_flops; }
};

class CostLedger {
 public:
  explicit CostLedger(CostModel model = {}) : model_(model) { model_.validate(); }

  const CostModel& model() const { return model_; }
  const std::vector<IterationRecord>& records() const { return records_; }
  std::uint64_t training_flops() const { return train_flops_; }
  double training_energy() const { return train_energy_; }

  void append(IterationRecord r) {
    train_flops_ += r.flops();
    train_energy_ += r.energy_j;
    records_.push_back(std::move(r));
  }

  // Recomputes totals from the records; throws if they disagree.
  void finalize() const {
    std::uint64_t f = 0;
    double e = 0.0;
    for (const auto& r : records_) {
      f += r.flops();
      e += r.energy_j;
    }
    if (f != train_flops_ || e != train_energy_) throw StateError("cost ledger totals disagree with records");
  }

  double inference_flops_per_image = 0.0;
  double inference_energy_per_image = 0.0;
  std::string inference_resolution;

  std::string to_csv() const {
    std::ostringstream os;
    os << "iteration,epoch,samples_kept,dims,live_channels,network_flops,indicator_flops,bytes_moved,energy_j\n";
    os.precision(17);
    for (const auto& r : records_) {
      os << r.iteration << ',' << r.epoch << ',' << r.samples_kept << ',';
      for (std::size_t i = 0; i < r.dims.size(); ++i) os << (i ? ";" : "") << r.dims[i].first << 'x' << r.dims[i].second;
      os << ',' << r.live_channels << ',' << r.network_flops << ',' << r.indicator_flops << ',' << r.bytes_moved << ','
         << r.energy_j << '\n';
    }
    return os.str();
  }

 private:
  CostModel model_;
  std::vector<IterationRecord> records_;
  std::uint64_t train_flops_ = 0;
  double train_energy_ = 0.0;
};

// Memoizes forward cost of the current (masked) net per input resolution.
class NetCostCache {
 public:
  NetCostCache(const nn::SegNet& net, FlopConvention conv) : arch_(describe(net)), conv_(conv) {}

  const ArchCost& at(int w, int h) {
    auto key = std::make_pair(w, h);
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, arch_flops(arch_, h, w, conv_)).first;
    return it->second;
  }

 private:
  ArchDescription arch_;
  FlopConvention conv_;
  std::map<std::pair<int, int>, ArchCost> cache_;
};

inline int live_bn_channels(const nn::SegNet& net) {
  int n = 0;
  for (const auto& nd : net.nodes)
    if (nd.spec.kind == nn::LayerKind::BatchNorm)
      for (auto m : nd.mask) n += m;
  return n;
}

// Training FLOPs of one iteration: (1 + backward_factor) x forward FLOPs of
// the live net at each surviving sample's resolution. Dropped samples add
// nothing; indicator_flops carries any first-sight indicator cost.
inline IterationRecord record_training_iteration(CostLedger& ledger, std::int64_t iteration, int epoch,
                                                 const std::vector<std::pair<int, int>>& surviving_dims,
                                                 const nn::SegNet& net, std::uint64_t indicator_flops = 0) {
  const CostModel& m = ledger.model();
  IterationRecord r;
  r.iteration = iteration;
  r.epoch = epoch;
  r.samples_kept = static_cast<int>(surviving_dims.size());
  r.dims = surviving_dims;
  r.live_channels = live_bn_channels(net);
  r.indicator_flops = indicator_flops;
  if (!surviving_dims.empty()) {
    NetCostCache cache(net, m.convention);
    const double factor = 1.0 + m.backward_factor;
    for (const auto& [w, h] : surviving_dims) {
      const ArchCost& c = cache.at(w, h);
      r.network_flops += static_cast<std::uint64_t>(std::llround(factor * static_cast<double>(c.total_flops)));
      r.bytes_moved += static_cast<std::uint64_t>(std::llround(factor * static_cast<double>(c.bytes_moved)));
    }
  }
  r.energy_j = energy_estimate(static_cast<double>(r.flops()), static_cast<double>(r.bytes_moved), m);
  ledger.append(r);
  return r;
}

}  // namespace dance::cost
