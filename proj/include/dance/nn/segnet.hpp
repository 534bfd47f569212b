#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dance/error.hpp"
#include "dance/image.hpp"
#include "dance/nn/layers.hpp"
#include "dance/nn/tensor.hpp"
#include "dance/rng.hpp"

namespace dance::nn {

enum class LayerKind { Input, Conv2d, BatchNorm, Relu, Upsample, Concat, Add };
enum class LayerGroup { Backbone, AggregationHead, Decoder, Classifier };

inline constexpr std::array<LayerGroup, 4> kAllGroups{LayerGroup::Backbone, LayerGroup::AggregationHead,
                                                      LayerGroup::Decoder, LayerGroup::Classifier};

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Input: return "input";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Relu: return "relu";
    case LayerKind::Upsample: return "bilinear-upsample";
    case LayerKind::Concat: return "concat";
    case LayerKind::Add: return "add";
  }
  return "?";
}

inline const char* to_string(LayerGroup g) {
  switch (g) {
    case LayerGroup::Backbone: return "backbone";
    case LayerGroup::AggregationHead: return "aggregation_head";
    case LayerGroup::Decoder: return "decoder";
    case LayerGroup::Classifier: return "classifier";
  }
  return "?";
}

inline LayerKind parse_layer_kind(const std::string& s) {
  for (auto k : {LayerKind::Input, LayerKind::Conv2d, LayerKind::BatchNorm, LayerKind::Relu,
                 LayerKind::Upsample, LayerKind::Concat, LayerKind::Add})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown layer kind: " + s);
}

inline LayerGroup parse_layer_group(const std::string& s) {
  for (auto g : kAllGroups)
    if (s == to_string(g)) return g;
  throw ConfigError("unknown layer group: " + s);
}

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Input;
  LayerGroup group = LayerGroup::Backbone;
  std::vector<int> inputs;  // producer node indices
  ConvGeometry conv;        // conv2d only
  bool bias = false;        // conv2d only
  int size_ref = -1;        // upsample: node whose spatial dims are matched
  int channels = 0;         // output channels
};

struct Node {
  LayerSpec spec;
  std::vector<double> weight, bias;        // conv2d
  std::vector<unsigned char> weight_mask;  // unstructured pruning, empty when unused
  std::vector<double> gamma, beta, running_mean, running_var;  // batchnorm
  std::vector<unsigned char> mask;  // batchnorm channel mask, 1 = live
};

// A feed-forward graph in topological order; node 0 is the input.
class SegNet {
 public:
  std::vector<Node> nodes;
  int num_classes = 0;
  std::vector<LayerGroup> prunable_groups{LayerGroup::AggregationHead, LayerGroup::Decoder};
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  int total_stride = 1;

  int add_input(int channels) {
    if (!nodes.empty()) throw ConfigError("input must be the first node");
    LayerSpec s;
    s.name = "input";
    s.kind = LayerKind::Input;
    s.channels = channels;
    return push(std::move(s));
  }

  int add_conv(const std::string& name, int src, int out_ch, int kernel, int stride, int dilation,
               LayerGroup group, bool bias = false) {
    LayerSpec s;
    s.name = name;
    s.kind = LayerKind::Conv2d;
    s.group = group;
    s.inputs = {src};
    s.conv = {channels(src), out_ch, kernel, stride, dilation, dilation * (kernel - 1) / 2};
    s.bias = bias;
    s.channels = out_ch;
    return push(std::move(s));
  }

  int add_batchnorm(const std::string& name, int src, LayerGroup group) {
    return push(simple(name, LayerKind::BatchNorm, group, {src}, channels(src)));
  }
  int add_relu(const std::string& name, int src, LayerGroup group) {
    return push(simple(name, LayerKind::Relu, group, {src}, channels(src)));
  }
  int add_upsample(const std::string& name, int src, int size_ref, LayerGroup group) {
    LayerSpec s = simple(name, LayerKind::Upsample, group, {src}, channels(src));
    s.size_ref = size_ref;
    return push(std::move(s));
  }
  int add_concat(const std::string& name, std::vector<int> srcs, LayerGroup group) {
    int c = 0;
    for (int i : srcs) c += channels(i);
    return push(simple(name, LayerKind::Concat, group, std::move(srcs), c));
  }
  int add_add(const std::string& name, std::vector<int> srcs, LayerGroup group) {
    for (int i : srcs)
      if (channels(i) != channels(srcs[0])) throw ConfigError("add: channel mismatch at " + name);
    return push(simple(name, LayerKind::Add, group, srcs, channels(srcs[0])));
  }

  int channels(int node) const { return nodes.at(node).spec.channels; }
  int output_node() const { return static_cast<int>(nodes.size()) - 1; }

  bool is_prunable(LayerGroup g) const {
    return g != LayerGroup::Classifier &&
           std::find(prunable_groups.begin(), prunable_groups.end(), g) != prunable_groups.end();
  }

  // Trainable parameter count (conv weights and biases, BN scale and shift).
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& nd : nodes) n += nd.weight.size() + nd.bias.size() + nd.gamma.size() + nd.beta.size();
    return n;
  }

  // Index of the batchnorm consuming this conv, or -1.
  int bn_after(int conv_node) const {
    for (std::size_t i = conv_node + 1; i < nodes.size(); ++i)
      if (nodes[i].spec.kind == LayerKind::BatchNorm && nodes[i].spec.inputs[0] == conv_node)
        return static_cast<int>(i);
    return -1;
  }

  // He-uniform conv weights, zero biases, gamma = gamma_init, beta = 0.
  void init_parameters(std::uint64_t seed, double gamma_init = 0.5) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      Node& nd = nodes[i];
      if (nd.spec.kind == LayerKind::Conv2d) {
        const auto& g = nd.spec.conv;
        SplitMix64 rng(derive_seed(seed, i));
        const double bound = std::sqrt(6.0 / (static_cast<double>(g.in_ch) * g.kernel * g.kernel));
        nd.weight.resize(g.weight_count());
        for (double& w : nd.weight) w = rng.uniform(-bound, bound);
        nd.bias.assign(nd.spec.bias ? g.out_ch : 0, 0.0);
      } else if (nd.spec.kind == LayerKind::BatchNorm) {
        const int c = nd.spec.channels;
        nd.gamma.assign(c, gamma_init);
        nd.beta.assign(c, 0.0);
        nd.running_mean.assign(c, 0.0);
        nd.running_var.assign(c, 1.0);
        nd.mask.assign(c, 1);
      }
    }
  }

 private:
  static LayerSpec simple(const std::string& name, LayerKind kind, LayerGroup group, std::vector<int> inputs,
                          int channels) {
    LayerSpec s;
    s.name = name;
    s.kind = kind;
    s.group = group;
    s.inputs = std::move(inputs);
    s.channels = channels;
    return s;
  }

  int push(LayerSpec s) {
    for (int i : s.inputs)
      if (i < 0 || i >= static_cast<int>(nodes.size())) throw ConfigError("node input out of order: " + s.name);
    if (s.kind == LayerKind::Upsample && (s.size_ref < 0 || s.size_ref >= static_cast<int>(nodes.size())))
      throw ConfigError("upsample size reference out of order: " + s.name);
    if (s.kind == LayerKind::Conv2d && (s.conv.kernel < 1 || s.conv.stride < 1 || s.conv.dilation < 1 ||
                                        s.conv.out_ch < 1))
      throw ConfigError("invalid conv geometry: " + s.name);
    Node nd;
    nd.spec = std::move(s);
    nodes.push_back(std::move(nd));
    return static_cast<int>(nodes.size()) - 1;
  }
};

struct SegNetConfig {
  int num_classes = 4;
  int in_channels = 3;
  int base_width = 16;
  int head_width = 0;     // 0 -> 2 * base_width
  int decoder_width = 0;  // 0 -> 2 * base_width
  bool refine = true;     // 1x1 refinement stage merging the stride-2 skip
  std::uint64_t seed = 0;
  double gamma_init = 0.5;
  std::vector<LayerGroup> prunable_groups{LayerGroup::AggregationHead, LayerGroup::Decoder};
};

// Encoder of three stride-2 conv/BN/ReLU blocks, a multi-scale aggregation
// head (1x1 branch + 3x3 branches at dilation 1, 2, 4, concatenated and fused
// by a 1x1 conv), a decoder that upsamples and merges the stride-4 skip with a
// 3x3 conv and then, optionally, the stride-2 skip with a 1x1 conv, and a 1x1
// classifier upsampled back to the input resolution.
inline SegNet build_toy_net(const SegNetConfig& cfg) {
  if (cfg.num_classes < 2) throw ConfigError("build_toy_net: num_classes must be >= 2");
  if (cfg.base_width < 8) throw ConfigError("build_toy_net: base_width must be >= 8");
  if (cfg.in_channels < 1) throw ConfigError("build_toy_net: in_channels must be >= 1");
  const int w = cfg.base_width;
  const int hw = cfg.head_width > 0 ? cfg.head_width : 2 * w;
  const int dw = cfg.decoder_width > 0 ? cfg.decoder_width : 2 * w;
  using G = LayerGroup;

  SegNet net;
  net.num_classes = cfg.num_classes;
  net.prunable_groups = cfg.prunable_groups;
  net.total_stride = 8;
  auto block = [&net](const std::string& name, int src, int out, int k, int stride, int dil, G g) {
    const int c = net.add_conv(name + ".conv", src, out, k, stride, dil, g);
    const int b = net.add_batchnorm(name + ".bn", c, g);
    return net.add_relu(name + ".relu", b, g);
  };

  const int x = net.add_input(cfg.in_channels);
  const int e1 = block("enc1", x, w, 3, 2, 1, G::Backbone);
  const int e2 = block("enc2", e1, 2 * w, 3, 2, 1, G::Backbone);
  const int e3 = block("enc3", e2, 4 * w, 3, 2, 1, G::Backbone);
  const int b0 = block("head.branch0", e3, hw, 1, 1, 1, G::AggregationHead);
  const int b1 = block("head.branch1", e3, hw, 3, 1, 1, G::AggregationHead);
  const int b2 = block("head.branch2", e3, hw, 3, 1, 2, G::AggregationHead);
  const int b3 = block("head.branch3", e3, hw, 3, 1, 4, G::AggregationHead);
  const int cat = net.add_concat("head.concat", {b0, b1, b2, b3}, G::AggregationHead);
  const int fuse = block("head.fuse", cat, hw, 1, 1, 1, G::AggregationHead);
  const int up = net.add_upsample("decoder.upsample", fuse, e2, G::Decoder);
  const int dcat = net.add_concat("decoder.concat", {up, e2}, G::Decoder);
  const int dec = block("decoder", dcat, dw, 3, 1, 1, G::Decoder);
  int last = dec;
  if (cfg.refine) {
    const int up2 = net.add_upsample("decoder.refine.upsample", dec, e1, G::Decoder);
    const int rcat = net.add_concat("decoder.refine.concat", {up2, e1}, G::Decoder);
    last = block("decoder.refine", rcat, w, 1, 1, 1, G::Decoder);
  }
  const int cls = net.add_conv("classifier.conv", last, cfg.num_classes, 1, 1, 1, G::Classifier, true);
  net.add_upsample("classifier.upsample", cls, x, G::Classifier);
  net.init_parameters(cfg.seed, cfg.gamma_init);
  return net;
}

enum class Mode { Train, Eval };

// Activations (and BN statistics) of one forward pass.
struct Tape {
  std::vector<Tensor> out;
  std::vector<BatchNormCache> bn;
};

// Train mode normalizes with batch statistics but leaves running stats untouched;
// see update_running_stats.
inline Tape forward_tape(const SegNet& net, const Tensor& input, Mode mode) {
  if (net.nodes.empty()) throw StateError("forward: empty network");
  if (input.c != net.channels(0)) throw ShapeError("forward: input channel mismatch");
  if (net.total_stride > 1 && (input.h % net.total_stride != 0 || input.w % net.total_stride != 0))
    throw ShapeError("forward: input dims must be divisible by " + std::to_string(net.total_stride));
  Tape t;
  t.out.resize(net.nodes.size());
  t.bn.resize(net.nodes.size());
  t.out[0] = input;
  for (std::size_t i = 1; i < net.nodes.size(); ++i) {
    const Node& nd = net.nodes[i];
    const LayerSpec& s = nd.spec;
    const Tensor& a = t.out[s.inputs[0]];
    switch (s.kind) {
      case LayerKind::Conv2d: t.out[i] = conv2d_forward(a, nd.weight, nd.bias, s.conv); break;
      case LayerKind::BatchNorm:
        t.out[i] = mode == Mode::Train
                       ? batchnorm_forward_train(a, nd.gamma, nd.beta, nd.mask, net.bn_eps, t.bn[i])
                       : batchnorm_forward_eval(a, nd.gamma, nd.beta, nd.mask, nd.running_mean,
                                                nd.running_var, net.bn_eps);
        break;
      case LayerKind::Relu: t.out[i] = relu_forward(a); break;
      case LayerKind::Upsample: {
        const Tensor& ref = t.out[s.size_ref];
        t.out[i] = upsample_forward(a, ref.h, ref.w);
        break;
      }
      case LayerKind::Concat:
      case LayerKind::Add: {
        std::vector<const Tensor*> ins;
        for (int k : s.inputs) ins.push_back(&t.out[k]);
        t.out[i] = s.kind == LayerKind::Concat ? concat_forward(ins) : add_forward(ins);
        break;
      }
      case LayerKind::Input: throw StateError("forward: input node not at position 0");
    }
  }
  return t;
}

inline void update_running_stats(SegNet& net, const Tape& t) {
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    Node& nd = net.nodes[i];
    if (nd.spec.kind != LayerKind::BatchNorm) continue;
    const Tensor& in = t.out[nd.spec.inputs[0]];
    const double m = static_cast<double>(in.n) * in.plane();
    const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
    for (int c = 0; c < nd.spec.channels; ++c) {
      nd.running_mean[c] = (1.0 - net.bn_momentum) * nd.running_mean[c] + net.bn_momentum * t.bn[i].mean[c];
      nd.running_var[c] =
          (1.0 - net.bn_momentum) * nd.running_var[c] + net.bn_momentum * t.bn[i].var[c] * unbias;
    }
  }
}

inline Tensor forward_eval(const SegNet& net, const Tensor& input) {
  return std::move(forward_tape(net, input, Mode::Eval).out.back());
}

// Train mode also updates the BN running statistics.
inline Tensor forward(SegNet& net, const Tensor& input, Mode mode) {
  Tape t = forward_tape(net, input, mode);
  if (mode == Mode::Train) update_running_stats(net, t);
  return std::move(t.out.back());
}

// Gradient buffers mirroring the parameter layout of a SegNet.
struct Gradients {
  std::vector<std::vector<double>> weight, bias, gamma, beta;

  explicit Gradients(const SegNet& net) {
    for (const auto& nd : net.nodes) {
      weight.emplace_back(nd.weight.size(), 0.0);
      bias.emplace_back(nd.bias.size(), 0.0);
      gamma.emplace_back(nd.gamma.size(), 0.0);
      beta.emplace_back(nd.beta.size(), 0.0);
    }
  }

  void zero() {
    for (auto* set : {&weight, &bias, &gamma, &beta})
      for (auto& v : *set) std::fill(v.begin(), v.end(), 0.0);
  }
};

inline void backward(const SegNet& net, const Tape& t, const Tensor& grad_output, Gradients& grads) {
  std::vector<Tensor> g(net.nodes.size());
  auto grad_of = [&](int node) -> Tensor& {
    if (g[node].v.empty()) {
      const Tensor& o = t.out[node];
      g[node] = Tensor(o.n, o.c, o.h, o.w);
    }
    return g[node];
  };
  g.back() = grad_output;
  for (int i = static_cast<int>(net.nodes.size()) - 1; i >= 1; --i) {
    if (g[i].v.empty()) continue;
    const Node& nd = net.nodes[i];
    const LayerSpec& s = nd.spec;
    const Tensor& go = g[i];
    switch (s.kind) {
      case LayerKind::Conv2d: {
        const int src = s.inputs[0];
        Tensor* gi = src == 0 ? nullptr : &grad_of(src);
        conv2d_backward(t.out[src], nd.weight, go, s.conv, gi, grads.weight[i], grads.bias[i]);
        break;
      }
      case LayerKind::BatchNorm:
        batchnorm_backward_train(go, nd.gamma, nd.mask, t.bn[i], grad_of(s.inputs[0]), grads.gamma[i],
                                 grads.beta[i]);
        break;
      case LayerKind::Relu: relu_backward(t.out[i], go, grad_of(s.inputs[0])); break;
      case LayerKind::Upsample: upsample_backward(go, grad_of(s.inputs[0])); break;
      case LayerKind::Concat:
      case LayerKind::Add: {
        std::vector<Tensor*> gins;
        for (int k : s.inputs) gins.push_back(&grad_of(k));
        if (s.kind == LayerKind::Concat)
          concat_backward(go, gins);
        else
          add_backward(go, gins);
        break;
      }
      case LayerKind::Input: break;
    }
    g[i] = Tensor();  // release
  }
}

// Stacks equal-dims images into an NCHW tensor.
inline Tensor to_tensor(std::span<const RasterImage> images) {
  if (images.empty()) throw ShapeError("to_tensor: empty batch");
  const int w = images[0].width, h = images[0].height, c = images[0].channels;
  Tensor t(static_cast<int>(images.size()), c, h, w);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& img = images[n];
    if (img.width != w || img.height != h || img.channels != c) throw ShapeError("to_tensor: dims differ in batch");
    for (int ch = 0; ch < c; ++ch) {
      double* dst = t.ptr(static_cast<int>(n), ch);
      for (std::size_t p = 0; p < img.pixel_count(); ++p) dst[p] = img.data[p * c + ch];
    }
  }
  return t;
}

// Mini-batch of equal-dims samples with per-sample loss weights.
struct Batch {
  Tensor images;
  std::vector<LabelMap> labels;
  std::vector<double> weights;

  int size() const { return images.n; }
};

inline Batch make_batch(std::span<const RasterImage> images, std::vector<LabelMap> labels,
                        std::vector<double> weights) {
  Batch b{to_tensor(images), std::move(labels), std::move(weights)};
  if (b.labels.size() != static_cast<std::size_t>(b.images.n) || b.weights.size() != b.labels.size())
    throw ShapeError("make_batch: image, label and weight counts differ");
  for (const auto& l : b.labels)
    if (l.width != b.images.w || l.height != b.images.h) throw ShapeError("make_batch: label dims differ");
  return b;
}

// Mean pixel cross-entropy of one sample; writes dl/dlogits (scaled by `scale`)
// into grad when non-null. Returns {loss, valid_pixel_count}.
inline std::pair<double, std::size_t> sample_cross_entropy(const Tensor& logits, int n, const LabelMap& labels,
                                                           double scale, Tensor* grad) {
  const int classes = logits.c;
  const std::size_t plane = logits.plane();
  std::size_t valid = 0;
  for (auto l : labels.labels)
    if (l != labels.ignore_id) ++valid;
  if (valid == 0) return {0.0, 0};
  double loss = 0.0;
  std::vector<double> prob(classes);
  for (std::size_t p = 0; p < plane; ++p) {
    const auto lab = labels.labels[p];
    if (lab == labels.ignore_id) continue;
    if (lab >= classes) throw InvalidInputError("label id exceeds class count");
    double mx = -INFINITY;
    for (int c = 0; c < classes; ++c) mx = std::max(mx, logits.ptr(n, c)[p]);
    double z = 0.0;
    for (int c = 0; c < classes; ++c) {
      prob[c] = std::exp(logits.ptr(n, c)[p] - mx);
      z += prob[c];
    }
    loss += -(logits.ptr(n, lab)[p] - mx - std::log(z));
    if (grad) {
      const double k = scale / static_cast<double>(valid);
      for (int c = 0; c < classes; ++c) grad->ptr(n, c)[p] += k * (prob[c] / z - (c == lab ? 1.0 : 0.0));
    }
  }
  return {loss / static_cast<double>(valid), valid};
}

struct LossResult {
  double loss = 0.0;        // data term + penalty
  double data_loss = 0.0;   // weighted mean of per-sample losses
  double l1_penalty = 0.0;  // lambda * sum |gamma| over prunable BN layers
  std::vector<double> sample_losses;
};

inline double l1_gamma_sum(const SegNet& net) {
  double s = 0.0;
  for (const auto& nd : net.nodes)
    if (nd.spec.kind == LayerKind::BatchNorm && net.is_prunable(nd.spec.group))
      for (int c = 0; c < nd.spec.channels; ++c)
        if (nd.mask[c]) s += std::abs(nd.gamma[c]);
  return s;
}

// Weighted cross-entropy over every sample of the logical batch (possibly
// split into equal-dims micro-batches) plus the L1 penalty on prunable BN
// scales. Gradients are accumulated into `grads` when non-null; BN running
// statistics are updated only when update_stats is set.
inline LossResult loss_and_grad(SegNet& net, std::span<const Batch> micro, double lambda_l1, Gradients* grads,
                                bool update_stats = true) {
  if (lambda_l1 < 0.0) throw ConfigError("loss_and_grad: lambda_l1 must be >= 0");
  if (micro.empty()) throw DegenerateBatchError("loss_and_grad: empty batch");
  std::vector<Tape> tapes;
  tapes.reserve(micro.size());
  std::vector<std::size_t> valid_counts;
  double total_w = 0.0;
  for (const Batch& b : micro) {
    for (int n = 0; n < b.size(); ++n) {
      std::size_t v = 0;
      for (auto l : b.labels[n].labels) v += l != b.labels[n].ignore_id;
      valid_counts.push_back(v);
      if (v > 0) total_w += b.weights[n];
    }
  }
  if (!(total_w > 0.0)) throw DegenerateBatchError("loss_and_grad: no valid pixels or zero total weight");

  LossResult r;
  std::size_t k = 0;
  for (const Batch& b : micro) {
    Tape t = forward_tape(net, b.images, Mode::Train);
    const Tensor& logits = t.out.back();
    if (logits.c != net.num_classes || logits.h != b.images.h || logits.w != b.images.w)
      throw ShapeError("loss_and_grad: logits shape mismatch");
    Tensor glogits;
    if (grads) glogits = Tensor(logits.n, logits.c, logits.h, logits.w);
    for (int n = 0; n < b.size(); ++n, ++k) {
      const double w = valid_counts[k] > 0 ? b.weights[n] : 0.0;
      auto [l, valid] = sample_cross_entropy(logits, n, b.labels[n], w / total_w, grads ? &glogits : nullptr);
      r.sample_losses.push_back(l);
      r.data_loss += w * l;
    }
    if (grads) backward(net, t, glogits, *grads);
    if (update_stats) update_running_stats(net, t);
  }
  r.data_loss /= total_w;
  r.l1_penalty = lambda_l1 * l1_gamma_sum(net);
  r.loss = r.data_loss + r.l1_penalty;
  if (grads && lambda_l1 > 0.0) {
    for (std::size_t i = 0; i < net.nodes.size(); ++i) {
      const Node& nd = net.nodes[i];
      if (nd.spec.kind != LayerKind::BatchNorm || !net.is_prunable(nd.spec.group)) continue;
      for (int c = 0; c < nd.spec.channels; ++c) {
        if (!nd.mask[c]) continue;
        const double gm = nd.gamma[c];
        grads->gamma[i][c] += lambda_l1 * (gm > 0.0 ? 1.0 : (gm < 0.0 ? -1.0 : 0.0));
      }
    }
  }
  return r;
}

// Zeroes every parameter that a channel or weight mask removes.
inline void apply_masks(SegNet& net) {
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    Node& nd = net.nodes[i];
    if (!nd.weight_mask.empty())
      for (std::size_t j = 0; j < nd.weight.size(); ++j)
        if (!nd.weight_mask[j]) nd.weight[j] = 0.0;
    if (nd.spec.kind != LayerKind::BatchNorm) continue;
    Node& conv = net.nodes[nd.spec.inputs[0]];
    const bool has_conv = conv.spec.kind == LayerKind::Conv2d;
    for (int c = 0; c < nd.spec.channels; ++c) {
      if (nd.mask[c]) continue;
      nd.gamma[c] = 0.0;
      nd.beta[c] = 0.0;
      if (has_conv) {
        const std::size_t per = conv.weight.size() / conv.spec.conv.out_ch;
        std::fill(conv.weight.begin() + c * per, conv.weight.begin() + (c + 1) * per, 0.0);
        if (!conv.bias.empty()) conv.bias[c] = 0.0;
      }
    }
  }
}

// theta <- theta - lr * g; masked parameters stay frozen at zero.
inline void sgd_step(SegNet& net, const Gradients& grads, double lr) {
  if (!(lr > 0.0)) throw ConfigError("sgd_step: learning rate must be positive");
  for (const auto* set : {&grads.weight, &grads.bias, &grads.gamma, &grads.beta})
    for (const auto& v : *set)
      for (double g : v)
        if (!std::isfinite(g)) throw NumericError("sgd_step: non-finite gradient");
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    Node& nd = net.nodes[i];
    for (std::size_t j = 0; j < nd.weight.size(); ++j) nd.weight[j] -= lr * grads.weight[i][j];
    for (std::size_t j = 0; j < nd.bias.size(); ++j) nd.bias[j] -= lr * grads.bias[i][j];
    for (std::size_t j = 0; j < nd.gamma.size(); ++j) nd.gamma[j] -= lr * grads.gamma[i][j];
    for (std::size_t j = 0; j < nd.beta.size(); ++j) nd.beta[j] -= lr * grads.beta[i][j];
  }
  apply_masks(net);
}

// Surviving channel indices of every node's output.
inline std::vector<std::vector<int>> live_channels(const SegNet& net) {
  std::vector<std::vector<int>> live(net.nodes.size());
  auto all = [](int n) {
    std::vector<int> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
  };
  auto from_mask = [](const std::vector<unsigned char>& m) {
    std::vector<int> v;
    for (std::size_t c = 0; c < m.size(); ++c)
      if (m[c]) v.push_back(static_cast<int>(c));
    return v;
  };
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    const Node& nd = net.nodes[i];
    const LayerSpec& s = nd.spec;
    switch (s.kind) {
      case LayerKind::Input: live[i] = all(s.channels); break;
      case LayerKind::Conv2d: {
        const int bn = net.bn_after(static_cast<int>(i));
        live[i] = bn >= 0 ? from_mask(net.nodes[bn].mask) : all(s.channels);
        break;
      }
      case LayerKind::BatchNorm: live[i] = from_mask(nd.mask); break;
      case LayerKind::Relu:
      case LayerKind::Upsample: live[i] = live[s.inputs[0]]; break;
      case LayerKind::Concat: {
        int off = 0;
        for (int k : s.inputs) {
          for (int c : live[k]) live[i].push_back(off + c);
          off += net.channels(k);
        }
        break;
      }
      case LayerKind::Add: {
        std::vector<int> u;
        for (int k : s.inputs) u.insert(u.end(), live[k].begin(), live[k].end());
        std::sort(u.begin(), u.end());
        u.erase(std::unique(u.begin(), u.end()), u.end());
        live[i] = u;
        break;
      }
    }
  }
  return live;
}

// Physically removes masked channels: producer filters, BN entries, and the
// matching input slices of every consuming conv.
inline SegNet compact(const SegNet& net) {
  const auto live = live_channels(net);
  SegNet out;
  out.num_classes = net.num_classes;
  out.prunable_groups = net.prunable_groups;
  out.bn_eps = net.bn_eps;
  out.bn_momentum = net.bn_momentum;
  out.total_stride = net.total_stride;
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    const Node& src = net.nodes[i];
    Node nd;
    nd.spec = src.spec;
    nd.spec.channels = static_cast<int>(live[i].size());
    if (nd.spec.channels == 0) throw StateError("compact: node without surviving channels: " + src.spec.name);
    switch (src.spec.kind) {
      case LayerKind::Conv2d: {
        const auto& lin = live[src.spec.inputs[0]];
        const auto& g = src.spec.conv;
        nd.spec.conv.in_ch = static_cast<int>(lin.size());
        nd.spec.conv.out_ch = nd.spec.channels;
        const int kk = g.kernel * g.kernel;
        for (int oc : live[i]) {
          for (int ic : lin) {
            const std::size_t base = (static_cast<std::size_t>(oc) * g.in_ch + ic) * kk;
            nd.weight.insert(nd.weight.end(), src.weight.begin() + base, src.weight.begin() + base + kk);
            if (!src.weight_mask.empty())
              nd.weight_mask.insert(nd.weight_mask.end(), src.weight_mask.begin() + base,
                                    src.weight_mask.begin() + base + kk);
          }
          if (!src.bias.empty()) nd.bias.push_back(src.bias[oc]);
        }
        break;
      }
      case LayerKind::BatchNorm:
        for (int c : live[i]) {
          nd.gamma.push_back(src.gamma[c]);
          nd.beta.push_back(src.beta[c]);
          nd.running_mean.push_back(src.running_mean[c]);
          nd.running_var.push_back(src.running_var[c]);
          nd.mask.push_back(1);
        }
        break;
      case LayerKind::Add:
        for (int k : src.spec.inputs)
          if (live[k] != live[i]) throw StateError("compact: add inputs with differing live channels");
        break;
      default: break;
    }
    out.nodes.push_back(std::move(nd));
  }
  return out;
}

}  // namespace dance::nn
