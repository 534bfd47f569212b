#include <gtest/gtest.h>

#include <cmath>

#include "dance/cost.hpp"
#include "dance/prune.hpp"

using namespace dance;
using namespace dance::cost;
using dance::nn::SegNet;

namespace {

const std::string kData = DANCE_DATA_DIR;

ArchLayer conv(const std::string& name, const std::string& in, int in_ch, int out_ch, int k, int s = 1) {
  ArchLayer l;
  l.name = name;
  l.kind = ArchKind::Conv2d;
  l.inputs = {in};
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.kernel = k;
  l.stride = s;
  return l;
}

SegNet toy(int width = 16, int classes = 4) {
  nn::SegNetConfig c;
  c.base_width = width;
  c.num_classes = classes;
  return nn::build_toy_net(c);
}

// Conv MACs of the toy net written out layer by layer.
std::uint64_t toy_conv_macs(int w, int classes, int H, int W) {
  const std::uint64_t p2 = static_cast<std::uint64_t>(H / 2) * (W / 2);
  const std::uint64_t p4 = p2 / 4, p8 = p4 / 4;
  const std::uint64_t hw = 2 * w, dw = 2 * w;
  std::uint64_t m = 0;
  m += 3ULL * w * 9 * p2;
  m += 1ULL * w * 2 * w * 9 * p4;
  m += 2ULL * w * 4 * w * 9 * p8;
  m += 4ULL * w * hw * p8;
  m += 3 * (4ULL * w * hw * 9 * p8);
  m += 4 * hw * hw * p8;
  m += (hw + 2 * w) * dw * 9 * p4;
  m += (dw + w) * w * p2;
  m += 1ULL * w * classes * p2;
  return m;
}

std::uint64_t conv_flops(const ArchCost& c) {
  std::uint64_t f = 0;
  for (const auto& [name, lc] : c.layers)
    if (name.ends_with(".conv")) f += lc.flops;
  return f;
}

}  // namespace

// ------------------------------------------------------------------ layers

TEST(LayerFlops, UnitConv) {
  const auto c = layer_flops(conv("c", "x", 1, 1, 1), {{1, 1, 1}});
  EXPECT_EQ(c.flops, 2u);
  EXPECT_EQ(c.macs, 1u);
  EXPECT_EQ(layer_flops(conv("c", "x", 1, 1, 1), {{1, 1, 1}}, FlopConvention::OnePerMac).flops, 1u);
}

TEST(LayerFlops, Conv3x3Arithmetic) {
  const auto c = layer_flops(conv("c", "x", 64, 64, 3), {{64, 56, 56}});
  EXPECT_EQ(c.out, (Dims{64, 56, 56}));
  EXPECT_EQ(c.flops, 231211008u);
  EXPECT_EQ(c.flops, 2ULL * 9 * 64 * 64 * 56 * 56);
}

TEST(LayerFlops, DoublingResolutionQuadruplesConv) {
  SplitMix64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const int k = 1 + 2 * static_cast<int>(rng.below(3));
    const int ic = 1 + static_cast<int>(rng.below(32)), oc = 1 + static_cast<int>(rng.below(32));
    const int h = 4 + static_cast<int>(rng.below(40)), w = 4 + static_cast<int>(rng.below(40));
    const auto a = layer_flops(conv("c", "x", ic, oc, k), {{ic, h, w}});
    const auto b = layer_flops(conv("c", "x", ic, oc, k), {{ic, 2 * h, 2 * w}});
    ASSERT_EQ(b.flops, 4 * a.flops);
  }
}

TEST(LayerFlops, ShapeErrors) {
  EXPECT_THROW(layer_flops(conv("c", "x", 4, 4, 3), {{3, 8, 8}}), ShapeError);
  EXPECT_THROW(layer_flops(conv("c", "x", 4, 4, 3), {}), ShapeError);
  ArchLayer up;
  up.name = "u";
  up.kind = ArchKind::Upsample;
  EXPECT_THROW(layer_flops(up, {{4, 8, 8}}), ShapeError);
  ArchLayer add;
  add.name = "a";
  add.kind = ArchKind::Add;
  EXPECT_THROW(layer_flops(add, {{4, 8, 8}, {4, 8, 4}}), ShapeError);
}

TEST(ArchFlops, UnknownInputIsShapeError) {
  ArchDescription a;
  a.layers.push_back(conv("c", "missing", 3, 4, 3));
  EXPECT_THROW(arch_flops(a, 8, 8), ShapeError);
}

TEST(ArchFlops, MalformedJsonIsConfigError) {
  EXPECT_THROW(parse_arch_json(nlohmann::json::parse(R"({"layers": []})")), ConfigError);
  EXPECT_THROW(load_arch("/nonexistent/arch.json"), IoError);
}

// ------------------------------------------------------------------ calibration

TEST(Calibration, ResNet50At224) {
  const auto a = load_arch(kData + "/arch/resnet50.json");
  const double g = arch_flops(a, 224, 224, FlopConvention::OnePerMac).total_flops / 1e9;
  EXPECT_NEAR(g, 4.0, 0.15 * 4.0);
}

TEST(Calibration, DeepLabV3PlusAt224) {
  const auto a = load_arch(kData + "/arch/deeplabv3plus_resnet50_os16.json");
  const double g = arch_flops(a, 224, 224, FlopConvention::OnePerMac).total_flops / 1e9;
  EXPECT_NEAR(g, 13.3, 0.15 * 13.3);
}

TEST(Calibration, DeepLabV3PlusLargeResolutionScalesWithPixels) {
  const auto a = load_arch(kData + "/arch/deeplabv3plus_resnet50_os16.json");
  const double small = arch_flops(a, 224, 224, FlopConvention::OnePerMac).total_flops;
  const double large = arch_flops(a, 1024, 2048, FlopConvention::OnePerMac).total_flops;
  const double pixel_ratio = (2048.0 * 1024.0) / (224.0 * 224.0);
  EXPECT_NEAR(large / small / pixel_ratio, 1.0, 0.05);
}

TEST(Calibration, HeadAndDecoderShare) {
  const auto a = load_arch(kData + "/arch/deeplabv3plus_resnet50_os16.json");
  const auto c = arch_flops(a, 224, 224, FlopConvention::OnePerMac);
  EXPECT_NEAR((c.share(LayerGroup::AggregationHead) + c.share(LayerGroup::Decoder)) * 100.0, 52.98, 3.0);
}

TEST(Calibration, GroupSubtotalsSumToTotal) {
  for (const char* f : {"/arch/resnet50.json", "/arch/deeplabv3plus_resnet50_os16.json"}) {
    const auto c = arch_flops(load_arch(kData + f), 224, 224);
    std::uint64_t s = 0, l = 0;
    for (auto v : c.group_flops) s += v;
    for (const auto& [n, lc] : c.layers) l += lc.flops;
    EXPECT_EQ(s, c.total_flops);
    EXPECT_EQ(l, c.total_flops);
  }
}

// ------------------------------------------------------------------ toy net

TEST(DescribeToyNet, ConvFlopsMatchHandCount) {
  for (auto [w, H, W] : {std::tuple{16, 48, 48}, std::tuple{8, 32, 64}, std::tuple{12, 24, 40}}) {
    const SegNet net = toy(w, 4);
    const auto c = arch_flops(describe(net), H, W);
    EXPECT_EQ(conv_flops(c), 2 * toy_conv_macs(w, 4, H, W));
  }
}

TEST(DescribeToyNet, HalfResolutionIsQuarterCost) {
  const auto a = describe(toy());
  const auto full = arch_flops(a, 48, 48), half = arch_flops(a, 24, 24);
  EXPECT_EQ(conv_flops(full), 4 * conv_flops(half));
  EXPECT_EQ(full.total_flops, 4 * half.total_flops);
}

TEST(DescribeToyNetProperty, MaskingAnyChannelStrictlyDecreasesFlops) {
  SegNet net = toy(8, 3);
  std::uint64_t prev = arch_flops(describe(net), 32, 32).total_flops;
  SplitMix64 rng(2);
  for (int step = 0; step < 30; ++step) {
    std::vector<std::pair<int, int>> live;
    for (int i = 0; i < static_cast<int>(net.nodes.size()); ++i) {
      const auto& nd = net.nodes[i];
      if (nd.spec.kind != nn::LayerKind::BatchNorm || !net.is_prunable(nd.spec.group)) continue;
      if (std::count(nd.mask.begin(), nd.mask.end(), 1) < 2) continue;
      for (int c = 0; c < nd.spec.channels; ++c)
        if (nd.mask[c]) live.push_back({i, c});
    }
    if (live.empty()) break;
    const auto [node, ch] = live[rng.below(live.size())];
    net.nodes[node].mask[ch] = 0;
    const std::uint64_t cur = arch_flops(describe(net), 32, 32).total_flops;
    ASSERT_LT(cur, prev) << net.nodes[node].spec.name << " channel " << ch;
    prev = cur;
  }
}

TEST(DescribeToyNet, MaskedAndCompactedCostAgree) {
  SegNet net = toy(8, 3);
  SplitMix64 rng(3);
  for (auto& nd : net.nodes)
    for (double& g : nd.gamma) g = rng.uniform();
  prune_channels(net, 0.5);
  const SegNet small = nn::compact(net);
  // The physically compacted net, described unmasked, must cost the same.
  EXPECT_EQ(arch_flops(describe(net), 32, 32).total_flops, arch_flops(describe(small), 32, 32).total_flops);
  EXPECT_LT(small.parameter_count(), net.parameter_count());
}

// ------------------------------------------------------------------ indicator

TEST(IndicatorOverhead, Small) {
  const auto dl = load_arch(kData + "/arch/deeplabv3plus_resnet50_os16.json");
  const double net = arch_flops(dl, 224, 224).total_flops;
  EXPECT_LE(indicator_overhead(224, 224) / net, 0.005);
}

TEST(IndicatorOverhead, LinearInPixels) {
  const auto a = indicator_overhead(64, 64) - 1, b = indicator_overhead(128, 128) - 1, c = indicator_overhead(64, 256) - 1;
  EXPECT_EQ(b, 4 * a);
  EXPECT_EQ(c, 4 * a);
}

TEST(IndicatorOverhead, RejectsTinyImages) {
  EXPECT_THROW(indicator_overhead(1, 1), InvalidInputError);
  EXPECT_THROW(indicator_overhead(2, 10), InvalidInputError);
  EXPECT_NO_THROW(indicator_overhead(3, 3));
}

// ------------------------------------------------------------------ energy

TEST(Energy, ZeroAndLinearity) {
  CostModel m;
  EXPECT_EQ(energy_estimate(0, 0, m), 0.0);
  EXPECT_DOUBLE_EQ(energy_estimate(2e9, 4e6, m), 2 * energy_estimate(1e9, 2e6, m));
  m.energy_per_byte = 0.0;
  EXPECT_DOUBLE_EQ(energy_estimate(3e9, 1e6, m) / energy_estimate(1e9, 1e6, m), 3.0);
  EXPECT_THROW(energy_estimate(-1, 0, m), DomainError);
  m.energy_per_flop = -1;
  EXPECT_THROW(m.validate(), ConfigError);
}

// ------------------------------------------------------------------ ledger

TEST(Ledger, DroppedIterationAddsNoNetworkFlops) {
  CostLedger ledger;
  const SegNet net = toy();
  const auto r = record_training_iteration(ledger, 0, 0, {}, net, 123);
  EXPECT_EQ(r.network_flops, 0u);
  EXPECT_EQ(ledger.training_flops(), 123u);
}

TEST(Ledger, IdenticalIterationsAdd) {
  CostLedger ledger;
  const SegNet net = toy();
  const std::vector<std::pair<int, int>> dims{{48, 48}, {32, 40}};
  const auto r = record_training_iteration(ledger, 0, 0, dims, net);
  record_training_iteration(ledger, 1, 0, dims, net);
  EXPECT_EQ(ledger.training_flops(), 2 * r.flops());
  EXPECT_DOUBLE_EQ(ledger.training_energy(), 2 * r.energy_j);
  EXPECT_NO_THROW(ledger.finalize());
}

TEST(Ledger, IterationIsForwardPlusBackward) {
  CostLedger ledger;
  const SegNet net = toy();
  const auto r = record_training_iteration(ledger, 0, 0, {{48, 48}}, net);
  EXPECT_EQ(r.network_flops, 3 * arch_flops(describe(net), 48, 48).total_flops);
}

TEST(Ledger, HalfResolutionSampleQuarterCost) {
  CostLedger ledger;
  const SegNet net = toy();
  const auto full = record_training_iteration(ledger, 0, 0, {{48, 48}}, net);
  const auto half = record_training_iteration(ledger, 1, 0, {{24, 24}}, net);
  EXPECT_EQ(full.network_flops, 4 * half.network_flops);
}

TEST(LedgerProperty, FinalizeAgreesWithRecordSum) {
  SplitMix64 rng(4);
  CostLedger ledger;
  SegNet net = toy(8, 3);
  std::uint64_t sum = 0;
  for (int it = 0; it < 40; ++it) {
    std::vector<std::pair<int, int>> dims;
    const int k = static_cast<int>(rng.below(4));
    for (int j = 0; j < k; ++j) dims.push_back({8 * (1 + static_cast<int>(rng.below(6))), 8 * (1 + static_cast<int>(rng.below(6)))});
    if (it == 20) prune_channels(net, 0.3);
    sum += record_training_iteration(ledger, it, it / 10, dims, net, rng.below(1000)).flops();
  }
  EXPECT_EQ(ledger.training_flops(), sum);
  EXPECT_NO_THROW(ledger.finalize());
  const std::string csv = ledger.to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 41);
}
