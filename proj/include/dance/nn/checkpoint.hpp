#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dance/error.hpp"
#include "dance/nn/segnet.hpp"

// Checkpoint layout:
//   8 bytes   magic "DANCECK1"
//   8 bytes   little-endian uint64 header length L
//   L bytes   JSON header: layer graph, masks, BN running stats, tensor table
//   payload   little-endian float64 tensors at the offsets listed in the header
namespace dance::nn {

inline constexpr char kCheckpointMagic[9] = "DANCECK1";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline void save_checkpoint(const std::filesystem::path& file, const SegNet& net) {
  using nlohmann::ordered_json;
  ordered_json h;
  h["version"] = 1;
  h["num_classes"] = net.num_classes;
  h["bn_eps"] = net.bn_eps;
  h["bn_momentum"] = net.bn_momentum;
  h["total_stride"] = net.total_stride;
  h["prunable_groups"] = ordered_json::array();
  for (auto g : net.prunable_groups) h["prunable_groups"].push_back(to_string(g));
  std::vector<double> payload;
  ordered_json tensors = ordered_json::array();
  auto put = [&](const std::string& name, const auto& values) {
    if (values.empty()) return;
    tensors.push_back({{"name", name}, {"offset", payload.size()}, {"count", values.size()}});
    for (auto v : values) payload.push_back(static_cast<double>(v));
  };
  ordered_json nodes = ordered_json::array();
  for (const auto& nd : net.nodes) {
    const auto& s = nd.spec;
    ordered_json j;
    j["name"] = s.name;
    j["kind"] = to_string(s.kind);
    j["group"] = to_string(s.group);
    j["inputs"] = s.inputs;
    j["channels"] = s.channels;
    if (s.kind == LayerKind::Conv2d) {
      j["conv"] = {{"in_ch", s.conv.in_ch},   {"out_ch", s.conv.out_ch},     {"kernel", s.conv.kernel},
                   {"stride", s.conv.stride}, {"dilation", s.conv.dilation}, {"padding", s.conv.padding}};
      j["bias"] = s.bias;
    }
    if (s.kind == LayerKind::Upsample) j["size_ref"] = s.size_ref;
    if (s.kind == LayerKind::BatchNorm) {
      j["mask"] = nd.mask;
      j["running_mean"] = nd.running_mean;
      j["running_var"] = nd.running_var;
    }
    nodes.push_back(std::move(j));
    put(s.name + "/weight", nd.weight);
    put(s.name + "/bias", nd.bias);
    put(s.name + "/weight_mask", nd.weight_mask);
    put(s.name + "/gamma", nd.gamma);
    put(s.name + "/beta", nd.beta);
  }
  h["nodes"] = std::move(nodes);
  h["tensors"] = std::move(tensors);
  const std::string header = h.dump();

  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + file.string());
  out.write(kCheckpointMagic, 8);
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 8));
  if (!out) throw IoError("failed writing checkpoint: " + file.string());
}

inline SegNet load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + file.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw IoError("bad checkpoint magic: " + file.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1ULL << 32)) throw IoError("bad checkpoint header length: " + file.string());
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (rest.size() % 8 != 0) throw IoError("truncated checkpoint payload: " + file.string());
  std::vector<double> payload(rest.size() / 8);
  std::memcpy(payload.data(), rest.data(), rest.size());

  nlohmann::json h;
  SegNet net;
  try {
    h = nlohmann::json::parse(header);
    if (h.at("version").get<int>() != 1) throw IoError("unsupported checkpoint version");
    net.num_classes = h.at("num_classes").get<int>();
    net.bn_eps = h.at("bn_eps").get<double>();
    net.bn_momentum = h.at("bn_momentum").get<double>();
    net.total_stride = h.at("total_stride").get<int>();
    net.prunable_groups.clear();
    for (const auto& g : h.at("prunable_groups")) net.prunable_groups.push_back(parse_layer_group(g.get<std::string>()));
    std::map<std::string, std::pair<std::size_t, std::size_t>> table;
    for (const auto& t : h.at("tensors"))
      table[t.at("name").get<std::string>()] = {t.at("offset").get<std::size_t>(), t.at("count").get<std::size_t>()};
    auto fetch = [&](const std::string& name, auto& dst, std::size_t expected) {
      auto it = table.find(name);
      if (it == table.end()) {
        if (expected != 0 && expected != SIZE_MAX) throw IoError("checkpoint missing tensor " + name);
        return;
      }
      const auto [off, count] = it->second;
      if (off + count > payload.size() || (expected != SIZE_MAX && count != expected))
        throw IoError("checkpoint tensor has wrong size: " + name);
      dst.resize(count);
      for (std::size_t i = 0; i < count; ++i)
        dst[i] = static_cast<typename std::decay_t<decltype(dst)>::value_type>(payload[off + i]);
    };
    for (const auto& j : h.at("nodes")) {
      Node nd;
      auto& s = nd.spec;
      s.name = j.at("name").get<std::string>();
      s.kind = parse_layer_kind(j.at("kind").get<std::string>());
      s.group = parse_layer_group(j.at("group").get<std::string>());
      s.inputs = j.at("inputs").get<std::vector<int>>();
      s.channels = j.at("channels").get<int>();
      if (s.kind == LayerKind::Conv2d) {
        const auto& c = j.at("conv");
        s.conv = {c.at("in_ch").get<int>(),  c.at("out_ch").get<int>(),   c.at("kernel").get<int>(),
                  c.at("stride").get<int>(), c.at("dilation").get<int>(), c.at("padding").get<int>()};
        s.bias = j.at("bias").get<bool>();
        fetch(s.name + "/weight", nd.weight, s.conv.weight_count());
        fetch(s.name + "/bias", nd.bias, s.bias ? s.conv.out_ch : 0);
        fetch(s.name + "/weight_mask", nd.weight_mask, SIZE_MAX);
        if (!nd.weight_mask.empty() && nd.weight_mask.size() != nd.weight.size())
          throw IoError("checkpoint weight mask size mismatch: " + s.name);
      }
      if (s.kind == LayerKind::Upsample) s.size_ref = j.at("size_ref").get<int>();
      if (s.kind == LayerKind::BatchNorm) {
        nd.mask = j.at("mask").get<std::vector<unsigned char>>();
        nd.running_mean = j.at("running_mean").get<std::vector<double>>();
        nd.running_var = j.at("running_var").get<std::vector<double>>();
        fetch(s.name + "/gamma", nd.gamma, s.channels);
        fetch(s.name + "/beta", nd.beta, s.channels);
        if (nd.mask.size() != static_cast<std::size_t>(s.channels) || nd.running_mean.size() != nd.mask.size() ||
            nd.running_var.size() != nd.mask.size())
          throw IoError("checkpoint BN state size mismatch: " + s.name);
      }
      net.nodes.push_back(std::move(nd));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header: " + std::string(e.what()));
  }
  return net;
}

}  // namespace dance::nn
