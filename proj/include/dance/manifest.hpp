#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dance/distribution.hpp"
#include "dance/error.hpp"

namespace dance {

// One JSON-lines record. The same schema serves as the corpus manifest
// (sc_mean/p absent) and as the complexity index (sc_mean/p present).
struct ManifestRecord {
  std::string id;
  std::string path;        // image path, relative to the manifest directory or absolute
  std::string label_path;  // may be empty for unlabeled corpora
  std::string split = "train";
  std::optional<double> sc_mean;
  std::optional<double> p;
};

struct Manifest {
  std::optional<MaxwellFit> fit;  // header record, present once indexed
  std::vector<ManifestRecord> records;
  std::filesystem::path base_dir;  // directory relative paths resolve against

  std::filesystem::path resolve(const std::string& rel) const {
    std::filesystem::path p(rel);
    return p.is_absolute() ? p : base_dir / p;
  }
};

inline void check_unique_ids(const Manifest& m) {
  std::set<std::string> seen;
  for (const auto& r : m.records)
    if (!seen.insert(r.id).second) throw InvalidInputError("duplicate image id in manifest: " + r.id);
}

inline void write_manifest(const std::filesystem::path& file, const Manifest& m) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + file.string());
  if (m.fit) {
    nlohmann::ordered_json h;
    h["record"] = "header";
    h["scale_a"] = m.fit->scale_a;
    h["n_samples"] = m.fit->n_samples;
    h["ks_stat"] = m.fit->ks_stat;
    out << h.dump() << '\n';
  }
  for (const auto& r : m.records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["path"] = r.path;
    if (!r.label_path.empty()) j["label_path"] = r.label_path;
    j["split"] = r.split;
    if (r.sc_mean) j["sc_mean"] = *r.sc_mean;
    if (r.p) j["p"] = *r.p;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing manifest: " + file.string());
}

inline Manifest read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + file.string());
  Manifest m;
  m.base_dir = file.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      if (j.value("record", "") == "header") {
        MaxwellFit f;
        f.scale_a = j.at("scale_a").get<double>();
        f.n_samples = j.at("n_samples").get<std::size_t>();
        f.ks_stat = j.at("ks_stat").get<double>();
        m.fit = f;
        continue;
      }
      ManifestRecord r;
      r.id = j.at("id").get<std::string>();
      r.path = j.at("path").get<std::string>();
      r.label_path = j.value("label_path", "");
      r.split = j.value("split", "train");
      if (j.contains("sc_mean")) r.sc_mean = j["sc_mean"].get<double>();
      if (j.contains("p")) r.p = j["p"].get<double>();
      m.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  check_unique_ids(m);
  return m;
}

// Builds the in-memory index from an indexed manifest.
inline ComplexityIndex to_index(const Manifest& m) {
  std::vector<ComplexityEntry> entries;
  for (const auto& r : m.records) {
    if (!r.sc_mean || !r.p) throw StateError("manifest record not indexed: " + r.id);
    entries.push_back({r.id, r.split, *r.sc_mean, *r.p});
  }
  return ComplexityIndex(std::move(entries), m.fit);
}

// Copies sc_mean/p/fit from an index into the manifest records.
inline void attach_index(Manifest& m, const ComplexityIndex& index) {
  m.fit = index.fit();
  for (auto& r : m.records) {
    const auto& e = index.at(r.id);
    r.sc_mean = e.sc_mean;
    r.p = e.p;
  }
}

}  // namespace dance
