#pragma once

// Cluster graph dump: a JSON document describing clusters, parent arcs and arcs,
// plus a binary blob holding every distinct observation (float32, little-endian,
// row-major) followed by the raw snapshot bytes. The JSON refers to
// observations by blob index, so centers and prefixes that share a frame are
// stored once.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rbx/cluster_graph.hpp"
#include "rbx/errors.hpp"

namespace rbx {

static_assert(std::endian::native == std::endian::little, "graph blobs are written in host byte order");

inline void save_graph(const ClusterGraph& graph, const std::filesystem::path& json_path,
                       const std::filesystem::path& blob_path) {
  std::vector<Observation> frames;
  std::unordered_map<const void*, std::size_t> frame_index;
  auto frame_of = [&](const Observation& o) {
    auto [it, fresh] = frame_index.emplace(o.storage_id(), frames.size());
    if (fresh) frames.push_back(o);
    return it->second;
  };

  std::vector<std::uint8_t> snapshot_bytes;
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& [id, c] : graph.clusters()) {
    nlohmann::json j = {{"id", id},
                        {"center", frame_of(c.center)},
                        {"visit_count", c.visit_count},
                        {"created_at", c.created_at},
                        {"snapshot_version", c.snapshot.version},
                        {"snapshot_offset", snapshot_bytes.size()},
                        {"snapshot_size", c.snapshot.bytes.size()}};
    snapshot_bytes.insert(snapshot_bytes.end(), c.snapshot.bytes.begin(), c.snapshot.bytes.end());
    if (auto it = graph.parents().find(id); it != graph.parents().end()) {
      std::vector<std::size_t> prefix;
      for (const auto& o : it->second.prefix) prefix.push_back(frame_of(o));
      j["parent"] = it->second.parent;
      j["prefix"] = prefix;
    }
    clusters.push_back(std::move(j));
  }
  nlohmann::json arcs = nlohmann::json::array();
  for (const auto& [key, count] : graph.arcs()) arcs.push_back({key.first, key.second, count});

  const int rows = frames.front().rows(), cols = frames.front().cols();
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw std::runtime_error("cannot write " + blob_path.string());
  for (const auto& f : frames) {
    if (f.rows() != rows || f.cols() != cols) throw ContractViolation("graph observations differ in shape");
    const auto v = f.values();
    blob.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  blob.write(reinterpret_cast<const char*>(snapshot_bytes.data()), static_cast<std::streamsize>(snapshot_bytes.size()));
  if (!blob) throw std::runtime_error("failed writing " + blob_path.string());

  const nlohmann::json doc = {{"format", "rbx-graph"},
                              {"version", 1},
                              {"blob", blob_path.filename().string()},
                              {"observation_rows", rows},
                              {"observation_cols", cols},
                              {"observation_count", frames.size()},
                              {"next_id", graph.next_id()},
                              {"clusters", clusters},
                              {"arcs", arcs}};
  std::ofstream out(json_path);
  if (!out) throw std::runtime_error("cannot write " + json_path.string());
  out << doc.dump(1) << '\n';
}

// Reads a dump written by save_graph; the blob is looked up next to the JSON file.
inline ClusterGraph load_graph(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw DecodeError("cannot open " + json_path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError("graph JSON: " + std::string(e.what()));
  }
  if (doc.value("format", "") != "rbx-graph" || doc.value("version", 0) != 1)
    throw DecodeError("not a version 1 graph dump");

  const auto blob_path = json_path.parent_path() / doc.at("blob").get<std::string>();
  std::ifstream bin(blob_path, std::ios::binary);
  if (!bin) throw DecodeError("cannot open " + blob_path.string());
  const std::vector<char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  const int rows = doc.at("observation_rows"), cols = doc.at("observation_cols");
  const std::size_t count = doc.at("observation_count");
  const std::size_t frame_bytes = static_cast<std::size_t>(rows) * cols * sizeof(float);
  if (blob.size() < count * frame_bytes) throw DecodeError("graph blob is truncated");
  std::vector<Observation> frames;
  frames.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<float> v(static_cast<std::size_t>(rows) * cols);
    std::memcpy(v.data(), blob.data() + i * frame_bytes, frame_bytes);
    frames.emplace_back(rows, cols, std::move(v));
  }
  const std::size_t snap_base = count * frame_bytes;
  auto frame = [&](const nlohmann::json& j) {
    const std::size_t k = j.get<std::size_t>();
    if (k >= frames.size()) throw DecodeError("observation index out of range");
    return frames[k];
  };

  std::vector<Cluster> clusters;
  std::map<ClusterId, ParentArc> parents;
  for (const auto& j : doc.at("clusters")) {
    Cluster c;
    c.id = j.at("id");
    c.center = frame(j.at("center"));
    c.visit_count = j.at("visit_count");
    c.created_at = j.at("created_at");
    c.snapshot.version = j.at("snapshot_version");
    const std::size_t off = j.at("snapshot_offset"), size = j.at("snapshot_size");
    if (snap_base + off + size > blob.size()) throw DecodeError("snapshot range outside the blob");
    c.snapshot.bytes.assign(blob.begin() + static_cast<std::ptrdiff_t>(snap_base + off),
                            blob.begin() + static_cast<std::ptrdiff_t>(snap_base + off + size));
    if (j.contains("parent")) {
      ParentArc p{j.at("parent").get<ClusterId>(), {}};
      for (const auto& k : j.at("prefix")) p.prefix.push_back(frame(k));
      parents.emplace(c.id, std::move(p));
    }
    clusters.push_back(std::move(c));
  }
  std::map<ClusterGraph::ArcKey, std::uint64_t> arcs;
  for (const auto& a : doc.at("arcs")) arcs[{a.at(0).get<ClusterId>(), a.at(1).get<ClusterId>()}] = a.at(2);
  try {
    return ClusterGraph::from_parts(std::move(clusters), std::move(parents), std::move(arcs),
                                    doc.at("next_id").get<ClusterId>());
  } catch (const ContractViolation& e) {
    throw DecodeError(std::string("inconsistent graph dump: ") + e.what());
  }
}

}  // namespace rbx
