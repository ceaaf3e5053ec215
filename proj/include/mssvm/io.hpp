#pragma once

// Files: model JSON, JSON-lines datasets, run manifests and the config hash
// that ties output files to the configuration that produced them.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mssvm/model.hpp"
#include "mssvm/objectives.hpp"

namespace mssvm {

inline constexpr int kSchemaVersion = 1;

nlohmann::json graph_to_json(const FactorGraph& graph);
// Throws ConfigError on malformed input, InvalidGraph on structural errors.
FactorGraph graph_from_json(const nlohmann::json& j);

struct Model {
  FactorGraph graph;
  WeightVector weights;
  TemperaturePair temps;
  std::string family;
  bool loss_enabled = true;
  std::string config_hash;
};

nlohmann::json model_to_json(const Model& m);
Model model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const Model& m);
Model load_model(const std::filesystem::path& path);

// One instance per line:
//   {"x": [per node: null | int | [reals]], "y": [per node: label or -1],
//    "hidden": [node ids]}
nlohmann::json instance_to_json(const FactorGraph& graph, const Instance& inst);
Instance instance_from_json(const FactorGraph& graph, const nlohmann::json& j);
void write_dataset(const std::filesystem::path& path, const FactorGraph& graph,
                   const std::vector<Instance>& data);
// Validates every instance against the graph.
std::vector<Instance> read_dataset(const std::filesystem::path& path, const FactorGraph& graph);

// Graph JSON next to a dataset.
void save_graph(const std::filesystem::path& path, const FactorGraph& graph);
FactorGraph load_graph(const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
// Writes text atomically enough for our purposes: to a sibling temp file,
// then renamed over the target. Throws IoError.
void write_text(const std::filesystem::path& path, const std::string& text);
// Creates the directory (and parents); throws IoError when that fails or
// the path is not writable.
void ensure_directory(const std::filesystem::path& dir);

// 64-bit FNV-1a of the canonical (sorted-key, compact) dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

}  // namespace mssvm
