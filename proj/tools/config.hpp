#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "surf/data.hpp"
#include "surf/graph.hpp"
#include "surf/train.hpp"

namespace surf::cli {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct DataSection {
  SyntheticConfig synthetic;
  std::size_t num_meta_train = 50;
  std::size_t num_meta_test = 10;
};

enum class GraphKind { regular, erdos_renyi, star };

struct GraphSection {
  GraphKind kind = GraphKind::regular;
  std::size_t degree = 3;
  double edge_prob = 0.3;
};

struct EvalSection {
  std::vector<std::size_t> async = {};
};

struct BaselineSection {
  std::size_t rounds = 200;
  double beta = 0.3;
  std::size_t batch_count = 10;
  double momentum = 0.9;
  std::size_t local_steps = 5;
  std::size_t participants = 5;
  std::string placement = "combine_then_adapt";
};

/// Resolved run configuration. Every seed below the master seed is derived
/// from it by purpose unless the file pins one explicitly.
struct RunConfig {
  std::uint64_t seed = 0;
  DataSection data;
  GraphSection graph;
  TrainConfig train;
  std::size_t checkpoint_every = 0;  // iterations; 0 writes only the final checkpoint
  EvalSection eval;
  BaselineSection baseline;
};

// Missing sections and keys keep their defaults; unknown keys are rejected.
// seed_override replaces the master seed before any derived seed is resolved.
RunConfig parse_config(const json& j, const std::uint64_t* seed_override = nullptr);
RunConfig load_config(const std::filesystem::path& path, const std::uint64_t* seed_override = nullptr);
json to_json(const RunConfig& cfg);

Graph build_graph(const RunConfig& cfg);
ShiftOperator build_shift(const RunConfig& cfg, const Graph& g);

std::vector<std::size_t> parse_size_list(const std::string& text);

}  // namespace surf::cli
