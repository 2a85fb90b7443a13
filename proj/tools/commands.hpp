#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "surf/data.hpp"
#include "surf/graph.hpp"

namespace surf::cli {

namespace fs = std::filesystem;

/// Written to <out_dir>/manifest.json before any long work, then rewritten with
/// artifact hashes once the command finishes.
struct RunManifest {
  std::string command;
  std::string config_path;
  json resolved_config;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::vector<std::pair<std::string, std::string>> artifacts;  // relative path, FNV-1a hex
  bool complete = false;

  json to_json() const;
  void write() const;
  void add_artifact(const fs::path& file);
};

std::string hash_file(const fs::path& path);

/// Contents of a data directory written by gen-data.
struct DataIndex {
  std::size_t num_classes = 0;
  std::string graph_kind;
  std::vector<std::string> meta_train;
  std::vector<std::string> meta_test;
};

DataIndex read_data_index(const fs::path& data_dir);
MetaDataset load_meta(const fs::path& data_dir, const DataIndex& index, MetaRole role);
Graph load_graph(const fs::path& data_dir);
ShiftOperator shift_for(const DataIndex& index, const Graph& g);

struct CommonArgs {
  fs::path config;
  fs::path data_dir;
  fs::path out_dir;
  std::optional<std::uint64_t> seed;
};

void cmd_gen_data(const CommonArgs& args);
void cmd_train(const CommonArgs& args, bool no_constraints, const fs::path& resume);
void cmd_eval(const CommonArgs& args, const fs::path& checkpoint,
              const std::optional<std::vector<std::size_t>>& async);
void cmd_baseline(const CommonArgs& args, const std::string& method);

}  // namespace surf::cli
