#include "config.hpp"

#include <fstream>
#include <sstream>

#include "surf/error.hpp"
#include "surf/rng.hpp"
#include "surf/serialize.hpp"

namespace surf::cli {
namespace {

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

const char* graph_kind_name(GraphKind k) {
  switch (k) {
    case GraphKind::regular: return "regular";
    case GraphKind::erdos_renyi: return "erdos_renyi";
    case GraphKind::star: return "star";
  }
  return "regular";
}

GraphKind graph_kind_from(const std::string& s) {
  if (s == "regular") return GraphKind::regular;
  if (s == "erdos_renyi") return GraphKind::erdos_renyi;
  if (s == "star") return GraphKind::star;
  throw ConfigError("graph.kind: expected regular, erdos_renyi or star, got '" + s + "'");
}

DataSection parse_data(const json& j, std::uint64_t master) {
  DataSection d;
  d.synthetic.means_seed = derive_seed(master, "class_means");
  if (j.is_null()) return d;
  if (!j.is_object()) throw ConfigError("data: expected a JSON object");
  json rest = j;
  read_opt(j, "num_meta_train", d.num_meta_train, "data");
  read_opt(j, "num_meta_test", d.num_meta_test, "data");
  rest.erase("num_meta_train");
  rest.erase("num_meta_test");
  d.synthetic = io::synthetic_config_from_json(rest, d.synthetic);
  const auto& s = d.synthetic;
  if (s.num_agents == 0 || s.num_features == 0 || s.num_classes < 2 || s.m_train == 0 ||
      s.m_test == 0)
    throw ConfigError("data: sizes must be positive and num_classes at least 2");
  if (d.num_meta_train == 0 && d.num_meta_test == 0)
    throw ConfigError("data: no datasets requested");
  return d;
}

GraphSection parse_graph(const json& j) {
  GraphSection g;
  if (j.is_null()) return g;
  io::reject_unknown_keys(j, {"kind", "degree", "edge_prob"}, "graph");
  std::string kind = graph_kind_name(g.kind);
  read_opt(j, "kind", kind, "graph");
  g.kind = graph_kind_from(kind);
  read_opt(j, "degree", g.degree, "graph");
  read_opt(j, "edge_prob", g.edge_prob, "graph");
  if (!(g.edge_prob > 0.0 && g.edge_prob <= 1.0))
    throw ConfigError("graph.edge_prob must lie in (0, 1]");
  return g;
}

EvalSection parse_eval(const json& j) {
  EvalSection e;
  if (j.is_null()) return e;
  io::reject_unknown_keys(j, {"async"}, "eval");
  read_opt(j, "async", e.async, "eval");
  return e;
}

BaselineSection parse_baseline(const json& j) {
  BaselineSection b;
  if (j.is_null()) return b;
  io::reject_unknown_keys(j, {"rounds", "beta", "batch_count", "momentum", "local_steps",
                              "participants", "placement"},
                          "baseline");
  read_opt(j, "rounds", b.rounds, "baseline");
  read_opt(j, "beta", b.beta, "baseline");
  read_opt(j, "batch_count", b.batch_count, "baseline");
  read_opt(j, "momentum", b.momentum, "baseline");
  read_opt(j, "local_steps", b.local_steps, "baseline");
  read_opt(j, "participants", b.participants, "baseline");
  read_opt(j, "placement", b.placement, "baseline");
  if (!(b.beta >= 0.0)) throw ConfigError("baseline.beta must be nonnegative");
  if (b.batch_count == 0 || b.local_steps == 0 || b.participants == 0)
    throw ConfigError("baseline: batch_count, local_steps and participants must be positive");
  if (b.placement != "combine_then_adapt" && b.placement != "adapt_then_combine")
    throw ConfigError("baseline.placement: expected combine_then_adapt or adapt_then_combine");
  return b;
}

}  // namespace

RunConfig parse_config(const json& j, const std::uint64_t* seed_override) {
  io::reject_unknown_keys(j, {"schema_version", "seed", "data", "graph", "train", "eval",
                              "baseline"},
                          "config");
  if (!j.contains("schema_version")) throw ConfigError("config: missing schema_version");
  int version = 0;
  read_opt(j, "schema_version", version, "config");
  if (version != kSchemaVersion)
    throw ConfigError("config: unsupported schema_version " + std::to_string(version));

  RunConfig cfg;
  read_opt(j, "seed", cfg.seed, "config");
  if (seed_override) cfg.seed = *seed_override;

  auto section = [&](const char* key) { return j.contains(key) ? j.at(key) : json(); };
  cfg.data = parse_data(section("data"), cfg.seed);
  cfg.graph = parse_graph(section("graph"));
  cfg.eval = parse_eval(section("eval"));
  cfg.baseline = parse_baseline(section("baseline"));

  TrainConfig base;
  base.seed = derive_seed(cfg.seed, "train");
  json train = section("train");
  if (!train.is_null()) {
    if (!train.is_object()) throw ConfigError("train: expected a JSON object");
    read_opt(train, "checkpoint_every", cfg.checkpoint_every, "train");
    train.erase("checkpoint_every");
    cfg.train = io::train_config_from_json(train, base);
  } else {
    cfg.train = base;
  }

  const bool star_graph = cfg.graph.kind == GraphKind::star;
  const bool star_mode = cfg.train.mode == Mode::star;
  if (star_graph != star_mode)
    throw ConfigError("config: graph.kind star and train.mode star must be used together");
  const std::size_t m = cfg.data.synthetic.m_train;
  if (cfg.train.b_count > m || cfg.train.b_count * cfg.train.num_layers < m)
    throw ConfigError("config: train.b_count must lie in [ceil(m_train / num_layers), m_train]");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::uint64_t* seed_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j, seed_override);
}

json to_json(const RunConfig& c) {
  json data = io::to_json(c.data.synthetic);
  data["num_meta_train"] = c.data.num_meta_train;
  data["num_meta_test"] = c.data.num_meta_test;
  json train = io::to_json(c.train);
  train["checkpoint_every"] = c.checkpoint_every;
  return json{{"schema_version", kSchemaVersion},
              {"seed", c.seed},
              {"data", data},
              {"graph",
               {{"kind", graph_kind_name(c.graph.kind)},
                {"degree", c.graph.degree},
                {"edge_prob", c.graph.edge_prob}}},
              {"train", train},
              {"eval", {{"async", c.eval.async}}},
              {"baseline",
               {{"rounds", c.baseline.rounds},
                {"beta", c.baseline.beta},
                {"batch_count", c.baseline.batch_count},
                {"momentum", c.baseline.momentum},
                {"local_steps", c.baseline.local_steps},
                {"participants", c.baseline.participants},
                {"placement", c.baseline.placement}}}};
}

Graph build_graph(const RunConfig& cfg) {
  const std::size_t n = cfg.data.synthetic.num_agents;
  const std::uint64_t seed = derive_seed(cfg.seed, "graph");
  switch (cfg.graph.kind) {
    case GraphKind::regular: return make_regular(n, cfg.graph.degree, seed);
    case GraphKind::erdos_renyi: return make_erdos_renyi(n, cfg.graph.edge_prob, seed);
    case GraphKind::star: return make_star(n + 1);
  }
  return {};
}

ShiftOperator build_shift(const RunConfig& cfg, const Graph& g) {
  return shift_operator(g, cfg.graph.kind == GraphKind::star ? ShiftKind::star_row
                                                             : ShiftKind::normalized_adjacency);
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("expected a comma-separated list of nonnegative integers, got '" + text +
                        "'");
    }
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

}  // namespace surf::cli
