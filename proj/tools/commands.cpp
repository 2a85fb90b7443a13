#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "surf/baselines.hpp"
#include "surf/error.hpp"
#include "surf/eval.hpp"
#include "surf/rng.hpp"
#include "surf/serialize.hpp"
#include "surf/train.hpp"

namespace surf::cli {
namespace {

constexpr const char* kIndexFile = "index.json";
constexpr const char* kGraphFile = "graph.txt";

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_json(const json& j, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

template <class Fn>
void write_text(const fs::path& path, Fn&& fn) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  fn(out);
  if (!out) throw IoError("write failed: " + path.string());
}

RunConfig resolve(const CommonArgs& args) {
  const std::uint64_t* override_seed = args.seed ? &*args.seed : nullptr;
  return load_config(args.config, override_seed);
}

RunManifest start_manifest(const std::string& command, const CommonArgs& args,
                           const RunConfig& cfg) {
  ensure_dir(args.out_dir);
  RunManifest m;
  m.command = command;
  m.config_path = args.config.string();
  m.resolved_config = to_json(cfg);
  m.seed = cfg.seed;
  m.out_dir = args.out_dir.string();
  m.write();
  return m;
}

const char* role_dir(MetaRole role) {
  return role == MetaRole::meta_train ? "meta_train" : "meta_test";
}

std::vector<std::string> write_role(const MetaDataset& meta, const fs::path& out_dir,
                                    RunManifest& manifest) {
  std::vector<std::string> files;
  const fs::path dir = out_dir / role_dir(meta.role);
  ensure_dir(dir);
  for (std::size_t q = 0; q < meta.size(); ++q) {
    char name[32];
    std::snprintf(name, sizeof name, "dataset_%04zu.csv", q);
    const fs::path rel = fs::path(role_dir(meta.role)) / name;
    write_features(meta.datasets[q], out_dir / rel);
    manifest.add_artifact(out_dir / rel);
    files.push_back(rel.generic_string());
  }
  return files;
}

baselines::RoundMetrics mean_metrics(const std::vector<baselines::RoundMetrics>& rows) {
  baselines::RoundMetrics m;
  m.round = rows.front().round;
  for (const auto& r : rows) {
    m.mean_loss += r.mean_loss;
    m.mean_acc += r.mean_acc;
    m.mean_grad_norm += r.mean_grad_norm;
    m.disagreement += r.disagreement;
  }
  const double k = static_cast<double>(rows.size());
  m.mean_loss /= k;
  m.mean_acc /= k;
  m.mean_grad_norm /= k;
  m.disagreement /= k;
  return m;
}

}  // namespace

json RunManifest::to_json() const {
  json arts = json::object();
  for (const auto& [file, hash] : artifacts) arts[file] = hash;
  return json{{"command", command},      {"config_path", config_path},
              {"config", resolved_config}, {"seed", seed},
              {"out_dir", out_dir},      {"artifacts", arts},
              {"status", complete ? "complete" : "running"}};
}

void RunManifest::write() const { write_json(to_json(), fs::path(out_dir) / "manifest.json"); }

void RunManifest::add_artifact(const fs::path& file) {
  artifacts.emplace_back(fs::relative(file, out_dir).generic_string(), hash_file(file));
}

std::string hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return hex;
}

DataIndex read_data_index(const fs::path& data_dir) {
  const fs::path path = data_dir / kIndexFile;
  std::ifstream in(path);
  if (!in) throw IoError("missing data index " + path.string());
  try {
    const json j = json::parse(in);
    if (j.at("schema_version").get<int>() != kSchemaVersion)
      throw FormatError("data index: unsupported schema_version");
    DataIndex idx;
    idx.num_classes = j.at("num_classes").get<std::size_t>();
    idx.graph_kind = j.at("graph_kind").get<std::string>();
    idx.meta_train = j.at("meta_train").get<std::vector<std::string>>();
    idx.meta_test = j.at("meta_test").get<std::vector<std::string>>();
    return idx;
  } catch (const json::exception& e) {
    throw FormatError("data index " + path.string() + ": " + e.what());
  }
}

MetaDataset load_meta(const fs::path& data_dir, const DataIndex& index, MetaRole role) {
  const auto& files = role == MetaRole::meta_train ? index.meta_train : index.meta_test;
  if (files.empty())
    throw FormatError(std::string("data directory holds no ") + role_dir(role) + " datasets");
  MetaDataset meta;
  meta.role = role;
  for (const auto& f : files) meta.datasets.push_back(load_features(data_dir / f, index.num_classes));
  meta.validate();
  return meta;
}

Graph load_graph(const fs::path& data_dir) { return load_edge_list(data_dir / kGraphFile); }

ShiftOperator shift_for(const DataIndex& index, const Graph& g) {
  return shift_operator(g, index.graph_kind == "star" ? ShiftKind::star_row
                                                      : ShiftKind::normalized_adjacency);
}

void cmd_gen_data(const CommonArgs& args) {
  const RunConfig cfg = resolve(args);
  RunManifest manifest = start_manifest("gen-data", args, cfg);
  const Graph g = build_graph(cfg);

  json index{{"schema_version", kSchemaVersion},
             {"num_agents", cfg.data.synthetic.num_agents},
             {"num_features", cfg.data.synthetic.num_features},
             {"num_classes", cfg.data.synthetic.num_classes},
             {"graph_kind", cfg.graph.kind == GraphKind::star ? "star" : "decentralized"},
             {"meta_train", json::array()},
             {"meta_test", json::array()}};
  for (MetaRole role : {MetaRole::meta_train, MetaRole::meta_test}) {
    const bool train = role == MetaRole::meta_train;
    const std::size_t count = train ? cfg.data.num_meta_train : cfg.data.num_meta_test;
    if (count == 0) continue;
    const MetaDataset meta =
        gen_meta_dataset(cfg.data.synthetic, count, role, derive_seed(cfg.seed, role_dir(role)));
    index[role_dir(role)] = write_role(meta, args.out_dir, manifest);
  }
  save_edge_list(g, args.out_dir / kGraphFile);
  manifest.add_artifact(args.out_dir / kGraphFile);
  write_json(index, args.out_dir / kIndexFile);
  manifest.add_artifact(args.out_dir / kIndexFile);
  manifest.complete = true;
  manifest.write();
  std::cout << "gen-data: " << cfg.data.num_meta_train << " meta-train and "
            << cfg.data.num_meta_test << " meta-test datasets in " << args.out_dir.string() << '\n';
}

void cmd_train(const CommonArgs& args, bool no_constraints, const fs::path& resume) {
  RunConfig cfg = resolve(args);
  if (no_constraints) cfg.train.constraints_enabled = false;
  const DataIndex index = read_data_index(args.data_dir);
  if ((index.graph_kind == "star") != (cfg.train.mode == Mode::star))
    throw ConfigError("train.mode does not match the graph stored in the data directory");
  const MetaDataset meta = load_meta(args.data_dir, index, MetaRole::meta_train);
  const Graph g = load_graph(args.data_dir);
  const ShiftOperator s = shift_for(index, g);
  RunManifest manifest = start_manifest("train", args, cfg);

  const FLDataset& first = meta.datasets.front();
  TrainState state;
  if (!resume.empty()) {
    state = load_checkpoint(resume);
    TrainConfig saved = state.config;
    saved.epochs = cfg.train.epochs;
    if (!(saved == cfg.train))
      throw ConfigError("checkpoint " + resume.string() + " was trained with a different config");
    state.config.epochs = cfg.train.epochs;
  } else {
    state = init_train_state(cfg.train, first.model_dim(), cfg.train.b_count * first.example_width());
  }

  const fs::path ckpt = args.out_dir / "checkpoint.json";
  const std::size_t per_epoch = total_iterations(cfg.train, meta.size()) /
                                std::max<std::size_t>(cfg.train.epochs, 1);
  auto progress = [&](const TrainState& st) {
    if (cfg.checkpoint_every > 0 && st.iteration % cfg.checkpoint_every == 0)
      save_checkpoint(st, ckpt);
    if (per_epoch > 0 && st.iteration % per_epoch == 0) {
      double obj = 0.0;
      const std::size_t k = std::min(per_epoch, st.history.size());
      for (std::size_t i = st.history.size() - k; i < st.history.size(); ++i)
        obj += st.history[i].objective;
      std::cout << "epoch " << st.iteration / per_epoch << '/' << cfg.train.epochs
                << " objective " << obj / static_cast<double>(k) << '\n';
    }
    return true;
  };
  primal_dual_train(state, meta, s, progress);

  save_checkpoint(state, ckpt);
  write_text(args.out_dir / "history.csv",
             [&](std::ostream& out) { write_history_csv(state.history, cfg.train.num_layers, out); });
  json summary{{"iterations", state.iteration},
               {"constraints_enabled", state.config.constraints_enabled},
               {"lambda", state.lambda}};
  if (!state.history.empty()) {
    const auto& last = state.history.back();
    summary["final_objective"] = last.objective;
    summary["final_slacks"] = last.slacks;
  }
  write_json(summary, args.out_dir / "summary.json");
  for (const char* f : {"checkpoint.json", "history.csv", "summary.json"})
    manifest.add_artifact(args.out_dir / f);
  manifest.complete = true;
  manifest.write();
}

void cmd_eval(const CommonArgs& args, const fs::path& checkpoint,
              const std::optional<std::vector<std::size_t>>& async) {
  if (checkpoint.empty()) throw ConfigError("eval requires --checkpoint");
  RunConfig cfg;
  if (!args.config.empty()) cfg = resolve(args);
  else if (args.seed) cfg.seed = *args.seed;
  const std::vector<std::size_t> grid = async ? *async : cfg.eval.async;

  const TrainState state = load_checkpoint(checkpoint);
  const DataIndex index = read_data_index(args.data_dir);
  const MetaDataset meta = load_meta(args.data_dir, index, MetaRole::meta_test);
  const Graph g = load_graph(args.data_dir);
  const ShiftOperator s = shift_for(index, g);

  RunManifest manifest = start_manifest("eval", args, cfg);
  manifest.resolved_config["checkpoint"] = checkpoint.string();
  manifest.write();

  EvalOptions opts;
  opts.seed = derive_seed(cfg.seed, "eval");
  opts.b_count = state.config.b_count;
  opts.mu0 = state.config.mu0;
  opts.sigma0 = state.config.sigma0;
  opts.epsilon = state.config.epsilon;

  const EvalReport report = meta_evaluate(state.params, meta, s, opts);
  emit_report(report, args.out_dir / "report");
  manifest.add_artifact(args.out_dir / "report.csv");
  manifest.add_artifact(args.out_dir / "report.json");
  std::cout << "eval: final mean accuracy " << report.mean_acc.back() << '\n';

  if (!grid.empty()) {
    const auto points = async_evaluate(state.params, meta, s, grid, opts);
    write_text(args.out_dir / "async.csv", [&](std::ostream& out) {
      out << "n_asyn,mean_acc,mean_loss\n";
      out.precision(17);
      for (const auto& p : points) out << p.n_asyn << ',' << p.mean_acc << ',' << p.mean_loss << '\n';
    });
    manifest.add_artifact(args.out_dir / "async.csv");
    for (const auto& p : points) {
      const fs::path prefix = args.out_dir / ("report_async_" + std::to_string(p.n_asyn));
      emit_report(p.report, prefix);
      manifest.add_artifact(prefix.string() + ".csv");
      manifest.add_artifact(prefix.string() + ".json");
    }
  }
  manifest.complete = true;
  manifest.write();
}

void cmd_baseline(const CommonArgs& args, const std::string& method) {
  if (method != "dgd" && method != "dsgd" && method != "dfedavgm" && method != "fedavg-star")
    throw ConfigError("unknown baseline method '" + method +
                      "'; expected dgd, dsgd, dfedavgm or fedavg-star");
  const RunConfig cfg = resolve(args);
  const DataIndex index = read_data_index(args.data_dir);
  if (index.graph_kind == "star" && method != "fedavg-star")
    throw ConfigError("decentralized baselines need a decentralized graph");
  const MetaDataset meta = load_meta(args.data_dir, index, MetaRole::meta_test);
  const Graph g = load_graph(args.data_dir);
  RunManifest manifest = start_manifest("baseline", args, cfg);

  const auto& b = cfg.baseline;
  const std::uint64_t eval_seed = derive_seed(cfg.seed, "eval");
  const fs::path per_dataset = args.out_dir / method;
  ensure_dir(per_dataset);
  std::vector<baselines::BaselineRun> runs;
  for (std::size_t q = 0; q < meta.size(); ++q) {
    const FLDataset& ds = meta.datasets[q];
    // Same initial models as the unrolled network sees during evaluation.
    const Matrix w0 = init_w0(ds.num_agents(), ds.model_dim(), cfg.train.mu0, cfg.train.sigma0,
                              derive_seed(eval_seed, "eval_w0", q));
    baselines::CommonOptions co;
    co.rounds = b.rounds;
    co.seed = derive_seed(cfg.seed, "baseline", q);
    co.mu0 = cfg.train.mu0;
    co.sigma0 = cfg.train.sigma0;
    co.w0 = &w0;
    baselines::BaselineRun run;
    if (method == "dgd") {
      const auto placement = b.placement == "adapt_then_combine"
                                 ? baselines::StepPlacement::adapt_then_combine
                                 : baselines::StepPlacement::combine_then_adapt;
      run = baselines::dgd_run(ds, g, b.beta, b.batch_count, co, placement);
    } else if (method == "dsgd") {
      run = baselines::dsgd_run(ds, g, b.beta, co);
    } else if (method == "dfedavgm") {
      run = baselines::dfedavgm_run(ds, g, b.beta, b.momentum, b.local_steps, b.batch_count, co);
    } else {
      run = baselines::fedavg_star_run(ds, b.participants, b.local_steps, b.beta, b.batch_count, co);
    }
    char name[32];
    std::snprintf(name, sizeof name, "dataset_%04zu.csv", q);
    write_text(per_dataset / name, [&](std::ostream& out) { baselines::write_run_csv(run, out); });
    manifest.add_artifact(per_dataset / name);
    runs.push_back(std::move(run));
  }

  baselines::BaselineRun mean;
  mean.method = method;
  mean.rounds = b.rounds;
  for (std::size_t t = 0; t < b.rounds; ++t) {
    std::vector<baselines::RoundMetrics> rows;
    for (const auto& r : runs) rows.push_back(r.per_round[t]);
    mean.per_round.push_back(mean_metrics(rows));
  }
  const fs::path csv = args.out_dir / (method + ".csv");
  write_text(csv, [&](std::ostream& out) { baselines::write_run_csv(mean, out); });
  manifest.add_artifact(csv);
  manifest.complete = true;
  manifest.write();
  if (!mean.per_round.empty())
    std::cout << method << ": mean accuracy after " << b.rounds << " rounds "
              << mean.per_round.back().mean_acc << '\n';
}

}  // namespace surf::cli
