#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "surf/error.hpp"

namespace {

int exit_code(surf::ErrorKind kind) {
  switch (kind) {
    case surf::ErrorKind::config:
    case surf::ErrorKind::parameter: return 2;
    case surf::ErrorKind::format:
    case surf::ErrorKind::structural:
    case surf::ErrorKind::io: return 3;
    case surf::ErrorKind::state: return 4;
  }
  return 4;
}

// One line, so scripts can split on "code=" and "message=".
int report(const char* code, std::string message, int status) {
  for (char& c : message)
    if (c == '\n' || c == '\r') c = ' ';
  std::cerr << "error code=" << code << " message=" << message << '\n';
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace surf::cli;

  CLI::App app{"surf: unrolled decentralized optimizer training and evaluation"};
  app.require_subcommand(1);

  CommonArgs common;
  std::uint64_t seed = 0;
  bool no_constraints = false;
  std::string resume, checkpoint, async_list, method;

  auto add_common = [&](CLI::App* sub, bool needs_config, bool needs_data, bool needs_out) {
    auto* c = sub->add_option("--config", common.config, "JSON run configuration");
    if (needs_config) c->required();
    if (needs_data) sub->add_option("--data-dir", common.data_dir, "directory written by gen-data")->required();
    auto* o = sub->add_option("--out-dir", common.out_dir, "output directory");
    if (needs_out) o->required();
    sub->add_option("--seed", seed, "master seed (overrides the config)");
  };

  auto* gen = app.add_subcommand("gen-data", "generate synthetic meta-train and meta-test datasets");
  add_common(gen, true, false, true);

  auto* train = app.add_subcommand("train", "primal-dual meta-training");
  add_common(train, true, true, true);
  train->add_flag("--no-constraints", no_constraints, "train without descending constraints");
  train->add_option("--resume", resume, "checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "per-layer evaluation on the meta-test datasets");
  add_common(eval, false, true, true);
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  eval->add_option("--async", async_list, "comma-separated asynchronous agent counts, e.g. 0,5,10");

  auto* base = app.add_subcommand("baseline", "run a classical baseline on the meta-test datasets");
  add_common(base, true, true, true);
  base->add_option("--method", method, "dgd, dsgd, dfedavgm or fedavg-star")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("USAGE", e.what(), 2);
  }

  for (auto* sub : {gen, train, eval, base})
    if (sub->parsed() && sub->count("--seed") > 0) common.seed = seed;

  try {
    if (gen->parsed()) {
      cmd_gen_data(common);
    } else if (train->parsed()) {
      cmd_train(common, no_constraints, resume);
    } else if (eval->parsed()) {
      std::optional<std::vector<std::size_t>> grid;
      if (!async_list.empty()) grid = parse_size_list(async_list);
      cmd_eval(common, checkpoint, grid);
    } else if (base->parsed()) {
      cmd_baseline(common, method);
    }
  } catch (const surf::Error& e) {
    return report(surf::error_code(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const std::exception& e) {
    return report("RUNTIME", e.what(), 4);
  }
  return 0;
}
