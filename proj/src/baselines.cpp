#include "surf/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "surf/error.hpp"
#include "surf/kernels.hpp"
#include "surf/rng.hpp"
#include "surf/task.hpp"
#include "surf/unroll.hpp"

namespace surf::baselines {

std::vector<std::size_t> sample_indices(std::size_t m, std::size_t count, std::uint64_t seed) {
  if (count == 0 || count > m)
    throw ParameterError("sample_indices: count must lie in [1, " + std::to_string(m) + "]");
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (count < m) {
    Rng rng(seed);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(k, m - 1)(rng);
      std::swap(idx[k], idx[j]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

namespace {

Shard subset(const Shard& s, const std::vector<std::size_t>& idx) {
  Shard out{Matrix(idx.size(), s.x.cols()), std::vector<int>(idx.size())};
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::copy(s.x.row(idx[k]).begin(), s.x.row(idx[k]).end(), out.x.row(k).begin());
    out.y[k] = s.y[idx[k]];
  }
  return out;
}

// Mini-batch gradient of agent i's local loss at w, batch drawn from rng.
void local_grad(const FLDataset& ds, std::size_t i, std::span<const double> w,
                std::size_t batch_count, Rng& rng, std::span<double> g) {
  const Shard& shard = ds.train[i];
  if (batch_count >= shard.size()) {
    task::agent_grad(w, shard, ds.num_classes, g);
    return;
  }
  const auto idx = sample_indices(shard.size(), batch_count, rng());
  task::agent_grad(w, subset(shard, idx), ds.num_classes, g);
}

Rng batch_rng(std::uint64_t seed, std::size_t round, std::size_t n, std::size_t agent) {
  return make_rng(seed, "baseline_batch", static_cast<std::uint64_t>(round * n + agent));
}

RoundMetrics measure(const FLDataset& ds, const Matrix& w, std::size_t round) {
  RoundMetrics r;
  r.round = round;
  r.mean_loss = task::global_loss(w, ds.test, ds.num_classes);
  r.mean_acc = task::mean_accuracy(w, ds.test, ds.num_classes);
  r.mean_grad_norm = task::grad_norm(w, ds.test, ds.num_classes);
  r.disagreement = disagreement(w);
  return r;
}

Matrix initial_weights(const FLDataset& ds, const CommonOptions& opts) {
  const std::size_t n = ds.num_agents();
  if (opts.w0 != nullptr) {
    if (opts.w0->rows() != n || opts.w0->cols() != ds.model_dim())
      throw ParameterError("baseline: initial weights have the wrong shape");
    return *opts.w0;
  }
  return init_w0(n, ds.model_dim(), opts.mu0, opts.sigma0, derive_seed(opts.seed, "baseline_w0"));
}

BaselineRun start(const std::string& method, const FLDataset& ds, const Matrix& w,
                  const CommonOptions& opts) {
  ds.validate();
  BaselineRun run;
  run.method = method;
  run.initial = measure(ds, w, 0);
  if (opts.keep_snapshots) run.snapshots.push_back(w);
  return run;
}

void record(BaselineRun& run, const FLDataset& ds, const Matrix& w, const CommonOptions& opts) {
  ++run.rounds;
  run.per_round.push_back(measure(ds, w, run.rounds));
  if (opts.keep_snapshots) run.snapshots.push_back(w);
}

const Matrix& checked_mixing(const FLDataset& ds, const Graph& g, MixingMatrix& storage) {
  if (g.num_nodes() != ds.num_agents())
    throw ParameterError("baseline: graph has " + std::to_string(g.num_nodes()) +
                         " nodes but the dataset has " + std::to_string(ds.num_agents()) +
                         " agents");
  storage = metropolis_weights(g);
  return storage.a;
}

BaselineRun dgd_like(const std::string& method, const FLDataset& ds, const Graph& g, double beta,
                     std::size_t batch_count, const CommonOptions& opts, StepPlacement placement) {
  if (!(beta >= 0.0)) throw ParameterError(method + ": beta must be nonnegative");
  if (batch_count == 0) throw ParameterError(method + ": batch_count must be positive");
  MixingMatrix mix;
  const Matrix& a = checked_mixing(ds, g, mix);
  Matrix w = initial_weights(ds, opts);
  BaselineRun run = start(method, ds, w, opts);
  run.hyperparameters = {{"beta", beta}, {"batch_count", static_cast<double>(batch_count)}};
  const std::size_t n = ds.num_agents();
  Matrix grads(n, ds.model_dim());
  Matrix mixed(n, ds.model_dim());
  for (std::size_t t = 0; t < opts.rounds; ++t) {
    kernels::for_each_index(n, [&](std::size_t i) {
      Rng rng = batch_rng(opts.seed, t, n, i);
      local_grad(ds, i, w.row(i), batch_count, rng, grads.row(i));
    });
    if (placement == StepPlacement::combine_then_adapt) {
      kernels::matmul(a, w, mixed);
      w = mixed - beta * grads;
    } else {
      w -= beta * grads;
      kernels::matmul(a, w, mixed);
      w = mixed;
    }
    record(run, ds, w, opts);
  }
  return run;
}

}  // namespace

BaselineRun dgd_run(const FLDataset& ds, const Graph& g, double beta, std::size_t batch_count,
                    const CommonOptions& opts, StepPlacement placement) {
  return dgd_like("dgd", ds, g, beta, batch_count, opts, placement);
}

BaselineRun dsgd_run(const FLDataset& ds, const Graph& g, double beta, const CommonOptions& opts) {
  return dgd_like("dsgd", ds, g, beta, 1, opts, StepPlacement::combine_then_adapt);
}

BaselineRun dfedavgm_run(const FLDataset& ds, const Graph& g, double beta, double momentum,
                         std::size_t local_steps, std::size_t batch_count,
                         const CommonOptions& opts) {
  if (!(beta >= 0.0)) throw ParameterError("dfedavgm: beta must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ParameterError("dfedavgm: momentum must lie in [0, 1)");
  if (local_steps == 0) throw ParameterError("dfedavgm: local_steps must be positive");
  if (batch_count == 0) throw ParameterError("dfedavgm: batch_count must be positive");
  MixingMatrix mix;
  const Matrix& a = checked_mixing(ds, g, mix);
  Matrix w = initial_weights(ds, opts);
  BaselineRun run = start("dfedavgm", ds, w, opts);
  run.hyperparameters = {{"beta", beta},
                         {"momentum", momentum},
                         {"local_steps", static_cast<double>(local_steps)},
                         {"batch_count", static_cast<double>(batch_count)}};
  const std::size_t n = ds.num_agents();
  const std::size_t d = ds.model_dim();
  Matrix mixed(n, d);
  for (std::size_t t = 0; t < opts.rounds; ++t) {
    kernels::for_each_index(n, [&](std::size_t i) {
      Rng rng = batch_rng(opts.seed, t, n, i);
      std::vector<double> g(d), v(d, 0.0);
      auto wi = w.row(i);
      for (std::size_t step = 0; step < local_steps; ++step) {
        local_grad(ds, i, wi, batch_count, rng, g);
        for (std::size_t e = 0; e < d; ++e) {
          v[e] = momentum * v[e] + g[e];
          wi[e] -= beta * v[e];
        }
      }
    });
    kernels::matmul(a, w, mixed);
    w = mixed;
    record(run, ds, w, opts);
  }
  return run;
}

BaselineRun fedavg_star_run(const FLDataset& ds, std::size_t participants_per_round,
                            std::size_t local_steps, double beta, std::size_t batch_count,
                            const CommonOptions& opts) {
  const std::size_t n = ds.num_agents();
  const std::size_t d = ds.model_dim();
  if (participants_per_round == 0 || participants_per_round > n)
    throw ParameterError("fedavg-star: participants_per_round must lie in [1, n]");
  if (local_steps == 0) throw ParameterError("fedavg-star: local_steps must be positive");
  if (!(beta >= 0.0)) throw ParameterError("fedavg-star: beta must be nonnegative");
  if (batch_count == 0) throw ParameterError("fedavg-star: batch_count must be positive");

  // The server starts from the mean of the initial agent models and every agent
  // evaluates the current server model.
  const Matrix w_init = initial_weights(ds, opts);
  std::vector<double> server = row_mean(w_init);
  auto broadcast = [&] {
    Matrix w(n, d);
    for (std::size_t i = 0; i < n; ++i) std::copy(server.begin(), server.end(), w.row(i).begin());
    return w;
  };
  BaselineRun run = start("fedavg-star", ds, broadcast(), opts);
  run.hyperparameters = {{"beta", beta},
                         {"participants_per_round", static_cast<double>(participants_per_round)},
                         {"local_steps", static_cast<double>(local_steps)},
                         {"batch_count", static_cast<double>(batch_count)}};
  Matrix local(participants_per_round, d);
  for (std::size_t t = 0; t < opts.rounds; ++t) {
    const auto chosen = sample_indices(n, participants_per_round,
                                       derive_seed(opts.seed, "participants", t));
    kernels::for_each_index(chosen.size(), [&](std::size_t k) {
      const std::size_t i = chosen[k];
      Rng rng = batch_rng(opts.seed, t, n, i);
      auto wi = local.row(k);
      std::copy(server.begin(), server.end(), wi.begin());
      std::vector<double> g(d);
      for (std::size_t step = 0; step < local_steps; ++step) {
        local_grad(ds, i, wi, batch_count, rng, g);
        for (std::size_t e = 0; e < d; ++e) wi[e] -= beta * g[e];
      }
    });
    server = row_mean(local);
    record(run, ds, broadcast(), opts);
  }
  return run;
}

void write_run_csv(const BaselineRun& run, std::ostream& out, bool header) {
  if (header) out << "method,round,mean_loss,mean_acc,mean_grad_norm,disagreement\n";
  const auto old = out.precision(17);
  for (const auto& r : run.per_round)
    out << run.method << ',' << r.round << ',' << r.mean_loss << ',' << r.mean_acc << ','
        << r.mean_grad_norm << ',' << r.disagreement << '\n';
  out.precision(old);
}

}  // namespace surf::baselines
