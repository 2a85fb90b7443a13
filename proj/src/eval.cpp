#include "surf/eval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "surf/error.hpp"
#include "surf/grad.hpp"
#include "surf/kernels.hpp"
#include "surf/rng.hpp"
#include "surf/task.hpp"

namespace surf {

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

double decay_ratio(double now, double before) {
  if (before <= task::kTolNorm) return now <= task::kTolNorm ? 1.0 : now / task::kTolNorm;
  return now / before;
}

std::vector<double> column(const std::vector<std::vector<double>>& table, std::size_t l) {
  std::vector<double> out;
  out.reserve(table.size());
  for (const auto& row : table) out.push_back(row.at(l));
  return out;
}

// n_asyn agents chosen uniformly, returned as graph node ids.
std::vector<std::size_t> stale_subset(const FLDataset& ds, Mode mode, std::size_t n_asyn,
                                      std::uint64_t seed) {
  const std::size_t n = ds.num_agents();
  std::vector<std::size_t> agents(n);
  std::iota(agents.begin(), agents.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t k = 0; k < n_asyn; ++k) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(k, n - 1)(rng);
    std::swap(agents[k], agents[j]);
  }
  agents.resize(n_asyn);
  std::sort(agents.begin(), agents.end());
  if (mode == Mode::star)
    for (auto& a : agents) ++a;
  return agents;
}

void check_compatible(const UnrolledParams& theta, const FLDataset& ds, const ShiftOperator& s,
                      std::size_t b_count) {
  theta.validate();
  if (theta.model_dim != ds.model_dim() || theta.batch_width != b_count * ds.example_width())
    throw ConfigError("eval: parameters do not match the data dimensions");
  if (s.s.rows() != node_count(ds, theta.mode))
    throw ConfigError("eval: graph size does not match the agent count");
}

}  // namespace

std::vector<double> EvalReport::final_accuracy() const {
  std::vector<double> out;
  out.reserve(accuracy.size());
  for (const auto& row : accuracy) out.push_back(row.back());
  return out;
}

LayerDiagnostics diagnostics_from_norms(const std::vector<std::vector<double>>& norms,
                                        double epsilon) {
  LayerDiagnostics diag;
  if (norms.empty()) return diag;
  const std::size_t num_layers = norms.front().size() - 1;
  diag.satisfaction.assign(num_layers, 0.0);
  diag.mean_decay_ratio.assign(num_layers, 0.0);
  diag.median_decay_ratio.assign(num_layers, 0.0);
  for (std::size_t l = 1; l <= num_layers; ++l) {
    std::vector<double> ratios;
    std::size_t satisfied = 0;
    for (const auto& g : norms) {
      if (g.size() != num_layers + 1) throw ParameterError("diagnostics: ragged norm table");
      if (g[l] - (1.0 - epsilon) * g[l - 1] <= 0.0) ++satisfied;
      ratios.push_back(decay_ratio(g[l], g[l - 1]));
    }
    diag.satisfaction[l - 1] = static_cast<double>(satisfied) / static_cast<double>(norms.size());
    diag.mean_decay_ratio[l - 1] = mean_of(ratios);
    diag.median_decay_ratio[l - 1] = median_of(ratios);
  }
  return diag;
}

void summarize(EvalReport& r, double epsilon) {
  const std::size_t cols = r.num_layers + 1;
  r.mean_acc.assign(cols, 0.0);
  r.mean_loss.assign(cols, 0.0);
  r.mean_grad_norm.assign(cols, 0.0);
  r.slack_satisfaction.clear();
  r.mean_decay_ratio.clear();
  r.median_decay_ratio.clear();
  if (r.empty()) return;
  for (std::size_t l = 0; l < cols; ++l) {
    r.mean_acc[l] = mean_of(column(r.accuracy, l));
    r.mean_loss[l] = mean_of(column(r.loss, l));
    r.mean_grad_norm[l] = mean_of(column(r.grad_norm, l));
  }
  const LayerDiagnostics diag = diagnostics_from_norms(r.grad_norm, epsilon);
  r.slack_satisfaction = diag.satisfaction;
  r.mean_decay_ratio = diag.mean_decay_ratio;
  r.median_decay_ratio = diag.median_decay_ratio;
}

EvalReport meta_evaluate(const UnrolledParams& theta, const MetaDataset& meta_test,
                         const ShiftOperator& s, const EvalOptions& opts) {
  if (meta_test.role != MetaRole::meta_test)
    throw ConfigError("meta_evaluate: expects a meta-test dataset");
  meta_test.validate();
  if (!(opts.epsilon > 0.0 && opts.epsilon < 1.0))
    throw ParameterError("meta_evaluate: epsilon must lie in (0, 1)");
  const std::size_t q_count = meta_test.size();
  const std::size_t num_layers = theta.num_layers();
  EvalReport r;
  r.num_layers = num_layers;
  r.accuracy.assign(q_count, std::vector<double>(num_layers + 1));
  r.loss = r.accuracy;
  r.grad_norm = r.accuracy;
  r.slacks.assign(q_count, std::vector<double>(num_layers));

  for (const auto& ds : meta_test.datasets) {
    check_compatible(theta, ds, s, opts.b_count);
    if (opts.n_asyn > ds.num_agents())
      throw ParameterError("async: n_asyn = " + std::to_string(opts.n_asyn) + " exceeds n = " +
                           std::to_string(ds.num_agents()));
  }

  kernels::for_each_index(q_count, [&](std::size_t q) {
    const FLDataset& ds = meta_test.datasets[q];
    const std::size_t nodes = node_count(ds, theta.mode);
    const Matrix w0 = init_w0(nodes, ds.model_dim(), opts.mu0, opts.sigma0,
                              derive_seed(opts.seed, "eval_w0", q));
    ForwardOptions fo;
    fo.b_count = opts.b_count;
    if (opts.n_asyn > 0)
      fo.stale_nodes = stale_subset(ds, theta.mode, opts.n_asyn, derive_seed(opts.seed, "eval_stale", q));
    const Trajectory traj =
        unrolled_forward(w0, ds, theta, s, derive_seed(opts.seed, "eval_batches", q), fo);
    for (std::size_t l = 0; l <= num_layers; ++l) {
      const Matrix w = agent_rows(traj.w[l], theta.mode);
      r.accuracy[q][l] = task::mean_accuracy(w, ds.test, ds.num_classes);
      r.loss[q][l] = task::global_loss(w, ds.test, ds.num_classes);
      r.grad_norm[q][l] = task::grad_norm(w, ds.test, ds.num_classes);
    }
    r.slacks[q] = slacks_from_norms(r.grad_norm[q], opts.epsilon);
  });
  summarize(r, opts.epsilon);
  return r;
}

LayerDiagnostics layer_diagnostics(const UnrolledParams& theta, const MetaDataset& meta_test,
                                   const ShiftOperator& s, const EvalOptions& opts) {
  const EvalReport r = meta_evaluate(theta, meta_test, s, opts);
  return diagnostics_from_norms(r.grad_norm, opts.epsilon);
}

std::vector<AsyncPoint> async_evaluate(const UnrolledParams& theta, const MetaDataset& meta_test,
                                       const ShiftOperator& s,
                                       const std::vector<std::size_t>& n_asyn_grid,
                                       const EvalOptions& opts) {
  std::vector<AsyncPoint> out;
  for (std::size_t n_asyn : n_asyn_grid) {
    EvalOptions o = opts;
    o.n_asyn = n_asyn;
    AsyncPoint p;
    p.n_asyn = n_asyn;
    p.report = meta_evaluate(theta, meta_test, s, o);
    p.mean_acc = p.report.mean_acc.back();
    p.mean_loss = p.report.mean_loss.back();
    out.push_back(std::move(p));
  }
  return out;
}

double gain_fraction_before_last(const std::vector<double>& mean_acc) {
  if (mean_acc.size() < 2) return 0.0;
  const double total = mean_acc.back() - mean_acc.front();
  if (!(total > 0.0)) return 0.0;
  return (mean_acc[mean_acc.size() - 2] - mean_acc.front()) / total;
}

AblationResult ablation_compare(const UnrolledParams& theta_constrained,
                                const UnrolledParams& theta_unconstrained,
                                const MetaDataset& meta_test, const ShiftOperator& s,
                                const EvalOptions& opts) {
  if (theta_constrained.num_layers() != theta_unconstrained.num_layers() ||
      theta_constrained.model_dim != theta_unconstrained.model_dim ||
      theta_constrained.batch_width != theta_unconstrained.batch_width ||
      theta_constrained.filter_order != theta_unconstrained.filter_order)
    throw ParameterError("ablation_compare: parameter shapes differ");
  AblationResult a;
  a.constrained = meta_evaluate(theta_constrained, meta_test, s, opts);
  a.unconstrained = meta_evaluate(theta_unconstrained, meta_test, s, opts);
  a.gain_fraction_constrained = gain_fraction_before_last(a.constrained.mean_acc);
  a.gain_fraction_unconstrained = gain_fraction_before_last(a.unconstrained.mean_acc);
  return a;
}

void write_report_csv(const EvalReport& r, std::ostream& out) {
  out << "layer,mean_loss,mean_acc,mean_grad_norm,slack_satisfaction,decay_ratio\n";
  if (r.empty()) return;
  const auto old = out.precision(17);
  for (std::size_t l = 0; l <= r.num_layers; ++l) {
    out << l << ',' << r.mean_loss[l] << ',' << r.mean_acc[l] << ',' << r.mean_grad_norm[l] << ',';
    if (l > 0) out << r.slack_satisfaction[l - 1] << ',' << r.mean_decay_ratio[l - 1];
    else out << ',';
    out << '\n';
  }
  out.precision(old);
}

void emit_report(const EvalReport& r, const std::filesystem::path& prefix) {
  const auto csv_path = std::filesystem::path(prefix.string() + ".csv");
  const auto json_path = std::filesystem::path(prefix.string() + ".json");
  {
    std::ofstream out(csv_path);
    if (!out) throw IoError("cannot write " + csv_path.string());
    write_report_csv(r, out);
    if (!out) throw IoError("write failed: " + csv_path.string());
  }
  nlohmann::json j;
  j["num_layers"] = r.num_layers;
  j["num_datasets"] = r.accuracy.size();
  j["mean_acc"] = r.mean_acc;
  j["mean_loss"] = r.mean_loss;
  j["mean_grad_norm"] = r.mean_grad_norm;
  j["slack_satisfaction"] = r.slack_satisfaction;
  j["mean_decay_ratio"] = r.mean_decay_ratio;
  j["median_decay_ratio"] = r.median_decay_ratio;
  j["final_accuracy"] = r.final_accuracy();
  std::ofstream out(json_path);
  if (!out) throw IoError("cannot write " + json_path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + json_path.string());
}

}  // namespace surf
