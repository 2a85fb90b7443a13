#include "surf/train.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "surf/error.hpp"
#include "surf/grad.hpp"
#include "surf/rng.hpp"
#include "surf/serialize.hpp"

namespace surf {

void TrainConfig::validate() const {
  if (!(mu_theta > 0.0)) throw ConfigError("train: mu_theta must be positive");
  if (!(mu_lambda > 0.0)) throw ConfigError("train: mu_lambda must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("train: epsilon must lie in (0, 1)");
  if (num_layers == 0) throw ConfigError("train: num_layers must be positive");
  if (b_count == 0) throw ConfigError("train: b_count must be positive");
  if (meta_batch == 0) throw ConfigError("train: meta_batch must be positive");
  if (mode == Mode::star && filter_order != 1)
    throw ConfigError("train: star mode requires filter_order = 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
  if (!(sigma0 >= 0.0)) throw ConfigError("train: sigma0 must be nonnegative");
}

AdamState make_adam_state(const UnrolledParams& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(UnrolledParams& params, AdamState& state, const ParamGrads& grads, double mu_theta,
               double beta1, double beta2, double eps_hat) {
  auto p = tensors(params);
  auto m = tensors(state.m);
  auto v = tensors(state.v);
  const auto g = tensors(grads);
  if (p.size() != g.size() || m.size() != g.size() || v.size() != g.size())
    throw ParameterError("adam_step: state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k].size() != g[k].size()) throw ParameterError("adam_step: tensor shape mismatch");
    for (std::size_t e = 0; e < p[k].size(); ++e) {
      m[k][e] = beta1 * m[k][e] + (1.0 - beta1) * g[k][e];
      v[k][e] = beta2 * v[k][e] + (1.0 - beta2) * g[k][e] * g[k][e];
      const double mhat = m[k][e] / bc1;
      const double vhat = v[k][e] / bc2;
      p[k][e] -= mu_theta * mhat / (std::sqrt(vhat) + eps_hat);
    }
  }
}

void sgd_step(UnrolledParams& params, const ParamGrads& grads, double mu_theta) {
  auto p = tensors(params);
  const auto g = tensors(grads);
  if (p.size() != g.size()) throw ParameterError("sgd_step: gradient does not match parameters");
  for (std::size_t k = 0; k < p.size(); ++k)
    for (std::size_t e = 0; e < p[k].size(); ++e) p[k][e] -= mu_theta * g[k][e];
}

std::vector<double> dual_ascent_step(const std::vector<double>& lambda,
                                     const std::vector<double>& slacks, double mu_lambda) {
  if (lambda.size() != slacks.size()) throw ParameterError("dual_ascent_step: length mismatch");
  std::vector<double> out(lambda.size());
  for (std::size_t l = 0; l < lambda.size(); ++l)
    out[l] = std::max(0.0, lambda[l] + mu_lambda * slacks[l]);
  return out;
}

TrainState init_train_state(const TrainConfig& cfg, std::size_t model_dim,
                            std::size_t batch_width) {
  cfg.validate();
  TrainState st;
  st.config = cfg;
  st.params = cfg.init == ParamInit::random
                  ? init_params(cfg.num_layers, cfg.filter_order, model_dim, batch_width,
                                derive_seed(cfg.seed, "init_params"), cfg.mode)
                  : identity_params(cfg.num_layers, cfg.filter_order, model_dim, batch_width,
                                    cfg.mode);
  st.lambda.assign(cfg.num_layers, 0.0);
  st.adam = make_adam_state(st.params);
  return st;
}

std::size_t total_iterations(const TrainConfig& cfg, std::size_t meta_size) {
  return cfg.epochs * (cfg.iterations_per_epoch > 0 ? cfg.iterations_per_epoch : meta_size);
}

namespace {

void add_scaled(ParamGrads& acc, const ParamGrads& g, double scale) {
  auto a = tensors(acc);
  const auto b = tensors(g);
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t e = 0; e < a[k].size(); ++e) a[k][e] += scale * b[k][e];
}

}  // namespace

void primal_dual_train(TrainState& state, const MetaDataset& meta, const ShiftOperator& s,
                       const TrainCallback& callback) {
  const TrainConfig& cfg = state.config;
  cfg.validate();
  if (meta.role != MetaRole::meta_train)
    throw ConfigError("primal_dual_train: expects a meta-training dataset");
  meta.validate();
  const FLDataset& first = meta.datasets.front();
  state.params.validate();
  if (state.params.model_dim != first.model_dim() ||
      state.params.batch_width != cfg.b_count * first.example_width() ||
      state.params.num_layers() != cfg.num_layers || state.params.mode != cfg.mode)
    throw ConfigError("primal_dual_train: parameters do not match the data dimensions");
  const std::size_t nodes = node_count(first, cfg.mode);
  if (s.s.rows() != nodes)
    throw ConfigError("primal_dual_train: graph size does not match the agent count");
  if (state.lambda.size() != cfg.num_layers)
    throw StateError("primal_dual_train: lambda length does not match the layer count");

  const std::size_t total = total_iterations(cfg, meta.size());
  const std::vector<double> zero_lambda(cfg.num_layers, 0.0);
  const double inv_batch = 1.0 / static_cast<double>(cfg.meta_batch);

  while (state.iteration < total) {
    const std::size_t t = state.iteration;
    ParamGrads grad_sum = state.params.zeros_like();
    HistoryRecord rec;
    rec.iteration = t;
    rec.slacks.assign(cfg.num_layers, 0.0);
    rec.grad_norms.assign(cfg.num_layers + 1, 0.0);

    for (std::size_t b = 0; b < cfg.meta_batch; ++b) {
      const std::uint64_t draw = static_cast<std::uint64_t>(t * cfg.meta_batch + b);
      Rng pick = make_rng(cfg.seed, "pick_dataset", draw);
      const std::size_t q = std::uniform_int_distribution<std::size_t>(0, meta.size() - 1)(pick);
      if (b == 0) rec.dataset = q;

      LagrangianInputs in;
      in.theta = &state.params;
      in.lambda = cfg.constraints_enabled ? state.lambda : zero_lambda;
      in.w0 = init_w0(nodes, first.model_dim(), cfg.mu0, cfg.sigma0,
                      derive_seed(cfg.seed, "train_w0", draw));
      in.dataset = &meta.datasets[q];
      in.shift = &s;
      in.epsilon = cfg.epsilon;
      in.b_count = cfg.b_count;
      in.seed = derive_seed(cfg.seed, "train_batches", draw);

      const LagrangianGrad lg = lagrangian_grad(in);
      add_scaled(grad_sum, lg.grads, inv_batch);
      rec.lagrangian += inv_batch * lg.value.value;
      rec.objective += inv_batch * lg.value.objective;
      for (std::size_t l = 0; l < cfg.num_layers; ++l) rec.slacks[l] += inv_batch * lg.value.slacks[l];
      for (std::size_t l = 0; l <= cfg.num_layers; ++l)
        rec.grad_norms[l] += inv_batch * lg.value.grad_norms[l];
    }

    if (cfg.optimizer == PrimalOptimizer::adam)
      adam_step(state.params, state.adam, grad_sum, cfg.mu_theta, cfg.adam_beta1, cfg.adam_beta2,
                cfg.adam_eps);
    else
      sgd_step(state.params, grad_sum, cfg.mu_theta);

    if (cfg.constraints_enabled) state.lambda = dual_ascent_step(state.lambda, rec.slacks, cfg.mu_lambda);
    rec.lambda = state.lambda;
    state.history.push_back(std::move(rec));
    ++state.iteration;
    if (callback && !callback(state)) break;
  }
}

TrainState primal_dual_train(const MetaDataset& meta, const ShiftOperator& s,
                             const TrainConfig& cfg) {
  meta.validate();
  const FLDataset& first = meta.datasets.front();
  TrainState st = init_train_state(cfg, first.model_dim(), cfg.b_count * first.example_width());
  primal_dual_train(st, meta, s);
  return st;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointFormat = "surf-checkpoint";
constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const TrainState& st, const std::filesystem::path& path) {
  io::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = io::to_json(st.config);
  j["params"] = io::to_json(st.params);
  j["lambda"] = st.lambda;
  j["adam"] = {{"step", st.adam.step}, {"m", io::to_json(st.adam.m)}, {"v", io::to_json(st.adam.v)}};
  j["iteration"] = st.iteration;
  io::json hist = io::json::array();
  for (const auto& r : st.history) hist.push_back(io::to_json(r));
  j["history"] = std::move(hist);

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump() << '\n';
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  io::json j;
  try {
    j = io::json::parse(in);
  } catch (const io::json::exception& e) {
    throw FormatError("checkpoint " + path.filename().string() + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat)
      throw FormatError("checkpoint: not a SURF checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw FormatError("checkpoint: unsupported version " + std::to_string(j.at("version").get<int>()));
    TrainState st;
    st.config = io::train_config_from_json(j.at("config"));
    st.params = io::params_from_json(j.at("params"));
    st.lambda = j.at("lambda").get<std::vector<double>>();
    st.adam.step = j.at("adam").at("step").get<std::size_t>();
    st.adam.m = io::params_from_json(j.at("adam").at("m"));
    st.adam.v = io::params_from_json(j.at("adam").at("v"));
    st.iteration = j.at("iteration").get<std::size_t>();
    for (const auto& r : j.at("history")) st.history.push_back(io::history_record_from_json(r));
    if (st.lambda.size() != st.params.num_layers())
      throw FormatError("checkpoint: lambda length does not match layer count");
    return st;
  } catch (const io::json::exception& e) {
    throw FormatError("checkpoint " + path.filename().string() + ": " + e.what());
  }
}

void write_history_csv(const TrainHistory& history, std::size_t num_layers, std::ostream& out) {
  out << "iteration,dataset,lagrangian,objective";
  for (std::size_t l = 1; l <= num_layers; ++l) out << ",slack_" << l;
  for (std::size_t l = 1; l <= num_layers; ++l) out << ",lambda_" << l;
  for (std::size_t l = 0; l <= num_layers; ++l) out << ",grad_norm_" << l;
  out << '\n';
  out.precision(17);
  for (const auto& r : history) {
    out << r.iteration << ',' << r.dataset << ',' << r.lagrangian << ',' << r.objective;
    for (double v : r.slacks) out << ',' << v;
    for (double v : r.lambda) out << ',' << v;
    for (double v : r.grad_norms) out << ',' << v;
    out << '\n';
  }
}

}  // namespace surf
