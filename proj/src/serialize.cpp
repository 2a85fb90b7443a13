#include "surf/serialize.hpp"

#include <algorithm>

#include "surf/error.hpp"

namespace surf::io {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* a) { return key == a; });
    if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

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

}  // namespace

json to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()},
              {"data", std::vector<double>(m.flat().begin(), m.flat().end())}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) throw FormatError("matrix: data length does not match shape");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.flat().begin());
  return m;
}

const char* to_string(Mode m) { return m == Mode::star ? "star" : "decentralized"; }

Mode mode_from_string(const std::string& s) {
  if (s == "decentralized") return Mode::decentralized;
  if (s == "star") return Mode::star;
  throw ConfigError("unknown mode '" + s + "'");
}

json to_json(const UnrolledParams& p) {
  json layers = json::array();
  for (const auto& lp : p.layers)
    layers.push_back({{"h", lp.h}, {"m", to_json(lp.m)}, {"c", to_json(lp.c)}});
  return json{{"num_layers", p.num_layers()}, {"filter_order", p.filter_order},
              {"model_dim", p.model_dim},     {"batch_width", p.batch_width},
              {"mode", to_string(p.mode)},    {"layers", layers}};
}

UnrolledParams params_from_json(const json& j) {
  try {
    UnrolledParams p;
    p.filter_order = j.at("filter_order").get<std::size_t>();
    p.model_dim = j.at("model_dim").get<std::size_t>();
    p.batch_width = j.at("batch_width").get<std::size_t>();
    p.mode = mode_from_string(j.at("mode").get<std::string>());
    for (const auto& lj : j.at("layers"))
      p.layers.push_back({lj.at("h").get<std::vector<double>>(), matrix_from_json(lj.at("m")),
                          matrix_from_json(lj.at("c"))});
    if (p.layers.size() != j.at("num_layers").get<std::size_t>())
      throw FormatError("parameters: layer count mismatch");
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw FormatError(std::string("parameters: ") + e.what());
  }
}

json to_json(const TrainConfig& c) {
  return json{{"num_layers", c.num_layers},
              {"filter_order", c.filter_order},
              {"epochs", c.epochs},
              {"iterations_per_epoch", c.iterations_per_epoch},
              {"meta_batch", c.meta_batch},
              {"mu_theta", c.mu_theta},
              {"mu_lambda", c.mu_lambda},
              {"epsilon", c.epsilon},
              {"b_count", c.b_count},
              {"seed", c.seed},
              {"mode", to_string(c.mode)},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"constraints_enabled", c.constraints_enabled},
              {"optimizer", c.optimizer == PrimalOptimizer::adam ? "adam" : "sgd"},
              {"init", c.init == ParamInit::random ? "random" : "identity"},
              {"mu0", c.mu0},
              {"sigma0", c.sigma0}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  const std::string where = "train";
  reject_unknown_keys(j, {"num_layers", "filter_order", "epochs", "iterations_per_epoch",
                          "meta_batch", "mu_theta", "mu_lambda", "epsilon", "b_count", "seed",
                          "mode", "adam_beta1", "adam_beta2", "adam_eps", "constraints_enabled",
                          "optimizer", "init", "mu0", "sigma0"},
                      where);
  read_opt(j, "num_layers", c.num_layers, where);
  read_opt(j, "filter_order", c.filter_order, where);
  read_opt(j, "epochs", c.epochs, where);
  read_opt(j, "iterations_per_epoch", c.iterations_per_epoch, where);
  read_opt(j, "meta_batch", c.meta_batch, where);
  read_opt(j, "mu_theta", c.mu_theta, where);
  read_opt(j, "mu_lambda", c.mu_lambda, where);
  read_opt(j, "epsilon", c.epsilon, where);
  read_opt(j, "b_count", c.b_count, where);
  read_opt(j, "seed", c.seed, where);
  read_opt(j, "adam_beta1", c.adam_beta1, where);
  read_opt(j, "adam_beta2", c.adam_beta2, where);
  read_opt(j, "adam_eps", c.adam_eps, where);
  read_opt(j, "constraints_enabled", c.constraints_enabled, where);
  read_opt(j, "mu0", c.mu0, where);
  read_opt(j, "sigma0", c.sigma0, where);
  if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("optimizer")) {
    const auto s = j.at("optimizer").get<std::string>();
    if (s != "adam" && s != "sgd") throw ConfigError("train.optimizer: expected adam or sgd");
    c.optimizer = s == "adam" ? PrimalOptimizer::adam : PrimalOptimizer::sgd;
  }
  if (j.contains("init")) {
    const auto s = j.at("init").get<std::string>();
    if (s != "random" && s != "identity") throw ConfigError("train.init: expected random or identity");
    c.init = s == "random" ? ParamInit::random : ParamInit::identity;
  }
  c.validate();
  return c;
}

json to_json(const SyntheticConfig& c) {
  return json{{"num_agents", c.num_agents}, {"num_features", c.num_features},
              {"num_classes", c.num_classes}, {"m_train", c.m_train},
              {"m_test", c.m_test},         {"alpha", c.alpha},
              {"class_sep", c.class_sep},   {"means_seed", c.means_seed}};
}

SyntheticConfig synthetic_config_from_json(const json& j, SyntheticConfig c) {
  const std::string where = "data";
  reject_unknown_keys(j, {"num_agents", "num_features", "num_classes", "m_train", "m_test",
                          "alpha", "class_sep", "means_seed"},
                      where);
  read_opt(j, "num_agents", c.num_agents, where);
  read_opt(j, "num_features", c.num_features, where);
  read_opt(j, "num_classes", c.num_classes, where);
  read_opt(j, "m_train", c.m_train, where);
  read_opt(j, "m_test", c.m_test, where);
  read_opt(j, "alpha", c.alpha, where);
  read_opt(j, "class_sep", c.class_sep, where);
  read_opt(j, "means_seed", c.means_seed, where);
  if (!(c.alpha > 0.0)) throw ConfigError("data.alpha must be positive");
  return c;
}

json to_json(const HistoryRecord& r) {
  return json{{"iteration", r.iteration}, {"dataset", r.dataset},   {"lagrangian", r.lagrangian},
              {"objective", r.objective}, {"slacks", r.slacks},     {"lambda", r.lambda},
              {"grad_norms", r.grad_norms}};
}

HistoryRecord history_record_from_json(const json& j) {
  HistoryRecord r;
  r.iteration = j.at("iteration").get<std::size_t>();
  r.dataset = j.at("dataset").get<std::size_t>();
  r.lagrangian = j.at("lagrangian").get<double>();
  r.objective = j.at("objective").get<double>();
  r.slacks = j.at("slacks").get<std::vector<double>>();
  r.lambda = j.at("lambda").get<std::vector<double>>();
  r.grad_norms = j.at("grad_norms").get<std::vector<double>>();
  return r;
}

}  // namespace surf::io
