#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "surf/error.hpp"
#include "surf/grad.hpp"
#include "surf/rng.hpp"
#include "surf/train.hpp"

using namespace surf;
namespace fs = std::filesystem;

namespace {

struct Setup {
  MetaDataset meta;
  ShiftOperator s;
  TrainConfig cfg;
};

Setup small_setup() {
  Setup st;
  SyntheticConfig sc;
  sc.num_agents = 6;
  sc.num_features = 3;
  sc.num_classes = 3;
  sc.m_train = 6;
  sc.m_test = 4;
  sc.class_sep = 3.0;
  st.meta = gen_meta_dataset(sc, 4, MetaRole::meta_train, 5);
  st.s = shift_operator(make_regular(6, 3, 1), ShiftKind::normalized_adjacency);
  st.cfg.num_layers = 3;
  st.cfg.filter_order = 2;
  st.cfg.b_count = 2;
  st.cfg.epochs = 2;
  st.cfg.seed = 17;
  st.cfg.mu_lambda = 0.5;
  return st;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "surf_train_tests";
  fs::create_directories(dir);
  return dir / name;
}

double mean_objective(const UnrolledParams& theta, const Setup& st) {
  double total = 0.0;
  for (std::size_t q = 0; q < st.meta.size(); ++q) {
    LagrangianInputs in;
    in.theta = &theta;
    in.lambda.assign(theta.num_layers(), 0.0);
    in.w0 = init_w0(6, st.meta.datasets[q].model_dim(), 0.0, 0.1, derive_seed(3, "w0", q));
    in.dataset = &st.meta.datasets[q];
    in.shift = &st.s;
    in.epsilon = 0.05;
    in.b_count = 2;
    in.seed = derive_seed(3, "batches", q);
    total += lagrangian(in).objective;
  }
  return total / static_cast<double>(st.meta.size());
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("Adam step follows the bias-corrected moment recursion") {
  UnrolledParams p = identity_params(1, 0, 1, 1);
  AdamState state = make_adam_state(p);
  ParamGrads g = p.zeros_like();
  double m = 0.0, v = 0.0, x = p.layers[0].h[0];
  const double grads[] = {0.5, -1.0, 2.0};
  for (int t = 1; t <= 3; ++t) {
    g.layers[0].h[0] = grads[t - 1];
    adam_step(p, state, g, 0.1, 0.9, 0.999, 1e-8);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    CHECK(p.layers[0].h[0] == doctest::Approx(x).epsilon(1e-14));
  }
  CHECK(state.step == 3);
  // First step moves every coordinate by about mu regardless of scale.
  UnrolledParams q = identity_params(1, 0, 1, 1);
  AdamState fresh = make_adam_state(q);
  g.layers[0].h[0] = 1e-4;
  adam_step(q, fresh, g, 0.01, 0.9, 0.999, 1e-8);
  CHECK(q.layers[0].h[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-5));
}

TEST_CASE("SGD and projected dual ascent") {
  UnrolledParams p = identity_params(1, 1, 2, 1);
  ParamGrads g = p.zeros_like();
  g.layers[0].h = {1.0, -2.0};
  sgd_step(p, g, 0.5);
  CHECK(p.layers[0].h == std::vector<double>{0.5, 1.0});
  const auto lam = dual_ascent_step({0.0, 1.0, 0.2}, {-3.0, 0.5, -0.5}, 0.5);
  CHECK(lam == std::vector<double>{0.0, 1.25, 0.0});
  CHECK_THROWS_AS(dual_ascent_step({0.0}, {1.0, 2.0}, 0.1), ParameterError);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = [&](auto mutate) {
    TrainConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad([](TrainConfig& c) { c.mu_theta = 0.0; });
  bad([](TrainConfig& c) { c.mu_lambda = -1.0; });
  bad([](TrainConfig& c) { c.epsilon = 0.0; });
  bad([](TrainConfig& c) { c.epsilon = 1.0; });
  bad([](TrainConfig& c) { c.num_layers = 0; });
  bad([](TrainConfig& c) { c.meta_batch = 0; });
  bad([](TrainConfig& c) { c.mode = Mode::star; });
  bad([](TrainConfig& c) { c.adam_beta2 = 1.0; });
}

TEST_CASE("identity initialization makes every multiplier grow") {
  Setup st = small_setup();
  st.cfg.init = ParamInit::identity;
  st.cfg.epochs = 3;
  const TrainState state = primal_dual_train(st.meta, st.s, st.cfg);
  REQUIRE(state.history.size() == 12);
  std::vector<double> prev(3, 0.0);
  for (std::size_t t = 0; t < 10; ++t) {
    for (std::size_t l = 0; l < 3; ++l) {
      CHECK(state.history[t].slacks[l] > 0.0);
      CHECK(state.history[t].lambda[l] > prev[l]);
    }
    prev = state.history[t].lambda;
  }
}

TEST_CASE("disabled constraints keep the multipliers at zero") {
  Setup st = small_setup();
  st.cfg.constraints_enabled = false;
  const TrainState state = primal_dual_train(st.meta, st.s, st.cfg);
  for (const auto& r : state.history)
    for (double l : r.lambda) CHECK(l == 0.0);
}

TEST_CASE("zero epochs leaves the initialization untouched") {
  Setup st = small_setup();
  st.cfg.epochs = 0;
  const TrainState state = primal_dual_train(st.meta, st.s, st.cfg);
  CHECK(state.iteration == 0);
  CHECK(state.history.empty());
  const FLDataset& ds = st.meta.datasets[0];
  CHECK(state.params == init_train_state(st.cfg, ds.model_dim(), 2 * ds.example_width()).params);
}

TEST_CASE("training lowers the meta-objective") {
  Setup st = small_setup();
  st.cfg.epochs = 30;
  st.cfg.mu_theta = 3e-3;
  const FLDataset& ds = st.meta.datasets[0];
  const TrainState init = init_train_state(st.cfg, ds.model_dim(), 2 * ds.example_width());
  const TrainState trained = primal_dual_train(st.meta, st.s, st.cfg);
  CHECK(mean_objective(trained.params, st) < mean_objective(init.params, st));
}

TEST_CASE("identical configs give identical states") {
  Setup st = small_setup();
  CHECK(primal_dual_train(st.meta, st.s, st.cfg) == primal_dual_train(st.meta, st.s, st.cfg));
  TrainConfig other = st.cfg;
  other.seed += 1;
  CHECK_FALSE(primal_dual_train(st.meta, st.s, st.cfg) == primal_dual_train(st.meta, st.s, other));
}

TEST_CASE("resuming from a checkpoint is bitwise identical to an uninterrupted run") {
  Setup st = small_setup();
  st.cfg.meta_batch = 2;
  const TrainState full = primal_dual_train(st.meta, st.s, st.cfg);

  const FLDataset& ds = st.meta.datasets[0];
  TrainState part = init_train_state(st.cfg, ds.model_dim(), 2 * ds.example_width());
  primal_dual_train(part, st.meta, st.s, [](const TrainState& s) { return s.iteration < 3; });
  CHECK(part.iteration == 3);
  const fs::path path = scratch("resume.json");
  save_checkpoint(part, path);
  TrainState resumed = load_checkpoint(path);
  CHECK(resumed == part);
  primal_dual_train(resumed, st.meta, st.s);
  CHECK(resumed == full);
}

TEST_CASE("damaged checkpoints are rejected") {
  Setup st = small_setup();
  st.cfg.epochs = 1;
  const TrainState state = primal_dual_train(st.meta, st.s, st.cfg);
  const fs::path path = scratch("damaged.json");
  save_checkpoint(state, path);
  std::string text;
  {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  {
    std::ofstream out(path);
    out << text.substr(0, text.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  {
    std::ofstream out(path);
    std::string bumped = text;
    const auto pos = bumped.find("\"version\":1");
    REQUIRE(pos != std::string::npos);
    bumped.replace(pos, 11, "\"version\":9");
    out << bumped;
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  CHECK_THROWS_AS(load_checkpoint(scratch("absent.json")), IoError);
}

TEST_CASE("training rejects mismatched inputs") {
  Setup st = small_setup();
  MetaDataset test_role = st.meta;
  test_role.role = MetaRole::meta_test;
  CHECK_THROWS_AS(primal_dual_train(test_role, st.s, st.cfg), ConfigError);
  const ShiftOperator wrong = shift_operator(make_regular(8, 3, 1), ShiftKind::normalized_adjacency);
  CHECK_THROWS_AS(primal_dual_train(st.meta, wrong, st.cfg), ConfigError);
}

TEST_CASE("history CSV has one row per iteration") {
  Setup st = small_setup();
  const TrainState state = primal_dual_train(st.meta, st.s, st.cfg);
  std::ostringstream out;
  write_history_csv(state.history, 3, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line ==
        "iteration,dataset,lagrangian,objective,slack_1,slack_2,slack_3,lambda_1,lambda_2,"
        "lambda_3,grad_norm_0,grad_norm_1,grad_norm_2,grad_norm_3");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == total_iterations(st.cfg, st.meta.size()));
}

}
