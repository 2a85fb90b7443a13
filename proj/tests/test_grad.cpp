#include <doctest.h>

#include "support.hpp"
#include "surf/error.hpp"
#include "surf/grad.hpp"
#include "surf/graph.hpp"
#include "surf/rng.hpp"
#include "surf/task.hpp"

using namespace surf;

namespace {

struct Problem {
  FLDataset ds;
  ShiftOperator s;
  UnrolledParams theta;
  LagrangianInputs in;
};

Problem make_problem(Mode mode, std::size_t num_layers, std::size_t order, std::uint64_t seed,
                     double m_scale) {
  Problem p;
  const std::size_t n = 4;
  p.ds = testing::small_dataset(n, 2, 2, 6, 5, seed);  // d = 6
  const Graph g = mode == Mode::star ? make_star(n + 1) : make_regular(n, 2, seed);
  p.s = shift_operator(g, mode == Mode::star ? ShiftKind::star_row : ShiftKind::normalized_adjacency);
  p.theta = init_params(num_layers, order, 6, 2 * 4, seed + 1, mode);
  for (auto& lp : p.theta.layers) {
    lp.m *= m_scale;
    lp.c *= m_scale;
  }
  Rng rng = make_rng(seed, "test_lambda");
  std::uniform_real_distribution<double> unif(0.0, 2.0);
  p.in.lambda.resize(num_layers);
  for (double& v : p.in.lambda) v = unif(rng);
  p.in.w0 = init_w0(g.num_nodes(), 6, 0.0, 1.0, seed + 2);
  p.in.epsilon = 0.05;
  p.in.b_count = 2;
  p.in.seed = seed + 3;
  return p;
}

void wire(Problem& p) {
  p.in.theta = &p.theta;
  p.in.dataset = &p.ds;
  p.in.shift = &p.s;
}

double worst_coordinate_error(Problem& p, double h) {
  wire(p);
  const LagrangianGrad lg = lagrangian_grad(p.in);
  auto params = tensors(p.theta);
  const auto grads = tensors(lg.grads);
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t)
    for (std::size_t e = 0; e < params[t].size(); ++e) {
      const double num = testing::fd5([&] { return lagrangian(p.in).value; }, params[t][e], h);
      worst = std::max(worst, testing::rel_err(grads[t][e], num));
    }
  return worst;
}

}  // namespace

TEST_SUITE("grad") {

TEST_CASE("layer VJP matches finite differences") {
  for (Mode mode : {Mode::decentralized, Mode::star}) {
    const std::size_t order = mode == Mode::star ? 1 : 3;
    Problem p = make_problem(mode, 1, order, 21, 40.0);
    p.theta = init_params(1, order, 6, 6 * 4, 22, mode);
    for (double& v : p.theta.layers[0].m.flat()) v *= 40.0;
    const std::size_t nodes = p.s.s.rows();
    Matrix w = testing::random_matrix(nodes, 6, 5);
    Matrix batch = node_batch(sample_layer_batches(p.ds, 1, 6, 7)[0], mode);
    const Matrix r = testing::random_matrix(nodes, 6, 6);
    LayerParams lp = p.theta.layers[0];
    auto value = [&] { return dot(r, udgd_layer(w, batch, lp, p.s, mode)); };
    // The layer is piecewise linear, so differences are exact up to rounding of
    // the O(100) value; exact zeros are compared on an absolute scale.
    auto err = [](double a, double b) { return testing::rel_err(a, b, 1e-3); };

    LayerCache cache;
    udgd_layer(w, batch, lp, p.s, mode, &cache);
    const LayerVjp vjp = layer_vjp(r, cache, lp, p.s, mode);

    double worst = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k)
      worst = std::max(worst, err(vjp.downstream.flat()[k],
                                               testing::fd5(value, w.flat()[k], 1e-5)));
    for (std::size_t k = 0; k < lp.h.size(); ++k)
      worst = std::max(worst, err(vjp.grads.h[k], testing::fd5(value, lp.h[k], 1e-5)));
    for (std::size_t k = 0; k < lp.m.size(); ++k)
      worst = std::max(worst, err(vjp.grads.m.flat()[k],
                                               testing::fd5(value, lp.m.flat()[k], 1e-5)));
    for (std::size_t k = 0; k < lp.c.size(); ++k)
      worst = std::max(worst, err(vjp.grads.c.flat()[k],
                                               testing::fd5(value, lp.c.flat()[k], 1e-5)));
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("Lagrangian gradient matches finite differences on the decentralized network") {
  Problem p = make_problem(Mode::decentralized, 3, 2, 3, 20.0);
  CHECK(worst_coordinate_error(p, 1e-5) <= 1e-5);
}

TEST_CASE("Lagrangian gradient matches finite differences on the star network") {
  Problem p = make_problem(Mode::star, 3, 1, 8, 20.0);
  CHECK(worst_coordinate_error(p, 1e-5) <= 1e-5);
}

TEST_CASE("Lagrangian value decomposes into objective plus weighted slacks") {
  Problem p = make_problem(Mode::decentralized, 3, 2, 4, 1.0);
  wire(p);
  const LagrangianValue v = lagrangian(p.in);
  double expect = v.objective;
  for (std::size_t l = 0; l < 3; ++l) expect += p.in.lambda[l] * v.slacks[l];
  CHECK(v.value == doctest::Approx(expect).epsilon(1e-14));
  CHECK(v.grad_norms.size() == 4);
  const LagrangianGrad g = lagrangian_grad(p.in);
  CHECK(g.value.value == v.value);
  CHECK(g.value.slacks == v.slacks);
}

TEST_CASE("identity layers leave every slack at epsilon times the initial norm") {
  Problem p = make_problem(Mode::decentralized, 4, 2, 5, 1.0);
  p.theta = identity_params(4, 2, 6, 8);
  wire(p);
  const LagrangianValue v = lagrangian(p.in);
  const double g0 = task::grad_norm(p.in.w0, p.ds.test, 2);
  for (double s : v.slacks) CHECK(s == doctest::Approx(0.05 * g0).epsilon(1e-12));
  // ReLU'(0) = 0: the perceptron receives no gradient at the identity.
  const LagrangianGrad lg = lagrangian_grad(p.in);
  for (const auto& lp : lg.grads.layers) {
    CHECK(frobenius_norm(lp.m) == 0.0);
    CHECK(frobenius_norm(lp.c) == 0.0);
  }
}

TEST_CASE("zero multipliers give the plain objective gradient") {
  Problem p = make_problem(Mode::decentralized, 3, 2, 6, 5.0);
  std::fill(p.in.lambda.begin(), p.in.lambda.end(), 0.0);
  wire(p);
  const LagrangianGrad lg = lagrangian_grad(p.in);
  auto params = tensors(p.theta);
  const auto grads = tensors(lg.grads);
  for (std::size_t t = 0; t < params.size(); t += 2) {
    const double num = testing::fd5(
        [&] {
          const Trajectory tr = unrolled_forward(p.in.w0, p.ds, p.theta, p.s, p.in.seed,
                                                 {.b_count = 2});
          return task::global_loss(tr.w.back(), p.ds.test, 2);
        },
        params[t][0], 1e-5);
    CHECK(testing::rel_err(grads[t][0], num) <= 1e-6);
  }
}

TEST_CASE("constructed halving trajectory satisfies every constraint") {
  const std::vector<double> norms{8.0, 4.0, 2.0, 1.0};
  for (double s : slacks_from_norms(norms, 0.01)) CHECK(s < 0.0);
  const auto s = slacks_from_norms(norms, 0.5);
  for (double v : s) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("input validation") {
  Problem p = make_problem(Mode::decentralized, 2, 2, 7, 1.0);
  wire(p);
  LagrangianInputs bad = p.in;
  bad.lambda = {0.1};
  CHECK_THROWS_AS(lagrangian(bad), ParameterError);
  bad = p.in;
  bad.lambda = {0.1, -0.2};
  CHECK_THROWS_AS(lagrangian(bad), ParameterError);
  bad = p.in;
  bad.epsilon = 1.0;
  CHECK_THROWS_AS(lagrangian_grad(bad), ParameterError);
  bad = p.in;
  bad.dataset = nullptr;
  CHECK_THROWS_AS(lagrangian(bad), ParameterError);
  CHECK_THROWS_AS(layer_vjp(Matrix(4, 6), LayerCache{}, p.theta.layers[0], p.s, Mode::decentralized),
                  StateError);
}

}
