#include <doctest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "surf/baselines.hpp"
#include "surf/error.hpp"
#include "surf/rng.hpp"
#include "surf/task.hpp"
#include "surf/unroll.hpp"

using namespace surf;
using namespace surf::baselines;

namespace {

// Every agent holds a copy of agent 0's shards.
FLDataset replicate_first(FLDataset ds) {
  for (std::size_t i = 1; i < ds.num_agents(); ++i) {
    ds.train[i] = ds.train[0];
    ds.test[i] = ds.test[0];
  }
  return ds;
}

Matrix repeated_row(std::size_t n, std::size_t d, std::uint64_t seed) {
  const Matrix r = testing::random_matrix(1, d, seed, 0.3);
  Matrix w(n, d);
  for (std::size_t i = 0; i < n; ++i) std::copy(r.row(0).begin(), r.row(0).end(), w.row(i).begin());
  return w;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("pure consensus contracts disagreement and converges to the initial mean") {
  const FLDataset ds = testing::small_dataset(20, 3, 3, 10, 5, 1);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Graph g = make_regular(20, 3, seed);
    const Matrix w0 = init_w0(20, 12, 0.0, 1.0, seed);
    CommonOptions opts;
    opts.rounds = 400;
    opts.w0 = &w0;
    opts.keep_snapshots = true;
    const BaselineRun run = dgd_run(ds, g, 0.0, 10, opts);
    CHECK(run.rounds == 400);
    double prev = run.initial.disagreement;
    for (std::size_t t = 0; t < 50; ++t) {
      CHECK(run.per_round[t].disagreement <= prev);
      prev = run.per_round[t].disagreement;
    }
    const auto mean = row_mean(w0);
    const Matrix& last = run.snapshots.back();
    double worst = 0.0;
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t j = 0; j < 12; ++j) worst = std::max(worst, std::abs(last(i, j) - mean[j]));
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("single agent full batch is gradient descent with monotone loss") {
  const FLDataset ds = testing::small_dataset(1, 3, 3, 20, 5, 2);
  const Graph g(1, {});
  CommonOptions opts;
  opts.rounds = 100;
  opts.keep_snapshots = true;
  const BaselineRun run = dgd_run(ds, g, 0.5, 20, opts);
  double prev = task::global_loss(run.snapshots[0], ds.train, 3);
  for (std::size_t t = 1; t < run.snapshots.size(); ++t) {
    const double loss = task::global_loss(run.snapshots[t], ds.train, 3);
    CHECK(loss <= prev);
    prev = loss;
  }
  // Step t: w_t = w_{t-1} - beta grad f(w_{t-1}).
  std::vector<double> grad(12);
  task::agent_grad(run.snapshots[4].row(0), ds.train[0], 3, grad);
  for (std::size_t k = 0; k < 12; ++k)
    CHECK(run.snapshots[5](0, k) == doctest::Approx(run.snapshots[4](0, k) - 0.5 * grad[k]));
}

TEST_CASE("identical agents stay in agreement") {
  const FLDataset ds = replicate_first(testing::small_dataset(8, 3, 2, 10, 4, 3));
  const Graph g = make_erdos_renyi(8, 0.4, 3);
  const Matrix w0 = repeated_row(8, 8, 4);
  CommonOptions opts;
  opts.rounds = 30;
  opts.w0 = &w0;
  CHECK(dgd_run(ds, g, 0.3, 10, opts).per_round.back().disagreement <= 1e-12);
  CHECK(dfedavgm_run(ds, g, 0.1, 0.9, 3, 10, opts).per_round.back().disagreement <= 1e-12);
}

TEST_CASE("consensus never loses ground on identical shards") {
  const FLDataset ds = replicate_first(testing::small_dataset(10, 3, 3, 10, 4, 5));
  const Graph g = make_regular(10, 3, 5);
  CommonOptions opts;
  opts.rounds = 60;
  opts.sigma0 = 1.0;
  for (const BaselineRun& run : {dgd_run(ds, g, 0.2, 10, opts), dsgd_run(ds, g, 0.2, opts),
                                 dfedavgm_run(ds, g, 0.05, 0.5, 6, 10, opts)})
    CHECK(run.per_round.back().disagreement <= run.initial.disagreement);
}

TEST_CASE("DGD lowers the global loss on the convex task") {
  const FLDataset ds = testing::small_dataset(10, 4, 3, 20, 10, 6, 1.0, 3.0);
  const Graph g = make_regular(10, 3, 6);
  CommonOptions opts;
  opts.keep_snapshots = true;
  const BaselineRun run = dgd_run(ds, g, 0.2, 20, opts);
  CHECK(run.rounds == 200);
  CHECK(task::global_loss(run.snapshots.back(), ds.train, 3) <
        task::global_loss(run.snapshots.front(), ds.train, 3));
}

TEST_CASE("one-sample DSGD is unbiased for the full-batch step") {
  const FLDataset ds = testing::small_dataset(4, 2, 2, 8, 2, 7);
  const Graph g = make_regular(4, 2, 7);
  const Matrix w0 = init_w0(4, 6, 0.0, 0.5, 7);
  const double beta = 0.1;
  CommonOptions opts;
  opts.rounds = 1;
  opts.w0 = &w0;
  opts.keep_snapshots = true;
  const Matrix full = dgd_run(ds, g, beta, 8, opts).snapshots[1];
  const int trials = 500;
  Matrix sum(4, 6), sq(4, 6);
  for (int t = 0; t < trials; ++t) {
    opts.seed = static_cast<std::uint64_t>(t);
    const Matrix w1 = dsgd_run(ds, g, beta, opts).snapshots[1];
    for (std::size_t k = 0; k < w1.size(); ++k) {
      sum.flat()[k] += w1.flat()[k];
      sq.flat()[k] += w1.flat()[k] * w1.flat()[k];
    }
  }
  for (std::size_t k = 0; k < full.size(); ++k) {
    const double mean = sum.flat()[k] / trials;
    const double var = sq.flat()[k] / trials - mean * mean;
    const double se = std::sqrt(std::max(var, 0.0) / trials);
    CHECK(std::abs(mean - full.flat()[k]) <= 3 * se + 1e-12);
  }
}

TEST_CASE("runs are deterministic per seed") {
  const FLDataset ds = testing::small_dataset(6, 2, 2, 10, 3, 8);
  const Graph g = make_regular(6, 3, 8);
  CommonOptions opts;
  opts.rounds = 5;
  opts.keep_snapshots = true;
  CHECK(dsgd_run(ds, g, 0.1, opts).snapshots == dsgd_run(ds, g, 0.1, opts).snapshots);
  CommonOptions other = opts;
  other.seed = 1;
  CHECK_FALSE(dsgd_run(ds, g, 0.1, opts).snapshots == dsgd_run(ds, g, 0.1, other).snapshots);
}

TEST_CASE("DFedAvgM with one plain step is adapt-then-combine DGD") {
  const FLDataset ds = testing::small_dataset(6, 2, 3, 10, 3, 9);
  const Graph g = make_regular(6, 3, 9);
  CommonOptions opts;
  opts.rounds = 10;
  opts.keep_snapshots = true;
  const auto a = dfedavgm_run(ds, g, 0.2, 0.0, 1, 4, opts);
  const auto b = dgd_run(ds, g, 0.2, 4, opts, StepPlacement::adapt_then_combine);
  CHECK(a.snapshots == b.snapshots);
}

TEST_CASE("momentum with zero gradients leaves the weights unchanged") {
  // Zero features, balanced labels and w = 0: every local gradient is zero.
  FLDataset ds;
  ds.num_features = 2;
  ds.num_classes = 2;
  ds.m_train = 4;
  ds.m_test = 2;
  for (int i = 0; i < 3; ++i) {
    ds.train.push_back(Shard{Matrix(4, 2), {0, 1, 0, 1}});
    ds.test.push_back(Shard{Matrix(2, 2), {0, 1}});
  }
  const Graph g = make_regular(3, 2, 0);
  const Matrix w0(3, 6);
  CommonOptions opts;
  opts.rounds = 4;
  opts.w0 = &w0;
  opts.keep_snapshots = true;
  const auto run = dfedavgm_run(ds, g, 0.5, 0.9, 6, 4, opts);
  for (const auto& w : run.snapshots) CHECK(w == w0);
}

TEST_CASE("full participation on identical shards is a centralized gradient step") {
  const FLDataset ds = replicate_first(testing::small_dataset(5, 3, 3, 10, 4, 10));
  CommonOptions opts;
  opts.rounds = 3;
  opts.keep_snapshots = true;
  const auto run = fedavg_star_run(ds, 5, 1, 0.3, 10, opts);
  for (std::size_t t = 1; t <= 3; ++t) {
    const auto prev = run.snapshots[t - 1].row(0);
    std::vector<double> grad(12);
    task::agent_grad(prev, ds.train[0], 3, grad);
    for (std::size_t k = 0; k < 12; ++k)
      CHECK(run.snapshots[t](0, k) == doctest::Approx(prev[k] - 0.3 * grad[k]).epsilon(1e-12));
  }
}

TEST_CASE("single participant hands its update to the server") {
  const FLDataset ds = testing::small_dataset(5, 3, 3, 10, 4, 11);
  CommonOptions opts;
  opts.rounds = 1;
  opts.keep_snapshots = true;
  const auto run = fedavg_star_run(ds, 1, 2, 0.3, 10, opts);
  const std::size_t chosen = sample_indices(5, 1, derive_seed(opts.seed, "participants", 0))[0];
  std::vector<double> w(run.snapshots[0].row(0).begin(), run.snapshots[0].row(0).end());
  std::vector<double> grad(12);
  for (int step = 0; step < 2; ++step) {
    task::agent_grad(w, ds.train[chosen], 3, grad);
    for (std::size_t k = 0; k < 12; ++k) w[k] -= 0.3 * grad[k];
  }
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 12; ++k) CHECK(run.snapshots[1](i, k) == w[k]);
}

TEST_CASE("round accounting and CSV output") {
  const FLDataset ds = testing::small_dataset(6, 2, 2, 10, 3, 12);
  const Graph g = make_regular(6, 3, 12);
  CommonOptions opts;
  opts.rounds = 7;
  const auto run = dgd_run(ds, g, 0.1, 10, opts);
  CHECK(run.rounds == 7);
  std::ostringstream out;
  write_run_csv(run, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "method,round,mean_loss,mean_acc,mean_grad_norm,disagreement");
  std::size_t expect = 1;
  while (std::getline(in, line)) {
    CHECK(line.rfind("dgd," + std::to_string(expect) + ",", 0) == 0);
    ++expect;
  }
  CHECK(expect == 8);

  opts.rounds = 0;
  std::ostringstream empty;
  write_run_csv(dgd_run(ds, g, 0.1, 10, opts), empty);
  CHECK(empty.str() == "method,round,mean_loss,mean_acc,mean_grad_norm,disagreement\n");
}

TEST_CASE("parameter errors") {
  const FLDataset ds = testing::small_dataset(6, 2, 2, 10, 3, 13);
  const Graph g = make_regular(6, 3, 13);
  CommonOptions opts;
  opts.rounds = 1;
  CHECK_THROWS_AS(dgd_run(ds, make_regular(8, 3, 0), 0.1, 10, opts), ParameterError);
  CHECK_THROWS_AS(dgd_run(ds, g, -0.1, 10, opts), ParameterError);
  CHECK_THROWS_AS(dfedavgm_run(ds, g, 0.1, 1.0, 6, 10, opts), ParameterError);
  CHECK_THROWS_AS(dfedavgm_run(ds, g, 0.1, 0.5, 0, 10, opts), ParameterError);
  CHECK_THROWS_AS(fedavg_star_run(ds, 7, 1, 0.1, 10, opts), ParameterError);
  CHECK_THROWS_AS(sample_indices(3, 4, 0), ParameterError);
}

}
