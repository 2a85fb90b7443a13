#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "surf/data.hpp"
#include "surf/graph.hpp"
#include "surf/unroll.hpp"

namespace surf {

enum class PrimalOptimizer { adam, sgd };
enum class ParamInit { random, identity };

struct TrainConfig {
  std::size_t num_layers = 5;    // L
  std::size_t filter_order = 2;  // K
  std::size_t epochs = 20;
  std::size_t iterations_per_epoch = 0;  // 0: one pass worth of draws (Q)
  std::size_t meta_batch = 1;
  double mu_theta = 1e-3;
  double mu_lambda = 1e-2;
  double epsilon = 0.05;
  std::size_t b_count = 4;
  std::uint64_t seed = 0;
  Mode mode = Mode::decentralized;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool constraints_enabled = true;
  PrimalOptimizer optimizer = PrimalOptimizer::adam;
  ParamInit init = ParamInit::random;
  double mu0 = 0.0;     // W_0 ~ N(mu0, sigma0^2)
  double sigma0 = 0.1;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct HistoryRecord {
  std::size_t iteration = 0;
  std::size_t dataset = 0;
  double lagrangian = 0.0;
  double objective = 0.0;
  std::vector<double> slacks;
  std::vector<double> lambda;
  std::vector<double> grad_norms;  // l = 0..L

  friend bool operator==(const HistoryRecord&, const HistoryRecord&) = default;
};

using TrainHistory = std::vector<HistoryRecord>;

struct AdamState {
  UnrolledParams m;
  UnrolledParams v;
  std::size_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

AdamState make_adam_state(const UnrolledParams& params);

// Bias-corrected adaptive-moment update, elementwise on every tensor.
void adam_step(UnrolledParams& params, AdamState& state, const ParamGrads& grads, double mu_theta,
               double beta1, double beta2, double eps_hat);
// theta <- theta - mu * grad.
void sgd_step(UnrolledParams& params, const ParamGrads& grads, double mu_theta);

// lambda_l <- max(0, lambda_l + mu * s_l).
std::vector<double> dual_ascent_step(const std::vector<double>& lambda,
                                     const std::vector<double>& slacks, double mu_lambda);

/// Complete trainer state; checkpoints store all of it so training resumes bitwise.
struct TrainState {
  TrainConfig config;
  UnrolledParams params;
  std::vector<double> lambda;
  AdamState adam;
  std::size_t iteration = 0;
  TrainHistory history;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

TrainState init_train_state(const TrainConfig& cfg, std::size_t model_dim, std::size_t batch_width);

// Called after every iteration; return false to stop early.
using TrainCallback = std::function<bool(const TrainState&)>;

// Runs iterations until state.iteration reaches epochs * iterations_per_epoch.
void primal_dual_train(TrainState& state, const MetaDataset& meta, const ShiftOperator& s,
                       const TrainCallback& callback = {});

// Convenience: fresh state, full run.
TrainState primal_dual_train(const MetaDataset& meta, const ShiftOperator& s,
                             const TrainConfig& cfg);

std::size_t total_iterations(const TrainConfig& cfg, std::size_t meta_size);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

// One row per iteration: iteration,dataset,lagrangian,objective,slack_1..L,lambda_1..L,
// grad_norm_0..L.
void write_history_csv(const TrainHistory& history, std::size_t num_layers, std::ostream& out);

}  // namespace surf
