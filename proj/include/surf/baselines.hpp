#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "surf/data.hpp"
#include "surf/graph.hpp"
#include "surf/matrix.hpp"

// Classical iterative baselines. Agents descend their own local objective f_i,
// so gradients here carry no 1/n factor.
namespace surf::baselines {

struct RoundMetrics {
  std::size_t round = 0;
  double mean_loss = 0.0;       // global test loss of the agents' models
  double mean_acc = 0.0;        // mean per-agent test accuracy
  double mean_grad_norm = 0.0;  // ||grad f|| on the test shards
  double disagreement = 0.0;
};

struct BaselineRun {
  std::string method;
  std::size_t rounds = 0;  // communication rounds performed
  RoundMetrics initial;
  std::vector<RoundMetrics> per_round;  // rounds 1..T
  std::vector<Matrix> snapshots;        // W_0..W_T when requested
  std::vector<std::pair<std::string, double>> hyperparameters;
};

struct CommonOptions {
  std::size_t rounds = 200;
  std::uint64_t seed = 0;
  double mu0 = 0.0;
  double sigma0 = 0.1;
  bool keep_snapshots = false;
  const Matrix* w0 = nullptr;  // overrides the Gaussian initialization
};

enum class StepPlacement { combine_then_adapt, adapt_then_combine };

// w_i(l) = sum_j a_ij w_j(l-1) - beta grad f_i(w_i(l-1)), per-agent mini-batches.
BaselineRun dgd_run(const FLDataset& ds, const Graph& g, double beta, std::size_t batch_count,
                    const CommonOptions& opts,
                    StepPlacement placement = StepPlacement::combine_then_adapt);

// DGD with one example per agent per round.
BaselineRun dsgd_run(const FLDataset& ds, const Graph& g, double beta, const CommonOptions& opts);

// Per round: local_steps momentum-SGD steps per agent, then one Metropolis mixing.
BaselineRun dfedavgm_run(const FLDataset& ds, const Graph& g, double beta, double momentum,
                         std::size_t local_steps, std::size_t batch_count,
                         const CommonOptions& opts);

// Per round: participants_per_round agents run local SGD from the server model and
// the server averages what they return.
BaselineRun fedavg_star_run(const FLDataset& ds, std::size_t participants_per_round,
                            std::size_t local_steps, double beta, std::size_t batch_count,
                            const CommonOptions& opts);

// Mini-batch gradient of agent i's local loss; indices drawn without replacement.
std::vector<std::size_t> sample_indices(std::size_t m, std::size_t count, std::uint64_t seed);

// CSV: method,round,mean_loss,mean_acc,mean_grad_norm,disagreement
void write_run_csv(const BaselineRun& run, std::ostream& out, bool header = true);

}  // namespace surf::baselines
