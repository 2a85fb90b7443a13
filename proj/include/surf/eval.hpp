#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "surf/data.hpp"
#include "surf/graph.hpp"
#include "surf/unroll.hpp"

namespace surf {

struct EvalOptions {
  std::uint64_t seed = 0;
  std::size_t b_count = 4;
  double mu0 = 0.0;
  double sigma0 = 0.1;
  double epsilon = 0.05;
  std::size_t n_asyn = 0;  // asynchronous agents per dataset
};

/// Per-layer quantities over a meta-test set. Per-dataset tables are Q x (L+1)
/// (layer 0 is W_0) except slacks, which are Q x L.
struct EvalReport {
  std::size_t num_layers = 0;
  std::vector<std::vector<double>> accuracy;
  std::vector<std::vector<double>> loss;
  std::vector<std::vector<double>> grad_norm;
  std::vector<std::vector<double>> slacks;

  std::vector<double> mean_acc;             // L+1
  std::vector<double> mean_loss;            // L+1
  std::vector<double> mean_grad_norm;       // L+1
  std::vector<double> slack_satisfaction;   // L, fraction of datasets with s_l <= 0
  std::vector<double> mean_decay_ratio;     // L, r_l = ||g_l|| / ||g_{l-1}||
  std::vector<double> median_decay_ratio;   // L

  std::vector<double> final_accuracy() const;  // accuracy at W_L per dataset
  bool empty() const noexcept { return accuracy.empty(); }
};

// Fills the aggregate vectors from the per-dataset tables.
void summarize(EvalReport& report, double epsilon);

EvalReport meta_evaluate(const UnrolledParams& theta, const MetaDataset& meta_test,
                         const ShiftOperator& s, const EvalOptions& opts);

struct LayerDiagnostics {
  std::vector<double> satisfaction;  // per layer, in [0, 1]
  std::vector<double> mean_decay_ratio;
  std::vector<double> median_decay_ratio;
};

// From per-dataset gradient-norm sequences (each of length L+1).
LayerDiagnostics diagnostics_from_norms(const std::vector<std::vector<double>>& norms,
                                        double epsilon);
LayerDiagnostics layer_diagnostics(const UnrolledParams& theta, const MetaDataset& meta_test,
                                   const ShiftOperator& s, const EvalOptions& opts);

struct AsyncPoint {
  std::size_t n_asyn = 0;
  double mean_acc = 0.0;   // at W_L
  double mean_loss = 0.0;  // at W_L
  EvalReport report;
};

std::vector<AsyncPoint> async_evaluate(const UnrolledParams& theta, const MetaDataset& meta_test,
                                       const ShiftOperator& s,
                                       const std::vector<std::size_t>& n_asyn_grid,
                                       const EvalOptions& opts);

// Fraction of the total accuracy gain acc_L - acc_0 already realized at layer L-1.
// Zero when there is no gain.
double gain_fraction_before_last(const std::vector<double>& mean_acc);

struct AblationResult {
  EvalReport constrained;
  EvalReport unconstrained;
  double gain_fraction_constrained = 0.0;
  double gain_fraction_unconstrained = 0.0;
};

AblationResult ablation_compare(const UnrolledParams& theta_constrained,
                                const UnrolledParams& theta_unconstrained,
                                const MetaDataset& meta_test, const ShiftOperator& s,
                                const EvalOptions& opts);

// CSV: layer,mean_loss,mean_acc,mean_grad_norm,slack_satisfaction,decay_ratio
void write_report_csv(const EvalReport& report, std::ostream& out);
// Writes <prefix>.csv and <prefix>.json.
void emit_report(const EvalReport& report, const std::filesystem::path& prefix);

}  // namespace surf
