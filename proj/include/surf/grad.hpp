#pragma once

#include <cstdint>
#include <vector>

#include "surf/data.hpp"
#include "surf/graph.hpp"
#include "surf/unroll.hpp"

namespace surf {

struct LayerVjp {
  Matrix downstream;  // dL/dW_{l-1}
  LayerParams grads;
};

// Exact reverse of udgd_layer given dL/dW_l.
LayerVjp layer_vjp(const Matrix& upstream, const LayerCache& cache, const LayerParams& lp,
                   const ShiftOperator& s, Mode mode);

/// Everything that defines one empirical Lagrangian evaluation.
struct LagrangianInputs {
  const UnrolledParams* theta = nullptr;
  std::vector<double> lambda;  // length L, nonnegative
  Matrix w0;
  const FLDataset* dataset = nullptr;
  const ShiftOperator* shift = nullptr;
  double epsilon = 0.01;
  std::size_t b_count = 0;
  std::uint64_t seed = 0;  // batch sampling; fixed seed means fixed batches
};

struct LagrangianValue {
  double value = 0.0;
  double objective = 0.0;           // f(W_L) on the evaluation shard
  std::vector<double> slacks;       // s_l, l = 1..L
  std::vector<double> grad_norms;   // ||grad f(W_l)||, l = 0..L
  Trajectory trajectory;
};

struct LagrangianGrad {
  ParamGrads grads;
  LagrangianValue value;
  std::size_t norm_tol_events = 0;  // grad_norm_backward hits at the nonsmooth point
};

// s_l = ||grad f(W_l)|| - (1 - eps) ||grad f(W_{l-1})|| on the test shards.
std::vector<double> constraint_slacks(const Trajectory& traj, const FLDataset& ds, Mode mode,
                                      double epsilon);
std::vector<double> slacks_from_norms(const std::vector<double>& norms, double epsilon);

std::vector<double> trajectory_grad_norms(const Trajectory& traj, const FLDataset& ds, Mode mode);

LagrangianValue lagrangian(const LagrangianInputs& in);
LagrangianGrad lagrangian_grad(const LagrangianInputs& in);

}  // namespace surf
