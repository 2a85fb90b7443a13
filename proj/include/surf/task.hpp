#pragma once

#include <span>
#include <vector>

#include "surf/data.hpp"
#include "surf/matrix.hpp"

// Downstream learning problem: per-agent linear softmax classifier with bias.
// Agent i's parameters w_i (length d = (p+1)*C) reshape row-major to a
// (p+1) x C matrix whose last row multiplies the constant bias input 1.
namespace surf::task {

// Guards the nonsmooth point of the gradient norm.
inline constexpr double kTolNorm = 1e-10;

std::vector<double> predict(std::span<const double> w, std::span<const double> x,
                            std::size_t num_classes);
int predict_label(std::span<const double> w, std::span<const double> x, std::size_t num_classes);

// Mean cross-entropy and accuracy of one agent on one shard.
double agent_loss(std::span<const double> w, const Shard& shard, std::size_t num_classes);
double agent_accuracy(std::span<const double> w, const Shard& shard, std::size_t num_classes);
// Gradient of agent_loss (no 1/n factor), written into g.
void agent_grad(std::span<const double> w, const Shard& shard, std::size_t num_classes,
                std::span<double> g);

// f(W) = (1/n) sum_i agent_loss(w_i, shard_i).
double global_loss(const Matrix& w, const std::vector<Shard>& shards, std::size_t num_classes);

struct GradEstimate {
  Matrix g;
  double norm = 0.0;
};

// Exact gradient of global_loss, including the 1/n factor.
GradEstimate global_grad(const Matrix& w, const std::vector<Shard>& shards,
                         std::size_t num_classes);

// Block-diagonal Hessian of global_loss applied to v.
Matrix hessian_vector(const Matrix& w, const std::vector<Shard>& shards, std::size_t num_classes,
                      const Matrix& v);

double grad_norm(const Matrix& w, const std::vector<Shard>& shards, std::size_t num_classes);

struct NormBackward {
  Matrix grad;               // d ||grad f(W)|| / dW
  bool below_tol = false;    // zero returned at the nonsmooth point
  double norm = 0.0;
};

NormBackward grad_norm_backward(const Matrix& w, const std::vector<Shard>& shards,
                                std::size_t num_classes);

// Mean over agents of per-agent accuracy of row w_i on shard i.
double mean_accuracy(const Matrix& w, const std::vector<Shard>& shards, std::size_t num_classes);

}  // namespace surf::task
