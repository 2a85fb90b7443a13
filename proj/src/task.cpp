#include "surf/task.hpp"

#include <algorithm>
#include <cmath>

#include "surf/error.hpp"
#include "surf/kernels.hpp"

namespace surf::task {
namespace {

std::size_t feature_count(std::size_t w_size, std::size_t num_classes) {
  if (num_classes == 0 || w_size % num_classes != 0 || w_size / num_classes == 0)
    throw ParameterError("task: weight length must be (p+1)*C");
  return w_size / num_classes - 1;
}

// logits z_c = sum_j theta[j][c] xt_j with xt = [x ; 1], written into z.
void logits(std::span<const double> w, std::span<const double> x, std::size_t num_classes,
            std::span<double> z) {
  const std::size_t p = x.size();
  for (std::size_t c = 0; c < num_classes; ++c) z[c] = w[p * num_classes + c];
  for (std::size_t j = 0; j < p; ++j) {
    const double xj = x[j];
    const double* row = w.data() + j * num_classes;
    for (std::size_t c = 0; c < num_classes; ++c) z[c] += row[c] * xj;
  }
}

// In-place softmax; returns log-sum-exp of the input.
double softmax_inplace(std::span<double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return zmax + std::log(sum);
}

void check_shapes(const Matrix& w, const std::vector<Shard>& shards, std::size_t num_classes) {
  if (w.rows() != shards.size()) throw ParameterError("task: one shard per agent row required");
  if (w.rows() == 0) throw ParameterError("task: no agents");
  const std::size_t p = feature_count(w.cols(), num_classes);
  for (const auto& s : shards) {
    if (s.size() == 0) throw ParameterError("task: empty shard");
    if (s.x.cols() != p) throw ParameterError("task: feature dimension mismatch");
  }
}

void agent_hvp(std::span<const double> w, const Shard& shard, std::size_t num_classes,
               std::span<const double> v, double scale, std::span<double> out) {
  const std::size_t p = shard.x.cols();
  std::vector<double> prob(num_classes), u(num_classes);
  for (std::size_t e = 0; e < shard.size(); ++e) {
    const auto x = shard.x.row(e);
    logits(w, x, num_classes, prob);
    softmax_inplace(prob);
    logits(v, x, num_classes, u);
    double pu = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) pu += prob[c] * u[c];
    for (std::size_t c = 0; c < num_classes; ++c) u[c] = prob[c] * (u[c] - pu);
    for (std::size_t j = 0; j < p; ++j) {
      double* row = out.data() + j * num_classes;
      for (std::size_t c = 0; c < num_classes; ++c) row[c] += x[j] * u[c] * scale;
    }
    double* bias = out.data() + p * num_classes;
    for (std::size_t c = 0; c < num_classes; ++c) bias[c] += u[c] * scale;
  }
}

void agent_grad_scaled(std::span<const double> w, const Shard& shard, std::size_t num_classes,
                       double scale, std::span<double> g) {
  const std::size_t p = shard.x.cols();
  std::fill(g.begin(), g.end(), 0.0);
  std::vector<double> prob(num_classes);
  for (std::size_t e = 0; e < shard.size(); ++e) {
    const auto x = shard.x.row(e);
    logits(w, x, num_classes, prob);
    softmax_inplace(prob);
    prob[static_cast<std::size_t>(shard.y[e])] -= 1.0;
    for (std::size_t j = 0; j < p; ++j) {
      double* row = g.data() + j * num_classes;
      for (std::size_t c = 0; c < num_classes; ++c) row[c] += x[j] * prob[c] * scale;
    }
    double* bias = g.data() + p * num_classes;
    for (std::size_t c = 0; c < num_classes; ++c) bias[c] += prob[c] * scale;
  }
}

}  // namespace

std::vector<double> predict(std::span<const double> w, std::span<const double> x,
                            std::size_t num_classes) {
  if (feature_count(w.size(), num_classes) != x.size())
    throw ParameterError("predict: feature dimension mismatch");
  std::vector<double> z(num_classes);
  logits(w, x, num_classes, z);
  softmax_inplace(z);
  return z;
}

int predict_label(std::span<const double> w, std::span<const double> x, std::size_t num_classes) {
  std::vector<double> z(num_classes);
  logits(w, x, num_classes, z);
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

double agent_loss(std::span<const double> w, const Shard& shard, std::size_t num_classes) {
  if (shard.size() == 0) throw ParameterError("agent_loss: empty shard");
  std::vector<double> z(num_classes);
  double total = 0.0;
  for (std::size_t e = 0; e < shard.size(); ++e) {
    logits(w, shard.x.row(e), num_classes, z);
    const double zy = z[static_cast<std::size_t>(shard.y[e])];
    total += softmax_inplace(z) - zy;
  }
  return total / static_cast<double>(shard.size());
}

double agent_accuracy(std::span<const double> w, const Shard& shard, std::size_t num_classes) {
  if (shard.size() == 0) throw ParameterError("agent_accuracy: empty shard");
  std::size_t hits = 0;
  for (std::size_t e = 0; e < shard.size(); ++e)
    hits += predict_label(w, shard.x.row(e), num_classes) == shard.y[e];
  return static_cast<double>(hits) / static_cast<double>(shard.size());
}

void agent_grad(std::span<const double> w, const Shard& shard, std::size_t num_classes,
                std::span<double> g) {
  if (shard.size() == 0) throw ParameterError("agent_grad: empty shard");
  agent_grad_scaled(w, shard, num_classes, 1.0 / static_cast<double>(shard.size()), g);
}

double global_loss(const Matrix& w, const std::vector<Shard>& shards, std::size_t num_classes) {
  check_shapes(w, shards, num_classes);
  std::vector<double> per_agent(w.rows());
  kernels::for_each_index(w.rows(), [&](std::size_t i) {
    per_agent[i] = agent_loss(w.row(i), shards[i], num_classes);
  });
  double total = 0.0;
  for (double v : per_agent) total += v;
  return total / static_cast<double>(w.rows());
}

GradEstimate global_grad(const Matrix& w, const std::vector<Shard>& shards,
                         std::size_t num_classes) {
  check_shapes(w, shards, num_classes);
  GradEstimate est{Matrix(w.rows(), w.cols()), 0.0};
  const double n = static_cast<double>(w.rows());
  kernels::for_each_index(w.rows(), [&](std::size_t i) {
    const double scale = 1.0 / (n * static_cast<double>(shards[i].size()));
    agent_grad_scaled(w.row(i), shards[i], num_classes, scale, est.g.row(i));
  });
  est.norm = frobenius_norm(est.g);
  return est;
}

Matrix hessian_vector(const Matrix& w, const std::vector<Shard>& shards, std::size_t num_classes,
                      const Matrix& v) {
  check_shapes(w, shards, num_classes);
  if (v.rows() != w.rows() || v.cols() != w.cols())
    throw ParameterError("hessian_vector: V must match W in shape");
  Matrix out(w.rows(), w.cols());
  const double n = static_cast<double>(w.rows());
  kernels::for_each_index(w.rows(), [&](std::size_t i) {
    const double scale = 1.0 / (n * static_cast<double>(shards[i].size()));
    agent_hvp(w.row(i), shards[i], num_classes, v.row(i), scale, out.row(i));
  });
  return out;
}

double grad_norm(const Matrix& w, const std::vector<Shard>& shards, std::size_t num_classes) {
  return global_grad(w, shards, num_classes).norm;
}

NormBackward grad_norm_backward(const Matrix& w, const std::vector<Shard>& shards,
                                std::size_t num_classes) {
  GradEstimate g = global_grad(w, shards, num_classes);
  NormBackward out;
  out.norm = g.norm;
  if (g.norm <= kTolNorm) {
    out.grad = Matrix(w.rows(), w.cols());
    out.below_tol = true;
    return out;
  }
  out.grad = hessian_vector(w, shards, num_classes, g.g);
  out.grad *= 1.0 / g.norm;
  return out;
}

double mean_accuracy(const Matrix& w, const std::vector<Shard>& shards, std::size_t num_classes) {
  check_shapes(w, shards, num_classes);
  std::vector<double> acc(w.rows());
  kernels::for_each_index(w.rows(), [&](std::size_t i) {
    acc[i] = agent_accuracy(w.row(i), shards[i], num_classes);
  });
  double total = 0.0;
  for (double a : acc) total += a;
  return total / static_cast<double>(w.rows());
}

}  // namespace surf::task
