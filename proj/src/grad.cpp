#include "surf/grad.hpp"

#include <cmath>

#include "surf/error.hpp"
#include "surf/kernels.hpp"
#include "surf/task.hpp"

namespace surf {

LayerVjp layer_vjp(const Matrix& upstream, const LayerCache& cache, const LayerParams& lp,
                   const ShiftOperator& s, Mode mode) {
  if (cache.shifted.empty() || cache.z.empty())
    throw StateError("layer_vjp: forward pass was not recorded");
  const std::size_t order = lp.h.size() - 1;
  const std::size_t n = upstream.rows();
  const std::size_t d = upstream.cols();
  if (cache.shifted.size() != order + 1 || cache.z.rows() != n || cache.z.cols() != d)
    throw StateError("layer_vjp: cache does not match layer parameters");
  const bool star = mode == Mode::star;

  LayerVjp out;
  out.grads.h.assign(order + 1, 0.0);

  // Server row carries no self tap and no perceptron in star mode.
  Matrix self_upstream = upstream;
  if (star) std::fill(self_upstream.row(0).begin(), self_upstream.row(0).end(), 0.0);

  out.grads.h[0] = dot(cache.shifted[0], self_upstream);
  for (std::size_t k = 1; k <= order; ++k) out.grads.h[k] = dot(cache.shifted[k], upstream);

  // ReLU mask; derivative at exactly zero taken as zero.
  Matrix delta(n, d);
  for (std::size_t i = star ? 1 : 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      delta(i, j) = cache.z(i, j) > 0.0 ? upstream(i, j) : 0.0;

  Matrix dm, dc, dx;
  kernels::perceptron_backward(lp.m, delta, cache.shifted[0], cache.batch, dm, dc, dx);
  out.grads.m = -1.0 * std::move(dm);
  out.grads.c = -1.0 * std::move(dc);

  // sum_k h_k (S^T)^k upstream, self term masked in star mode.
  out.downstream = lp.h[0] * self_upstream;
  Matrix back = upstream;
  Matrix next;
  for (std::size_t k = 1; k <= order; ++k) {
    kernels::matmul_at_b(s.s, back, next);
    std::swap(back, next);
    Matrix term = back;
    term *= lp.h[k];
    out.downstream += term;
  }
  out.downstream -= dx;
  return out;
}

std::vector<double> slacks_from_norms(const std::vector<double>& norms, double epsilon) {
  std::vector<double> s;
  for (std::size_t l = 1; l < norms.size(); ++l)
    s.push_back(norms[l] - (1.0 - epsilon) * norms[l - 1]);
  return s;
}

std::vector<double> trajectory_grad_norms(const Trajectory& traj, const FLDataset& ds, Mode mode) {
  std::vector<double> norms;
  norms.reserve(traj.w.size());
  for (const auto& w : traj.w) norms.push_back(task::grad_norm(agent_rows(w, mode), ds.test, ds.num_classes));
  return norms;
}

std::vector<double> constraint_slacks(const Trajectory& traj, const FLDataset& ds, Mode mode,
                                      double epsilon) {
  return slacks_from_norms(trajectory_grad_norms(traj, ds, mode), epsilon);
}

namespace {

void check_inputs(const LagrangianInputs& in) {
  if (!in.theta || !in.dataset || !in.shift) throw ParameterError("lagrangian: missing inputs");
  if (in.lambda.size() != in.theta->num_layers())
    throw ParameterError("lagrangian: lambda must have one entry per layer");
  for (double v : in.lambda)
    if (!(v >= 0.0)) throw ParameterError("lagrangian: lambda must be nonnegative");
  if (!(in.epsilon > 0.0 && in.epsilon < 1.0))
    throw ParameterError("lagrangian: epsilon must lie in (0, 1)");
}

Trajectory forward(const LagrangianInputs& in) {
  ForwardOptions opts;
  opts.b_count = in.b_count;
  opts.record = true;
  return unrolled_forward(in.w0, *in.dataset, *in.theta, *in.shift, in.seed, opts);
}

}  // namespace

LagrangianValue lagrangian(const LagrangianInputs& in) {
  check_inputs(in);
  const Mode mode = in.theta->mode;
  LagrangianValue out;
  out.trajectory = forward(in);
  out.grad_norms = trajectory_grad_norms(out.trajectory, *in.dataset, mode);
  out.slacks = slacks_from_norms(out.grad_norms, in.epsilon);
  out.objective = task::global_loss(agent_rows(out.trajectory.w.back(), mode), in.dataset->test,
                                    in.dataset->num_classes);
  out.value = out.objective;
  for (std::size_t l = 0; l < out.slacks.size(); ++l) out.value += in.lambda[l] * out.slacks[l];
  return out;
}

LagrangianGrad lagrangian_grad(const LagrangianInputs& in) {
  check_inputs(in);
  const Mode mode = in.theta->mode;
  const FLDataset& ds = *in.dataset;
  const std::size_t num_layers = in.theta->num_layers();
  LagrangianGrad out;
  LagrangianValue& val = out.value;
  val.trajectory = forward(in);
  const auto& traj = val.trajectory;

  std::vector<task::GradEstimate> grads;
  grads.reserve(num_layers + 1);
  for (const auto& w : traj.w) grads.push_back(task::global_grad(agent_rows(w, mode), ds.test, ds.num_classes));
  for (const auto& g : grads) val.grad_norms.push_back(g.norm);
  val.slacks = slacks_from_norms(val.grad_norms, in.epsilon);
  val.objective = task::global_loss(agent_rows(traj.w.back(), mode), ds.test, ds.num_classes);
  val.value = val.objective;
  for (std::size_t l = 0; l < num_layers; ++l) val.value += in.lambda[l] * val.slacks[l];

  out.grads = in.theta->zeros_like();
  if (num_layers == 0) return out;

  // Coefficient of ||grad f(W_l)|| in the Lagrangian for l = 1..L.
  auto coef = [&](std::size_t l) {
    double c = in.lambda[l - 1];
    if (l < num_layers) c -= (1.0 - in.epsilon) * in.lambda[l];
    return c;
  };
  // d||grad f(W_l)||/dW_l = H(W_l) grad / ||grad||, zero at the nonsmooth point.
  auto norm_backward = [&](std::size_t l) {
    const auto& g = grads[l];
    if (g.norm <= task::kTolNorm) {
      ++out.norm_tol_events;
      return Matrix(g.g.rows(), g.g.cols());
    }
    Matrix hv = task::hessian_vector(agent_rows(traj.w[l], mode), ds.test, ds.num_classes, g.g);
    hv *= 1.0 / g.norm;
    return hv;
  };

  Matrix upstream_agents = grads[num_layers].g;
  if (const double c = coef(num_layers); c != 0.0) {
    Matrix nb = norm_backward(num_layers);
    nb *= c;
    upstream_agents += nb;
  }
  Matrix upstream = scatter_agent_rows(upstream_agents, mode);

  for (std::size_t l = num_layers; l >= 1; --l) {
    LayerVjp vjp = layer_vjp(upstream, traj.cache[l - 1], in.theta->layers[l - 1], *in.shift, mode);
    out.grads.layers[l - 1] = std::move(vjp.grads);
    upstream = std::move(vjp.downstream);
    if (l - 1 >= 1) {
      if (const double c = coef(l - 1); c != 0.0) {
        Matrix nb = norm_backward(l - 1);
        nb *= c;
        upstream += scatter_agent_rows(nb, mode);
      }
    }
  }
  return out;
}

}  // namespace surf
