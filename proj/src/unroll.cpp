#include "surf/unroll.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "surf/error.hpp"
#include "surf/kernels.hpp"
#include "surf/rng.hpp"

namespace surf {

std::size_t UnrolledParams::num_scalars() const {
  std::size_t total = 0;
  for (const auto& t : tensors(*this)) total += t.size();
  return total;
}

void UnrolledParams::validate() const {
  if (mode == Mode::star && filter_order != 1)
    throw ConfigError("star mode requires filter order K = 1");
  for (const auto& lp : layers) {
    if (lp.h.size() != filter_order + 1 || lp.m.rows() != model_dim ||
        lp.m.cols() != model_dim + batch_width || lp.c.rows() != 1 || lp.c.cols() != model_dim)
      throw ConfigError("unrolled parameters: inconsistent layer shapes");
  }
  for (const auto& t : tensors(*this))
    for (double v : t)
      if (!std::isfinite(v)) throw StateError("unrolled parameters: non-finite entry");
}

UnrolledParams UnrolledParams::zeros_like() const {
  UnrolledParams z = *this;
  for (auto& t : tensors(z)) std::fill(t.begin(), t.end(), 0.0);
  return z;
}

std::vector<std::span<double>> tensors(UnrolledParams& p) {
  std::vector<std::span<double>> out;
  for (auto& lp : p.layers) {
    out.emplace_back(lp.h);
    out.push_back(lp.m.flat());
    out.push_back(lp.c.flat());
  }
  return out;
}

std::vector<std::span<const double>> tensors(const UnrolledParams& p) {
  std::vector<std::span<const double>> out;
  for (const auto& lp : p.layers) {
    out.emplace_back(lp.h);
    out.push_back(lp.m.flat());
    out.push_back(lp.c.flat());
  }
  return out;
}

Matrix init_w0(std::size_t n, std::size_t d, double mu0, double sigma0, std::uint64_t seed) {
  if (sigma0 < 0.0) throw ParameterError("init_w0: sigma0 must be nonnegative");
  Matrix w(n, d, mu0);
  if (sigma0 == 0.0) return w;
  Rng rng = make_rng(seed, "w0");
  std::normal_distribution<double> normal(mu0, sigma0);
  for (double& v : w.flat()) v = normal(rng);
  return w;
}

namespace {

UnrolledParams empty_params(std::size_t num_layers, std::size_t filter_order, std::size_t d,
                            std::size_t b, Mode mode) {
  if (d == 0 || b == 0) throw ParameterError("unrolled parameters: dimensions must be positive");
  if (mode == Mode::star && filter_order != 1)
    throw ConfigError("star mode requires filter order K = 1");
  UnrolledParams p;
  p.filter_order = filter_order;
  p.model_dim = d;
  p.batch_width = b;
  p.mode = mode;
  p.layers.resize(num_layers);
  for (auto& lp : p.layers) {
    lp.h.assign(filter_order + 1, 0.0);
    lp.m = Matrix(d, d + b);
    lp.c = Matrix(1, d);
  }
  return p;
}

}  // namespace

UnrolledParams init_params(std::size_t num_layers, std::size_t filter_order, std::size_t d,
                           std::size_t b, std::uint64_t seed, Mode mode) {
  UnrolledParams p = empty_params(num_layers, filter_order, d, b, mode);
  Rng rng = make_rng(seed, "init_params");
  std::normal_distribution<double> normal(0.0, 0.01);
  for (auto& lp : p.layers) {
    std::fill(lp.h.begin(), lp.h.end(), 1.0 / static_cast<double>(filter_order + 1));
    for (double& v : lp.m.flat()) v = normal(rng);
    for (double& v : lp.c.flat()) v = normal(rng);
  }
  return p;
}

UnrolledParams identity_params(std::size_t num_layers, std::size_t filter_order, std::size_t d,
                               std::size_t b, Mode mode) {
  UnrolledParams p = empty_params(num_layers, filter_order, d, b, mode);
  for (auto& lp : p.layers) lp.h[0] = 1.0;
  return p;
}

Matrix graph_filter(const ShiftOperator& s, const Matrix& w, std::span<const double> h) {
  if (s.s.cols() != w.rows()) throw ParameterError("graph_filter: shift/weights size mismatch");
  if (h.empty()) throw ParameterError("graph_filter: need at least one tap");
  Matrix out = h[0] * w;
  Matrix shifted = w;
  Matrix next;
  for (std::size_t k = 1; k < h.size(); ++k) {
    kernels::matmul(s.s, shifted, next);
    std::swap(shifted, next);
    Matrix term = shifted;
    term *= h[k];
    out += term;
  }
  return out;
}

Matrix udgd_layer(const Matrix& w_prev, const Matrix& batch, const LayerParams& lp,
                  const ShiftOperator& s, Mode mode, LayerCache* cache, const Matrix* comm) {
  const std::size_t order = lp.h.size() - 1;
  if (lp.h.empty()) throw ParameterError("udgd_layer: empty filter taps");
  if (mode == Mode::star && order != 1) throw ConfigError("star mode requires filter order K = 1");
  const std::size_t n = w_prev.rows();
  const std::size_t d = w_prev.cols();
  if (s.s.rows() != n || batch.rows() != n) throw ParameterError("udgd_layer: row count mismatch");

  std::vector<Matrix> shifted;
  shifted.reserve(order + 1);
  shifted.push_back(w_prev);
  for (std::size_t k = 1; k <= order; ++k) {
    Matrix next;
    kernels::matmul(s.s, k == 1 && comm ? *comm : shifted.back(), next);
    shifted.push_back(std::move(next));
  }

  Matrix z;
  kernels::perceptron_forward(lp.m, lp.c, w_prev, batch, z);

  Matrix out(n, d);
  kernels::for_each_index(n, [&](std::size_t i) {
    auto row = out.row(i);
    if (mode == Mode::star && i == 0) {
      // Server: aggregation only.
      const auto s1 = shifted[1].row(0);
      for (std::size_t j = 0; j < d; ++j) row[j] = lp.h[1] * s1[j];
      return;
    }
    for (std::size_t k = 0; k <= order; ++k) {
      const auto sk = shifted[k].row(i);
      const double hk = lp.h[k];
      for (std::size_t j = 0; j < d; ++j) row[j] += hk * sk[j];
    }
    const auto zi = z.row(i);
    for (std::size_t j = 0; j < d; ++j) row[j] -= std::max(zi[j], 0.0);
  });

  if (cache) {
    cache->shifted = std::move(shifted);
    cache->z = std::move(z);
    cache->batch = batch;
  }
  return out;
}

std::size_t node_count(const FLDataset& ds, Mode mode) {
  return ds.num_agents() + (mode == Mode::star ? 1 : 0);
}

Matrix node_batch(const LayerBatch& lb, Mode mode) {
  if (mode == Mode::decentralized) return lb.b;
  Matrix out(lb.b.rows() + 1, lb.b.cols());
  std::copy(lb.b.flat().begin(), lb.b.flat().end(), out.row(1).begin());
  return out;
}

Matrix agent_rows(const Matrix& w, Mode mode) {
  if (mode == Mode::decentralized) return w;
  Matrix out(w.rows() - 1, w.cols());
  std::copy(w.row(1).begin(), w.flat().end(), out.flat().begin());
  return out;
}

Matrix scatter_agent_rows(const Matrix& g, Mode mode) {
  if (mode == Mode::decentralized) return g;
  Matrix out(g.rows() + 1, g.cols());
  std::copy(g.flat().begin(), g.flat().end(), out.row(1).begin());
  return out;
}

Trajectory unrolled_forward_batches(const Matrix& w0, std::vector<LayerBatch> batches,
                                    const UnrolledParams& theta, const ShiftOperator& s,
                                    bool record, const std::vector<std::size_t>& stale) {
  if (batches.size() != theta.num_layers())
    throw ParameterError("unrolled_forward: one batch per layer required");
  if (w0.cols() != theta.model_dim) throw ParameterError("unrolled_forward: W_0 width must be d");
  for (std::size_t v : stale)
    if (v >= w0.rows()) throw ParameterError("unrolled_forward: stale node out of range");
  Trajectory traj;
  traj.w.reserve(theta.num_layers() + 1);
  traj.w.push_back(w0);
  if (record) traj.cache.resize(theta.num_layers());
  for (std::size_t l = 0; l < theta.num_layers(); ++l) {
    const Matrix nb = node_batch(batches[l], theta.mode);
    if (nb.cols() != theta.batch_width)
      throw ParameterError("unrolled_forward: batch width does not match parameters");
    const Matrix& prev = traj.w.back();
    Matrix comm;
    const Matrix* comm_ptr = nullptr;
    if (!stale.empty()) {
      // Stale nodes broadcast the estimate from one layer earlier.
      const Matrix& older = traj.w[l == 0 ? 0 : l - 1];
      comm = prev;
      for (std::size_t v : stale) std::copy(older.row(v).begin(), older.row(v).end(), comm.row(v).begin());
      comm_ptr = &comm;
    }
    LayerCache* cache = record ? &traj.cache[l] : nullptr;
    traj.w.push_back(udgd_layer(prev, nb, theta.layers[l], s, theta.mode, cache, comm_ptr));
    traj.shift_applications += theta.filter_order;
  }
  traj.batches = std::move(batches);
  return traj;
}

Trajectory unrolled_forward(const Matrix& w0, const FLDataset& ds, const UnrolledParams& theta,
                            const ShiftOperator& s, std::uint64_t seed,
                            const ForwardOptions& opts) {
  theta.validate();
  if (w0.rows() != node_count(ds, theta.mode))
    throw ParameterError("unrolled_forward: W_0 rows must match graph nodes");
  if (s.s.rows() != w0.rows()) throw ParameterError("unrolled_forward: shift operator size");
  if (ds.model_dim() != theta.model_dim)
    throw ParameterError("unrolled_forward: dataset model dimension differs from parameters");
  auto batches = sample_layer_batches(ds, theta.num_layers(), opts.b_count, seed);
  return unrolled_forward_batches(w0, std::move(batches), theta, s, opts.record, opts.stale_nodes);
}

}  // namespace surf
