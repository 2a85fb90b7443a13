#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "surf/data.hpp"
#include "surf/graph.hpp"
#include "surf/matrix.hpp"

namespace surf {

// decentralized: every node is an agent with data.
// star: node 0 is a data-free server; node i > 0 holds agent i-1's data.
enum class Mode { decentralized, star };

/// Parameters of one unrolled layer: filter taps h (K+1), perceptron weight
/// m (d x (d+b)) and perceptron bias c (1 x d), shared by all agents.
struct LayerParams {
  std::vector<double> h;
  Matrix m;
  Matrix c;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct UnrolledParams {
  std::vector<LayerParams> layers;
  std::size_t filter_order = 0;  // K
  std::size_t model_dim = 0;     // d
  std::size_t batch_width = 0;   // b
  Mode mode = Mode::decentralized;

  std::size_t num_layers() const noexcept { return layers.size(); }
  std::size_t num_scalars() const;
  void validate() const;
  // Same shapes, all entries zero.
  UnrolledParams zeros_like() const;

  friend bool operator==(const UnrolledParams&, const UnrolledParams&) = default;
};

// Gradients share the parameter layout.
using ParamGrads = UnrolledParams;

// Flat views over every tensor of the parameters, in a fixed order.
std::vector<std::span<double>> tensors(UnrolledParams& p);
std::vector<std::span<const double>> tensors(const UnrolledParams& p);

Matrix init_w0(std::size_t n, std::size_t d, double mu0, double sigma0, std::uint64_t seed);

// h = 1/(K+1) on every tap; m, c i.i.d. N(0, 0.01^2).
UnrolledParams init_params(std::size_t num_layers, std::size_t filter_order, std::size_t d,
                           std::size_t b, std::uint64_t seed, Mode mode = Mode::decentralized);

// h = (1, 0, ..., 0), m = 0, c = 0: every layer returns its input.
UnrolledParams identity_params(std::size_t num_layers, std::size_t filter_order, std::size_t d,
                               std::size_t b, Mode mode = Mode::decentralized);

// sum_k h_k S^k W by repeated shifts.
Matrix graph_filter(const ShiftOperator& s, const Matrix& w, std::span<const double> h);

/// Intermediates of one layer kept for the reverse pass.
struct LayerCache {
  std::vector<Matrix> shifted;  // S^k W_comm for k = 0..K (k = 0 holds W_{l-1})
  Matrix z;                     // perceptron pre-activations
  Matrix batch;
};

// W_l = H_l(W_{l-1}) - ReLU(M [w_i || b_i] + c) row-wise; in star mode the server
// row is h_1 [S]_0 W_{l-1}. comm, when given, replaces W_{l-1} in every k >= 1
// filter term (outdated rows received from asynchronous neighbours).
Matrix udgd_layer(const Matrix& w_prev, const Matrix& batch, const LayerParams& lp,
                  const ShiftOperator& s, Mode mode, LayerCache* cache = nullptr,
                  const Matrix* comm = nullptr);

struct Trajectory {
  std::vector<Matrix> w;  // W_0 .. W_L
  std::vector<LayerBatch> batches;
  std::vector<LayerCache> cache;  // empty unless recorded
  std::size_t shift_applications = 0;

  bool recorded() const noexcept { return !cache.empty() || w.size() == 1; }
};

struct ForwardOptions {
  std::size_t b_count = 0;  // examples per agent per layer
  bool record = false;
  // Asynchronous graph nodes: their rows reach neighbours one layer late.
  std::vector<std::size_t> stale_nodes = {};
};

// Number of graph nodes for a dataset in the given mode.
std::size_t node_count(const FLDataset& ds, Mode mode);

// Batch matrix for all graph nodes (server row zero in star mode).
Matrix node_batch(const LayerBatch& lb, Mode mode);

Trajectory unrolled_forward(const Matrix& w0, const FLDataset& ds, const UnrolledParams& theta,
                            const ShiftOperator& s, std::uint64_t seed,
                            const ForwardOptions& opts);

// Forward with explicit per-layer batches (no sampling).
Trajectory unrolled_forward_batches(const Matrix& w0, std::vector<LayerBatch> batches,
                                    const UnrolledParams& theta, const ShiftOperator& s,
                                    bool record, const std::vector<std::size_t>& stale = {});

// Agent rows of a node matrix (drops the server row in star mode) and the
// inverse scatter with a zero server row.
Matrix agent_rows(const Matrix& w, Mode mode);
Matrix scatter_agent_rows(const Matrix& g, Mode mode);

}  // namespace surf
