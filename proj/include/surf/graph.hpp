#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

#include "surf/matrix.hpp"

namespace surf {

/// Undirected simple graph over agents 0..n-1. Generators only return connected
/// graphs; the adjacency matrix is symmetric with a zero diagonal.
class Graph {
 public:
  Graph() = default;
  Graph(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges);

  std::size_t num_nodes() const noexcept { return n_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const noexcept { return edges_; }
  const Matrix& adjacency() const noexcept { return adjacency_; }
  std::size_t degree(std::size_t i) const;
  std::vector<std::size_t> neighbors(std::size_t i) const;
  bool is_connected() const;

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.n_ == b.n_ && a.edges_ == b.edges_;
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;  // i < j, sorted
  Matrix adjacency_;
};

enum class ShiftKind { normalized_adjacency, star_row };

struct ShiftOperator {
  Matrix s;
  ShiftKind kind = ShiftKind::normalized_adjacency;
};

struct MixingMatrix {
  Matrix a;
};

Graph make_regular(std::size_t n, std::size_t degree, std::uint64_t seed);
Graph make_erdos_renyi(std::size_t n, double p, std::uint64_t seed);
// Node 0 is the center (server).
Graph make_star(std::size_t n);

// normalized_adjacency: D^{-1/2} A D^{-1/2}. star_row: row-normalized adjacency.
ShiftOperator shift_operator(const Graph& g, ShiftKind kind);

// Metropolis-Hastings weights: a_ij = 1 / (1 + max(deg_i, deg_j)) on edges.
MixingMatrix metropolis_weights(const Graph& g);

// Edge-list text format: "n m" then m lines "i j".
void write_edge_list(const Graph& g, std::ostream& out);
Graph read_edge_list(std::istream& in);
void save_edge_list(const Graph& g, const std::filesystem::path& path);
Graph load_edge_list(const std::filesystem::path& path);

}  // namespace surf
