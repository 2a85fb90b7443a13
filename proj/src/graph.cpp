#include "surf/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <string>

#include "surf/error.hpp"
#include "surf/rng.hpp"

namespace surf {
namespace {

constexpr int kMaxConnectAttempts = 1000;

using Edge = std::pair<std::size_t, std::size_t>;

// Random pairing of degree stubs that skips self-loops and repeated edges.
// Returns false when it paints itself into a corner.
bool try_pair_stubs(std::size_t n, std::size_t degree, Rng& rng, std::vector<Edge>& out) {
  std::vector<std::size_t> stubs;
  stubs.reserve(n * degree);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t k = 0; k < degree; ++k) stubs.push_back(v);
  std::set<Edge> edges;
  while (!stubs.empty()) {
    bool placed = false;
    for (int tries = 0; tries < 100 && !placed; ++tries) {
      std::uniform_int_distribution<std::size_t> pick(0, stubs.size() - 1);
      std::size_t a = pick(rng);
      std::size_t b = pick(rng);
      if (a == b) continue;
      std::size_t u = stubs[a], v = stubs[b];
      if (u == v) continue;
      Edge e{std::min(u, v), std::max(u, v)};
      if (edges.count(e)) continue;
      edges.insert(e);
      if (a < b) std::swap(a, b);
      stubs.erase(stubs.begin() + static_cast<std::ptrdiff_t>(a));
      stubs.erase(stubs.begin() + static_cast<std::ptrdiff_t>(b));
      placed = true;
    }
    if (!placed) return false;
  }
  out.assign(edges.begin(), edges.end());
  return true;
}

}  // namespace

Graph::Graph(std::size_t n, std::vector<Edge> edges) : n_(n), adjacency_(n, n) {
  for (auto& [i, j] : edges) {
    if (i >= n || j >= n) throw ParameterError("graph: edge endpoint out of range");
    if (i == j) throw ParameterError("graph: self-loop");
    if (i > j) std::swap(i, j);
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end())
    throw ParameterError("graph: repeated edge");
  edges_ = std::move(edges);
  for (const auto& [i, j] : edges_) {
    adjacency_(i, j) = 1.0;
    adjacency_(j, i) = 1.0;
  }
}

std::size_t Graph::degree(std::size_t i) const {
  std::size_t d = 0;
  for (std::size_t j = 0; j < n_; ++j) d += adjacency_(i, j) != 0.0;
  return d;
}

std::vector<std::size_t> Graph::neighbors(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n_; ++j)
    if (adjacency_(i, j) != 0.0) out.push_back(j);
  return out;
}

bool Graph::is_connected() const {
  if (n_ == 0) return false;
  std::vector<bool> seen(n_, false);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = true;
  std::size_t count = 1;
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t v = 0; v < n_; ++v)
      if (adjacency_(u, v) != 0.0 && !seen[v]) {
        seen[v] = true;
        ++count;
        frontier.push(v);
      }
  }
  return count == n_;
}

Graph make_regular(std::size_t n, std::size_t degree, std::uint64_t seed) {
  if (degree >= n || (n * degree) % 2 != 0 || degree == 0)
    throw ParameterError("make_regular: need 0 < degree < n and n*degree even");
  for (int attempt = 0; attempt < kMaxConnectAttempts; ++attempt) {
    Rng rng = make_rng(seed, "regular", static_cast<std::uint64_t>(attempt));
    std::vector<Edge> edges;
    if (!try_pair_stubs(n, degree, rng, edges)) continue;
    Graph g(n, std::move(edges));
    if (g.is_connected()) return g;
  }
  throw StructuralError("make_regular: no connected graph within attempt budget");
}

Graph make_erdos_renyi(std::size_t n, double p, std::uint64_t seed) {
  if (!(p > 0.0 && p <= 1.0)) throw ParameterError("make_erdos_renyi: p must lie in (0, 1]");
  if (n == 0) throw ParameterError("make_erdos_renyi: n must be positive");
  for (int attempt = 0; attempt < kMaxConnectAttempts; ++attempt) {
    Rng rng = make_rng(seed, "erdos_renyi", static_cast<std::uint64_t>(attempt));
    std::bernoulli_distribution coin(p);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (coin(rng)) edges.emplace_back(i, j);
    Graph g(n, std::move(edges));
    if (g.is_connected()) return g;
  }
  throw StructuralError("make_erdos_renyi: no connected graph within attempt budget");
}

Graph make_star(std::size_t n) {
  if (n < 2) throw ParameterError("make_star: need at least 2 nodes");
  std::vector<Edge> edges;
  for (std::size_t i = 1; i < n; ++i) edges.emplace_back(0, i);
  return Graph(n, std::move(edges));
}

ShiftOperator shift_operator(const Graph& g, ShiftKind kind) {
  const std::size_t n = g.num_nodes();
  std::vector<double> deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    deg[i] = static_cast<double>(g.degree(i));
    if (deg[i] == 0.0) throw StructuralError("shift_operator: isolated node " + std::to_string(i));
  }
  ShiftOperator op{Matrix(n, n), kind};
  const Matrix& a = g.adjacency();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (a(i, j) == 0.0) continue;
      op.s(i, j) = kind == ShiftKind::normalized_adjacency ? 1.0 / std::sqrt(deg[i] * deg[j])
                                                           : 1.0 / deg[i];
    }
  return op;
}

MixingMatrix metropolis_weights(const Graph& g) {
  if (!g.is_connected()) throw StructuralError("metropolis_weights: graph is not connected");
  const std::size_t n = g.num_nodes();
  std::vector<std::size_t> deg(n);
  for (std::size_t i = 0; i < n; ++i) deg[i] = g.degree(i);
  MixingMatrix mix{Matrix(n, n)};
  for (const auto& [i, j] : g.edges()) {
    const double w = 1.0 / (1.0 + static_cast<double>(std::max(deg[i], deg[j])));
    mix.a(i, j) = w;
    mix.a(j, i) = w;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) off += mix.a(i, j);
    mix.a(i, i) = 1.0 - off;
  }
  return mix;
}

void write_edge_list(const Graph& g, std::ostream& out) {
  out << g.num_nodes() << ' ' << g.num_edges() << '\n';
  for (const auto& [i, j] : g.edges()) out << i << ' ' << j << '\n';
}

Graph read_edge_list(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw FormatError("edge list: empty input");
  long long n = -1, m = -1;
  {
    std::istringstream hs(line);
    std::string extra;
    if (!(hs >> n >> m) || (hs >> extra) || n <= 0 || m < 0)
      throw FormatError("edge list: bad header at line " + std::to_string(line_no));
  }
  std::vector<Edge> edges;
  for (long long e = 0; e < m; ++e) {
    if (!next_line()) throw FormatError("edge list: expected " + std::to_string(m) + " edges");
    std::istringstream ls(line);
    long long i = -1, j = -1;
    std::string extra;
    if (!(ls >> i >> j) || (ls >> extra) || i < 0 || j < 0 || i >= n || j >= n || i == j)
      throw FormatError("edge list: bad edge at line " + std::to_string(line_no));
    edges.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  }
  if (next_line()) throw FormatError("edge list: trailing data at line " + std::to_string(line_no));
  try {
    return Graph(static_cast<std::size_t>(n), std::move(edges));
  } catch (const ParameterError& e) {
    throw FormatError(std::string("edge list: ") + e.what());
  }
}

void save_edge_list(const Graph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_edge_list(g, out);
  if (!out) throw IoError("write failed: " + path.string());
}

Graph load_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  return read_edge_list(in);
}

}  // namespace surf
