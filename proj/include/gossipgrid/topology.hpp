#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace gossipgrid {

/// Undirected edge with u < v.
struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Connected simple undirected graph on nodes 0..n-1.
///
/// Construction normalizes every edge to (min, max), sorts the edge list and
/// rejects self-loops, duplicate edges, out-of-range ids and disconnected graphs.
class Topology {
 public:
  Topology(std::size_t n, std::vector<Edge> edges);

  std::size_t size() const noexcept { return n_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  /// Ascending neighbor ids of `node`.
  std::span<const std::size_t> neighbors(std::size_t node) const;
  std::size_t degree(std::size_t node) const { return neighbors(node).size(); }
  bool is_regular(std::size_t d) const;

  friend bool operator==(const Topology& a, const Topology& b) {
    return a.n_ == b.n_ && a.edges_ == b.edges_;
  }

 private:
  std::size_t n_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> adjacency_;
};

/// True when a breadth-first traversal from node 0 reaches all n nodes.
bool is_connected(std::size_t n, std::span<const Edge> edges);

inline constexpr int kDefaultRegularRetries = 1000;

/// Random connected simple d-regular graph from the pairing model.
///
/// Stubs are matched one pair at a time; a pair that would create a self-loop
/// or a duplicate edge is redrawn, and an attempt that dead-ends or ends up
/// disconnected is discarded. Throws InfeasibleError when n*d is odd or d >= n,
/// GenerationError after `max_retries` discarded attempts.
Topology generate_regular(std::size_t n, std::size_t d, std::uint64_t seed,
                          int max_retries = kDefaultRegularRetries);

/// Edge-list text format: "n d" header, then "i j" per edge, 0-based, ascending.
/// `d` is written as the maximum degree (the regular degree for regular graphs).
void write_edge_list(std::ostream& out, const Topology& topology);
void write_edge_list(const std::filesystem::path& path, const Topology& topology);
Topology read_edge_list(std::istream& in);
Topology read_edge_list(const std::filesystem::path& path);

/// Dense symmetric doubly stochastic weight matrix.
class MixingMatrix {
 public:
  /// Takes an n*n row-major weight array as is; see validate_mixing_matrix.
  MixingMatrix(std::size_t n, std::vector<double> weights);

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return w_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const { return {w_.data() + i * n_, n_}; }
  /// Row indices j with W[j][i] != 0, ascending.
  std::span<const std::size_t> column_support(std::size_t i) const;

  static MixingMatrix identity(std::size_t n);

 private:
  std::size_t n_;
  std::vector<double> w_;
  std::vector<std::size_t> support_offsets_;
  std::vector<std::size_t> support_;
};

inline constexpr double kStochasticTolerance = 1e-12;

/// Metropolis-Hastings weights: 1/(max(deg i, deg j) + 1) on edges, the
/// remainder of each row on the diagonal.
MixingMatrix metropolis_weights(const Topology& topology);

/// Throws NumericalError naming the first violated property: entry range,
/// symmetry, row/column sums, or (when `topology` is given) support outside
/// edges plus diagonal.
void validate_mixing_matrix(const MixingMatrix& w, const Topology* topology = nullptr,
                            double tolerance = kStochasticTolerance);

/// Second-largest eigenvalue modulus of a symmetric mixing matrix.
double second_eigenvalue_modulus(const MixingMatrix& w);

}  // namespace gossipgrid
