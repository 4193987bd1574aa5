#include "gossipgrid/topology.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <unordered_set>

#include "gossipgrid/error.hpp"
#include "gossipgrid/rng.hpp"

namespace gossipgrid {

namespace {

std::vector<Edge> normalize_edges(std::size_t n, std::vector<Edge> edges) {
  for (auto& e : edges) {
    if (e.u == e.v) {
      throw InvalidArgument("self-loop at node " + std::to_string(e.u));
    }
    if (e.u >= n || e.v >= n) {
      throw InvalidArgument("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                            ") out of range for " + std::to_string(n) + " nodes");
    }
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  std::sort(edges.begin(), edges.end());
  const auto dup = std::adjacent_find(edges.begin(), edges.end());
  if (dup != edges.end()) {
    throw InvalidArgument("duplicate edge (" + std::to_string(dup->u) + ", " +
                          std::to_string(dup->v) + ")");
  }
  return edges;
}

}  // namespace

bool is_connected(std::size_t n, std::span<const Edge> edges) {
  if (n == 0) return false;
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& e : edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = true;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const auto u = frontier.front();
    frontier.pop();
    for (auto v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == n;
}

Topology::Topology(std::size_t n, std::vector<Edge> edges)
    : n_(n), edges_(normalize_edges(n, std::move(edges))) {
  if (n_ == 0) throw InvalidArgument("topology needs at least one node");
  if (!is_connected(n_, edges_)) throw InvalidArgument("topology is not connected");

  std::vector<std::size_t> deg(n_, 0);
  for (const auto& e : edges_) {
    ++deg[e.u];
    ++deg[e.v];
  }
  offsets_.assign(n_ + 1, 0);
  for (std::size_t i = 0; i < n_; ++i) offsets_[i + 1] = offsets_[i] + deg[i];
  adjacency_.resize(offsets_[n_]);
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (const auto& e : edges_) {
    adjacency_[fill[e.u]++] = e.v;
    adjacency_[fill[e.v]++] = e.u;
  }
  for (std::size_t i = 0; i < n_; ++i) {
    std::sort(adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]),
              adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]));
  }
}

std::span<const std::size_t> Topology::neighbors(std::size_t node) const {
  if (node >= n_) throw InvalidArgument("node id out of range");
  return {adjacency_.data() + offsets_[node], offsets_[node + 1] - offsets_[node]};
}

bool Topology::is_regular(std::size_t d) const {
  for (std::size_t i = 0; i < n_; ++i) {
    if (degree(i) != d) return false;
  }
  return true;
}

Topology generate_regular(std::size_t n, std::size_t d, std::uint64_t seed, int max_retries) {
  if (n == 0 || d == 0) throw InfeasibleError("n and d must be positive");
  if (d >= n) {
    throw InfeasibleError("degree " + std::to_string(d) + " must be below node count " +
                          std::to_string(n));
  }
  if ((n * d) % 2 != 0) {
    throw InfeasibleError("n*d = " + std::to_string(n * d) + " is odd; no d-regular graph exists");
  }

  Rng rng(derive_seed(seed, 0, 0, StreamPurpose::kTopology));
  const std::size_t stub_count = n * d;
  // Redraw budget per pairing step before the attempt is declared a dead end.
  const std::size_t redraws = 64 + 4 * stub_count;

  for (int attempt = 0; attempt < max_retries; ++attempt) {
    std::vector<std::size_t> stubs(stub_count);
    for (std::size_t i = 0; i < stub_count; ++i) stubs[i] = i / d;
    std::unordered_set<std::uint64_t> present;
    std::vector<Edge> edges;
    edges.reserve(stub_count / 2);

    bool dead_end = false;
    while (!stubs.empty()) {
      bool placed = false;
      for (std::size_t k = 0; k < redraws; ++k) {
        const auto a = static_cast<std::size_t>(uniform_index(rng, stubs.size()));
        const auto b = static_cast<std::size_t>(uniform_index(rng, stubs.size()));
        if (a == b) continue;
        auto u = stubs[a];
        auto v = stubs[b];
        if (u == v) continue;
        if (u > v) std::swap(u, v);
        const std::uint64_t key = static_cast<std::uint64_t>(u) * n + v;
        if (!present.insert(key).second) continue;
        edges.push_back({u, v});
        // Remove the higher index first so the lower one stays valid.
        for (auto idx : {std::max(a, b), std::min(a, b)}) {
          stubs[idx] = stubs.back();
          stubs.pop_back();
        }
        placed = true;
        break;
      }
      if (!placed) {
        dead_end = true;
        break;
      }
    }
    if (dead_end || !is_connected(n, edges)) continue;
    return Topology(n, std::move(edges));
  }
  throw GenerationError("no connected simple " + std::to_string(d) + "-regular graph on " +
                        std::to_string(n) + " nodes after " + std::to_string(max_retries) +
                        " attempts");
}

void write_edge_list(std::ostream& out, const Topology& topology) {
  std::size_t max_degree = 0;
  for (std::size_t i = 0; i < topology.size(); ++i) {
    max_degree = std::max(max_degree, topology.degree(i));
  }
  out << topology.size() << ' ' << max_degree << '\n';
  for (const auto& e : topology.edges()) out << e.u << ' ' << e.v << '\n';
}

void write_edge_list(const std::filesystem::path& path, const Topology& topology) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_edge_list(out, topology);
  if (!out) throw IoError("write failed: " + path.string());
}

Topology read_edge_list(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t n = 0;
  bool have_header = false;
  std::vector<Edge> edges;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    long long a = -1;
    long long b = -1;
    if (!(fields >> a >> b) || a < 0 || b < 0) {
      throw ParseError("expected two non-negative integers", line_no);
    }
    std::string extra;
    if (fields >> extra) throw ParseError("trailing content '" + extra + "'", line_no);
    if (!have_header) {
      n = static_cast<std::size_t>(a);
      have_header = true;
      continue;
    }
    edges.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(b)});
  }
  if (!have_header) throw ParseError("empty edge list", 0);
  try {
    return Topology(n, std::move(edges));
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), 0);
  }
}

Topology read_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_edge_list(in);
}

MixingMatrix::MixingMatrix(std::size_t n, std::vector<double> weights)
    : n_(n), w_(std::move(weights)) {
  if (w_.size() != n_ * n_) {
    throw DimensionError("mixing matrix needs " + std::to_string(n_ * n_) + " entries, got " +
                         std::to_string(w_.size()));
  }
  support_offsets_.assign(n_ + 1, 0);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) {
      if (w_[j * n_ + i] != 0.0) support_.push_back(j);
    }
    support_offsets_[i + 1] = support_.size();
  }
}

std::span<const std::size_t> MixingMatrix::column_support(std::size_t i) const {
  return {support_.data() + support_offsets_[i], support_offsets_[i + 1] - support_offsets_[i]};
}

MixingMatrix MixingMatrix::identity(std::size_t n) {
  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) w[i * n + i] = 1.0;
  return MixingMatrix(n, std::move(w));
}

MixingMatrix metropolis_weights(const Topology& topology) {
  const auto n = topology.size();
  std::vector<double> w(n * n, 0.0);
  for (const auto& e : topology.edges()) {
    const double weight =
        1.0 / static_cast<double>(std::max(topology.degree(e.u), topology.degree(e.v)) + 1);
    w[e.u * n + e.v] = weight;
    w[e.v * n + e.u] = weight;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double off_diagonal = 0.0;
    for (auto j : topology.neighbors(i)) off_diagonal += w[i * n + j];
    w[i * n + i] = 1.0 - off_diagonal;
  }
  return MixingMatrix(n, std::move(w));
}

void validate_mixing_matrix(const MixingMatrix& w, const Topology* topology, double tolerance) {
  const auto n = w.size();
  if (topology != nullptr && topology->size() != n) {
    throw DimensionError("topology and mixing matrix sizes differ");
  }
  auto where = [](std::size_t i, std::size_t j) {
    return "(" + std::to_string(i) + ", " + std::to_string(j) + ")";
  };
  std::vector<double> column_sums(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = w(i, j);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw NumericalError("entry " + where(i, j) + " outside [0, 1]");
      }
      if (v != w(j, i)) throw NumericalError("not symmetric at " + where(i, j));
      row_sum += v;
      column_sums[j] += v;
    }
    if (std::abs(row_sum - 1.0) > tolerance) {
      throw NumericalError("row " + std::to_string(i) + " sums to " + std::to_string(row_sum));
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (std::abs(column_sums[j] - 1.0) > tolerance) {
      throw NumericalError("column " + std::to_string(j) + " sums to " +
                           std::to_string(column_sums[j]));
    }
  }
  if (topology == nullptr) return;
  for (std::size_t i = 0; i < n; ++i) {
    const auto nbrs = topology->neighbors(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || w(i, j) == 0.0) continue;
      if (!std::binary_search(nbrs.begin(), nbrs.end(), j)) {
        throw NumericalError("weight on non-edge " + where(i, j));
      }
    }
  }
}

double second_eigenvalue_modulus(const MixingMatrix& w) {
  const auto n = static_cast<Eigen::Index>(w.size());
  if (n < 2) return 0.0;
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      m(i, j) = w(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("eigensolve did not converge");
  std::vector<double> moduli(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    moduli[static_cast<std::size_t>(i)] = std::abs(solver.eigenvalues()(i));
  }
  std::sort(moduli.begin(), moduli.end(), std::greater<>());
  return std::clamp(moduli[1], 0.0, 1.0);
}

}  // namespace gossipgrid
