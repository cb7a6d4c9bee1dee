// Measurement graphs, incidence/Laplacian algebra, and the leader-rooted reset tree.
//
// Agents are indexed 0..n-1 internally; agent 0 is the leader. Text formats
// (graph files, CLI output) use 1-based agent numbers.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "encavg/common.hpp"

namespace encavg {

/// Undirected edge {i, j} with i < j and its noise standard deviation.
struct Edge {
  int i = 0;
  int j = 0;
  double sigma = 1.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Neighbor {
  int agent;
  Index edge;  // column of B

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Connected, undirected communication graph with one noise level per edge.
/// Edges are stored in lexicographic order; column k of B belongs to edges()[k].
class MeasuredGraph {
 public:
  /// Normalizes (i, j) so that i < j, sorts lexicographically and validates.
  /// Throws Error(InvalidGraph) on self-loops, duplicates, bad sigma or a disconnected graph.
  MeasuredGraph(int n, std::vector<Edge> edges);

  int num_agents() const noexcept { return n_; }
  Index num_edges() const noexcept { return static_cast<Index>(edges_.size()); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<Neighbor>& neighbors(int agent) const { return adjacency_.at(agent); }

  Vector sigma() const;
  /// diag(Sigma): sigma_ij^2 per edge.
  Vector variances() const;
  int max_degree() const;

  friend bool operator==(const MeasuredGraph&, const MeasuredGraph&) = default;

 private:
  int n_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

/// Union-find connectivity check over raw edges (no validation).
bool is_connected(int n, std::span<const Edge> edges);

/// n x m oriented incidence matrix: +1 at the lower index, -1 at the higher index.
IntMatrix incidence_matrix(const MeasuredGraph& g);

/// Weighted Laplacian B Sigma^{-1} B^T.
template <typename DerivedB, typename DerivedS>
Eigen::Matrix<typename DerivedS::Scalar, Eigen::Dynamic, Eigen::Dynamic> laplacian(
    const Eigen::MatrixBase<DerivedB>& B, const Eigen::MatrixBase<DerivedS>& sigma) {
  using Scalar = typename DerivedS::Scalar;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> Bs = B.template cast<Scalar>();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights = sigma.array().square().inverse().matrix();
  return Bs * weights.asDiagonal() * Bs.transpose();
}

/// Eigen-decomposition of a connected-graph Laplacian.
struct LaplacianSpectrum {
  Vector eigenvalues;  // ascending; eigenvalues(0) ~ 0
  Matrix eigenvectors;
  double lambda_max = 0.0;      // lambda_1(L), largest
  double lambda_fiedler = 0.0;  // lambda_{n-1}(L), smallest nonzero
};

/// Throws Error(NearSingularBeyondNullspace) when more than one eigenvalue
/// falls below 1e-12 * lambda_max (disconnected or numerically degenerate graph).
LaplacianSpectrum laplacian_spectrum(const Matrix& L);

/// Moore-Penrose pseudoinverse of a connected-graph Laplacian, inverting the
/// eigenvalues above 1e-12 * lambda_max.
Matrix pseudoinverse(const Matrix& L);
Matrix pseudoinverse(const LaplacianSpectrum& spectrum);

/// Leader-rooted spanning tree and its path matrix.
struct ResetTree {
  std::vector<int> parent;       // parent[0] == -1
  std::vector<Index> parent_edge;  // column of B joining the node to its parent, -1 for the leader
  std::vector<int> depth;
  std::vector<std::vector<int>> children;
  std::vector<int> subtree_size;
  /// m x n; column i is the path vector p_i with B p_i = e_1 - e_i. Column 0 is zero.
  IntMatrix P;
  int height = 0;
};

/// Breadth-first tree from the leader, visiting neighbors in ascending index order.
ResetTree build_reset_tree(const MeasuredGraph& g, const IntMatrix& B);

struct RandomGraphOptions {
  std::vector<double> sigma_set{0.1, 0.5, 0.9};
  int max_retries = 100000;
};

/// Erdos-Renyi G(n, p) resampled from scratch until connected.
MeasuredGraph random_graph(int n, double p_edge, std::uint64_t seed,
                           const RandomGraphOptions& options = {});

/// JSON text: {"n": .., "edges": [[i, j, sigma], ...], "seed": ..} with 1-based agents.
std::string serialize_graph(const MeasuredGraph& g, std::optional<std::uint64_t> seed = {});
MeasuredGraph parse_graph(std::string_view text);

/// Dense row-major decimal text, one row per line, entries separated by a space.
template <typename Derived>
std::string dump_matrix(const Eigen::MatrixBase<Derived>& M) {
  std::string out;
  for (Index r = 0; r < M.rows(); ++r) {
    for (Index c = 0; c < M.cols(); ++c) {
      if (c) out += ' ';
      if constexpr (std::is_integral_v<typename Derived::Scalar>) {
        out += std::to_string(M(r, c));
      } else {
        out += format_double(static_cast<double>(M(r, c)));
      }
    }
    out += '\n';
  }
  return out;
}

/// The five-agent graph used as the fixed worked example (6 edges).
MeasuredGraph example5_graph(double sigma = 0.5);

}  // namespace encavg
