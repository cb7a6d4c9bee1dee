#include "encavg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>
#include <tuple>

#include "json.hpp"

namespace encavg {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[std::max(a, b)] = std::min(a, b);
    return true;
  }

 private:
  std::vector<int> parent_;
};

}  // namespace

bool is_connected(int n, std::span<const Edge> edges) {
  if (n <= 0) return false;
  DisjointSets sets(n);
  int components = n;
  for (const Edge& e : edges) {
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n) continue;
    if (sets.unite(e.i, e.j)) --components;
  }
  return components == 1;
}

MeasuredGraph::MeasuredGraph(int n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {
  if (n_ < 1) throw Error(Errc::InvalidGraph, "agent count must be positive");
  for (Edge& e : edges_) {
    if (e.i > e.j) std::swap(e.i, e.j);
    if (e.i == e.j) throw Error(Errc::InvalidGraph, "self-loop at agent " + std::to_string(e.i + 1));
    if (e.i < 0 || e.j >= n_) throw Error(Errc::InvalidGraph, "edge endpoint out of range");
    if (!(e.sigma > 0.0) || !std::isfinite(e.sigma))
      throw Error(Errc::InvalidGraph, "edge noise level must be positive and finite");
  }
  std::sort(edges_.begin(), edges_.end(),
            [](const Edge& a, const Edge& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });
  auto dup = std::adjacent_find(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
    return a.i == b.i && a.j == b.j;
  });
  if (dup != edges_.end())
    throw Error(Errc::InvalidGraph, "duplicate edge {" + std::to_string(dup->i + 1) + "," +
                                        std::to_string(dup->j + 1) + "}");
  if (!is_connected(n_, edges_)) throw Error(Errc::InvalidGraph, "graph is not connected");

  adjacency_.resize(n_);
  for (Index k = 0; k < num_edges(); ++k) {
    const Edge& e = edges_[k];
    adjacency_[e.i].push_back({e.j, k});
    adjacency_[e.j].push_back({e.i, k});
  }
  for (auto& list : adjacency_)
    std::sort(list.begin(), list.end(), [](const Neighbor& a, const Neighbor& b) { return a.agent < b.agent; });
}

Vector MeasuredGraph::sigma() const {
  Vector s(num_edges());
  for (Index k = 0; k < num_edges(); ++k) s(k) = edges_[k].sigma;
  return s;
}

Vector MeasuredGraph::variances() const { return sigma().array().square(); }

int MeasuredGraph::max_degree() const {
  std::size_t d = 0;
  for (const auto& list : adjacency_) d = std::max(d, list.size());
  return static_cast<int>(d);
}

IntMatrix incidence_matrix(const MeasuredGraph& g) {
  IntMatrix B = IntMatrix::Zero(g.num_agents(), g.num_edges());
  for (Index k = 0; k < g.num_edges(); ++k) {
    B(g.edges()[k].i, k) = 1;
    B(g.edges()[k].j, k) = -1;
  }
  return B;
}

LaplacianSpectrum laplacian_spectrum(const Matrix& L) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(L);
  if (solver.info() != Eigen::Success)
    throw Error(Errc::NearSingularBeyondNullspace, "eigendecomposition failed");
  LaplacianSpectrum out;
  out.eigenvalues = solver.eigenvalues();
  out.eigenvectors = solver.eigenvectors();
  const Index n = L.rows();
  out.lambda_max = out.eigenvalues(n - 1);
  if (n == 1) return out;
  const double threshold = 1e-12 * out.lambda_max;
  out.lambda_fiedler = out.eigenvalues(1);
  if (!(out.lambda_max > 0.0) || out.lambda_fiedler <= threshold)
    throw Error(Errc::NearSingularBeyondNullspace,
                "second-smallest Laplacian eigenvalue " + format_double(out.lambda_fiedler) +
                    " is below tolerance; graph disconnected or ill-conditioned");
  return out;
}

Matrix pseudoinverse(const LaplacianSpectrum& spectrum) {
  const double threshold = 1e-12 * spectrum.lambda_max;
  Vector inv = spectrum.eigenvalues.unaryExpr([&](double l) { return l > threshold ? 1.0 / l : 0.0; });
  Matrix pinv = spectrum.eigenvectors * inv.asDiagonal() * spectrum.eigenvectors.transpose();
  // symmetrize away round-off
  return 0.5 * (pinv + pinv.transpose());
}

Matrix pseudoinverse(const Matrix& L) { return pseudoinverse(laplacian_spectrum(L)); }

ResetTree build_reset_tree(const MeasuredGraph& g, const IntMatrix& B) {
  const int n = g.num_agents();
  ResetTree tree;
  tree.parent.assign(n, -1);
  tree.parent_edge.assign(n, -1);
  tree.depth.assign(n, -1);
  tree.children.assign(n, {});
  tree.subtree_size.assign(n, 1);
  tree.P = IntMatrix::Zero(g.num_edges(), n);

  std::vector<int> order;
  order.reserve(n);
  std::queue<int> frontier;
  tree.depth[0] = 0;
  frontier.push(0);
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    order.push_back(u);
    for (const Neighbor& nb : g.neighbors(u)) {
      if (tree.depth[nb.agent] >= 0) continue;
      tree.depth[nb.agent] = tree.depth[u] + 1;
      tree.parent[nb.agent] = u;
      tree.parent_edge[nb.agent] = nb.edge;
      tree.children[u].push_back(nb.agent);
      // The tree edge is traversed from parent to child; B orients it from the lower index.
      tree.P.col(nb.agent) = tree.P.col(u);
      tree.P(nb.edge, nb.agent) += B(u, nb.edge);
      frontier.push(nb.agent);
    }
  }
  if (static_cast<int>(order.size()) != n)
    throw Error(Errc::TreeInconsistency, "spanning tree does not reach every agent");

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (tree.parent[*it] >= 0) tree.subtree_size[tree.parent[*it]] += tree.subtree_size[*it];
    tree.height = std::max(tree.height, tree.depth[*it]);
  }
  return tree;
}

MeasuredGraph random_graph(int n, double p_edge, std::uint64_t seed, const RandomGraphOptions& options) {
  if (n < 2) throw Error(Errc::InvalidConfig, "random graphs need at least 2 agents");
  if (!(p_edge > 0.0 && p_edge <= 1.0)) throw Error(Errc::InvalidConfig, "edge probability must lie in (0, 1]");
  if (options.sigma_set.empty()) throw Error(Errc::InvalidConfig, "empty sigma set");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, options.sigma_set.size() - 1);
  std::vector<Edge> edges;
  for (int attempt = 0; attempt < options.max_retries; ++attempt) {
    edges.clear();
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (unit(rng) < p_edge) edges.push_back({i, j, options.sigma_set[pick(rng)]});
    if (is_connected(n, edges)) return MeasuredGraph(n, edges);
  }
  throw Error(Errc::ConnectivityRetriesExhausted,
              "no connected graph after " + std::to_string(options.max_retries) + " draws");
}

std::string serialize_graph(const MeasuredGraph& g, std::optional<std::uint64_t> seed) {
  nlohmann::ordered_json j;
  j["n"] = g.num_agents();
  auto edges = nlohmann::ordered_json::array();
  for (const Edge& e : g.edges()) edges.push_back({e.i + 1, e.j + 1, e.sigma});
  j["edges"] = std::move(edges);
  if (seed) j["seed"] = *seed;
  return j.dump(2) + "\n";
}

MeasuredGraph parse_graph(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::InvalidGraph, std::string("malformed graph text: ") + ex.what());
  }
  if (!j.contains("n") || !j.contains("edges")) throw Error(Errc::InvalidGraph, "graph text needs keys n and edges");
  const int n = j.at("n").get<int>();
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 3) throw Error(Errc::InvalidGraph, "edge entries are [i, j, sigma]");
    edges.push_back({e[0].get<int>() - 1, e[1].get<int>() - 1, e[2].get<double>()});
  }
  return MeasuredGraph(n, std::move(edges));
}

MeasuredGraph example5_graph(double sigma) {
  return MeasuredGraph(5, {{0, 1, sigma}, {0, 2, sigma}, {0, 3, sigma}, {1, 2, sigma}, {2, 4, sigma}, {3, 4, sigma}});
}

}  // namespace encavg
