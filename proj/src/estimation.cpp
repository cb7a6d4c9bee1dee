#include "encavg/estimation.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace encavg {

double MeasurementSet::seen_by(const MeasuredGraph& g, int agent, Index edge) const {
  const Edge& e = g.edges().at(edge);
  if (agent == e.i) return y(edge);
  if (agent == e.j) return -y(edge);
  throw Error(Errc::InvalidGraph, "agent is not an endpoint of the edge");
}

MeasurementSet measurements_with_noise(const MeasuredGraph& g, const Vector& x_true, const Vector& v) {
  if (x_true.size() != g.num_agents() || v.size() != g.num_edges())
    throw Error(Errc::InvalidConfig, "measurement dimensions do not match the graph");
  MeasurementSet m;
  m.x_true = x_true;
  m.v = v;
  m.y = incidence_matrix(g).cast<double>().transpose() * x_true + v;
  return m;
}

MeasurementSet sample_measurements(const MeasuredGraph& g, const Vector& x_true, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(g.num_edges());
  for (Index k = 0; k < g.num_edges(); ++k) v(k) = g.edges()[k].sigma * normal(rng);
  return measurements_with_noise(g, x_true, v);
}

Vector centralized_solution(const IntMatrix& B, const Vector& sigma, const Vector& y) {
  const Matrix L = laplacian(B, sigma);
  const Vector weighted = y.cwiseQuotient(sigma.cwiseAbs2());
  return pseudoinverse(L) * (B.cast<double>() * weighted);
}

double step_size(const Matrix& L) {
  const LaplacianSpectrum spectrum = laplacian_spectrum(L);
  return 2.0 / (spectrum.lambda_max + spectrum.lambda_fiedler);
}

Dynamics build_dynamics(const IntMatrix& B, const Vector& sigma, const Vector& y, double alpha) {
  Dynamics d;
  d.L = laplacian(B, sigma);
  const LaplacianSpectrum spectrum = laplacian_spectrum(d.L);
  d.lambda1 = spectrum.lambda_max;
  d.lambda_nm1 = spectrum.lambda_fiedler;
  if (!(alpha > 0.0 && alpha < 2.0 / d.lambda1))
    throw Error(Errc::StepSizeOutOfRange,
                "alpha = " + format_double(alpha) + " outside (0, " + format_double(2.0 / d.lambda1) + ")");
  d.alpha = alpha;
  d.L_pinv = pseudoinverse(spectrum);
  const Index n = B.rows();
  d.A = Matrix::Identity(n, n) - alpha * d.L;
  d.b = alpha * (B.cast<double>() * y.cwiseQuotient(sigma.cwiseAbs2()));
  return d;
}

AgentCoefficients agent_coefficients(const MeasuredGraph& g, const MeasurementSet& m, double alpha, int agent) {
  AgentCoefficients c;
  c.a_self = 1.0;
  for (const Neighbor& nb : g.neighbors(agent)) {
    const double sigma = g.edges()[nb.edge].sigma;
    const double a = alpha / (sigma * sigma);
    c.a_self -= a;
    c.a_neighbors.emplace_back(nb.agent, a);
    c.b += a * m.seen_by(g, agent, nb.edge);
  }
  return c;
}

Vector explicit_solution(const Dynamics& d, int k) {
  const Index n = d.size();
  Vector sum = Vector::Zero(n);
  Vector term = d.b;  // A^j b
  for (int j = 0; j < k; ++j) {
    sum += term;
    term = d.A * term;
  }
  return sum;
}

ConvergenceReport check_convergence_conditions(int n, std::span<const Edge> edges, const Vector& x0, double alpha) {
  ConvergenceReport report;
  const bool connected = is_connected(n, edges);
  report.connected = {connected, connected ? 1.0 : 0.0, connected ? "graph is connected" : "graph is disconnected"};

  const double mean = x0.sum();
  const double mean_tol = 1e-9 * std::max(1.0, x0.cwiseAbs().sum());
  report.mean_free = {std::abs(mean) <= mean_tol, mean, "1^T x(0) = " + format_double(mean)};

  Vector sigma(static_cast<Index>(edges.size()));
  IntMatrix B = IntMatrix::Zero(n, static_cast<Index>(edges.size()));
  for (std::size_t k = 0; k < edges.size(); ++k) {
    B(edges[k].i, k) = 1;
    B(edges[k].j, k) = -1;
    sigma(k) = edges[k].sigma;
  }
  const Matrix L = laplacian(B, sigma);
  const double lambda1 = Eigen::SelfAdjointEigenSolver<Matrix>(L, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const double upper = lambda1 > 0.0 ? 2.0 / lambda1 : std::numeric_limits<double>::infinity();
  report.step_in_range = {alpha > 0.0 && alpha < upper, alpha,
                          "alpha = " + format_double(alpha) + ", 2/lambda_1 = " + format_double(upper)};
  return report;
}

ConvergenceReport check_convergence_conditions(const MeasuredGraph& g, const Vector& x0, double alpha) {
  return check_convergence_conditions(g.num_agents(), g.edges(), x0, alpha);
}

IterationResult iterate_until_converged(const Dynamics& d, double tol, int max_steps) {
  IterationResult r;
  r.x = Vector::Zero(d.size());
  while (r.steps < max_steps) {
    Vector next = affine_step(r.x, d);
    const double change = (next - r.x).lpNorm<Eigen::Infinity>();
    r.x = std::move(next);
    ++r.steps;
    if (change < tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

}  // namespace encavg
