// Plaintext measurement model, the noise-optimal centralized estimate, and
// real-valued affine averaging.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "encavg/common.hpp"
#include "encavg/graph.hpp"

namespace encavg {

/// One relative measurement per edge in lexicographic order: y = B^T x_true + v.
/// Agent i's view of edge {i, j} is y_ij; the other endpoint sees y_ji = -y_ij.
struct MeasurementSet {
  Vector y;
  Vector v;
  Vector x_true;

  /// Measurement of `edge` as seen by `agent` (one of its endpoints).
  double seen_by(const MeasuredGraph& g, int agent, Index edge) const;
};

/// Draws v_e ~ N(0, sigma_e^2) independently per edge.
MeasurementSet sample_measurements(const MeasuredGraph& g, const Vector& x_true, std::uint64_t seed);

/// y = B^T x_true + v for a given noise realization.
MeasurementSet measurements_with_noise(const MeasuredGraph& g, const Vector& x_true, const Vector& v);

/// Mean-free weighted least-squares solution L^+ B Sigma^{-1} y.
Vector centralized_solution(const IntMatrix& B, const Vector& sigma, const Vector& y);

/// alpha = 2 / (lambda_1(L) + lambda_{n-1}(L)).
double step_size(const Matrix& L);

struct Dynamics {
  Matrix A;  // I - alpha L
  Vector b;  // alpha B Sigma^{-1} y
  double alpha = 0.0;
  Matrix L;
  Matrix L_pinv;
  double lambda1 = 0.0;
  double lambda_nm1 = 0.0;

  Index size() const noexcept { return A.rows(); }
};

/// Throws Error(StepSizeOutOfRange) unless alpha lies in (0, 2 / lambda_1).
Dynamics build_dynamics(const IntMatrix& B, const Vector& sigma, const Vector& y, double alpha);

/// Row-wise view of the affine iteration as computed locally by one agent.
struct AgentCoefficients {
  double a_self = 0.0;
  std::vector<std::pair<int, double>> a_neighbors;  // (agent, a_ij)
  double b = 0.0;
};

AgentCoefficients agent_coefficients(const MeasuredGraph& g, const MeasurementSet& m, double alpha, int agent);

/// One synchronous affine averaging step A x + b.
template <typename Derived>
Vector affine_step(const Eigen::MatrixBase<Derived>& x, const Dynamics& d) {
  return d.A * x + d.b;
}

/// Closed form A^k x(0) + (sum_{j<k} A^j) b with x(0) = 0.
Vector explicit_solution(const Dynamics& d, int k);

struct ConditionCheck {
  bool pass = false;
  double measured = 0.0;
  std::string detail;
};

struct ConvergenceReport {
  ConditionCheck connected;      // (i)
  ConditionCheck mean_free;      // (ii) |1^T x(0)|
  ConditionCheck step_in_range;  // (iii) alpha vs 2 / lambda_1

  bool all_pass() const { return connected.pass && mean_free.pass && step_in_range.pass; }
};

/// Diagnostic only; accepts raw (possibly disconnected) edge lists.
ConvergenceReport check_convergence_conditions(int n, std::span<const Edge> edges, const Vector& x0,
                                               double alpha);
ConvergenceReport check_convergence_conditions(const MeasuredGraph& g, const Vector& x0, double alpha);

struct IterationResult {
  Vector x;
  int steps = 0;
  bool converged = false;
};

/// Iterates from 0 until ||x(k+1) - x(k)||_inf < tol or max_steps is reached.
IterationResult iterate_until_converged(const Dynamics& d, double tol = 1e-10, int max_steps = 100000);

}  // namespace encavg
