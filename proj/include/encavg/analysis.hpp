// First and second moments of the centralized estimator and the reset estimators,
// closed forms and Monte Carlo.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>

#include "encavg/common.hpp"
#include "encavg/graph.hpp"

namespace encavg {

/// x - mean(x) 1, the expected value of every estimator considered here.
Vector centered_truth(const Vector& x_true);

/// Covariance of the centralized estimate; the product L+ B S^-1 S (L+ B S^-1)^T collapses to L+.
Matrix centralized_estimator_cov(const Matrix& L_pinv);

/// L+ L P^T Sigma P L L+ with P stored m x n and Sigma = diag(variances).
Matrix hard_reset_cov(const Matrix& L, const Matrix& L_pinv, const IntMatrix& P, const Vector& variances);

enum class EstimatorKind { centralized, hard_reset, soft_reset };
std::string_view to_string(EstimatorKind kind);

struct MomentReport {
  EstimatorKind kind = EstimatorKind::centralized;
  Vector empirical_mean;
  Matrix empirical_cov;
  Vector theoretical_mean;
  Matrix theoretical_cov;  // empty for the soft reset (no closed form)
  int n_samples = 0;
  double max_abs_mean_err = 0.0;
  double rel_frob_cov_err = 0.0;  // NaN without a closed form
  /// 4 max_i std_i / sqrt(N); std from the closed form when available, otherwise empirical.
  double mean_tolerance = 0.0;

  bool mean_ok() const { return max_abs_mean_err <= mean_tolerance; }
};

/// Draws N noise realizations v ~ N(0, noise_scale^2 Sigma); draw i uses its own
/// generator seeded from (seed, i). The soft reset uses x1 = e_1^T x* per draw and
/// weight w; the hard reset uses w = n - 1. Throws Error(InsufficientSamples) for N < 2.
MomentReport monte_carlo_reset_moments(const MeasuredGraph& g, const Vector& x_true, EstimatorKind kind,
                                       int n_samples, std::uint64_t seed, double w = 0.0,
                                       double noise_scale = 1.0);

void write_moment_report(std::ostream& os, const MomentReport& r);
/// Columns: agent, empirical_mean, theoretical_mean, empirical_var, theoretical_var.
void write_moment_csv(std::ostream& os, const MomentReport& r);

}  // namespace encavg
