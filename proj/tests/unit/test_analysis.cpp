#include "doctest.h"

#include <sstream>

#include "encavg/analysis.hpp"
#include "encavg/estimation.hpp"

using namespace encavg;

namespace {

Matrix pinv_of(const MeasuredGraph& g) { return pseudoinverse(laplacian(incidence_matrix(g), g.sigma())); }

}  // namespace

TEST_CASE("centered truth") {
  Vector x(3);
  x << 1, 2, 6;
  Vector expected(3);
  expected << -2, -1, 3;
  CHECK(centered_truth(x) == expected);
  CHECK(centered_truth(Vector::Constant(4, 5.0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("centralized covariance of a single edge") {
  const MeasuredGraph g(2, {{0, 1, 1.0}});
  const Matrix cov = centralized_estimator_cov(pinv_of(g));
  Matrix expected(2, 2);
  expected << 0.25, -0.25, -0.25, 0.25;
  CHECK((cov - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("centralized covariance equals the explicit sandwich product") {
  const MeasuredGraph g = random_graph(9, 0.4, 5);
  const IntMatrix B = incidence_matrix(g);
  const Vector var = g.sigma().array().square();
  const Matrix Lp = pinv_of(g);
  const Matrix K = Lp * B.cast<double>() * var.cwiseInverse().asDiagonal();
  const Matrix sandwich = K * var.asDiagonal() * K.transpose();
  CHECK((centralized_estimator_cov(Lp) - sandwich).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("hard reset covariance") {
  const MeasuredGraph g(2, {{0, 1, 0.5}});
  const IntMatrix B = incidence_matrix(g);
  const Matrix L = laplacian(B, g.sigma());
  const ResetTree t = build_reset_tree(g, B);
  Matrix expected(2, 2);
  expected << 0.25, -0.25, -0.25, 0.25;
  expected *= 0.25;
  const Matrix cov = hard_reset_cov(L, pseudoinverse(L), t.P, g.sigma().array().square());
  CHECK((cov - expected).cwiseAbs().maxCoeff() < 1e-12);

  const MeasuredGraph big = random_graph(12, 0.3, 6);
  const IntMatrix Bb = incidence_matrix(big);
  const Matrix Lb = laplacian(Bb, big.sigma());
  const Matrix Lbp = pseudoinverse(Lb);
  const ResetTree tb = build_reset_tree(big, Bb);
  const Vector var = big.sigma().array().square();
  const Matrix C = hard_reset_cov(Lb, Lbp, tb.P, var);
  CHECK((C * Vector::Ones(12)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((C - C.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(C).eigenvalues().minCoeff() > -1e-10);
  // oracle: the hard reset is the centered path-distance vector, so its covariance
  // is J P^T Sigma P J with J the centering projector
  const Matrix J = Matrix::Identity(12, 12) - Matrix::Constant(12, 12, 1.0 / 12);
  const Matrix Pd = tb.P.cast<double>();
  const Matrix oracle = J * Pd.transpose() * var.asDiagonal() * Pd * J;
  CHECK((C - oracle).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("Monte Carlo agrees with the closed forms") {
  const MeasuredGraph g = random_graph(8, 0.4, 7);
  const Vector x = Vector::LinSpaced(8, -4, 4);
  for (const EstimatorKind kind : {EstimatorKind::centralized, EstimatorKind::hard_reset}) {
    const MomentReport r = monte_carlo_reset_moments(g, x, kind, 10000, 8);
    CHECK(r.n_samples == 10000);
    CHECK(r.theoretical_mean == centered_truth(x));
    CHECK(r.mean_ok());
    CHECK(r.rel_frob_cov_err < 0.05);
  }
  const MomentReport soft = monte_carlo_reset_moments(g, x, EstimatorKind::soft_reset, 10000, 8);
  CHECK(soft.theoretical_cov.size() == 0);
  CHECK(std::isnan(soft.rel_frob_cov_err));
  CHECK(soft.mean_ok());
}

TEST_CASE("zero noise collapses to the truth") {
  const MeasuredGraph g = random_graph(6, 0.5, 9);
  const Vector x = Vector::LinSpaced(6, 0, 5);
  for (const EstimatorKind kind : {EstimatorKind::centralized, EstimatorKind::hard_reset, EstimatorKind::soft_reset}) {
    const MomentReport r = monte_carlo_reset_moments(g, x, kind, 10, 1, 0.0, 0.0);
    CHECK(r.max_abs_mean_err < 1e-12);
    CHECK(r.empirical_cov.cwiseAbs().maxCoeff() < 1e-20);
    CHECK(r.mean_ok());
  }
}

TEST_CASE("sample size checks") {
  const MeasuredGraph g = random_graph(5, 0.5, 10);
  try {
    monte_carlo_reset_moments(g, Vector::Zero(5), EstimatorKind::hard_reset, 1, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InsufficientSamples);
  }
  const MomentReport few = monte_carlo_reset_moments(g, Vector::Zero(5), EstimatorKind::hard_reset, 100, 2);
  const MomentReport many = monte_carlo_reset_moments(g, Vector::Zero(5), EstimatorKind::hard_reset, 10000, 2);
  CHECK(many.mean_tolerance == doctest::Approx(few.mean_tolerance / 10));
  CHECK(many.max_abs_mean_err < few.max_abs_mean_err);
}

TEST_CASE("report writers") {
  const MeasuredGraph g = random_graph(5, 0.5, 11);
  const MomentReport r = monte_carlo_reset_moments(g, Vector::Zero(5), EstimatorKind::hard_reset, 200, 3);
  std::ostringstream text, csv;
  write_moment_report(text, r);
  write_moment_csv(csv, r);
  CHECK(text.str().find("estimator: hard") != std::string::npos);
  CHECK(csv.str().rfind("agent,empirical_mean,theoretical_mean,empirical_var,theoretical_var\n", 0) == 0);
  int lines = 0;
  for (char ch : csv.str()) lines += ch == '\n';
  CHECK(lines == 6);
}
