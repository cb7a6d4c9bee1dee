#include "encavg/analysis.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include "encavg/reset.hpp"

namespace encavg {

Vector centered_truth(const Vector& x_true) { return x_true.array() - x_true.mean(); }

Matrix centralized_estimator_cov(const Matrix& L_pinv) { return L_pinv; }

Matrix hard_reset_cov(const Matrix& L, const Matrix& L_pinv, const IntMatrix& P, const Vector& variances) {
  const Matrix Pd = P.cast<double>();
  const Matrix proj = L_pinv * L;
  const Matrix inner = Pd.transpose() * variances.asDiagonal() * Pd;
  const Matrix cov = proj * inner * proj.transpose();
  return 0.5 * (cov + cov.transpose());
}

std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::centralized: return "centralized";
    case EstimatorKind::hard_reset: return "hard";
    case EstimatorKind::soft_reset: return "soft";
  }
  return "?";
}

MomentReport monte_carlo_reset_moments(const MeasuredGraph& g, const Vector& x_true, EstimatorKind kind,
                                       int n_samples, std::uint64_t seed, double w, double noise_scale) {
  if (n_samples < 2) throw Error(Errc::InsufficientSamples, "at least two draws are needed for a covariance");
  const int n = g.num_agents();
  if (x_true.size() != n) throw Error(Errc::InvalidConfig, "x_true must have one entry per agent");
  if (n < 2) throw Error(Errc::InvalidConfig, "need at least two agents");

  const IntMatrix B = incidence_matrix(g);
  const Vector sigma = g.sigma();
  const Matrix L = laplacian(B, sigma);
  const Matrix L_pinv = pseudoinverse(L);
  const ResetTree tree = build_reset_tree(g, B);
  const Matrix K = L_pinv * B.cast<double>() * sigma.cwiseAbs2().cwiseInverse().asDiagonal();
  const Vector clean = B.cast<double>().transpose() * x_true;
  const double hard_w = static_cast<double>(n - 1);

  Matrix samples(n, n_samples);
  Vector v(g.num_edges());
  for (int s = 0; s < n_samples; ++s) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index e = 0; e < v.size(); ++e) v(e) = noise_scale * sigma(e) * normal(rng);
    const Vector y = clean + v;
    switch (kind) {
      case EstimatorKind::centralized:
        samples.col(s) = K * y;
        break;
      case EstimatorKind::hard_reset: {
        const Vector d = distances(tree.P, y);
        // the hard reset ignores the leader value; 0 keeps the draw independent of it
        samples.col(s) = apply_reset_plaintext(compute_reset_shifts(0.0, d.sum(), n, hard_w), d);
        break;
      }
      case EstimatorKind::soft_reset: {
        const Vector d = distances(tree.P, y);
        const double x1 = K.row(0).dot(y);
        samples.col(s) = apply_reset_plaintext(compute_reset_shifts(x1, d.sum(), n, w), d);
        break;
      }
    }
  }

  MomentReport r;
  r.kind = kind;
  r.n_samples = n_samples;
  r.empirical_mean = samples.rowwise().mean();
  const Matrix centered = samples.colwise() - r.empirical_mean;
  r.empirical_cov = centered * centered.transpose() / static_cast<double>(n_samples - 1);
  r.theoretical_mean = centered_truth(x_true);
  r.max_abs_mean_err = (r.empirical_mean - r.theoretical_mean).lpNorm<Eigen::Infinity>();

  if (kind == EstimatorKind::centralized) r.theoretical_cov = centralized_estimator_cov(L_pinv);
  if (kind == EstimatorKind::hard_reset) r.theoretical_cov = hard_reset_cov(L, L_pinv, tree.P, g.variances());
  const double scale2 = noise_scale * noise_scale;
  if (r.theoretical_cov.size() > 0) {
    r.theoretical_cov *= scale2;
    const double ref = r.theoretical_cov.norm();
    const double diff = (r.empirical_cov - r.theoretical_cov).norm();
    r.rel_frob_cov_err = ref > 0.0 ? diff / ref : diff;
    r.mean_tolerance = 4.0 * std::sqrt(r.theoretical_cov.diagonal().maxCoeff()) / std::sqrt(double(n_samples));
  } else {
    r.rel_frob_cov_err = std::numeric_limits<double>::quiet_NaN();
    r.mean_tolerance = 4.0 * std::sqrt(r.empirical_cov.diagonal().maxCoeff()) / std::sqrt(double(n_samples));
  }
  // exact arithmetic noise of the estimators themselves when the draws carry no randomness
  r.mean_tolerance = std::max(r.mean_tolerance, 1e-12 * (1.0 + x_true.lpNorm<Eigen::Infinity>()));
  return r;
}

void write_moment_report(std::ostream& os, const MomentReport& r) {
  os << "estimator: " << to_string(r.kind) << '\n'
     << "samples: " << r.n_samples << '\n'
     << "max_abs_mean_err: " << format_double(r.max_abs_mean_err) << '\n'
     << "mean_tolerance: " << format_double(r.mean_tolerance) << '\n'
     << "mean_ok: " << (r.mean_ok() ? "yes" : "no") << '\n';
  if (r.theoretical_cov.size() > 0)
    os << "rel_frob_cov_err: " << format_double(r.rel_frob_cov_err) << '\n';
  else
    os << "rel_frob_cov_err: n/a (no closed form)\n";
}

void write_moment_csv(std::ostream& os, const MomentReport& r) {
  os << "agent,empirical_mean,theoretical_mean,empirical_var,theoretical_var\n";
  for (Index i = 0; i < r.empirical_mean.size(); ++i) {
    os << i + 1 << ',' << format_double(r.empirical_mean(i)) << ',' << format_double(r.theoretical_mean(i)) << ','
       << format_double(r.empirical_cov(i, i)) << ','
       << (r.theoretical_cov.size() > 0 ? format_double(r.theoretical_cov(i, i)) : std::string("nan")) << '\n';
  }
}

}  // namespace encavg
