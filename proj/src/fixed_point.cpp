#include "encavg/fixed_point.hpp"

#include <cmath>

namespace encavg {

namespace {

constexpr double kMaxExactCoefficient = 9007199254740992.0;  // 2^53

std::int64_t quantize_entry(double scaled) {
  if (!std::isfinite(scaled) || std::abs(scaled) >= kMaxExactCoefficient)
    throw Error(Errc::InvalidConfig, "quantized coefficient exceeds 53 bits; reduce s");
  return static_cast<std::int64_t>(std::llround(scaled));
}

// (a + e)^j - a^j without cancellation for small e / a.
double power_gap(double a, double e, int j) {
  if (j == 0) return 0.0;
  if (a == 0.0) return std::pow(e, j);
  return std::pow(a, j) * std::expm1(j * std::log1p(e / a));
}

}  // namespace

QuantizedDynamics quantize_dynamics(const Dynamics& d, std::int64_t s) {
  if (s < 2) throw Error(Errc::InvalidConfig, "scaling factor s must be an integer >= 2");
  QuantizedDynamics qd;
  qd.s = s;
  const double sd = static_cast<double>(s);
  qd.sA = d.A.unaryExpr([&](double a) { return quantize_entry(sd * a); });
  qd.s2b = d.b.unaryExpr([&](double b) { return quantize_entry(sd * sd * b); });
  return qd;
}

BigInt integer_step_agent(const BigVector& z, const QuantizedDynamics& qd, int k, int agent) {
  BigInt acc = pow_int(qd.s, static_cast<unsigned>(k)) * static_cast<long>(qd.s2b(agent));
  const Index n = qd.sA.cols();
  for (Index j = 0; j < n; ++j) {
    const std::int64_t c = qd.sA(agent, j);
    if (c != 0) acc += z[j] * static_cast<long>(c);
  }
  return acc;
}

BigVector integer_step(const BigVector& z, const QuantizedDynamics& qd, int k) {
  if (static_cast<Index>(z.size()) != qd.sA.rows()) throw Error(Errc::InvalidConfig, "state dimension mismatch");
  BigVector next(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) next[i] = integer_step_agent(z, qd, k, static_cast<int>(i));
  return next;
}

Vector recover_state(const BigVector& z, int scale_exp, std::int64_t s) {
  if (scale_exp < 1) throw Error(Errc::InvalidConfig, "scale exponent must be >= 1");
  const BigInt scale = pow_int(s, static_cast<unsigned>(scale_exp));
  Vector x(static_cast<Index>(z.size()));
  for (std::size_t i = 0; i < z.size(); ++i) x(static_cast<Index>(i)) = ratio_to_double(z[i], scale);
  return x;
}

BigInt mod_reconstruct(const BigInt& z_prime, const BigInt& q) {
  // z' < q/2  <=>  2 z' < q
  if (2 * z_prime < q) return z_prime;
  return z_prime - q;
}

double delta_bound(int k, std::int64_t s, double A_inf_norm, double b_inf_norm, int nu) {
  const double sd = static_cast<double>(s);
  const double e = nu / (2.0 * sd);
  const double f = 1.0 / (2.0 * sd * sd);
  double total = 0.0;
  for (int j = 0; j < k; ++j)
    total += power_gap(A_inf_norm, e, j) * (b_inf_norm + f) + std::pow(A_inf_norm, j) * f;
  return total;
}

DeltaModel DeltaModel::from(const Dynamics& d, std::int64_t s, int max_degree) {
  DeltaModel m;
  m.s = s;
  m.A_inf_norm = d.A.cwiseAbs().rowwise().sum().maxCoeff();
  m.b_inf_norm = d.b.lpNorm<Eigen::Infinity>();
  m.nu = 1 + max_degree;
  return m;
}

double DeltaModel::after_reset(int k, double x0_inf_norm) const {
  const double sd = static_cast<double>(s);
  const double e = nu / (2.0 * sd);
  const double f = 1.0 / (2.0 * sd);
  return (*this)(k) + power_gap(A_inf_norm, e, k) * (x0_inf_norm + f) + std::pow(A_inf_norm, k) * f;
}

bool overflow_budget_holds(std::int64_t s, const BigInt& q, double x1_bar, double delta_k, int k) {
  const mpq_class magnitude(x1_bar + delta_k);  // exact conversion of the double
  const mpq_class lhs = mpq_class(pow_int(s, static_cast<unsigned>(k + 1))) * magnitude * 2;
  return lhs < mpq_class(q);
}

int max_iterations(std::int64_t s, const BigInt& q, double x1_bar, const std::function<double(int)>& delta) {
  if (s < 2) throw Error(Errc::InvalidConfig, "scaling factor s must be an integer >= 2");
  if (!(x1_bar > 0.0)) throw Error(Errc::InvalidConfig, "leader bound must be positive");
  if (!overflow_budget_holds(s, q, x1_bar, delta(1), 1))
    throw Error(Errc::NoIterationsPossible, "even a single iteration overflows the message space");
  int k = 1;
  // s^(k+1) x1_bar grows without bound, so the scan terminates.
  while (overflow_budget_holds(s, q, x1_bar, delta(k + 1), k + 1)) ++k;
  return k;
}

void FixedPointConfig::validate(const std::function<double(int)>& delta) const {
  if (s < 2) throw Error(Errc::InvalidConfig, "scaling factor s must be an integer >= 2");
  if (q <= 0) throw Error(Errc::InvalidConfig, "modulus q must be positive");
  if (!(x1_bar > 0.0)) throw Error(Errc::InvalidConfig, "leader bound must be positive");
  if (k_iter < 1) throw Error(Errc::InvalidConfig, "k_iter must be positive");
  int budget = 0;
  try {
    budget = max_iterations(s, q, x1_bar, delta);
  } catch (const Error& e) {
    if (e.code() != Errc::NoIterationsPossible) throw;
  }
  if (budget < k_iter)
    throw Error(Errc::OverflowBudgetViolation, "k_iter = " + std::to_string(k_iter) +
                                                   " exceeds the overflow-free budget of " + std::to_string(budget));
}

void DeltaDominanceReport::throw_if_violated() const {
  if (!violations.empty())
    throw Error(Errc::BoundViolation, "quantization deviation exceeds delta at k = " + std::to_string(violations.front()));
}

DeltaDominanceReport verify_delta_dominance(const std::vector<Vector>& trace_float,
                                            const std::vector<BigVector>& trace_int, std::int64_t s,
                                            const std::function<double(int)>& delta, int first_scale_exp) {
  if (trace_float.size() != trace_int.size()) throw Error(Errc::InvalidConfig, "trace lengths differ");
  DeltaDominanceReport report;
  for (std::size_t k = 0; k < trace_float.size(); ++k) {
    const int kk = static_cast<int>(k);
    const Vector recovered = recover_state(trace_int[k], kk + first_scale_exp, s);
    const double deviation = (recovered - trace_float[k]).lpNorm<Eigen::Infinity>();
    const double bound = delta(kk);
    report.max_deviation = std::max(report.max_deviation, deviation);
    if (bound > 0.0) report.max_ratio = std::max(report.max_ratio, deviation / bound);
    if (deviation > bound) report.violations.push_back(kk);
  }
  report.ok = report.violations.empty();
  return report;
}

}  // namespace encavg
