// Integer-scaled affine averaging, state recovery, modular reconstruction,
// overflow budgeting and the worst-case quantization error bound.
//
// After k iterations from a (re)initialized state, z(k) ~ s^(k+1) x(k). The
// coefficients are quantized once as round(s A) and round(s^2 b), with ties
// rounded away from zero.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "encavg/common.hpp"
#include "encavg/estimation.hpp"

namespace encavg {

/// Nearest-integer quantization of the affine iteration.
struct QuantizedDynamics {
  Int64Matrix sA;   // round(s * A)
  Int64Vector s2b;  // round(s^2 * b)
  std::int64_t s = 0;
};

/// Throws Error(InvalidConfig) for s < 2 or coefficients that do not fit 53 bits.
QuantizedDynamics quantize_dynamics(const Dynamics& d, std::int64_t s);

/// z(k+1) = round(sA) z(k) + s^k round(s^2 b), exact integer arithmetic.
BigVector integer_step(const BigVector& z, const QuantizedDynamics& qd, int k);

/// One agent's row of integer_step, evaluated from its local coefficients only.
BigInt integer_step_agent(const BigVector& z, const QuantizedDynamics& qd, int k, int agent);

/// z / s^scale_exp elementwise.
Vector recover_state(const BigVector& z, int scale_exp, std::int64_t s);

/// Signed representative of z' in Z_q: z' if z' < q/2, else z' - q.
BigInt mod_reconstruct(const BigInt& z_prime, const BigInt& q);

/// Worst-case bound on ||z(k)/s^(k+1) - x(k)||_inf for a round started from zero.
///
/// delta(k) = sum_{j<k} (||A|| + nu/(2s))^j (||b|| + 1/(2s^2)) - ||A||^j ||b||,
/// with nu = 1 + maximal degree (nonzeros per row of A).
double delta_bound(int k, std::int64_t s, double A_inf_norm, double b_inf_norm, int nu);

/// Parameters of delta_bound bundled for one Dynamics.
struct DeltaModel {
  std::int64_t s = 0;
  double A_inf_norm = 0.0;
  double b_inf_norm = 0.0;
  int nu = 1;

  static DeltaModel from(const Dynamics& d, std::int64_t s, int max_degree);

  double operator()(int k) const { return delta_bound(k, s, A_inf_norm, b_inf_norm, nu); }

  /// Bound for a round started from a quantized state round(s x0) instead of zero:
  /// delta(k) + (||A|| + nu/(2s))^k (||x0|| + 1/(2s)) - ||A||^k ||x0||.
  double after_reset(int k, double x0_inf_norm) const;
};

/// Largest k with s^(k+1) (x1_bar + delta(k)) < q/2, by forward scan.
/// Throws Error(NoIterationsPossible) if k = 1 already violates the condition.
int max_iterations(std::int64_t s, const BigInt& q, double x1_bar, const std::function<double(int)>& delta);

/// Exact test of s^(k+1) (x1_bar + delta_k) < q/2.
bool overflow_budget_holds(std::int64_t s, const BigInt& q, double x1_bar, double delta_k, int k);

struct FixedPointConfig {
  std::int64_t s = 1000;
  BigInt q;
  double x1_bar = 1e4;
  int k_iter = 10;

  /// Throws Error(InvalidConfig) or Error(OverflowBudgetViolation).
  void validate(const std::function<double(int)>& delta) const;
};

struct DeltaDominanceReport {
  bool ok = true;
  double max_ratio = 0.0;          // max over k of deviation / delta(k) (k >= 1)
  double max_deviation = 0.0;
  std::vector<int> violations;     // offending k

  /// Throws Error(BoundViolation) naming the first offending k.
  void throw_if_violated() const;
};

/// Checks ||z(k)/s^(k+first_scale_exp) - x(k)||_inf <= delta(k) step by step.
/// trace_float[k] and trace_int[k] must belong to the same iteration k of one round.
DeltaDominanceReport verify_delta_dominance(const std::vector<Vector>& trace_float,
                                            const std::vector<BigVector>& trace_int, std::int64_t s,
                                            const std::function<double(int)>& delta, int first_scale_exp = 1);

}  // namespace encavg
