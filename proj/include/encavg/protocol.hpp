// Full protocol runs: encrypted iterations with a plaintext leader, periodic
// tree resets, and the float / crypto-free integer reference pipelines that
// follow the identical schedule.
//
// Schedule: a round is k_iter iteration steps followed by h reset steps (h =
// tree height). The up-phase distance aggregation overlaps the first h steps of
// round 1, the r-th reset completes at step r (k_iter + h).
#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "encavg/estimation.hpp"
#include "encavg/fixed_point.hpp"
#include "encavg/graph.hpp"
#include "encavg/he.hpp"
#include "encavg/reset.hpp"

namespace encavg {

struct ProtocolConfig {
  std::int64_t s = 1000;
  double x1_bar = 1e4;
  int k_iter = 10;
  double w = 0.0;
  int max_rounds = 6;
  double term_eps = 1e-6;  // <= 0 disables early termination
  bool debug_decrypt = false;
  bool record_messages = true;
  bool retain_payloads = false;  // keep ciphertext payloads in the message log
  bool record_integers = false;  // keep the integer states of every step
  std::uint64_t seed = 1;
};

enum class Phase { iterate, reset_up, reset_down };
std::string_view to_string(Phase p);

enum class Pipeline { floating, integer, encrypted };
std::string_view to_string(Pipeline p);

struct StepRecord {
  int step = 0;
  int round = 1;
  Phase phase = Phase::iterate;
  int scale_exp = 1;
  double leader_state = 0.0;
  double leader_deviation = 0.0;
  double deviation = std::numeric_limits<double>::quiet_NaN();  // all agents, inf-norm
  Vector states;    // empty when follower states are not visible
  BigVector z;      // only with record_integers
  bool leader_overflow = false;
};

struct ResetEvent {
  int round = 0;
  int completion_step = 0;
  ResetPlan plan;
};

struct Transcript {
  Pipeline pipeline = Pipeline::floating;
  std::vector<StepRecord> steps;
  MessageLog messages{false};
  std::vector<ResetEvent> resets;
  std::string termination;  // "converged" or "max_rounds"
  int rounds_run = 0;
  Vector x_star;
  int tree_height = 0;
  double d_sum = 0.0;
  std::size_t leader_decryptions = 0;
  std::size_t debug_decryptions = 0;
  std::size_t follower_decryptions = 0;
  std::size_t overflow_events = 0;

  const StepRecord& final_step() const { return steps.back(); }
};

/// Everything derived from (graph, measurements, config) before a run.
struct ProtocolSetup {
  IntMatrix B;
  ResetTree tree;
  Dynamics dynamics;
  QuantizedDynamics qd;
  QuantizedMeasurements qm;
  DeltaModel delta;
  Vector x_star;
  Vector d;  // P^T y
  BigInt q;
  int overflow_budget = 0;  // largest k passing the overflow condition after a reset
};

/// Validates k_iter >= h and the overflow condition for every round (the bound on
/// post-reset states is x1_bar). Throws Error(InvalidConfig) or Error(OverflowBudgetViolation).
ProtocolSetup prepare_protocol(const MeasuredGraph& g, const MeasurementSet& m, const ProtocolConfig& cfg,
                               const BigInt& q);

/// Leader update in Z_q: sa_11 z1 + sum_j sa_1j z_j + s^k round(s^2 b_1), reduced
/// mod q and reconstructed. `neighbor_values` follows g.neighbors(0) and may hold
/// any representative of each residue. `overflow` reports |unreduced| >= q/2.
BigInt leader_update(const MeasuredGraph& g, const QuantizedDynamics& qd, const BigInt& z1,
                     const BigVector& neighbor_values, int k, const BigInt& q, bool* overflow = nullptr);

/// Encrypted run. Followers only touch ctx.public_context(); the leader decrypts.
Transcript run_encrypted(const ProtocolConfig& cfg, const MeasuredGraph& g, const MeasurementSet& m,
                         const HEContext& ctx);

struct ReferenceRuns {
  Transcript integer;
  Transcript floating;
};

/// Crypto-free integer pipeline (modulus only used for overflow flags) and the
/// real-valued pipeline on the same schedule.
ReferenceRuns run_plaintext_reference(const ProtocolConfig& cfg, const MeasuredGraph& g, const MeasurementSet& m,
                                      const BigInt& q);

/// Columns: step, round, phase, pipeline, agent, recovered_state, deviation.
/// Agents are 1-based; rows exist only for visible states.
void write_trajectory_csv_header(std::ostream& os);
void write_trajectory_csv(std::ostream& os, const Transcript& t, int max_round = 0);

}  // namespace encavg
