// Tree-based state resets: distance estimates along tree paths, the admissible
// reset shifts, and the encrypted bottom-up collection / top-down distribution.
#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "encavg/common.hpp"
#include "encavg/graph.hpp"
#include "encavg/he.hpp"

namespace encavg {

/// d = P^T y; d_i estimates x_1 - x_i and d_1 = 0.
Vector distances(const IntMatrix& P, const Vector& y);

enum class ResetKind { soft, hard };

std::string_view to_string(ResetKind kind);
ResetKind parse_reset_kind(std::string_view text);

/// Preset weights: soft -> 0, hard -> n - 1.
double reset_weight(ResetKind kind, int n);

struct ResetPlan {
  double w = 0.0;
  double x1 = 0.0;      // leader estimate the plan was built from
  double dx1 = 0.0;     // shift of the leader's own state
  double dxG = 0.0;     // shift of the copy handed to the followers
  double d_sum = 0.0;   // sum_{i>=2} d_i
  int n = 0;
  double leader_value = 0.0;   // x1 - dx1
  double follower_base = 0.0;  // x1 - dxG

  bool hard() const { return w == static_cast<double>(n - 1); }
};

/// (dx1, dxG) = (w, n-1) (n x1 - sum d) / ((n-1)^2 + w). Throws Error(NegativeWeight).
/// For w = n - 1 both targets are evaluated as sum d / n, so they do not depend on x1 at all.
ResetPlan compute_reset_shifts(double x1_hat, double d_sum, int n, double w);

/// Leader: x1 - dx1. Follower i: x1 - dxG - d_i.
Vector apply_reset_plaintext(const ResetPlan& plan, const Vector& d);

/// round(s y_e) per edge in lexicographic orientation. Each agent quantizes its own
/// view once; rounding is odd-symmetric so the two endpoints agree up to sign.
struct QuantizedMeasurements {
  Int64Vector edge;
  std::int64_t s = 0;

  /// round(s y_ij) from `agent`'s side of `edge`.
  std::int64_t seen_by(const MeasuredGraph& g, int agent, Index edge_index) const;
};

QuantizedMeasurements quantize_measurements(const Vector& y, std::int64_t s);

/// sum_{i>=2} p_i^T round(s y), the exact integer the leader should recover.
BigInt quantized_distance_sum(const IntMatrix& P, const QuantizedMeasurements& qm);

enum class Direction { iterate, up, down };
std::string_view to_string(Direction d);

struct MessageRecord {
  int step = 0;
  int from = 0;
  int to = 0;
  Direction direction = Direction::iterate;
  std::uint64_t ciphertext_id = 0;
};

/// Transcript of sent messages. Only ciphertext ids are logged; payloads are kept
/// solely when retain_payloads is set (used by privacy tests).
class MessageLog {
 public:
  explicit MessageLog(bool enabled = true, bool retain_payloads = false)
      : enabled_(enabled), retain_(retain_payloads) {}

  /// Registers a freshly produced ciphertext and returns its id.
  std::uint64_t issue(const Ciphertext& c);
  void record(int step, int from, int to, Direction direction, std::uint64_t ciphertext_id);

  bool enabled() const noexcept { return enabled_; }
  const std::vector<MessageRecord>& records() const noexcept { return records_; }
  const std::vector<BigInt>& payloads() const noexcept { return payloads_; }
  std::size_t count(Direction d) const;

 private:
  bool enabled_;
  bool retain_;
  std::uint64_t next_id_ = 1;
  std::vector<MessageRecord> records_;
  std::vector<BigInt> payloads_;  // indexed by id - 1 when retained
};

/// Bottom-up encrypted aggregation of sum_i p_i^T round(s y).
///
/// Node i sends Enc(t_i round(s y_{parent,i}) mod q) combined (+) with everything
/// received from its children, where t_i is its subtree size. Leaves send in the
/// first step; an inner node sends one step after its last child's message arrived,
/// so the leader holds the sum after exactly `height` steps.
class UpwardAggregation {
 public:
  UpwardAggregation(const MeasuredGraph& g, const ResetTree& tree, const HEContext& public_ctx,
                    const QuantizedMeasurements& qm);

  /// Advances one synchronous step (no-op once complete).
  void step(int global_step, Rng& rng, MessageLog* log);
  bool complete() const noexcept { return complete_; }
  int steps_taken() const noexcept { return steps_; }
  /// Aggregate received by the leader. Throws Error(TreeInconsistency) before completion.
  const Ciphertext& leader_payload() const;

 private:
  const MeasuredGraph* g_;
  const ResetTree* tree_;
  HEContext ctx_;
  const QuantizedMeasurements* qm_;
  std::vector<int> pending_children_;
  std::vector<std::optional<Ciphertext>> inbox_;
  std::vector<bool> sent_;
  bool complete_ = false;
  int steps_ = 0;
  Ciphertext leader_sum_;
};

/// Runs the aggregation to completion and returns the leader's ciphertext.
Ciphertext collect_distances_encrypted(const MeasuredGraph& g, const ResetTree& tree, const HEContext& public_ctx,
                                       const QuantizedMeasurements& qm, Rng& rng, MessageLog* log = nullptr,
                                       int first_step = 1);

/// Leader side: decrypt, reconstruct and divide by s.
double decode_distance_sum(const HEContext& leader_ctx, const Ciphertext& aggregate, std::int64_t s);

/// Top-down encrypted reset distribution.
///
/// The leader sends Enc(base - round(s y_{1,c})) to each child c, where
/// base = round(s (x1 - dxG)); every follower adds Enc(-round(s y_{i,c})) for each
/// of its children. Agents at depth t hold their reset state after step t.
class DownwardDistribution {
 public:
  DownwardDistribution(const MeasuredGraph& g, const ResetTree& tree, const HEContext& public_ctx,
                       const QuantizedMeasurements& qm, BigInt base);

  void step(int global_step, Rng& rng, MessageLog* log);
  bool complete() const noexcept { return complete_; }
  int steps_taken() const noexcept { return steps_; }
  /// Reset ciphertexts; entry 0 (leader) is empty.
  const std::vector<std::optional<Ciphertext>>& states() const noexcept { return held_; }

 private:
  const MeasuredGraph* g_;
  const ResetTree* tree_;
  HEContext ctx_;
  const QuantizedMeasurements* qm_;
  BigInt base_;
  std::vector<std::optional<Ciphertext>> held_;
  bool complete_ = false;
  int steps_ = 0;
};

struct EncryptedReset {
  BigInt leader_z;                   // round(s (x1 - dx1)), plaintext at the leader
  BigInt follower_base;              // round(s (x1 - dxG))
  std::vector<Ciphertext> followers; // entry 0 unused
  int steps = 0;
};

/// Runs the distribution for `plan` to completion (exactly tree.height steps).
EncryptedReset distribute_reset_encrypted(const MeasuredGraph& g, const ResetTree& tree,
                                          const HEContext& public_ctx, const ResetPlan& plan, std::int64_t s,
                                          const QuantizedMeasurements& qm, Rng& rng, MessageLog* log = nullptr,
                                          int first_step = 1);

/// Crypto-free counterpart: z_1 = round(s leader_value), z_i = round(s follower_base) - p_i^T round(s y).
BigVector reset_integer_states(const ResetPlan& plan, const IntMatrix& P, const QuantizedMeasurements& qm,
                               std::int64_t s);

}  // namespace encavg
