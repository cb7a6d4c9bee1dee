#include "encavg/reset.hpp"

#include "encavg/fixed_point.hpp"

namespace encavg {

Vector distances(const IntMatrix& P, const Vector& y) { return P.cast<double>().transpose() * y; }

std::string_view to_string(ResetKind kind) { return kind == ResetKind::soft ? "soft" : "hard"; }

ResetKind parse_reset_kind(std::string_view text) {
  if (text == "soft") return ResetKind::soft;
  if (text == "hard") return ResetKind::hard;
  throw Error(Errc::InvalidConfig, "unknown reset kind '" + std::string(text) + "' (expected soft or hard)");
}

double reset_weight(ResetKind kind, int n) { return kind == ResetKind::soft ? 0.0 : static_cast<double>(n - 1); }

ResetPlan compute_reset_shifts(double x1_hat, double d_sum, int n, double w) {
  if (!(w >= 0.0)) throw Error(Errc::NegativeWeight, "reset weight must be non-negative");
  if (n < 2) throw Error(Errc::InvalidConfig, "resets need at least one follower");
  ResetPlan plan;
  plan.w = w;
  plan.x1 = x1_hat;
  plan.d_sum = d_sum;
  plan.n = n;
  const double m = static_cast<double>(n - 1);
  const double excess = n * x1_hat - d_sum;
  const double denom = m * m + w;
  plan.dx1 = w / denom * excess;
  plan.dxG = m / denom * excess;
  if (w == m) {
    plan.leader_value = d_sum / n;
    plan.follower_base = plan.leader_value;
  } else {
    plan.leader_value = x1_hat - plan.dx1;
    plan.follower_base = x1_hat - plan.dxG;
  }
  return plan;
}

Vector apply_reset_plaintext(const ResetPlan& plan, const Vector& d) {
  Vector x = Vector::Constant(d.size(), plan.follower_base) - d;
  x(0) = plan.leader_value;
  return x;
}

std::int64_t QuantizedMeasurements::seen_by(const MeasuredGraph& g, int agent, Index edge_index) const {
  const Edge& e = g.edges().at(edge_index);
  if (agent == e.i) return edge(edge_index);
  if (agent == e.j) return -edge(edge_index);
  throw Error(Errc::TreeInconsistency, "agent is not an endpoint of the edge");
}

QuantizedMeasurements quantize_measurements(const Vector& y, std::int64_t s) {
  if (s < 2) throw Error(Errc::InvalidConfig, "scaling factor s must be an integer >= 2");
  QuantizedMeasurements qm;
  qm.s = s;
  qm.edge = y.unaryExpr([&](double v) { return static_cast<std::int64_t>(std::llround(static_cast<double>(s) * v)); });
  return qm;
}

BigInt quantized_distance_sum(const IntMatrix& P, const QuantizedMeasurements& qm) {
  BigInt total = 0;
  for (Index i = 1; i < P.cols(); ++i)
    for (Index e = 0; e < P.rows(); ++e)
      if (P(e, i) != 0) total += static_cast<long>(P(e, i) * qm.edge(e));
  return total;
}

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::iterate: return "iterate";
    case Direction::up: return "up";
    case Direction::down: return "down";
  }
  return "?";
}

std::uint64_t MessageLog::issue(const Ciphertext& c) {
  if (retain_) payloads_.push_back(c.payload);
  return next_id_++;
}

void MessageLog::record(int step, int from, int to, Direction direction, std::uint64_t ciphertext_id) {
  if (enabled_) records_.push_back({step, from, to, direction, ciphertext_id});
}

std::size_t MessageLog::count(Direction d) const {
  std::size_t c = 0;
  for (const auto& r : records_) c += r.direction == d;
  return c;
}

UpwardAggregation::UpwardAggregation(const MeasuredGraph& g, const ResetTree& tree, const HEContext& public_ctx,
                                     const QuantizedMeasurements& qm)
    : g_(&g), tree_(&tree), ctx_(public_ctx), qm_(&qm) {
  const int n = g.num_agents();
  if (static_cast<int>(tree.parent.size()) != n) throw Error(Errc::TreeInconsistency, "tree and graph sizes differ");
  pending_children_.resize(n);
  for (int i = 0; i < n; ++i) pending_children_[i] = static_cast<int>(tree.children[i].size());
  inbox_.assign(n, std::nullopt);
  sent_.assign(n, false);
  complete_ = n == 1;
}

void UpwardAggregation::step(int global_step, Rng& rng, MessageLog* log) {
  if (complete_) return;
  ++steps_;
  const int n = g_->num_agents();
  struct Delivery {
    int to;
    Ciphertext payload;
  };
  std::vector<Delivery> deliveries;
  for (int i = 1; i < n; ++i) {
    if (sent_[i] || pending_children_[i] > 0) continue;
    const int parent = tree_->parent[i];
    if (parent < 0) throw Error(Errc::TreeInconsistency, "follower without parent");
    // the parent's view of the tree edge: y_{parent,i} = -y_{i,parent}
    const std::int64_t own = -qm_->seen_by(*g_, i, tree_->parent_edge[i]);
    const BigInt contribution = BigInt(static_cast<long>(own)) * tree_->subtree_size[i];
    Ciphertext msg = enc(ctx_, encode_signed(contribution, ctx_.modulus()), rng);
    if (inbox_[i]) msg = add_ct(ctx_, msg, *inbox_[i]);
    const std::uint64_t id = log ? log->issue(msg) : 0;
    if (log) log->record(global_step, i, parent, Direction::up, id);
    deliveries.push_back({parent, std::move(msg)});
    sent_[i] = true;
  }
  for (auto& d : deliveries) {
    if (pending_children_[d.to] <= 0) throw Error(Errc::TreeInconsistency, "unexpected message from a non-child");
    inbox_[d.to] = inbox_[d.to] ? add_ct(ctx_, *inbox_[d.to], d.payload) : std::move(d.payload);
    --pending_children_[d.to];
  }
  if (pending_children_[0] == 0) {
    leader_sum_ = inbox_[0] ? *inbox_[0] : enc(ctx_, BigInt(0), rng);
    complete_ = true;
  }
}

const Ciphertext& UpwardAggregation::leader_payload() const {
  if (!complete_) throw Error(Errc::TreeInconsistency, "aggregation has not reached the leader yet");
  return leader_sum_;
}

Ciphertext collect_distances_encrypted(const MeasuredGraph& g, const ResetTree& tree, const HEContext& public_ctx,
                                       const QuantizedMeasurements& qm, Rng& rng, MessageLog* log, int first_step) {
  UpwardAggregation up(g, tree, public_ctx, qm);
  for (int step = first_step; !up.complete(); ++step) {
    if (up.steps_taken() > g.num_agents()) throw Error(Errc::TreeInconsistency, "aggregation does not terminate");
    up.step(step, rng, log);
  }
  return up.leader_payload();
}

double decode_distance_sum(const HEContext& leader_ctx, const Ciphertext& aggregate, std::int64_t s) {
  const BigInt signed_sum = mod_reconstruct(dec(leader_ctx, aggregate), leader_ctx.modulus());
  return ratio_to_double(signed_sum, BigInt(static_cast<long>(s)));
}

DownwardDistribution::DownwardDistribution(const MeasuredGraph& g, const ResetTree& tree, const HEContext& public_ctx,
                                           const QuantizedMeasurements& qm, BigInt base)
    : g_(&g), tree_(&tree), ctx_(public_ctx), qm_(&qm), base_(std::move(base)) {
  held_.assign(g.num_agents(), std::nullopt);
  complete_ = g.num_agents() == 1;
}

void DownwardDistribution::step(int global_step, Rng& rng, MessageLog* log) {
  if (complete_) return;
  ++steps_;
  const int n = g_->num_agents();
  const int sender_depth = steps_ - 1;
  std::vector<std::pair<int, Ciphertext>> deliveries;
  for (int i = 0; i < n; ++i) {
    if (tree_->depth[i] != sender_depth) continue;
    for (int child : tree_->children[i]) {
      const std::int64_t edge_term = qm_->seen_by(*g_, i, tree_->parent_edge[child]);
      Ciphertext msg;
      if (i == 0) {
        msg = enc(ctx_, encode_signed(base_ - static_cast<long>(edge_term), ctx_.modulus()), rng);
      } else {
        if (!held_[i]) throw Error(Errc::TreeInconsistency, "inner node has not received its reset state");
        const Ciphertext own = enc(ctx_, encode_signed(BigInt(static_cast<long>(-edge_term)), ctx_.modulus()), rng);
        msg = add_ct(ctx_, *held_[i], own);
      }
      const std::uint64_t id = log ? log->issue(msg) : 0;
      if (log) log->record(global_step, i, child, Direction::down, id);
      deliveries.emplace_back(child, std::move(msg));
    }
  }
  for (auto& [to, payload] : deliveries) {
    if (held_[to]) throw Error(Errc::TreeInconsistency, "follower received two reset messages");
    held_[to] = std::move(payload);
  }
  complete_ = true;
  for (int i = 1; i < n; ++i) complete_ = complete_ && held_[i].has_value();
}

EncryptedReset distribute_reset_encrypted(const MeasuredGraph& g, const ResetTree& tree, const HEContext& public_ctx,
                                          const ResetPlan& plan, std::int64_t s, const QuantizedMeasurements& qm,
                                          Rng& rng, MessageLog* log, int first_step) {
  const double sd = static_cast<double>(s);
  EncryptedReset out;
  out.leader_z = round_to_int(sd * plan.leader_value);
  out.follower_base = round_to_int(sd * plan.follower_base);
  DownwardDistribution down(g, tree, public_ctx, qm, out.follower_base);
  for (int step = first_step; !down.complete(); ++step) {
    if (down.steps_taken() > g.num_agents()) throw Error(Errc::TreeInconsistency, "distribution does not terminate");
    down.step(step, rng, log);
  }
  out.steps = down.steps_taken();
  out.followers.resize(g.num_agents());
  for (int i = 1; i < g.num_agents(); ++i) out.followers[i] = *down.states()[i];
  return out;
}

BigVector reset_integer_states(const ResetPlan& plan, const IntMatrix& P, const QuantizedMeasurements& qm,
                               std::int64_t s) {
  const double sd = static_cast<double>(s);
  const Index n = P.cols();
  BigVector z(n);
  z[0] = round_to_int(sd * plan.leader_value);
  const BigInt base = round_to_int(sd * plan.follower_base);
  for (Index i = 1; i < n; ++i) {
    BigInt path = 0;
    for (Index e = 0; e < P.rows(); ++e)
      if (P(e, i) != 0) path += static_cast<long>(P(e, i) * qm.edge(e));
    z[i] = base - path;
  }
  return z;
}

}  // namespace encavg
