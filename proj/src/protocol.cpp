#include "encavg/protocol.hpp"

#include <cmath>
#include <ostream>

namespace encavg {

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::iterate: return "iterate";
    case Phase::reset_up: return "reset_up";
    case Phase::reset_down: return "reset_down";
  }
  return "?";
}

std::string_view to_string(Pipeline p) {
  switch (p) {
    case Pipeline::floating: return "float";
    case Pipeline::integer: return "integer";
    case Pipeline::encrypted: return "encrypted";
  }
  return "?";
}

ProtocolSetup prepare_protocol(const MeasuredGraph& g, const MeasurementSet& m, const ProtocolConfig& cfg,
                               const BigInt& q) {
  if (g.num_agents() < 2) throw Error(Errc::InvalidConfig, "the protocol needs at least two agents");
  if (cfg.k_iter < 1) throw Error(Errc::InvalidConfig, "k_iter must be positive");
  if (cfg.max_rounds < 1) throw Error(Errc::InvalidConfig, "max_rounds must be positive");
  if (!(cfg.w >= 0.0)) throw Error(Errc::NegativeWeight, "reset weight must be non-negative");
  if (m.y.size() != g.num_edges()) throw Error(Errc::InvalidConfig, "one measurement per edge is required");

  ProtocolSetup setup;
  setup.B = incidence_matrix(g);
  setup.tree = build_reset_tree(g, setup.B);
  if (cfg.k_iter < setup.tree.height)
    throw Error(Errc::InvalidConfig, "k_iter = " + std::to_string(cfg.k_iter) + " is below the tree height " +
                                         std::to_string(setup.tree.height) +
                                         "; the distance aggregation must finish within the first round");
  const Vector sigma = g.sigma();
  const Matrix L = laplacian(setup.B, sigma);
  setup.dynamics = build_dynamics(setup.B, sigma, m.y, step_size(L));
  setup.qd = quantize_dynamics(setup.dynamics, cfg.s);
  setup.qm = quantize_measurements(m.y, cfg.s);
  setup.delta = DeltaModel::from(setup.dynamics, cfg.s, g.max_degree());
  setup.x_star = centralized_solution(setup.B, sigma, m.y);
  setup.d = distances(setup.tree.P, m.y);
  setup.q = q;

  FixedPointConfig fp;
  fp.s = cfg.s;
  fp.q = q;
  fp.x1_bar = cfg.x1_bar;
  fp.k_iter = cfg.k_iter;
  const DeltaModel delta = setup.delta;
  const double x1_bar = cfg.x1_bar;
  // the reset bound dominates the zero-start bound, so one check covers all rounds
  const auto round_delta = [delta, x1_bar](int k) { return delta.after_reset(k, x1_bar); };
  fp.validate(round_delta);
  setup.overflow_budget = max_iterations(cfg.s, q, cfg.x1_bar, round_delta);
  return setup;
}

BigInt leader_update(const MeasuredGraph& g, const QuantizedDynamics& qd, const BigInt& z1,
                     const BigVector& neighbor_values, int k, const BigInt& q, bool* overflow) {
  const auto& nbrs = g.neighbors(0);
  if (neighbor_values.size() != nbrs.size()) throw Error(Errc::InvalidConfig, "one value per leader neighbor expected");
  BigInt acc = pow_int(qd.s, static_cast<unsigned>(k)) * static_cast<long>(qd.s2b(0));
  acc += z1 * static_cast<long>(qd.sA(0, 0));
  for (std::size_t j = 0; j < nbrs.size(); ++j) acc += neighbor_values[j] * static_cast<long>(qd.sA(0, nbrs[j].agent));
  if (overflow) {
    const BigInt magnitude = abs(acc);
    *overflow = 2 * magnitude >= q;
  }
  return mod_reconstruct(encode_signed(acc, q), q);
}

namespace {

// Drives one pipeline through rounds of iterations and resets.
//
// A pipeline provides:
//   iterate(k, step)            one synchronous iteration, round-relative k
//   up_step(step)               one step of the distance aggregation (round 1)
//   up_complete()
//   leader_estimate(scale_exp)  leader's recovered state
//   visible_states(scale_exp)   all recovered states, or nullopt
//   integers()                  integer states for record_integers, or nullopt
//   d_sum()                     leader's distance sum once aggregation finished
//   begin_reset(plan), down_step(step), down_complete(), finish_reset()
//   last_overflow()             leader overflow flag of the last iteration
template <typename Pipe>
void drive(Pipe& pipe, const ProtocolConfig& cfg, const ProtocolSetup& setup, int n, Transcript& t) {
  const int h = setup.tree.height;
  t.x_star = setup.x_star;
  t.tree_height = h;

  const auto record = [&](int step, int round, Phase phase, int scale_exp) {
    StepRecord rec;
    rec.step = step;
    rec.round = round;
    rec.phase = phase;
    rec.scale_exp = scale_exp;
    rec.leader_state = pipe.leader_estimate(scale_exp);
    rec.leader_deviation = std::abs(rec.leader_state - setup.x_star(0));
    if (auto states = pipe.visible_states(scale_exp)) {
      rec.deviation = (*states - setup.x_star).template lpNorm<Eigen::Infinity>();
      rec.states = std::move(*states);
    }
    if (cfg.record_integers) {
      if (auto z = pipe.integers()) rec.z = std::move(*z);
    }
    rec.leader_overflow = phase != Phase::reset_down && step > 0 && pipe.last_overflow();
    t.overflow_events += rec.leader_overflow;
    t.steps.push_back(std::move(rec));
  };

  record(0, 1, Phase::iterate, 1);
  int step = 0;
  t.termination = "max_rounds";
  for (int round = 1; round <= cfg.max_rounds; ++round) {
    t.rounds_run = round;
    double previous = pipe.leader_estimate(1);
    for (int k = 0; k < cfg.k_iter; ++k) {
      ++step;
      if (k > 0) previous = t.steps.back().leader_state;
      const bool aggregating = round == 1 && step <= h;
      if (round == 1 && !pipe.up_complete()) pipe.up_step(step);
      pipe.iterate(k, step);
      record(step, round, aggregating ? Phase::reset_up : Phase::iterate, k + 2);
    }
    if (round == 1) {
      if (!pipe.up_complete()) throw Error(Errc::TreeInconsistency, "distance aggregation did not finish in round 1");
      t.d_sum = pipe.d_sum();
    }
    const int scale_exp = cfg.k_iter + 1;
    const double x1_check = pipe.leader_estimate(scale_exp);
    if (cfg.term_eps > 0.0 && std::abs(x1_check - previous) < cfg.term_eps) {
      t.termination = "converged";
      break;
    }
    if (round == cfg.max_rounds) break;

    const ResetPlan plan = compute_reset_shifts(x1_check, t.d_sum, n, cfg.w);
    pipe.begin_reset(plan);
    bool applied = false;
    for (int r = 0; r < h; ++r) {
      ++step;
      pipe.down_step(step);
      if (pipe.down_complete()) {
        pipe.finish_reset();
        applied = true;
        record(step, round, Phase::reset_down, 1);
        break;
      }
      record(step, round, Phase::reset_down, scale_exp);
    }
    if (!applied) throw Error(Errc::TreeInconsistency, "reset distribution exceeded the tree height");
    t.resets.push_back({round, step, plan});
  }
}

class FloatPipe {
 public:
  FloatPipe(const ProtocolSetup& setup, int n) : setup_(setup), x_(Vector::Zero(n)) {}

  void iterate(int, int) { x_ = affine_step(x_, setup_.dynamics); }
  void up_step(int) {}
  bool up_complete() const { return true; }
  double leader_estimate(int) const { return x_(0); }
  std::optional<Vector> visible_states(int) const { return x_; }
  std::optional<BigVector> integers() const { return std::nullopt; }
  double d_sum() const { return setup_.d.sum(); }
  void begin_reset(const ResetPlan& plan) { plan_ = plan; }
  void down_step(int) { ++down_; }
  bool down_complete() const { return down_ >= setup_.tree.height; }
  void finish_reset() {
    x_ = apply_reset_plaintext(plan_, setup_.d);
    down_ = 0;
  }
  bool last_overflow() const { return false; }

 private:
  const ProtocolSetup& setup_;
  Vector x_;
  ResetPlan plan_;
  int down_ = 0;
};

class IntegerPipe {
 public:
  IntegerPipe(const ProtocolSetup& setup, int n) : setup_(setup), z_(n, BigInt(0)) {}

  void iterate(int k, int) {
    z_ = integer_step(z_, setup_.qd, k);
    overflow_ = 2 * abs(z_[0]) >= setup_.q;
  }
  void up_step(int) {}
  bool up_complete() const { return true; }
  double leader_estimate(int scale_exp) const {
    return ratio_to_double(z_[0], pow_int(setup_.qd.s, static_cast<unsigned>(scale_exp)));
  }
  std::optional<Vector> visible_states(int scale_exp) const { return recover_state(z_, scale_exp, setup_.qd.s); }
  std::optional<BigVector> integers() const { return z_; }
  double d_sum() const {
    return ratio_to_double(quantized_distance_sum(setup_.tree.P, setup_.qm), BigInt(static_cast<long>(setup_.qm.s)));
  }
  void begin_reset(const ResetPlan& plan) { plan_ = plan; }
  void down_step(int) { ++down_; }
  bool down_complete() const { return down_ >= setup_.tree.height; }
  void finish_reset() {
    z_ = reset_integer_states(plan_, setup_.tree.P, setup_.qm, setup_.qd.s);
    down_ = 0;
  }
  bool last_overflow() const { return overflow_; }

 private:
  const ProtocolSetup& setup_;
  BigVector z_;
  ResetPlan plan_;
  int down_ = 0;
  bool overflow_ = false;
};

class EncryptedPipe {
 public:
  EncryptedPipe(const ProtocolSetup& setup, const MeasuredGraph& g, const HEContext& leader_ctx,
                const ProtocolConfig& cfg, Transcript& t)
      : setup_(setup),
        g_(g),
        leader_ctx_(leader_ctx),
        public_ctx_(leader_ctx.public_context()),
        cfg_(cfg),
        t_(t),
        rng_(derive_seed(cfg.seed, 0x5eed)),
        z1_(0),
        up_(g, setup.tree, public_ctx_, setup.qm) {
    const int n = g.num_agents();
    // every agent starts from Enc(0)
    ct_.resize(n);
    for (int i = 1; i < n; ++i) ct_[i] = enc(public_ctx_, BigInt(0), rng_);
  }

  void iterate(int k, int step) {
    const int n = g_.num_agents();
    const BigInt& q = public_ctx_.modulus();
    MessageLog* log = log_ptr();

    // leader publishes a fresh encryption of its own state
    const Ciphertext leader_ct = enc(public_ctx_, encode_signed(z1_, q), rng_);
    const std::uint64_t leader_id = log ? log->issue(leader_ct) : 0;
    std::vector<std::uint64_t> ids(n, 0);
    if (log)
      for (int i = 1; i < n; ++i) ids[i] = log->issue(ct_[i]);
    const auto view = [&](int agent) -> const Ciphertext& { return agent == 0 ? leader_ct : ct_[agent]; };
    if (log) {
      for (int i = 0; i < n; ++i)
        for (const Neighbor& nb : g_.neighbors(i))
          log->record(step, i, nb.agent, Direction::iterate, i == 0 ? leader_id : ids[i]);
    }

    // followers: homomorphic row of the iteration on ciphertexts only
    std::vector<Ciphertext> next(n);
    const BigInt sk = pow_int(setup_.qd.s, static_cast<unsigned>(k));
    for (int i = 1; i < n; ++i) {
      Ciphertext acc = mul_plain(public_ctx_, encode_signed(BigInt(static_cast<long>(setup_.qd.sA(i, i))), q), ct_[i]);
      for (const Neighbor& nb : g_.neighbors(i)) {
        const std::int64_t c = setup_.qd.sA(i, nb.agent);
        if (c == 0) continue;
        acc = add_ct(public_ctx_, acc,
                     mul_plain(public_ctx_, encode_signed(BigInt(static_cast<long>(c)), q), view(nb.agent)));
      }
      const BigInt affine = sk * static_cast<long>(setup_.qd.s2b(i));
      acc = add_ct(public_ctx_, acc, enc(public_ctx_, encode_signed(affine, q), rng_));
      next[i] = std::move(acc);
    }

    // leader: decrypts what its neighbors sent and updates in plaintext
    BigVector received;
    for (const Neighbor& nb : g_.neighbors(0)) {
      received.push_back(mod_reconstruct(dec(leader_ctx_, view(nb.agent)), q));
      ++t_.leader_decryptions;
    }
    z1_ = leader_update(g_, setup_.qd, z1_, received, k, q, &overflow_);
    ct_ = std::move(next);
    debug_cache_.reset();
  }

  void up_step(int step) { up_.step(step, rng_, log_ptr()); }
  bool up_complete() const { return up_.complete(); }

  double leader_estimate(int scale_exp) const {
    return ratio_to_double(z1_, pow_int(setup_.qd.s, static_cast<unsigned>(scale_exp)));
  }

  std::optional<Vector> visible_states(int scale_exp) {
    if (!cfg_.debug_decrypt) return std::nullopt;
    return recover_state(debug_integers(), scale_exp, setup_.qd.s);
  }

  std::optional<BigVector> integers() {
    if (!cfg_.debug_decrypt) return BigVector{z1_};
    return debug_integers();
  }

  double d_sum() {
    if (!d_sum_) {
      d_sum_ = decode_distance_sum(leader_ctx_, up_.leader_payload(), setup_.qm.s);
      ++t_.leader_decryptions;
    }
    return *d_sum_;
  }

  void begin_reset(const ResetPlan& plan) {
    const double sd = static_cast<double>(setup_.qd.s);
    pending_leader_ = round_to_int(sd * plan.leader_value);
    down_.emplace(g_, setup_.tree, public_ctx_, setup_.qm, round_to_int(sd * plan.follower_base));
  }
  void down_step(int step) { down_->step(step, rng_, log_ptr()); }
  bool down_complete() const { return down_ && down_->complete(); }
  void finish_reset() {
    for (int i = 1; i < g_.num_agents(); ++i) ct_[i] = *down_->states()[i];
    z1_ = pending_leader_;
    down_.reset();
    debug_cache_.reset();
  }
  bool last_overflow() const { return overflow_; }

 private:
  MessageLog* log_ptr() { return cfg_.record_messages ? &t_.messages : nullptr; }

  // Test-mode view of every follower state; counted separately from protocol decryptions.
  BigVector debug_integers() {
    if (debug_cache_) return *debug_cache_;
    BigVector z(g_.num_agents());
    z[0] = z1_;
    for (int i = 1; i < g_.num_agents(); ++i) {
      z[i] = mod_reconstruct(dec(leader_ctx_, ct_[i]), public_ctx_.modulus());
      ++t_.debug_decryptions;
    }
    debug_cache_ = z;
    return z;
  }

  const ProtocolSetup& setup_;
  const MeasuredGraph& g_;
  const HEContext& leader_ctx_;
  HEContext public_ctx_;
  const ProtocolConfig& cfg_;
  Transcript& t_;
  Rng rng_;
  BigInt z1_;
  std::vector<Ciphertext> ct_;
  UpwardAggregation up_;
  std::optional<DownwardDistribution> down_;
  std::optional<double> d_sum_;
  BigInt pending_leader_;
  std::optional<BigVector> debug_cache_;
  bool overflow_ = false;
};

}  // namespace

Transcript run_encrypted(const ProtocolConfig& cfg, const MeasuredGraph& g, const MeasurementSet& m,
                         const HEContext& ctx) {
  if (!ctx.has_secret_key()) throw Error(Errc::MissingSecretKey, "the leader needs the secret key");
  const ProtocolSetup setup = prepare_protocol(g, m, cfg, ctx.modulus());
  Transcript t;
  t.pipeline = Pipeline::encrypted;
  t.messages = MessageLog(cfg.record_messages, cfg.retain_payloads);
  EncryptedPipe pipe(setup, g, ctx, cfg, t);
  drive(pipe, cfg, setup, g.num_agents(), t);
  return t;
}

ReferenceRuns run_plaintext_reference(const ProtocolConfig& cfg, const MeasuredGraph& g, const MeasurementSet& m,
                                      const BigInt& q) {
  const ProtocolSetup setup = prepare_protocol(g, m, cfg, q);
  ReferenceRuns runs;
  runs.integer.pipeline = Pipeline::integer;
  runs.floating.pipeline = Pipeline::floating;
  IntegerPipe ip(setup, g.num_agents());
  drive(ip, cfg, setup, g.num_agents(), runs.integer);
  FloatPipe fp(setup, g.num_agents());
  drive(fp, cfg, setup, g.num_agents(), runs.floating);
  return runs;
}

void write_trajectory_csv_header(std::ostream& os) {
  os << "step,round,phase,pipeline,agent,recovered_state,deviation\n";
}

void write_trajectory_csv(std::ostream& os, const Transcript& t, int max_round) {
  for (const StepRecord& r : t.steps) {
    if (max_round > 0 && r.round > max_round) break;
    const auto row = [&](int agent, double value) {
      os << r.step << ',' << r.round << ',' << to_string(r.phase) << ',' << to_string(t.pipeline) << ','
         << agent + 1 << ',' << format_double(value) << ',' << format_double(std::abs(value - t.x_star(agent)))
         << '\n';
    };
    if (r.states.size() > 0) {
      for (Index i = 0; i < r.states.size(); ++i) row(static_cast<int>(i), r.states(i));
    } else {
      row(0, r.leader_state);
    }
  }
}

}  // namespace encavg
