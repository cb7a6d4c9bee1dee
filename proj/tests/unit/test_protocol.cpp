#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "encavg/protocol.hpp"

using namespace encavg;

namespace {

struct Case {
  MeasuredGraph g;
  MeasurementSet m;
};

Case make_case(int n, double p, std::uint64_t seed) {
  MeasuredGraph g = random_graph(n, p, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  Vector x(n);
  for (Index i = 0; i < n; ++i) x(i) = u(rng);
  MeasurementSet m = sample_measurements(g, x, seed + 2);
  return {std::move(g), std::move(m)};
}

ProtocolConfig base_config(int k_iter, int rounds) {
  ProtocolConfig cfg;
  cfg.k_iter = k_iter;
  cfg.max_rounds = rounds;
  cfg.term_eps = 0.0;
  return cfg;
}

const StepRecord& at_step(const Transcript& t, int step) {
  for (const StepRecord& r : t.steps)
    if (r.step == step) return r;
  throw std::runtime_error("missing step " + std::to_string(step));
}

std::string csv_of(const Transcript& t) {
  std::ostringstream os;
  write_trajectory_csv_header(os);
  write_trajectory_csv(os, t);
  return os.str();
}

}  // namespace

TEST_CASE("schedule of iterations and resets") {
  const Case c = make_case(12, 0.25, 3);
  const ProtocolConfig cfg = base_config(6, 4);
  const HEContext ctx = keygen(Backend::mock, 512, 1);
  const Transcript t = run_encrypted(cfg, c.g, c.m, ctx);
  const int h = t.tree_height;
  REQUIRE(h >= 1);
  CHECK(t.termination == "max_rounds");
  CHECK(t.rounds_run == 4);
  REQUIRE(t.resets.size() == 3);
  for (int r = 1; r <= 3; ++r) CHECK(t.resets[r - 1].completion_step == r * (cfg.k_iter + h));
  CHECK(t.steps.size() == static_cast<std::size_t>(1 + 4 * cfg.k_iter + 3 * h));
  CHECK(t.final_step().step == 4 * cfg.k_iter + 3 * h);
  for (const StepRecord& r : t.steps) {
    if (r.step == 0) continue;
    if (r.round == 1 && r.step <= h) CHECK(r.phase == Phase::reset_up);
    const int in_round = r.step - (r.round - 1) * (cfg.k_iter + h);
    CHECK(r.phase == (in_round > cfg.k_iter ? Phase::reset_down : r.phase));
  }
  CHECK(t.messages.count(Direction::up) == static_cast<std::size_t>(c.g.num_agents() - 1));
  CHECK(t.messages.count(Direction::down) == static_cast<std::size_t>(3 * (c.g.num_agents() - 1)));
  // each iteration sends one message per directed edge
  CHECK(t.messages.count(Direction::iterate) == static_cast<std::size_t>(4 * cfg.k_iter * 2 * c.g.num_edges()));
}

TEST_CASE("first-round integer states stay within delta of the real iteration") {
  const MeasuredGraph g(2, {{0, 1, 1.0}});
  Vector x(2);
  x << 1.0, -1.0;
  const MeasurementSet m = sample_measurements(g, x, 4);
  ProtocolConfig cfg = base_config(8, 1);
  cfg.s = 10;
  cfg.x1_bar = 10;
  cfg.record_integers = true;
  const BigInt q = pow_int(2, 256);
  const ReferenceRuns runs = run_plaintext_reference(cfg, g, m, q);
  const ProtocolSetup setup = prepare_protocol(g, m, cfg, q);
  std::vector<Vector> xf;
  std::vector<BigVector> zi;
  for (std::size_t k = 0; k < runs.floating.steps.size(); ++k) {
    xf.push_back(runs.floating.steps[k].states);
    zi.push_back(runs.integer.steps[k].z);
  }
  const DeltaDominanceReport r = verify_delta_dominance(xf, zi, cfg.s, setup.delta);
  CHECK(r.ok);
  CHECK(r.max_deviation > 0.0);
}

TEST_CASE("later rounds stay within the post-reset bound") {
  for (std::uint64_t seed = 60; seed < 64; ++seed) {
    const Case c = make_case(10, 0.35, seed);
    ProtocolConfig cfg = base_config(10, 3);
    cfg.record_integers = true;
    const BigInt q = pow_int(2, 512);
    const ReferenceRuns runs = run_plaintext_reference(cfg, c.g, c.m, q);
    const ProtocolSetup setup = prepare_protocol(c.g, c.m, cfg, q);
    const int h = runs.integer.tree_height;
    for (int round = 2; round <= 3; ++round) {
      const int start = (round - 1) * (cfg.k_iter + h);
      std::vector<Vector> xf{recover_state(at_step(runs.integer, start).z, 1, cfg.s)};
      std::vector<BigVector> zi{at_step(runs.integer, start).z};
      for (int k = 1; k <= cfg.k_iter; ++k) {
        xf.push_back(affine_step(xf.back(), setup.dynamics));
        zi.push_back(at_step(runs.integer, start + k).z);
      }
      const double x0 = xf.front().lpNorm<Eigen::Infinity>();
      const DeltaDominanceReport r =
          verify_delta_dominance(xf, zi, cfg.s, [&](int k) { return setup.delta.after_reset(k, x0); });
      CHECK(r.ok);
    }
  }
}

TEST_CASE("encrypted run reproduces the integer reference on both backends") {
  const Case c = make_case(9, 0.35, 7);
  ProtocolConfig cfg = base_config(5, 3);
  cfg.debug_decrypt = true;
  cfg.record_integers = true;
  for (const HEContext& ctx : {keygen(Backend::mock, 256, 3), keygen(Backend::paillier, 256, 3)}) {
    const Transcript enc_t = run_encrypted(cfg, c.g, c.m, ctx);
    const ReferenceRuns ref = run_plaintext_reference(cfg, c.g, c.m, ctx.modulus());
    REQUIRE(enc_t.steps.size() == ref.integer.steps.size());
    for (std::size_t k = 0; k < enc_t.steps.size(); ++k) {
      CHECK(enc_t.steps[k].z == ref.integer.steps[k].z);
      CHECK(enc_t.steps[k].leader_state == ref.integer.steps[k].leader_state);
    }
    CHECK(enc_t.d_sum == doctest::Approx(ref.integer.d_sum).epsilon(1e-12));
    CHECK(enc_t.overflow_events == 0);
    CHECK(enc_t.follower_decryptions == 0);
  }
}

TEST_CASE("paillier at 128 bits matches the integer reference") {
  const Case c = make_case(6, 0.5, 8);
  ProtocolConfig cfg = base_config(5, 2);
  cfg.debug_decrypt = true;
  cfg.record_integers = true;
  const HEContext ctx = keygen(Backend::paillier, 128, 5);
  const Transcript enc_t = run_encrypted(cfg, c.g, c.m, ctx);
  const ReferenceRuns ref = run_plaintext_reference(cfg, c.g, c.m, ctx.modulus());
  for (std::size_t k = 0; k < enc_t.steps.size(); ++k) CHECK(enc_t.steps[k].z == ref.integer.steps[k].z);
}

TEST_CASE("without debug decryption only the leader decrypts") {
  const Case c = make_case(10, 0.3, 9);
  const ProtocolConfig cfg = base_config(6, 3);
  const HEContext ctx = keygen(Backend::paillier, 256, 9);
  const Transcript t = run_encrypted(cfg, c.g, c.m, ctx);
  CHECK(t.debug_decryptions == 0);
  CHECK(t.follower_decryptions == 0);
  const std::size_t iterations = 3 * 6;
  CHECK(t.leader_decryptions == iterations * c.g.neighbors(0).size() + 1);
  for (const StepRecord& r : t.steps) {
    CHECK(r.states.size() == 0);
    CHECK(std::isnan(r.deviation));
  }
  CHECK_THROWS_AS(run_encrypted(cfg, c.g, c.m, ctx.public_context()), Error);
}

TEST_CASE("leader update is invariant under representatives mod q") {
  const Case c = make_case(8, 0.5, 10);
  const ProtocolConfig cfg = base_config(5, 1);
  const BigInt q = pow_int(2, 200);
  const ProtocolSetup setup = prepare_protocol(c.g, c.m, cfg, q);
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    const BigInt z1 = rng.below(BigInt(2000000)) - 1000000;
    BigVector nb;
    for (std::size_t j = 0; j < c.g.neighbors(0).size(); ++j) nb.push_back(rng.below(BigInt(2000000)) - 1000000);
    const int k = t % 5;
    const BigInt base = leader_update(c.g, setup.qd, z1, nb, k, q);
    BigVector shifted = nb;
    for (std::size_t j = 0; j < shifted.size(); ++j) shifted[j] += (j % 2 ? 1 : -1) * q * static_cast<long>(j + 1);
    CHECK(leader_update(c.g, setup.qd, z1, shifted, k, q) == base);
    // no wrap-around for small values: the plain integer row
    BigInt plain = pow_int(setup.qd.s, static_cast<unsigned>(k)) * static_cast<long>(setup.qd.s2b(0)) +
                   z1 * static_cast<long>(setup.qd.sA(0, 0));
    for (std::size_t j = 0; j < nb.size(); ++j) plain += nb[j] * static_cast<long>(setup.qd.sA(0, c.g.neighbors(0)[j].agent));
    CHECK(base == plain);
  }
  CHECK_THROWS_AS(leader_update(c.g, setup.qd, BigInt(0), BigVector{}, 0, q), Error);
}

TEST_CASE("transcripts are deterministic and independent of encryption randomness") {
  const Case c = make_case(8, 0.4, 12);
  ProtocolConfig cfg = base_config(5, 3);
  cfg.debug_decrypt = true;
  const HEContext ctx = keygen(Backend::paillier, 256, 12);
  const std::string a = csv_of(run_encrypted(cfg, c.g, c.m, ctx));
  CHECK(a == csv_of(run_encrypted(cfg, c.g, c.m, ctx)));
  cfg.seed = 99;
  CHECK(a == csv_of(run_encrypted(cfg, c.g, c.m, ctx)));
  CHECK(a.rfind("step,round,phase,pipeline,agent,recovered_state,deviation\n", 0) == 0);
}

TEST_CASE("configuration errors") {
  const Case c = make_case(10, 0.3, 13);
  const auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::FixtureMismatch;
  };
  ProtocolConfig cfg = base_config(10, 3);
  CHECK(code_of([&] { prepare_protocol(c.g, c.m, cfg, pow_int(2, 40)); }) == Errc::OverflowBudgetViolation);
  const MeasuredGraph g5 = example5_graph();
  const MeasurementSet m5 = sample_measurements(g5, Vector::LinSpaced(5, 2, -2), 1);
  cfg.k_iter = 1;
  CHECK(code_of([&] { prepare_protocol(g5, m5, cfg, pow_int(2, 512)); }) == Errc::InvalidConfig);
  cfg.k_iter = 2;
  CHECK_NOTHROW(prepare_protocol(g5, m5, cfg, pow_int(2, 512)));
  cfg.w = -1.0;
  CHECK(code_of([&] { prepare_protocol(g5, m5, cfg, pow_int(2, 512)); }) == Errc::NegativeWeight);
}

TEST_CASE("early termination once the leader settles") {
  const MeasuredGraph g(2, {{0, 1, 0.5}});
  Vector x(2);
  x << 3.0, -2.0;
  const MeasurementSet m = sample_measurements(g, x, 14);
  ProtocolConfig cfg = base_config(3, 6);
  cfg.term_eps = 1e-6;
  const Transcript t = run_encrypted(cfg, g, m, keygen(Backend::mock, 256, 1));
  CHECK(t.termination == "converged");
  CHECK(t.rounds_run == 1);
  CHECK(t.resets.empty());
  CHECK(t.final_step().leader_deviation < 1e-3);
}

TEST_CASE("float pipeline is mean-free after every reset") {
  for (const double w_scale : {0.0, 0.5, 1.0}) {
    const Case c = make_case(14, 0.3, 15);
    ProtocolConfig cfg = base_config(8, 4);
    cfg.w = w_scale * (c.g.num_agents() - 1);
    const ReferenceRuns runs = run_plaintext_reference(cfg, c.g, c.m, pow_int(2, 512));
    REQUIRE(runs.floating.resets.size() == 3);
    for (const ResetEvent& e : runs.floating.resets) {
      const StepRecord& r = at_step(runs.floating, e.completion_step);
      CHECK(r.scale_exp == 1);
      CHECK(std::abs(r.states.sum()) < 1e-9);
    }
  }
}

TEST_CASE("hard resets restart every round from the same state") {
  const Case c = make_case(11, 0.3, 16);
  ProtocolConfig cfg = base_config(7, 4);
  cfg.w = c.g.num_agents() - 1;
  const ReferenceRuns runs = run_plaintext_reference(cfg, c.g, c.m, pow_int(2, 512));
  const int period = cfg.k_iter + runs.floating.tree_height;
  for (int k = 0; k <= cfg.k_iter; ++k) {
    CHECK(at_step(runs.floating, period + k).states == at_step(runs.floating, 2 * period + k).states);
    CHECK(at_step(runs.integer, period + k).states == at_step(runs.integer, 2 * period + k).states);
  }
}

TEST_CASE("retained ciphertexts never expose plaintext states") {
  const Case c = make_case(7, 0.4, 17);
  ProtocolConfig cfg = base_config(5, 3);
  cfg.debug_decrypt = true;
  cfg.record_integers = true;
  cfg.retain_payloads = true;
  const HEContext ctx = keygen(Backend::paillier, 256, 17);
  const Transcript t = run_encrypted(cfg, c.g, c.m, ctx);
  const BigInt& N = ctx.modulus();
  std::vector<BigInt> encoded;
  for (const StepRecord& r : t.steps)
    for (const BigInt& z : r.z) encoded.push_back(encode_signed(z, N));
  REQUIRE_FALSE(t.messages.payloads().empty());
  std::size_t hits = 0;
  for (const BigInt& p : t.messages.payloads()) {
    for (const BigInt& e : encoded) hits += p == e;
    // a Paillier ciphertext lives in Z_{N^2} and is almost surely above N
    hits += p < N;
  }
  CHECK(hits == 0);
}
