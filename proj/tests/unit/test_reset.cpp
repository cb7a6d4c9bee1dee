#include "doctest.h"

#include <random>

#include "encavg/estimation.hpp"
#include "encavg/fixed_point.hpp"
#include "encavg/reset.hpp"

using namespace encavg;

namespace {

struct Fixture {
  MeasuredGraph g;
  IntMatrix B;
  ResetTree tree;
  MeasurementSet m;
};

Fixture make(int n, double p, std::uint64_t seed, bool noise = true) {
  MeasuredGraph g = random_graph(n, p, seed);
  IntMatrix B = incidence_matrix(g);
  ResetTree tree = build_reset_tree(g, B);
  const Vector x = Vector::LinSpaced(n, -7, 9);
  MeasurementSet m = noise ? sample_measurements(g, x, seed + 100) : measurements_with_noise(g, x, Vector::Zero(g.num_edges()));
  return {std::move(g), std::move(B), std::move(tree), std::move(m)};
}

}  // namespace

TEST_CASE("distances on the noiseless five-agent example") {
  const MeasuredGraph g = example5_graph();
  const ResetTree t = build_reset_tree(g, incidence_matrix(g));
  Vector x(5);
  x << 2, 1, 0, -1, -2;
  const MeasurementSet m = measurements_with_noise(g, x, Vector::Zero(6));
  Vector expected(5);
  expected << 0, 1, 2, 3, 4;
  CHECK((distances(t.P, m.y) - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("noisy distances deviate by the path noise") {
  const Fixture f = make(14, 0.3, 3);
  const Vector d = distances(f.tree.P, f.m.y);
  const Vector exact = Vector::Constant(14, f.m.x_true(0)) - f.m.x_true;
  const Vector path_noise = f.tree.P.cast<double>().transpose() * f.m.v;
  CHECK((d - exact - path_noise).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(d(0) == 0.0);
}

TEST_CASE("reset shifts") {
  const ResetPlan soft = compute_reset_shifts(1.0, 0.0, 3, 0.0);
  CHECK(soft.dx1 == 0.0);
  CHECK(soft.dxG == doctest::Approx(1.5));
  // admissibility: x1 - dx1 + sum_{i>=2} (x1 - dxG - d_i) = 0
  CHECK(1.0 - soft.dx1 + 2 * (1.0 - soft.dxG) - 0.0 == doctest::Approx(0.0));

  const ResetPlan hard = compute_reset_shifts(4.0, 6.0, 4, 3.0);
  CHECK(hard.hard());
  CHECK(hard.dx1 == doctest::Approx(4.0 - 6.0 / 4));
  CHECK(hard.dxG == doctest::Approx(hard.dx1));
  CHECK(hard.leader_value == 1.5);

  CHECK_THROWS_AS(compute_reset_shifts(1.0, 0.0, 3, -0.1), Error);
  CHECK(reset_weight(ResetKind::soft, 7) == 0.0);
  CHECK(reset_weight(ResetKind::hard, 7) == 6.0);
  CHECK(parse_reset_kind("hard") == ResetKind::hard);
  CHECK_THROWS_AS(parse_reset_kind("medium"), Error);
}

TEST_CASE("plaintext resets are mean-free and the hard reset ignores x1") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int t = 0; t < 200; ++t) {
    const int n = 2 + t % 20;
    Vector d(n);
    for (Index i = 0; i < n; ++i) d(i) = i == 0 ? 0.0 : u(rng);
    const double w = std::abs(u(rng));
    const Vector x = apply_reset_plaintext(compute_reset_shifts(u(rng), d.sum(), n, w), d);
    CHECK(std::abs(x.sum()) < 1e-12 * n * (1 + d.cwiseAbs().maxCoeff()) * 64);
    const Vector h1 = apply_reset_plaintext(compute_reset_shifts(u(rng), d.sum(), n, n - 1.0), d);
    const Vector h2 = apply_reset_plaintext(compute_reset_shifts(u(rng), d.sum(), n, n - 1.0), d);
    CHECK(h1 == h2);
    // closed form: mean(d) 1 - d
    const Vector closed = Vector::Constant(n, d.sum() / n) - d;
    CHECK((h1 - closed).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("noiseless soft reset from the true leader state returns the centered truth") {
  const Fixture f = make(9, 0.4, 8, false);
  const Vector d = distances(f.tree.P, f.m.y);
  const Vector centered = f.m.x_true.array() - f.m.x_true.mean();
  const Vector x = apply_reset_plaintext(compute_reset_shifts(centered(0), d.sum(), 9, 0.0), d);
  CHECK((x - centered).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encrypted collection on the noiseless example") {
  const MeasuredGraph g = example5_graph();
  const ResetTree t = build_reset_tree(g, incidence_matrix(g));
  Vector x(5);
  x << 2, 1, 0, -1, -2;
  const MeasurementSet m = measurements_with_noise(g, x, Vector::Zero(6));
  const QuantizedMeasurements qm = quantize_measurements(m.y, 1000);
  const HEContext ctx = keygen(Backend::paillier, 128, 1);
  Rng rng(2);
  MessageLog log;
  UpwardAggregation up(g, t, ctx.public_context(), qm);
  int steps = 0;
  while (!up.complete()) up.step(++steps, rng, &log);
  CHECK(steps == 2);
  CHECK(decode_distance_sum(ctx, up.leader_payload(), 1000) == 10.0);
  CHECK(log.count(Direction::up) == 4);
  for (const MessageRecord& r : log.records()) CHECK(r.to == t.parent[r.from]);
}

TEST_CASE("encrypted collection matches the quantized sum and its error bound") {
  for (std::uint64_t seed = 30; seed < 36; ++seed) {
    const Fixture f = make(16, 0.25, seed);
    const std::int64_t s = 1000;
    const QuantizedMeasurements qm = quantize_measurements(f.m.y, s);
    const HEContext ctx = HEContext::mock(pow_int(2, 128));
    Rng rng(seed);
    MessageLog log;
    const Ciphertext agg = collect_distances_encrypted(f.g, f.tree, ctx.public_context(), qm, rng, &log);
    CHECK(mod_reconstruct(dec(ctx, agg), ctx.modulus()) == quantized_distance_sum(f.tree.P, qm));
    CHECK(log.count(Direction::up) == 15u);
    const double exact = distances(f.tree.P, f.m.y).sum();
    double l1 = 0.0;
    for (Index i = 1; i < 16; ++i) l1 += f.tree.P.col(i).cwiseAbs().sum();
    CHECK(std::abs(decode_distance_sum(ctx, agg, s) - exact) <= l1 / (2.0 * s) + 1e-12);
  }
}

TEST_CASE("single edge collection") {
  const MeasuredGraph g(2, {{0, 1, 0.5}});
  const ResetTree t = build_reset_tree(g, incidence_matrix(g));
  Vector y(1);
  y << 0.12345;
  const QuantizedMeasurements qm = quantize_measurements(y, 1000);
  const HEContext ctx = HEContext::mock(pow_int(2, 64));
  Rng rng(1);
  const double sum = decode_distance_sum(ctx, collect_distances_encrypted(g, t, ctx.public_context(), qm, rng), 1000);
  CHECK(std::abs(sum - 0.12345) <= 0.0005);
}

TEST_CASE("encrypted distribution matches the integer reset states") {
  for (std::uint64_t seed = 50; seed < 55; ++seed) {
    const Fixture f = make(13, 0.3, seed);
    const std::int64_t s = 1000;
    const QuantizedMeasurements qm = quantize_measurements(f.m.y, s);
    const HEContext ctx = keygen(Backend::paillier, 128, seed);
    // the leader only knows the decoded quantized sum
    const double d_sum = ratio_to_double(quantized_distance_sum(f.tree.P, qm), BigInt(s));
    const ResetPlan plan = compute_reset_shifts(0.37, d_sum, 13, seed % 2 ? 0.0 : 12.0);
    Rng rng(seed);
    MessageLog log;
    const EncryptedReset r = distribute_reset_encrypted(f.g, f.tree, ctx.public_context(), plan, s, qm, rng, &log);
    CHECK(r.steps == f.tree.height);
    CHECK(log.count(Direction::down) == 12u);
    const BigVector z = reset_integer_states(plan, f.tree.P, qm, s);
    CHECK(r.leader_z == z[0]);
    const Vector d = distances(f.tree.P, f.m.y);
    const Vector plain = apply_reset_plaintext(plan, d);
    for (int i = 1; i < 13; ++i) {
      const BigInt zi = mod_reconstruct(dec(ctx, r.followers[i]), ctx.modulus());
      CHECK(zi == z[i]);
      const double tol = (f.tree.P.col(i).cwiseAbs().sum() + 2) / (2.0 * s);
      CHECK(std::abs(ratio_to_double(zi, BigInt(1000)) - plain(i)) <= tol);
    }
    // quantized mean-freeness
    Vector rec = recover_state(z, 1, s);
    CHECK(std::abs(rec.sum()) <= 13 / (2.0 * s) + 1e-12);
  }
}

TEST_CASE("first hop carries the leader's value") {
  const MeasuredGraph g = example5_graph();
  const ResetTree t = build_reset_tree(g, incidence_matrix(g));
  Vector y(6);
  y << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
  const QuantizedMeasurements qm = quantize_measurements(y, 1000);
  const HEContext ctx = HEContext::mock(pow_int(2, 64));
  Rng rng(1);
  DownwardDistribution down(g, t, ctx.public_context(), qm, BigInt(5000));
  down.step(1, rng, nullptr);
  CHECK_FALSE(down.complete());
  // agent 2 (index 1) hangs off the leader through edge {1,2}: 5000 - round(1000 * 0.1)
  CHECK(mod_reconstruct(dec(ctx, *down.states()[1]), ctx.modulus()) == 4900);
  CHECK_FALSE(down.states()[4].has_value());
  down.step(2, rng, nullptr);
  CHECK(down.complete());
  CHECK(mod_reconstruct(dec(ctx, *down.states()[4]), ctx.modulus()) == 5000 - 200 - 500);
}

TEST_CASE("followers cannot decrypt aggregation payloads") {
  const MeasuredGraph g = example5_graph();
  const ResetTree t = build_reset_tree(g, incidence_matrix(g));
  const QuantizedMeasurements qm = quantize_measurements(Vector::Constant(6, 0.25), 1000);
  const HEContext ctx = keygen(Backend::paillier, 128, 3);
  Rng rng(4);
  const Ciphertext c = collect_distances_encrypted(g, t, ctx.public_context(), qm, rng);
  CHECK_THROWS_AS(dec(ctx.public_context(), c), Error);
  CHECK_NOTHROW(dec(ctx, c));
}
