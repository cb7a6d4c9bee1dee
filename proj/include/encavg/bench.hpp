// Fixture report for the 5-agent example and the randomized benchmark suite.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "encavg/common.hpp"
#include "encavg/graph.hpp"
#include "encavg/he.hpp"
#include "encavg/reset.hpp"

namespace encavg {

struct Example5Report {
  MeasuredGraph graph;
  IntMatrix B;
  IntMatrix P;  // m x n, as stored by ResetTree
  int height = 0;
  bool B_matches = false;
  bool P_matches = false;
  bool height_matches = false;

  bool ok() const { return B_matches && P_matches && height_matches; }
};

/// Reference matrices of the 5-agent fixture (B is n x m, P^T is n x m).
IntMatrix example5_expected_B();
IntMatrix example5_expected_PT();

/// Builds the fixture and compares it with the reference matrices.
Example5Report example5_report();
/// Prints B, P^T and h; throws Error(FixtureMismatch) when anything differs.
void write_example5(std::ostream& os, const Example5Report& r);

struct BenchmarkSpec {
  int n_min = 10;
  int n_max = 100;
  double p_min = 0.1;
  double p_max = 0.7;
  std::vector<double> sigma_set{0.1, 0.5, 0.9};
  double x_min = -10.0;
  double x_max = 10.0;
  std::vector<int> k_iter_set{5, 10, 15};
  int rounds = 6;
  std::int64_t s = 1000;
  unsigned q_bits = 2048;
  double x1_bar = 1e4;
  int n_cases = 100;
  std::uint64_t master_seed = 1;
  Backend backend = Backend::mock;
  double threshold = 1e-2;
  std::vector<ResetKind> resets{ResetKind::soft, ResetKind::hard};
  unsigned threads = 0;  // 0: hardware concurrency
};

/// Randomly drawn parameters of one case; fully determined by its seed.
struct BenchCase {
  int index = 0;
  std::uint64_t seed = 0;
  int n = 0;
  double p_edge = 0.0;
  int k_iter = 0;
};

BenchCase draw_case(const BenchmarkSpec& spec, int index);

struct BenchRow {
  BenchCase c;
  ResetKind reset = ResetKind::soft;
  int m = 0;
  int height = 0;
  double final_deviation = 0.0;
  double final_leader_deviation = 0.0;
  std::size_t overflow_events = 0;
  bool budget_checked = false;
  bool budget_ok = false;
  int overflow_budget = 0;
  std::string error;  // non-empty: case excluded from the statistics

  bool valid() const { return error.empty(); }
};

struct BenchSummary {
  int cases = 0;
  int valid_soft = 0;
  int valid_hard = 0;
  // share of runs whose final leader deviation is below the threshold
  double fraction_soft = 0.0;
  double fraction_hard = 0.0;
  // same with the inf-norm over all agents (debug-decrypted followers included)
  double fraction_all_soft = 0.0;
  double fraction_all_hard = 0.0;
  std::size_t overflow_events = 0;
  int budget_failures = 0;
  int errors = 0;
};

/// Runs every case for each configured reset kind. Per-case errors are recorded and
/// the suite continues; rows are ordered by (case, reset kind).
std::vector<BenchRow> run_benchmark(const BenchmarkSpec& spec, const HEContext& ctx);
/// Context for spec.backend at spec.q_bits (mock: q = 2^bits).
HEContext benchmark_context(const BenchmarkSpec& spec);

BenchSummary summarize(const BenchmarkSpec& spec, const std::vector<BenchRow>& rows);

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);
void write_bench_summary(std::ostream& os, const BenchmarkSpec& spec, const BenchSummary& s);

}  // namespace encavg
