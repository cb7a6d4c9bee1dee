#include "encavg/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <random>
#include <thread>

#include "encavg/estimation.hpp"
#include "encavg/protocol.hpp"

namespace encavg {

IntMatrix example5_expected_B() {
  IntMatrix B(5, 6);
  B << 1, 1, 1, 0, 0, 0,
      -1, 0, 0, 1, 0, 0,
       0, -1, 0, -1, 1, 0,
       0, 0, -1, 0, 0, 1,
       0, 0, 0, 0, -1, -1;
  return B;
}

IntMatrix example5_expected_PT() {
  IntMatrix PT(5, 6);
  PT << 0, 0, 0, 0, 0, 0,
        1, 0, 0, 0, 0, 0,
        0, 1, 0, 0, 0, 0,
        0, 0, 1, 0, 0, 0,
        0, 1, 0, 0, 1, 0;
  return PT;
}

Example5Report example5_report() {
  Example5Report r{example5_graph(), {}, {}, 0, false, false, false};
  r.B = incidence_matrix(r.graph);
  const ResetTree tree = build_reset_tree(r.graph, r.B);
  r.P = tree.P;
  r.height = tree.height;
  r.B_matches = r.B == example5_expected_B();
  r.P_matches = IntMatrix(r.P.transpose()) == example5_expected_PT();
  r.height_matches = r.height == 2;
  return r;
}

void write_example5(std::ostream& os, const Example5Report& r) {
  os << "B =\n" << dump_matrix(r.B) << "P^T =\n" << dump_matrix(IntMatrix(r.P.transpose())) << "h = " << r.height
     << '\n';
  os << "B " << (r.B_matches ? "matches" : "DIFFERS") << ", P " << (r.P_matches ? "matches" : "DIFFERS") << ", h "
     << (r.height_matches ? "matches" : "DIFFERS") << '\n';
  if (!r.ok()) throw Error(Errc::FixtureMismatch, "example fixture does not reproduce the reference matrices");
}

BenchCase draw_case(const BenchmarkSpec& spec, int index) {
  if (spec.n_min < 2 || spec.n_max < spec.n_min) throw Error(Errc::InvalidConfig, "invalid agent-count range");
  if (!(spec.p_min > 0.0) || spec.p_max < spec.p_min || spec.p_max > 1.0)
    throw Error(Errc::InvalidConfig, "invalid edge-probability range");
  if (spec.k_iter_set.empty()) throw Error(Errc::InvalidConfig, "empty k_iter set");
  BenchCase c;
  c.index = index;
  c.seed = derive_seed(spec.master_seed, static_cast<std::uint64_t>(index));
  std::mt19937_64 rng(c.seed);
  c.n = std::uniform_int_distribution<int>(spec.n_min, spec.n_max)(rng);
  c.p_edge = std::uniform_real_distribution<double>(spec.p_min, spec.p_max)(rng);
  c.k_iter = spec.k_iter_set[std::uniform_int_distribution<std::size_t>(0, spec.k_iter_set.size() - 1)(rng)];
  return c;
}

namespace {

std::vector<BenchRow> run_case(const BenchmarkSpec& spec, const HEContext& ctx, int index) {
  const BenchCase c = draw_case(spec, index);
  std::vector<BenchRow> rows;
  for (ResetKind kind : spec.resets) {
    BenchRow row;
    row.c = c;
    row.reset = kind;
    rows.push_back(row);
  }
  const auto fail_all = [&](const std::string& what) {
    for (auto& r : rows) r.error = what;
  };
  try {
    RandomGraphOptions opts;
    opts.sigma_set = spec.sigma_set;
    const MeasuredGraph g = random_graph(c.n, c.p_edge, derive_seed(c.seed, 1), opts);
    std::mt19937_64 xrng(derive_seed(c.seed, 2));
    std::uniform_real_distribution<double> ux(spec.x_min, spec.x_max);
    Vector x(c.n);
    for (Index i = 0; i < x.size(); ++i) x(i) = ux(xrng);
    const MeasurementSet meas = sample_measurements(g, x, derive_seed(c.seed, 3));

    for (auto& row : rows) {
      row.m = static_cast<int>(g.num_edges());
      ProtocolConfig cfg;
      cfg.s = spec.s;
      cfg.x1_bar = spec.x1_bar;
      cfg.k_iter = c.k_iter;
      cfg.w = reset_weight(row.reset, c.n);
      cfg.max_rounds = spec.rounds;
      cfg.term_eps = 0.0;
      cfg.debug_decrypt = true;
      cfg.record_messages = false;
      cfg.seed = derive_seed(c.seed, 4);
      try {
        const ProtocolSetup setup = prepare_protocol(g, meas, cfg, ctx.modulus());
        row.height = setup.tree.height;
        row.budget_checked = true;
        row.budget_ok = true;
        row.overflow_budget = setup.overflow_budget;
        const Transcript t = run_encrypted(cfg, g, meas, ctx);
        row.final_deviation = t.final_step().deviation;
        row.final_leader_deviation = t.final_step().leader_deviation;
        row.overflow_events = t.overflow_events;
      } catch (const Error& e) {
        row.height = build_reset_tree(g, incidence_matrix(g)).height;
        if (e.code() == Errc::OverflowBudgetViolation) row.budget_checked = true;
        row.error = e.what();
      }
    }
  } catch (const Error& e) {
    fail_all(e.what());
  }
  return rows;
}

}  // namespace

HEContext benchmark_context(const BenchmarkSpec& spec) {
  return keygen(spec.backend, spec.q_bits, derive_seed(spec.master_seed, 0xC0FFEE));
}

std::vector<BenchRow> run_benchmark(const BenchmarkSpec& spec, const HEContext& ctx) {
  if (spec.n_cases < 1) throw Error(Errc::InvalidConfig, "n_cases must be >= 1");
  std::vector<std::vector<BenchRow>> per_case(spec.n_cases);
  unsigned threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(spec.n_cases));
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int i = next++; i < spec.n_cases; i = next++) per_case[i] = run_case(spec, ctx, i);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  std::vector<BenchRow> rows;
  for (auto& c : per_case) rows.insert(rows.end(), c.begin(), c.end());
  return rows;
}

BenchSummary summarize(const BenchmarkSpec& spec, const std::vector<BenchRow>& rows) {
  BenchSummary s;
  s.cases = spec.n_cases;
  int below_soft = 0;
  int below_hard = 0;
  int all_soft = 0;
  int all_hard = 0;
  for (const BenchRow& r : rows) {
    s.overflow_events += r.overflow_events;
    if (r.budget_checked && !r.budget_ok) ++s.budget_failures;
    if (!r.valid()) {
      ++s.errors;
      continue;
    }
    const bool below = r.final_leader_deviation < spec.threshold;
    const bool all_below = r.final_deviation < spec.threshold;
    if (r.reset == ResetKind::soft) {
      ++s.valid_soft;
      below_soft += below;
      all_soft += all_below;
    } else {
      ++s.valid_hard;
      below_hard += below;
      all_hard += all_below;
    }
  }
  s.fraction_soft = s.valid_soft ? double(below_soft) / s.valid_soft : 0.0;
  s.fraction_hard = s.valid_hard ? double(below_hard) / s.valid_hard : 0.0;
  s.fraction_all_soft = s.valid_soft ? double(all_soft) / s.valid_soft : 0.0;
  s.fraction_all_hard = s.valid_hard ? double(all_hard) / s.valid_hard : 0.0;
  return s;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "case,seed,n,p_edge,m,height,k_iter,reset,final_deviation,final_leader_deviation,overflow_events,budget_ok,"
        "overflow_budget,error\n";
  for (const BenchRow& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << r.c.index << ',' << r.c.seed << ',' << r.c.n << ',' << format_double(r.c.p_edge) << ',' << r.m << ','
       << r.height << ',' << r.c.k_iter << ',' << to_string(r.reset) << ','
       << (r.valid() ? format_double(r.final_deviation) : std::string("nan")) << ','
       << (r.valid() ? format_double(r.final_leader_deviation) : std::string("nan")) << ',' << r.overflow_events
       << ',' << (r.budget_checked ? (r.budget_ok ? "1" : "0") : "") << ',' << r.overflow_budget << ',' << err << '\n';
  }
}

void write_bench_summary(std::ostream& os, const BenchmarkSpec& spec, const BenchSummary& s) {
  os << "cases: " << s.cases << '\n'
     << "backend: " << to_string(spec.backend) << " (q bits " << spec.q_bits << ")\n"
     << "s: " << spec.s << ", rounds: " << spec.rounds << ", x1_bar: " << format_double(spec.x1_bar) << '\n'
     << "valid runs: soft " << s.valid_soft << ", hard " << s.valid_hard << " (excluded runs: " << s.errors << ")\n"
     << "leader deviation below " << format_double(spec.threshold) << ": soft " << format_double(s.fraction_soft)
     << ", hard " << format_double(s.fraction_hard) << '\n'
     << "all-agent deviation below " << format_double(spec.threshold) << ": soft "
     << format_double(s.fraction_all_soft) << ", hard " << format_double(s.fraction_all_hard) << '\n'
     << "leader overflow events: " << s.overflow_events << '\n'
     << "overflow-condition failures: " << s.budget_failures << '\n';
}

}  // namespace encavg
