// encavg: run the 5-agent fixture, single simulations, benchmark suites and moment analyses.
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "encavg/analysis.hpp"
#include "encavg/bench.hpp"
#include "encavg/estimation.hpp"
#include "encavg/protocol.hpp"

namespace fs = std::filesystem;
using namespace encavg;

namespace {

// JSON config files: a flat object whose keys are the long flag names.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    nlohmann::ordered_json j;
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames().front();
      if (opt->count() > 0)
        j[name] = opt->as<std::string>();
      else if (default_also && !opt->get_default_str().empty())
        j[name] = opt->get_default_str();
    }
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(input);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must contain a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.name = key;
      std::replace(item.name.begin(), item.name.end(), '_', '-');
      if (value.is_boolean())
        item.inputs = {value.get<bool>() ? "true" : "false"};
      else if (value.is_string())
        item.inputs = {value.get<std::string>()};
      else if (value.is_number_integer())
        item.inputs = {std::to_string(value.get<long long>())};
      else if (value.is_number())
        item.inputs = {format_double(value.get<double>())};
      else
        throw CLI::ConversionError("config key '" + key + "' must be a scalar");
      items.push_back(std::move(item));
    }
    return items;
  }
};

struct Settings {
  int n = 10;
  double p_edge = 0.3;
  std::uint64_t seed = 1;
  std::int64_t s = 1000;
  unsigned q_bits = 2048;
  std::string backend = "mock";
  int k_iter = 10;
  double w = 0.0;
  std::string reset = "soft";
  int rounds = 6;
  int cases = 100;
  std::string out = "out";
  bool debug_decrypt = false;
  std::string preset;
  int samples = 10000;
  unsigned threads = 0;
};

struct Given {
  CLI::Option* n;
  CLI::Option* p_edge;
  CLI::Option* k_iter;
  CLI::Option* w;
  CLI::Option* reset;
  CLI::Option* rounds;
};

fs::path prepare_out(const Settings& st) {
  fs::path dir(st.out);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::InvalidConfig, "cannot write " + path.string());
  f << text;
}

Vector draw_states(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  Vector x(n);
  for (Index i = 0; i < n; ++i) x(i) = u(rng);
  return x;
}

int cmd_example5(const Settings& st, bool write_out) {
  const Example5Report r = example5_report();
  std::ostringstream text;
  write_example5(text, r);
  std::cout << text.str();
  if (write_out) write_file(prepare_out(st) / "summary.txt", text.str());
  return 0;
}

void apply_preset(Settings& st, const Given& given) {
  if (st.preset.empty()) return;
  if (st.preset == "tiny") {
    if (!given.n->count()) st.n = 2;
    if (!given.p_edge->count()) st.p_edge = 1.0;
    if (!given.k_iter->count()) st.k_iter = 5;
    if (!given.rounds->count()) st.rounds = 3;
  } else if (st.preset == "standard") {
    if (!given.k_iter->count()) st.k_iter = 10;
    if (!given.rounds->count()) st.rounds = 6;
  } else {
    throw Error(Errc::InvalidConfig, "unknown preset '" + st.preset + "' (expected tiny or standard)");
  }
}

int cmd_simulate(Settings st, const Given& given) {
  apply_preset(st, given);
  const Backend backend = parse_backend(st.backend);
  const ResetKind kind = parse_reset_kind(st.reset);
  const MeasuredGraph g = random_graph(st.n, st.p_edge, derive_seed(st.seed, 1));
  const Vector x = draw_states(st.n, derive_seed(st.seed, 2));
  const MeasurementSet meas = sample_measurements(g, x, derive_seed(st.seed, 3));

  ProtocolConfig cfg;
  cfg.s = st.s;
  cfg.k_iter = st.k_iter;
  cfg.w = given.w->count() ? st.w : reset_weight(kind, st.n);
  cfg.max_rounds = st.rounds;
  cfg.term_eps = 0.0;
  cfg.debug_decrypt = st.debug_decrypt;
  cfg.seed = derive_seed(st.seed, 4);

  const HEContext ctx = keygen(backend, st.q_bits, derive_seed(st.seed, 5));
  const ReferenceRuns ref = run_plaintext_reference(cfg, g, meas, ctx.modulus());
  const Transcript enc_t = run_encrypted(cfg, g, meas, ctx);

  // quantization bound over the first round, where both pipelines start from zero
  const ProtocolSetup setup = prepare_protocol(g, meas, cfg, ctx.modulus());
  std::vector<Vector> tf;
  std::vector<BigVector> ti;
  ProtocolConfig one = cfg;
  one.max_rounds = 1;
  one.record_integers = true;
  const ReferenceRuns first = run_plaintext_reference(one, g, meas, ctx.modulus());
  for (std::size_t k = 0; k < first.integer.steps.size(); ++k) {
    tf.push_back(first.floating.steps[k].states);
    ti.push_back(first.integer.steps[k].z);
  }
  const DeltaModel delta = setup.delta;
  const DeltaDominanceReport dom = verify_delta_dominance(tf, ti, cfg.s, delta, 1);

  const fs::path dir = prepare_out(st);
  std::ostringstream csv;
  write_trajectory_csv_header(csv);
  write_trajectory_csv(csv, ref.floating);
  write_trajectory_csv(csv, ref.integer);
  write_trajectory_csv(csv, enc_t);
  write_file(dir / "trajectory.csv", csv.str());

  std::ostringstream sum;
  sum << "agents: " << st.n << ", edges: " << g.num_edges() << ", tree height: " << setup.tree.height << '\n'
      << "s: " << cfg.s << ", q bits: " << st.q_bits << ", backend: " << to_string(backend) << '\n'
      << "k_iter: " << cfg.k_iter << ", rounds: " << cfg.max_rounds << ", reset weight: " << format_double(cfg.w)
      << '\n'
      << "overflow-free budget after a reset: " << setup.overflow_budget << " iterations\n";
  for (const ResetEvent& e : enc_t.resets)
    sum << "reset after round " << e.round << " completed at step " << e.completion_step
        << ": dx1 = " << format_double(e.plan.dx1) << ", dxG = " << format_double(e.plan.dxG) << '\n';
  const auto final_line = [&](const Transcript& t) {
    sum << "final " << to_string(t.pipeline) << ": leader deviation " << format_double(t.final_step().leader_deviation);
    if (!std::isnan(t.final_step().deviation)) sum << ", max deviation " << format_double(t.final_step().deviation);
    sum << '\n';
  };
  final_line(ref.floating);
  final_line(ref.integer);
  final_line(enc_t);
  sum << "leader overflow events: " << enc_t.overflow_events << '\n'
      << "first-round quantization bound: " << (dom.ok ? "holds" : "VIOLATED") << " (max deviation "
      << format_double(dom.max_deviation) << ", max ratio to bound " << format_double(dom.max_ratio) << ")\n";
  write_file(dir / "summary.txt", sum.str());
  std::cout << sum.str();
  return 0;
}

int cmd_bench(const Settings& st, const Given& given, bool full) {
  BenchmarkSpec spec;
  spec.s = st.s;
  spec.q_bits = st.q_bits;
  spec.backend = parse_backend(st.backend);
  spec.rounds = st.rounds;
  spec.n_cases = full ? 1000 : st.cases;
  spec.master_seed = st.seed;
  spec.threads = st.threads;
  if (given.n->count()) spec.n_min = spec.n_max = st.n;
  if (given.p_edge->count()) spec.p_min = spec.p_max = st.p_edge;
  if (given.k_iter->count()) spec.k_iter_set = {st.k_iter};
  if (given.reset->count()) spec.resets = {parse_reset_kind(st.reset)};

  const auto t0 = std::chrono::steady_clock::now();
  const HEContext ctx = benchmark_context(spec);
  const std::vector<BenchRow> rows = run_benchmark(spec, ctx);
  const BenchSummary summary = summarize(spec, rows);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path dir = prepare_out(st);
  std::ostringstream csv;
  write_bench_csv(csv, rows);
  write_file(dir / "bench.csv", csv.str());
  std::ostringstream sum;
  write_bench_summary(sum, spec, summary);
  write_file(dir / "summary.txt", sum.str());
  std::cout << sum.str();
  std::cerr << "elapsed: " << secs << " s\n";
  return 0;
}

int cmd_analyze(const Settings& st) {
  const MeasuredGraph g = random_graph(st.n, st.p_edge, derive_seed(st.seed, 1));
  const Vector x = draw_states(st.n, derive_seed(st.seed, 2));
  const fs::path dir = prepare_out(st);
  std::ostringstream sum;
  sum << "agents: " << st.n << ", edges: " << g.num_edges() << ", samples: " << st.samples << "\n\n";
  for (EstimatorKind kind : {EstimatorKind::centralized, EstimatorKind::hard_reset, EstimatorKind::soft_reset}) {
    const MomentReport r = monte_carlo_reset_moments(g, x, kind, st.samples, derive_seed(st.seed, 7), st.w);
    std::ostringstream csv;
    write_moment_csv(csv, r);
    write_file(dir / ("moments_" + std::string(to_string(kind)) + ".csv"), csv.str());
    write_moment_report(sum, r);
    sum << '\n';
  }
  write_file(dir / "summary.txt", sum.str());
  std::cout << sum.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-preserving distributed estimation with encrypted affine averaging"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with flag values; flags given on the command line take precedence");
  app.require_subcommand(1);
  app.fallthrough();

  Settings st;
  Given given{};
  given.n = app.add_option("--n", st.n, "number of agents")->capture_default_str();
  given.p_edge = app.add_option("--p-edge", st.p_edge, "edge probability")->capture_default_str();
  app.add_option("--seed", st.seed, "master seed")->capture_default_str();
  app.add_option("--s", st.s, "scaling factor")->capture_default_str()->check(CLI::Range(std::int64_t{2}, std::int64_t{1} << 40));
  app.add_option("--q-bits", st.q_bits, "message space size in bits (mock: q = 2^bits, paillier: |N|)")
      ->capture_default_str();
  app.add_option("--backend", st.backend, "mock or paillier")->capture_default_str()->check(CLI::IsMember({"mock", "paillier"}));
  given.k_iter = app.add_option("--k-iter", st.k_iter, "iterations per round")->capture_default_str();
  given.w = app.add_option("--w", st.w, "reset weight (overrides --reset)");
  given.reset = app.add_option("--reset", st.reset, "soft or hard")->capture_default_str()->check(CLI::IsMember({"soft", "hard"}));
  given.rounds = app.add_option("--rounds", st.rounds, "computation rounds")->capture_default_str();
  app.add_option("--cases", st.cases, "benchmark cases")->capture_default_str();
  app.add_option("--out", st.out, "output directory")->capture_default_str();
  app.add_flag("--debug-decrypt", st.debug_decrypt, "decrypt follower states for inspection");
  app.add_option("--preset", st.preset, "simulate preset: tiny or standard");
  app.add_option("--samples", st.samples, "Monte Carlo draws for analyze")->capture_default_str();
  app.add_option("--threads", st.threads, "benchmark worker threads (0: all cores)")->capture_default_str();

  auto* example5 = app.add_subcommand("example5", "print and check the 5-agent fixture");
  auto* simulate = app.add_subcommand("simulate", "run one instance in the float, integer and encrypted pipelines");
  auto* bench = app.add_subcommand("bench", "randomized benchmark suite");
  bool full = false;
  bench->add_flag("--full", full, "run 1000 cases");
  auto* analyze = app.add_subcommand("analyze", "Monte Carlo moments of the estimators");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*example5) return cmd_example5(st, app.get_option("--out")->count() > 0);
    if (*simulate) return cmd_simulate(st, given);
    if (*bench) return cmd_bench(st, given, full);
    if (*analyze) return cmd_analyze(st);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
