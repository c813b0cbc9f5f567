// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: `run` simulates routing strategies over
// synthetic or recorded score streams, `oracle` solves recorded batches
// exactly and audits dual values from a previous run.
#include "bipbal/harness.hpp"
#include "bipbal/oracle.hpp"
#include "bipbal/trace_io.hpp"
#include "bipbal/workload.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace {

using namespace bipbal;

std::string format_double(Scalar value) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw std::logic_error("to_chars failed");
  return std::string(buf, ptr);
}

std::vector<Algo> parse_algo_list(const std::string& csv) {
  std::vector<Algo> algos;
  std::stringstream stream(csv);
  std::string name;
  while (std::getline(stream, name, ',')) {
    const std::optional<Algo> algo = parse_algo(name);
    if (!algo) {
      throw std::invalid_argument("unknown algorithm '" + name +
                                  "' (expected greedy, lossfree, bip, "
                                  "online, or online-approx)");
    }
    algos.push_back(*algo);
  }
  if (algos.empty()) throw std::invalid_argument("no algorithms given");
  return algos;
}

WorkloadKind parse_kind(const std::string& name) {
  if (name == "uniform") return WorkloadKind::kUniform;
  if (name == "skew") return WorkloadKind::kSkew;
  if (name == "drift") return WorkloadKind::kDrift;
  if (name == "trace") return WorkloadKind::kTrace;
  throw std::invalid_argument("unknown workload '" + name +
                              "' (expected uniform, skew, drift, or trace)");
}

WindowMode parse_window(const std::string& name) {
  if (name == "batch") return WindowMode::kBatch;
  if (name == "sliding") return WindowMode::kSliding;
  if (name == "none") return WindowMode::kNone;
  throw std::invalid_argument("unknown window mode '" + name +
                              "' (expected batch, sliding, or none)");
}

// Dual objectives of `bip` rows in a steps.csv, keyed by step id.
std::map<Index, Scalar> load_bip_duals(const std::string& path, Index layer) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run log " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "step,layer,algo,max_vio,score,dual_obj") {
    throw std::runtime_error("run log " + path +
                             " is not a steps.csv file");
  }
  std::map<Index, Scalar> duals;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) fields.push_back(field);
    while (fields.size() < 6) fields.emplace_back();  // trailing empty cell
    if (fields.size() != 6) {
      throw std::runtime_error("run log " + path + ": malformed row");
    }
    if (fields[2] != "bip" || fields[5].empty()) continue;
    if (std::stoll(fields[1]) != layer) continue;
    duals[static_cast<Index>(std::stoll(fields[0]))] = std::stod(fields[5]);
  }
  return duals;
}

int run_command(const std::string& algo_csv, const std::string& workload,
                bool workload_given, const std::string& trace,
                const std::string& window, const std::string& out_dir,
                WorkloadSpec spec, RunOptions opts) {
  spec.kind = parse_kind(workload);
  if (!trace.empty()) {
    if (workload_given && spec.kind != WorkloadKind::kTrace) {
      throw std::invalid_argument(
          "--trace conflicts with --workload " + workload);
    }
    spec.kind = WorkloadKind::kTrace;
    spec.trace_path = trace;
  }
  opts.window = parse_window(window);

  const RunReport report = run_experiment(spec, parse_algo_list(algo_csv), opts);
  emit_report(report, out_dir);
  std::cout << "wrote " << out_dir << "/steps.csv and " << out_dir
            << "/summary.json\n";
  return 0;
}

int oracle_command(const std::string& trace, Index experts, Index top_k,
                   const std::string& run_log, Index layer) {
  const TraceData data = read_trace(trace);
  if (data.experts != experts) {
    throw std::invalid_argument("trace has " + std::to_string(data.experts) +
                                " experts, --experts says " +
                                std::to_string(experts));
  }
  std::map<Index, Scalar> duals;
  if (!run_log.empty()) duals = load_bip_duals(run_log, layer);

  bool violated = false;
  for (std::size_t b = 0; b < data.batches.size(); ++b) {
    const ScoreMatrix& batch = data.batches[b];
    const BalanceConfig cfg{.experts = experts, .top_k = top_k,
                            .tokens = batch.rows(), .dual_iters = 1};
    cfg.validate();
    const ExactSolution solution = solve_exhaustive(batch, cfg);
    const Index step = data.step_ids[b];
    std::cout << "step " << step << ": optimum "
              << format_double(solution.objective);
    const auto it = duals.find(step);
    if (it != duals.end()) {
      const Scalar gap = it->second - solution.objective;
      std::cout << " dual " << format_double(it->second) << " gap "
                << format_double(gap);
      if (gap < -kWeakDualityTol) violated = true;
    }
    std::cout << '\n';
  }
  if (violated) {
    throw std::runtime_error("dual value undercuts the exact optimum");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Top-k expert routing balance experiments"};
  app.require_subcommand(1);

  // run: shared experiment parameters with small-Table defaults.
  std::string algo_csv = "greedy,lossfree,bip";
  std::string workload = "skew";
  std::string trace;
  std::string window = "batch";
  std::string out_dir;
  WorkloadSpec spec;
  spec.balance = BalanceConfig{.experts = 16, .top_k = 4, .tokens = 1024,
                               .dual_iters = 4};
  spec.steps = 200;
  RunOptions opts;

  CLI::App* run = app.add_subcommand(
      "run", "Simulate routing strategies and write metric reports");
  run->add_option("--algo", algo_csv,
                  "Comma-separated list: greedy,lossfree,bip,online,"
                  "online-approx")
      ->capture_default_str();
  run->add_option("--experts", spec.balance.experts, "Experts per layer")
      ->capture_default_str();
  run->add_option("--topk", spec.balance.top_k, "Experts selected per token")
      ->capture_default_str();
  run->add_option("--tokens", spec.balance.tokens, "Tokens per step")
      ->capture_default_str();
  run->add_option("--steps", spec.steps, "Steps per layer")
      ->capture_default_str();
  run->add_option("--iters", spec.balance.dual_iters,
                  "Dual refresh iterations")
      ->capture_default_str();
  run->add_option("--buckets", opts.buckets,
                  "Histogram buckets for online-approx")
      ->capture_default_str();
  run->add_option("--workload", workload, "uniform, skew, drift, or trace")
      ->capture_default_str();
  run->add_option("--skew", spec.skew, "Popularity ramp height")
      ->capture_default_str();
  run->add_option("--drift", spec.drift_rate, "Popularity walk rate")
      ->capture_default_str();
  run->add_option("--seed", spec.seed, "Workload seed")
      ->capture_default_str();
  run->add_option("--layers", spec.layers, "Independent layers")
      ->capture_default_str();
  run->add_option("--trace", trace, "Trace CSV path (implies trace workload)");
  run->add_option("--window", window,
                  "Online history window: batch, sliding, or none")
      ->capture_default_str();
  run->add_option("--bias-rate", opts.bias_rate,
                  "Adaptation rate for lossfree")
      ->capture_default_str();
  run->add_flag("--timings", opts.timings,
                "Record wall-clock times (breaks byte determinism)");
  run->add_option("--out", out_dir, "Report output directory")->required();

  // oracle: exact solutions for a recorded trace.
  std::string oracle_trace;
  std::string run_log;
  Index oracle_experts = 2;
  Index oracle_topk = 1;
  Index oracle_layer = 0;
  CLI::App* oracle = app.add_subcommand(
      "oracle", "Solve trace batches exactly and audit recorded duals");
  oracle->add_option("--trace", oracle_trace, "Trace CSV path")->required();
  oracle->add_option("--experts", oracle_experts, "Experts per layer")
      ->required();
  oracle->add_option("--topk", oracle_topk, "Experts selected per token")
      ->required();
  oracle->add_option("--run-log", run_log,
                     "steps.csv from a previous run; enables gap audit");
  oracle->add_option("--layer", oracle_layer, "Layer to audit in the run log")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (run->parsed()) {
      return run_command(algo_csv, workload, run->count("--workload") > 0,
                         trace, window, out_dir, spec, opts);
    }
    return oracle_command(oracle_trace, oracle_experts, oracle_topk, run_log,
                          oracle_layer);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
