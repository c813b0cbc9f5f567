// SPDX-License-Identifier: Apache-2.0
#include "bipbal/harness.hpp"

#include "bipbal/baselines.hpp"
#include "bipbal/dual_balancer.hpp"
#include "bipbal/metrics.hpp"
#include "bipbal/oracle.hpp"
#include "bipbal/trace_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bipbal {

namespace {

// Independent per-(layer, algorithm) state carried across steps.
struct AlgoState {
  BiasState bias;
  DualState dual;
  std::optional<OnlineGate> gate;
};

AlgoState make_state(Algo algo, const WorkloadSpec& spec,
                     const RunOptions& opts) {
  AlgoState state;
  switch (algo) {
    case Algo::kGreedy:
      break;
    case Algo::kLossFree:
      state.bias.bias = Vector::Zero(spec.balance.experts);
      state.bias.rate = opts.bias_rate;
      break;
    case Algo::kBip:
      break;
    case Algo::kOnline:
    case Algo::kOnlineApprox: {
      OnlineConfig cfg;
      cfg.base = spec.balance;
      cfg.buckets = algo == Algo::kOnlineApprox ? opts.buckets : 0;
      cfg.window = opts.window;
      cfg.reset_keeps_dual = opts.reset_keeps_dual;
      state.gate.emplace(cfg);
      break;
    }
  }
  return state;
}

void check_descent(const std::vector<Scalar>& trace) {
  for (std::size_t t = 1; t < trace.size(); ++t) {
    const Scalar allowed =
        trace[t - 1] + 1e-9 * std::max(Scalar{1}, std::abs(trace[t - 1]));
    if (trace[t] > allowed) {
      throw std::logic_error("run_experiment: dual refresh did not descend");
    }
  }
}

std::string format_double(Scalar value) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw std::logic_error("to_chars failed");
  return std::string(buf, ptr);
}

}  // namespace

std::string_view algo_name(Algo algo) {
  switch (algo) {
    case Algo::kGreedy:
      return "greedy";
    case Algo::kLossFree:
      return "lossfree";
    case Algo::kBip:
      return "bip";
    case Algo::kOnline:
      return "online";
    case Algo::kOnlineApprox:
      return "online-approx";
  }
  throw std::invalid_argument("algo_name: unknown algorithm");
}

std::optional<Algo> parse_algo(std::string_view name) {
  for (Algo algo : {Algo::kGreedy, Algo::kLossFree, Algo::kBip, Algo::kOnline,
                    Algo::kOnlineApprox}) {
    if (name == algo_name(algo)) return algo;
  }
  return std::nullopt;
}

RunReport run_experiment(const WorkloadSpec& spec,
                         const std::vector<Algo>& algos,
                         const RunOptions& opts) {
  spec.validate();
  if (algos.empty()) {
    throw std::invalid_argument("run_experiment: no algorithms requested");
  }
  for (std::size_t a = 0; a < algos.size(); ++a) {
    for (std::size_t b = a + 1; b < algos.size(); ++b) {
      if (algos[a] == algos[b]) {
        throw std::invalid_argument("run_experiment: duplicate algorithm");
      }
    }
  }
  const Index n = spec.balance.tokens;
  const Index m = spec.balance.experts;

  std::vector<TraceData> traces;
  Index steps = spec.steps;
  if (spec.kind == WorkloadKind::kTrace) {
    for (Index layer = 0; layer < spec.layers; ++layer) {
      std::string path = trace_layer_path(spec.trace_path, layer);
      if (spec.layers == 1 && !std::filesystem::exists(path) &&
          std::filesystem::exists(spec.trace_path)) {
        path = spec.trace_path;  // single-layer convenience
      }
      TraceData trace = read_trace(path);
      if (trace.experts != m) {
        throw std::invalid_argument("run_experiment: trace has " +
                                    std::to_string(trace.experts) +
                                    " experts, config expects " +
                                    std::to_string(m));
      }
      for (const ScoreMatrix& batch : trace.batches) {
        if (batch.rows() != n) {
          throw std::invalid_argument(
              "run_experiment: trace batch token count mismatch");
        }
      }
      if (layer > 0 && trace.batches.size() != traces.front().batches.size()) {
        throw std::invalid_argument(
            "run_experiment: layers disagree on step count");
      }
      traces.push_back(std::move(trace));
    }
    steps = static_cast<Index>(traces.front().batches.size());
  }

  const bool wants_bip =
      std::find(algos.begin(), algos.end(), Algo::kBip) != algos.end();
  const bool oracle_on = wants_bip && (spec.balance.top_k * n) % m == 0 &&
                         exhaustive_tractable(spec.balance, opts.oracle_limit);

  std::vector<std::vector<AlgoState>> states(
      static_cast<std::size_t>(spec.layers));
  std::vector<std::vector<std::vector<Scalar>>> vios(
      static_cast<std::size_t>(spec.layers));
  std::vector<std::vector<Scalar>> totals(
      static_cast<std::size_t>(spec.layers));
  std::vector<std::vector<double>> elapsed(
      static_cast<std::size_t>(spec.layers));
  for (Index layer = 0; layer < spec.layers; ++layer) {
    for (Algo algo : algos) {
      states[static_cast<std::size_t>(layer)].push_back(
          make_state(algo, spec, opts));
    }
    vios[static_cast<std::size_t>(layer)].resize(algos.size());
    totals[static_cast<std::size_t>(layer)].assign(algos.size(), 0.0);
    elapsed[static_cast<std::size_t>(layer)].assign(algos.size(), 0.0);
  }

  RunReport report;
  for (Index step = 0; step < steps; ++step) {
    for (Index layer = 0; layer < spec.layers; ++layer) {
      const std::size_t li = static_cast<std::size_t>(layer);
      const ScoreMatrix scores =
          spec.kind == WorkloadKind::kTrace
              ? traces[li].batches[static_cast<std::size_t>(step)]
              : gen_workload(spec, step, layer);
      if (!scores.allFinite()) {
        throw std::runtime_error("run_experiment: non-finite scores");
      }
      const Index step_id = spec.kind == WorkloadKind::kTrace
                                ? traces[li].step_ids[
                                      static_cast<std::size_t>(step)]
                                : step;

      std::optional<Scalar> optimum;
      if (oracle_on) optimum = solve_exhaustive(scores, spec.balance).objective;

      for (std::size_t ai = 0; ai < algos.size(); ++ai) {
        const Algo algo = algos[ai];
        AlgoState& state = states[li][ai];
        std::optional<Scalar> dual_obj;
        const auto start = std::chrono::steady_clock::now();
        Assignment routed;
        switch (algo) {
          case Algo::kGreedy:
            routed = route_greedy(scores, spec.balance.top_k);
            break;
          case Algo::kLossFree:
            routed = route_lossfree(scores, state.bias, spec.balance.top_k);
            state.bias = update_bias(state.bias, routed.loads(), spec.balance);
            break;
          case Algo::kBip: {
            std::vector<Scalar> trace;
            routed = balance_batch(scores, state.dual, spec.balance, &trace);
            check_descent(trace);
            dual_obj = trace.back();
            break;
          }
          case Algo::kOnline:
          case Algo::kOnlineApprox:
            routed = online_route_batch(*state.gate, scores);
            break;
        }
        const auto stop = std::chrono::steady_clock::now();
        elapsed[li][ai] +=
            std::chrono::duration<double, std::milli>(stop - start).count();

        if (dual_obj && optimum && *dual_obj < *optimum - kWeakDualityTol) {
          throw std::logic_error(
              "run_experiment: dual value undercuts the exact optimum");
        }

        StepRecord record;
        record.step = step_id;
        record.layer = layer;
        record.algo = algo;
        record.max_vio = max_vio(routed.loads());
        record.score = routed.total_score();
        record.dual_obj = dual_obj;
        vios[li][ai].push_back(record.max_vio);
        totals[li][ai] += record.score;
        report.steps.push_back(record);
      }
    }
  }

  for (Index layer = 0; layer < spec.layers; ++layer) {
    const std::size_t li = static_cast<std::size_t>(layer);
    for (std::size_t ai = 0; ai < algos.size(); ++ai) {
      const auto [avg, sup] = avg_sup_maxvio(vios[li][ai]);
      SummaryRecord summary;
      summary.algo = algos[ai];
      summary.layer = layer;
      summary.avg_max_vio = avg;
      summary.sup_max_vio = sup;
      summary.total_score = totals[li][ai];
      if (opts.timings) summary.wall_ms = elapsed[li][ai];
      report.summaries.push_back(summary);
    }
  }
  return report;
}

void emit_report(const RunReport& report, const std::string& out_dir) {
  if (report.steps.empty()) {
    throw std::invalid_argument("emit_report: empty report");
  }
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);

  {
    std::ofstream csv(dir / "steps.csv", std::ios::binary);
    if (!csv) throw std::runtime_error("emit_report: cannot write steps.csv");
    csv << "step,layer,algo,max_vio,score,dual_obj\n";
    for (const StepRecord& r : report.steps) {
      csv << r.step << ',' << r.layer << ',' << algo_name(r.algo) << ','
          << format_double(r.max_vio) << ',' << format_double(r.score) << ',';
      if (r.dual_obj) csv << format_double(*r.dual_obj);
      csv << '\n';
    }
    if (!csv) throw std::runtime_error("emit_report: short write to steps.csv");
  }

  nlohmann::ordered_json summaries = nlohmann::ordered_json::array();
  for (const SummaryRecord& s : report.summaries) {
    nlohmann::ordered_json entry;
    entry["algo"] = std::string(algo_name(s.algo));
    entry["layer"] = s.layer;
    entry["avg_max_vio"] = s.avg_max_vio;
    entry["sup_max_vio"] = s.sup_max_vio;
    entry["total_score"] = s.total_score;
    if (s.wall_ms) {
      entry["wall_ms"] = *s.wall_ms;
    } else {
      entry["wall_ms"] = nullptr;
    }
    summaries.push_back(std::move(entry));
  }
  std::ofstream json(dir / "summary.json", std::ios::binary);
  if (!json) throw std::runtime_error("emit_report: cannot write summary.json");
  json << summaries.dump(2) << '\n';
  if (!json) {
    throw std::runtime_error("emit_report: short write to summary.json");
  }
}

}  // namespace bipbal
