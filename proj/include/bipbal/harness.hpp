// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "bipbal/online_balancer.hpp"
#include "bipbal/types.hpp"
#include "bipbal/workload.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bipbal {

enum class Algo { kGreedy, kLossFree, kBip, kOnline, kOnlineApprox };

// CSV/CLI spelling of an algorithm.
std::string_view algo_name(Algo algo);
std::optional<Algo> parse_algo(std::string_view name);

struct StepRecord {
  Index step = 0;
  Index layer = 0;
  Algo algo = Algo::kGreedy;
  Scalar max_vio = 0.0;
  Scalar score = 0.0;
  std::optional<Scalar> dual_obj;  // batch-dual runs only
};

struct SummaryRecord {
  Algo algo = Algo::kGreedy;
  Index layer = 0;
  Scalar avg_max_vio = 0.0;
  Scalar sup_max_vio = 0.0;
  Scalar total_score = 0.0;
  std::optional<double> wall_ms;  // populated only when timings are on
};

struct RunReport {
  std::vector<StepRecord> steps;        // step-major, layer, then algo
  std::vector<SummaryRecord> summaries; // layer-major, algo in run order
};

struct RunOptions {
  Index buckets = 100;                    // histogram width for kOnlineApprox
  WindowMode window = WindowMode::kBatch; // online variants
  bool reset_keeps_dual = true;
  Scalar bias_rate = 1e-3;                // kLossFree adaptation rate
  bool timings = false;                   // wall_ms breaks byte determinism
  double oracle_limit = 1e5;              // auto-verify when tree fits
};

// Routes every (layer, step) batch with each requested algorithm and
// collects per-step and per-run balance metrics. Per layer, each
// algorithm owns independent state (bias, duals, or gate) carried
// across steps. Batch-dual runs record the final dual objective,
// assert monotone descent over the refresh trace, and, on instances
// small enough to enumerate, verify the dual stays above the exact
// optimum. Trace workloads take their step count and ids from the
// file; generated workloads use spec.steps.
RunReport run_experiment(const WorkloadSpec& spec,
                         const std::vector<Algo>& algos,
                         const RunOptions& opts = {});

// Writes steps.csv and summary.json into out_dir (created if absent).
// Identical reports serialize to identical bytes.
void emit_report(const RunReport& report, const std::string& out_dir);

}  // namespace bipbal
