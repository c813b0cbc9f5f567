// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "bipbal/types.hpp"

#include <cstdint>
#include <string>

namespace bipbal {

enum class WorkloadKind { kUniform, kSkew, kDrift, kTrace };

// Synthetic score-stream description. Generation is a pure function of
// (seed, layer, step), so layers and steps may be evaluated in any order.
struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::kUniform;
  Scalar skew = 2.0;        // popularity ramp height, kSkew only
  Scalar drift_rate = 0.0;  // random-walk scale per step, kDrift only
  std::uint64_t seed = 0;
  Index layers = 1;
  Index steps = 1;
  BalanceConfig balance;
  std::string trace_path;  // kTrace only

  void validate() const;  // throws std::invalid_argument
};

// Row-wise numerically stable softmax; a row of equal logits maps to 1/m.
ScoreMatrix softmax_rows(const ScoreMatrix& logits);

// One batch of scores for (step, layer). Rows are softmax distributions
// clamped into [0, kScoreMax]. Throws for kTrace, which is file-backed.
ScoreMatrix gen_workload(const WorkloadSpec& spec, Index step, Index layer);

}  // namespace bipbal
