// SPDX-License-Identifier: Apache-2.0
//
// Reference routers: raw-score greedy and bias-corrected loss-free routing.
#pragma once

#include "bipbal/types.hpp"

namespace bipbal {

// Slowly adapted per-expert selection bias for the loss-free router. The bias
// shifts selection only; gate values always come from the raw scores.
struct BiasState {
  Vector bias;         // empty means all-zero
  Scalar rate = 1e-3;  // per-batch step size u
};

// Plain per-token top-k of the raw scores, load-then-index tie-breaking.
Assignment route_greedy(const ScoreMatrix& scores, Index top_k);

// Per-token top-k of (s + b); gates from the raw scores.
Assignment route_lossfree(const ScoreMatrix& scores, const BiasState& state,
                          Index top_k);

// Post-batch bias step: b_j += rate * sign(kn/m - loads_j), sign(0) = 0.
BiasState update_bias(const BiasState& state, const LoadVector& loads,
                      const BalanceConfig& cfg);

}  // namespace bipbal
