// SPDX-License-Identifier: Apache-2.0
//
// Batch balancing through coordinate updates of the LP-relaxation duals.
#pragma once

#include "bipbal/types.hpp"

#include <optional>
#include <vector>

namespace bipbal {

// Dual iterate carried across batches. The expert-side prices warm-start the
// next batch; the token-side prices are recomputed from scratch each batch.
struct DualState {
  Vector expert_dual;  // q, one price per expert; empty means all-zero
  std::optional<Scalar> last_dual_objective;
};

// Exact token-side coordinate minimizer given fixed expert prices:
// p_i = max(0, (k+1)-th largest of s_i - q).
Vector update_token_dual(const ScoreMatrix& scores, const Vector& expert_dual,
                         Index top_k);

// Exact expert-side coordinate minimizer given fixed token prices:
// q_j = max(0, r-th largest of column j of scores minus p), with
// r = floor(kn/m) + 1.
Vector update_expert_dual(const ScoreMatrix& scores, const Vector& token_dual,
                          const BalanceConfig& cfg);

// Dual objective of the relaxed assignment LP with the slack variables
// eliminated at their optimum:
// D(p, q) = k sum(p) + (kn/m) sum(q) + sum_ij max(s_ij - p_i - q_j, 0).
// Upper-bounds the score of every feasible capacity-respecting assignment.
Scalar dual_objective(const ScoreMatrix& scores, const Vector& token_dual,
                      const Vector& expert_dual, const BalanceConfig& cfg);

// Routes one batch: runs cfg.dual_iters alternating p/q sweeps from the warm
// expert prices in `state` (p reset to zero), then selects each token's top-k
// by price-adjusted score. Gates are the raw scores of the selected pairs.
// On return `state` holds the refreshed expert prices and final objective.
// When non-null, `objective_trace` receives D before the first sweep and
// after every half-update (2 * dual_iters + 1 values, non-increasing).
Assignment balance_batch(const ScoreMatrix& scores, DualState& state,
                         const BalanceConfig& cfg,
                         std::vector<Scalar>* objective_trace = nullptr);

}  // namespace bipbal
