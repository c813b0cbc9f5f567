// SPDX-License-Identifier: Apache-2.0
//
// Exact small-instance solvers for capacity-constrained top-k assignment.
#pragma once

#include "bipbal/types.hpp"

#include <cstdint>

namespace bipbal {

// Tolerance below which a dual value may undercut a feasible objective before
// it counts as a genuine weak-duality violation.
inline constexpr Scalar kWeakDualityTol = 1e-9;

// Dense 0/1 assignment together with its raw-score objective.
struct ExactSolution {
  DenseMatrix<std::uint8_t> assignment;  // n x m indicator, rows sum to k
  Scalar objective = 0.0;

  LoadVector loads() const {
    LoadVector counts = LoadVector::Zero(assignment.cols());
    for (Index i = 0; i < assignment.rows(); ++i) {
      for (Index j = 0; j < assignment.cols(); ++j) {
        counts(j) += assignment(i, j);
      }
    }
    return counts;
  }
};

// True when the (m choose k)^n search tree stays within `limit` leaves.
bool exhaustive_tractable(const BalanceConfig& cfg, double limit = 1e7);

// Depth-first search over per-token k-subsets with capacity and optimistic
// bound pruning, warm-started by a balanced greedy routing. Deterministic:
// returns the warm start if nothing beats it, otherwise the first strict
// improvement in lexicographic search order. Refuses instances whose search
// space (m choose k)^n exceeds 1e7 leaves.
ExactSolution solve_exhaustive(const ScoreMatrix& scores,
                               const BalanceConfig& cfg);

// Min-cost max-flow formulation solved by successive shortest augmenting
// paths (Dijkstra on reduced costs). Requires integral kn/m so the expert
// capacity is exact; refuses instances with more than 1e6 score entries.
ExactSolution solve_flow(const ScoreMatrix& scores, const BalanceConfig& cfg);

// Gap D(p, q) - solution.objective. Throws std::logic_error when the gap is
// below -kWeakDualityTol, i.e. when the dual value undercuts a feasible
// assignment it must upper-bound.
Scalar verify_weak_duality(const ScoreMatrix& scores, const Vector& token_dual,
                           const Vector& expert_dual, const BalanceConfig& cfg,
                           const ExactSolution& solution);

}  // namespace bipbal
