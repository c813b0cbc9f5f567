// SPDX-License-Identifier: Apache-2.0
//
// Per-token top-k expert selection and gate assembly.
#pragma once

#include "bipbal/types.hpp"

#include <vector>

namespace bipbal {

// Selects the k experts with the largest offset-adjusted scores for one token,
// i.e. the top-k of scores - offsets. Boundary ties break toward the smaller
// current in-batch load, then the smaller expert index; `out` receives the k
// winners ordered by that same comparator.
void select_topk_adjusted(Eigen::Ref<const Vector> scores,
                          Eigen::Ref<const Vector> offsets,
                          const LoadVector& loads, Index k,
                          std::vector<int>& out);

std::vector<int> select_topk_adjusted(Eigen::Ref<const Vector> scores,
                                      Eigen::Ref<const Vector> offsets,
                                      const LoadVector& loads, Index k);

// Assembles the routing result for a fixed expert selection. Gates carry the
// raw scores of the selected pairs; unselected pairs stay at zero. Rejects
// out-of-range and duplicate expert indices.
Assignment build_gates(const ScoreMatrix& scores, const IndexMatrix& experts);

}  // namespace bipbal
