// SPDX-License-Identifier: Apache-2.0
//
// Load-balance metrics: per-batch violation ratio and its run summaries.
#pragma once

#include "bipbal/types.hpp"

#include <utility>
#include <vector>

namespace bipbal {

// max_j loads_j / (sum/m) - 1. Zero means perfectly equal loads; requires a
// positive total load.
Scalar max_vio(const LoadVector& loads);

// (mean, maximum) of a per-step violation series; rejects empty series.
std::pair<Scalar, Scalar> avg_sup_maxvio(const std::vector<Scalar>& series);

// Diagnostic value of the auxiliary balance loss: alpha * sum_j f_j P_j with
// f_j = (m/kn) * load_j and P_j the column mean score. Equals alpha exactly
// for row-normalized scores under a perfectly balanced assignment.
Scalar aux_loss_value(const ScoreMatrix& scores, const Assignment& assignment,
                      Scalar alpha, const BalanceConfig& cfg);

}  // namespace bipbal
