// SPDX-License-Identifier: Apache-2.0

#include "bipbal/routing.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace bipbal {

void select_topk_adjusted(Eigen::Ref<const Vector> scores,
                          Eigen::Ref<const Vector> offsets,
                          const LoadVector& loads, Index k,
                          std::vector<int>& out) {
  const Index m = scores.size();
  if (offsets.size() != m || loads.size() != m) {
    throw std::invalid_argument("select_topk_adjusted: size mismatch");
  }
  if (k < 1 || k >= m) {
    throw std::invalid_argument("select_topk_adjusted: need 1 <= k < experts");
  }

  const Vector adjusted = scores - offsets;
  out.resize(static_cast<std::size_t>(m));
  std::iota(out.begin(), out.end(), 0);
  auto better = [&](int a, int b) {
    if (adjusted(a) != adjusted(b)) return adjusted(a) > adjusted(b);
    if (loads(a) != loads(b)) return loads(a) < loads(b);
    return a < b;
  };
  std::partial_sort(out.begin(), out.begin() + k, out.end(), better);
  out.resize(static_cast<std::size_t>(k));
}

std::vector<int> select_topk_adjusted(Eigen::Ref<const Vector> scores,
                                      Eigen::Ref<const Vector> offsets,
                                      const LoadVector& loads, Index k) {
  std::vector<int> out;
  select_topk_adjusted(scores, offsets, loads, k, out);
  return out;
}

Assignment build_gates(const ScoreMatrix& scores, const IndexMatrix& experts) {
  const Index n = scores.rows();
  const Index m = scores.cols();
  if (experts.rows() != n) {
    throw std::invalid_argument("build_gates: token count mismatch");
  }
  const Index k = experts.cols();
  if (k < 1 || k > m) {
    throw std::invalid_argument("build_gates: need 1 <= k <= experts");
  }

  Assignment out;
  out.experts = experts;
  out.gates.resize(n, k);
  out.expert_count = m;
  std::vector<char> seen(static_cast<std::size_t>(m));
  for (Index i = 0; i < n; ++i) {
    std::fill(seen.begin(), seen.end(), 0);
    for (Index l = 0; l < k; ++l) {
      const int j = experts(i, l);
      if (j < 0 || j >= m) {
        throw std::out_of_range("build_gates: expert index out of range");
      }
      if (seen[static_cast<std::size_t>(j)]) {
        throw std::invalid_argument("build_gates: duplicate expert for token");
      }
      seen[static_cast<std::size_t>(j)] = 1;
      out.gates(i, l) = scores(i, j);
    }
  }
  return out;
}

}  // namespace bipbal
