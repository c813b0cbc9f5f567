// SPDX-License-Identifier: Apache-2.0
//
// Partial-selection order statistics over scratch buffers.
#pragma once

#include "bipbal/types.hpp"

#include <algorithm>
#include <functional>
#include <span>
#include <stdexcept>

namespace bipbal {

// r-th largest element (1-based) of `values`, found by partial selection.
// Reorders the buffer; average O(|values|).
inline Scalar kth_largest_inplace(std::span<Scalar> values, Index r) {
  if (r < 1 || r > static_cast<Index>(values.size())) {
    throw std::out_of_range("kth_largest_inplace: rank out of range");
  }
  auto* target = values.data() + (r - 1);
  std::nth_element(values.data(), target, values.data() + values.size(),
                   std::greater<Scalar>());
  return *target;
}

}  // namespace bipbal
