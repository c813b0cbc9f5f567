// SPDX-License-Identifier: Apache-2.0
#include "bipbal/workload.hpp"

#include <random>
#include <stdexcept>

namespace bipbal {

namespace {

constexpr std::uint64_t kNoiseTag = 0x6e6f697365ULL;  // per (seed,layer,step)
constexpr std::uint64_t kWalkTag = 0x77616c6bULL;     // per (seed,layer)

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 derive_stream(std::uint64_t seed, std::uint64_t tag,
                              std::uint64_t layer, std::uint64_t step) {
  std::uint64_t h = splitmix64(seed ^ tag);
  h = splitmix64(h ^ layer);
  h = splitmix64(h ^ step);
  return std::mt19937_64(h);
}

// Popularity offsets after `step` steps of the layer's random walk,
// recomputed from the walk's origin so results are call-order free.
Vector drift_offsets(const WorkloadSpec& spec, Index step, Index layer) {
  const Index m = spec.balance.experts;
  std::mt19937_64 rng = derive_stream(
      spec.seed, kWalkTag, static_cast<std::uint64_t>(layer), 0);
  std::normal_distribution<Scalar> normal(0.0, 1.0);
  Vector offsets = Vector::Zero(m);
  for (Index t = 0; t < step; ++t) {
    for (Index j = 0; j < m; ++j) offsets(j) += spec.drift_rate * normal(rng);
  }
  return offsets;
}

}  // namespace

void WorkloadSpec::validate() const {
  balance.validate();
  if (!(skew >= 0.0)) {
    throw std::invalid_argument("WorkloadSpec: skew must be >= 0");
  }
  if (!(drift_rate >= 0.0)) {
    throw std::invalid_argument("WorkloadSpec: drift_rate must be >= 0");
  }
  if (layers < 1) {
    throw std::invalid_argument("WorkloadSpec: layers must be >= 1");
  }
  if (steps < 1) {
    throw std::invalid_argument("WorkloadSpec: steps must be >= 1");
  }
  if (kind == WorkloadKind::kTrace && trace_path.empty()) {
    throw std::invalid_argument("WorkloadSpec: trace kind requires a path");
  }
}

ScoreMatrix softmax_rows(const ScoreMatrix& logits) {
  ScoreMatrix scores(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const Vector shifted =
        (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
    scores.row(i) = shifted / shifted.sum();
  }
  return scores;
}

ScoreMatrix gen_workload(const WorkloadSpec& spec, Index step, Index layer) {
  spec.validate();
  if (spec.kind == WorkloadKind::kTrace) {
    throw std::invalid_argument(
        "gen_workload: trace workloads are read from files");
  }
  if (step < 0 || step >= spec.steps || layer < 0 || layer >= spec.layers) {
    throw std::invalid_argument("gen_workload: step or layer out of range");
  }
  const Index n = spec.balance.tokens;
  const Index m = spec.balance.experts;

  Vector offsets = Vector::Zero(m);
  if (spec.kind == WorkloadKind::kSkew) {
    for (Index j = 0; j < m; ++j) {
      offsets(j) = spec.skew * static_cast<Scalar>(m - j) /
                   static_cast<Scalar>(m);
    }
  } else if (spec.kind == WorkloadKind::kDrift) {
    offsets = drift_offsets(spec, step, layer);
  }

  std::mt19937_64 rng =
      derive_stream(spec.seed, kNoiseTag, static_cast<std::uint64_t>(layer),
                    static_cast<std::uint64_t>(step));
  std::normal_distribution<Scalar> normal(0.0, 1.0);
  ScoreMatrix logits(n, m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) logits(i, j) = offsets(j) + normal(rng);
  }
  return softmax_rows(logits).cwiseMin(kScoreMax);
}

}  // namespace bipbal
