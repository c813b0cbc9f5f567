// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "bipbal/types.hpp"

#include <string>
#include <vector>

namespace bipbal {

// Score batches loaded from or destined for one CSV trace file.
// Header: step,score_0,...,score_{m-1}; one row per token; rows grouped
// by strictly ascending step id.
struct TraceData {
  Index experts = 0;
  std::vector<Index> step_ids;       // one entry per batch, ascending
  std::vector<ScoreMatrix> batches;  // batches[i] belongs to step_ids[i]
};

// Parses a trace file. Malformed headers, ragged rows, unparsable
// numbers, and scores outside [0, 1) raise std::runtime_error naming
// the offending line.
TraceData read_trace(const std::string& path);

// Writes a trace with shortest round-trip float formatting, so
// write_trace then read_trace reproduces every value bit-exactly.
void write_trace(const std::string& path, const TraceData& data);

// "scores.csv" -> "scores_layer2.csv"; used to fan one base path out
// into per-layer trace files.
std::string trace_layer_path(const std::string& base, Index layer);

}  // namespace bipbal
