// SPDX-License-Identifier: Apache-2.0
#include "bipbal/trace_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string_view>
#include <system_error>
#include <vector>

namespace bipbal {

namespace {

[[noreturn]] void fail(const std::string& path, std::size_t line,
                       const std::string& message) {
  std::ostringstream out;
  out << path << " line " << line << ": " << message;
  throw std::runtime_error(out.str());
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <typename T>
T parse_number(std::string_view field, const std::string& path,
               std::size_t line) {
  T value{};
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    fail(path, line, "cannot parse number '" + std::string(field) + "'");
  }
  return value;
}

std::string format_double(Scalar value) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw std::logic_error("to_chars failed");
  return std::string(buf, ptr);
}

}  // namespace

TraceData read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace file " + path);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) fail(path, 1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string_view> header = split_fields(line);
  if (header.size() < 2 || header[0] != "step") {
    fail(path, line_no, "header must be step,score_0,...");
  }
  for (std::size_t j = 1; j < header.size(); ++j) {
    const std::string want = "score_" + std::to_string(j - 1);
    if (header[j] != want) {
      fail(path, line_no, "expected column '" + want + "', got '" +
                              std::string(header[j]) + "'");
    }
  }
  const Index experts = static_cast<Index>(header.size() - 1);

  TraceData data;
  data.experts = experts;
  std::vector<Vector> rows;  // tokens of the batch currently being read
  Index current_step = -1;
  bool have_batch = false;

  const auto flush_batch = [&]() {
    if (!have_batch) return;
    ScoreMatrix batch(static_cast<Index>(rows.size()), experts);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      batch.row(static_cast<Index>(i)) = rows[i].transpose();
    }
    data.step_ids.push_back(current_step);
    data.batches.push_back(std::move(batch));
    rows.clear();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    const std::vector<std::string_view> fields = split_fields(line);
    if (static_cast<Index>(fields.size()) != experts + 1) {
      fail(path, line_no,
           "expected " + std::to_string(experts + 1) + " columns, got " +
               std::to_string(fields.size()));
    }
    const Index step = parse_number<Index>(fields[0], path, line_no);
    if (step < 0) fail(path, line_no, "negative step id");
    if (have_batch && step < current_step) {
      fail(path, line_no, "steps must be grouped in ascending order");
    }
    if (!have_batch || step != current_step) {
      flush_batch();
      current_step = step;
      have_batch = true;
    }
    Vector token(experts);
    for (Index j = 0; j < experts; ++j) {
      const Scalar v = parse_number<Scalar>(
          fields[static_cast<std::size_t>(j) + 1], path, line_no);
      if (!(v >= 0.0) || !(v < 1.0)) {
        fail(path, line_no, "score " + format_double(v) +
                                " outside [0, 1)");
      }
      token(j) = v;
    }
    rows.push_back(std::move(token));
  }
  flush_batch();
  if (data.batches.empty()) {
    throw std::runtime_error("trace file " + path + " has no data rows");
  }
  return data;
}

void write_trace(const std::string& path, const TraceData& data) {
  if (data.step_ids.size() != data.batches.size()) {
    throw std::invalid_argument("write_trace: step/batch count mismatch");
  }
  if (data.experts < 1) {
    throw std::invalid_argument("write_trace: experts must be >= 1");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");

  out << "step";
  for (Index j = 0; j < data.experts; ++j) out << ",score_" << j;
  out << '\n';
  for (std::size_t b = 0; b < data.batches.size(); ++b) {
    const ScoreMatrix& batch = data.batches[b];
    if (batch.cols() != data.experts) {
      throw std::invalid_argument("write_trace: batch width mismatch");
    }
    for (Index i = 0; i < batch.rows(); ++i) {
      out << data.step_ids[b];
      for (Index j = 0; j < data.experts; ++j) {
        out << ',' << format_double(batch(i, j));
      }
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("short write to " + path);
}

std::string trace_layer_path(const std::string& base, Index layer) {
  const std::size_t dot = base.find_last_of('.');
  const std::size_t slash = base.find_last_of('/');
  const std::string suffix = "_layer" + std::to_string(layer);
  if (dot == std::string::npos ||
      (slash != std::string::npos && dot < slash)) {
    return base + suffix;
  }
  return base.substr(0, dot) + suffix + base.substr(dot);
}

}  // namespace bipbal
