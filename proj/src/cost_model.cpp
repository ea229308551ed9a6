/* Copyright 2026 The Stitch Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "stitch/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "stitch/emitter.hpp"

namespace stitch {

BandwidthModel BandwidthModel::from_csv_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("bandwidth model: empty file");
  }
  // Tolerate a UTF-8 BOM and trailing CR.
  if (line.size() >= 3 && line.rfind("\xEF\xBB\xBF", 0) == 0) line = line.substr(3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "bytes,bandwidth_bytes_per_sec") {
    throw ParseError("bandwidth model: expected header "
                     "'bytes,bandwidth_bytes_per_sec', got '" + line + "'");
  }
  BandwidthModel bm;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t comma = line.find(',');
    if (comma == std::string::npos) {
      throw ParseError("bandwidth model line " + std::to_string(lineno) +
                       ": expected 'bytes,bandwidth'");
    }
    Point p;
    try {
      p.bytes = std::stoll(line.substr(0, comma));
      p.bytes_per_sec = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw ParseError("bandwidth model line " + std::to_string(lineno) +
                       ": malformed number");
    }
    bm.points.push_back(p);
  }
  if (bm.points.size() < 2) {
    throw ParseError("bandwidth model: need at least two sample points");
  }
  for (size_t i = 0; i < bm.points.size(); ++i) {
    if (bm.points[i].bytes_per_sec <= 0) {
      throw ParseError("bandwidth model: bandwidths must be positive");
    }
    if (i > 0 && bm.points[i].bytes <= bm.points[i - 1].bytes) {
      throw ParseError("bandwidth model: byte sizes must be strictly increasing");
    }
    if (i > 0 && bm.points[i].bytes_per_sec < bm.points[i - 1].bytes_per_sec) {
      throw ParseError("bandwidth model: bandwidth must be non-decreasing");
    }
  }
  return bm;
}

BandwidthModel BandwidthModel::from_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open bandwidth model: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_csv_text(buf.str());
}

BandwidthModel BandwidthModel::default_model() {
  BandwidthModel bm;
  bm.points = {
      {4096, 40e9},       {16384, 80e9},      {65536, 160e9},
      {262144, 320e9},    {1048576, 480e9},   {4194304, 640e9},
      {16777216, 780e9},  {67108864, 850e9},  {268435456, 880e9},
      {1073741824, 890e9},
  };
  return bm;
}

double BandwidthModel::bandwidth_at(int64_t bytes) const {
  if (bytes <= points.front().bytes) return points.front().bytes_per_sec;
  if (bytes >= points.back().bytes) return points.back().bytes_per_sec;
  for (size_t i = 1; i < points.size(); ++i) {
    if (bytes <= points[i].bytes) {
      double lo = std::log(static_cast<double>(points[i - 1].bytes));
      double hi = std::log(static_cast<double>(points[i].bytes));
      double t = (std::log(static_cast<double>(bytes)) - lo) / (hi - lo);
      return points[i - 1].bytes_per_sec +
             t * (points[i].bytes_per_sec - points[i - 1].bytes_per_sec);
    }
  }
  return points.back().bytes_per_sec;
}

double m_of_v(const BandwidthModel& bm, int64_t v) {
  if (v <= 0) return 0.0;
  return static_cast<double>(v) / bm.bandwidth_at(v) * 1e6;
}

int64_t saved_bytes(const Graph& g, const FusionPattern& p) {
  auto consumers = consumer_map(g);
  int64_t v = 0;
  for (const std::string& id : p.node_ids) {
    const OpNode& producer = g.at(id);
    int64_t bytes = producer.shape.byte_count();
    std::set<std::string> inside, outside;
    for (const std::string& c : consumers[id]) {
      (p.node_ids.count(c) ? inside : outside).insert(c);
    }
    // One saved read per internal consumer (an op reading the value twice
    // still loads it once), plus the saved write when nothing outside needs
    // the value materialized.
    v += bytes * static_cast<int64_t>(inside.size());
    bool graph_output =
        std::count(g.outputs.begin(), g.outputs.end(), id) > 0;
    if (outside.empty() && !graph_output && !inside.empty()) v += bytes;
  }
  return v;
}

std::pair<bool, int64_t> shared_feasible(const Graph& g, const FusionPattern& p,
                                         const CostConfig& cfg) {
  std::vector<SharedRequest> requests = canonical_shared_requests(g, p);
  int64_t requested = 0;
  for (const SharedRequest& r : requests) requested += r.bytes;
  if (requests.empty()) return {true, 0};
  AllocMap allocs = shared_planning(g, p, requests);
  return {allocs.total <= cfg.shared_limit_bytes, requested};
}

PatternScore score_model_based(const Graph& g, const FusionPattern& p,
                               const BandwidthModel& bm, const CostConfig& cfg) {
  PatternScore score;
  score.pattern_id = p.pattern_id;
  auto [feasible, requested] = shared_feasible(g, p, cfg);
  if (!feasible) {
    score.feasible = false;
    score.score_us = -1.0;
    return score;
  }
  score.saved_bytes = saved_bytes(g, p);
  int n = static_cast<int>(p.node_ids.size());
  score.score_us = m_of_v(bm, score.saved_bytes) + (n - 1) * cfg.phi_us;
  score.feasible = true;
  return score;
}

PatternScore score_execution_based(const FusionPattern& p,
                                   const std::vector<double>& per_op_us,
                                   std::optional<double> fused_us,
                                   const CostConfig& cfg) {
  PatternScore score;
  score.pattern_id = p.pattern_id;
  if (per_op_us.size() != p.node_ids.size()) {
    throw GraphError("execution-based score: expected one kernel time per op");
  }
  if (!fused_us.has_value()) {
    score.feasible = false;
    score.score_us = -1.0;
    return score;
  }
  double sum = 0.0;
  for (double k : per_op_us) sum += k;
  int n = static_cast<int>(p.node_ids.size());
  score.score_us = sum + (n - 1) * cfg.phi_us - *fused_us;
  score.feasible = score.score_us >= 0.0;
  return score;
}

bool is_complex_pattern(const Graph& g, const FusionPattern& p) {
  bool has_row = false, has_col_or_scalar = false, has_reduce = false,
       has_dot = false;
  for (const std::string& id : p.node_ids) {
    const OpNode& n = g.at(id);
    if (n.type == OpType::kReduce) {
      has_reduce = true;
      if (reduce_kind(g, n) == ReduceKind::kRow) {
        has_row = true;
      } else {
        has_col_or_scalar = true;
      }
    }
    if (n.type == OpType::kDot || n.type == OpType::kBatchedDot) has_dot = true;
  }
  return (has_row && has_col_or_scalar) || (has_dot && has_reduce);
}

PatternScore score_pattern(const Graph& g, const FusionPattern& p,
                           const BandwidthModel& bm, const CostConfig& cfg,
                           ExecutionEvaluator* evaluator) {
  bool want_execution =
      cfg.mode == CostMode::kExecutionBased ||
      (cfg.mode == CostMode::kHybrid && is_complex_pattern(g, p));
  if (want_execution && evaluator != nullptr) {
    if (std::optional<ExecSample> sample = evaluator->measure(g, p)) {
      return score_execution_based(p, sample->per_op_us, sample->fused_us, cfg);
    }
  }
  return score_model_based(g, p, bm, cfg);
}

}  // namespace stitch
