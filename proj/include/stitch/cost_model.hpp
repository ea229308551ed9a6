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

#ifndef STITCH_COST_MODEL_H_
#define STITCH_COST_MODEL_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stitch/graph.hpp"

// Fusion pattern scoring. The model-based score is M(V) + (N-1)*phi where V
// is the off-chip traffic saved and M extrapolates the latency of accessing
// V bytes from an offline-collected bandwidth table. Patterns whose shared
// memory demand cannot be satisfied score negative and are dropped.

namespace stitch {

// Achieved-bandwidth samples by transfer size, ascending. Bandwidths are
// non-decreasing: utilization grows with transfer size until saturation.
struct BandwidthModel {
  struct Point {
    int64_t bytes;
    double bytes_per_sec;
  };
  std::vector<Point> points;

  static BandwidthModel from_csv_text(const std::string& text);
  static BandwidthModel from_csv_file(const std::string& path);
  // Synthetic saturating curve; same values as data/bandwidth_model.csv.
  static BandwidthModel default_model();

  // Piecewise-linear in log(bytes), clamped to the first/last sample.
  double bandwidth_at(int64_t bytes) const;
};

enum class CostMode { kModelBased, kExecutionBased, kHybrid };

struct CostConfig {
  double phi_us = 8.0;                 // per-kernel launch latency
  int64_t shared_limit_bytes = 49152;  // per-block shared memory threshold T
  CostMode mode = CostMode::kHybrid;
};

struct PatternScore {
  int pattern_id = -1;
  double score_us = 0.0;
  bool feasible = true;
  int64_t saved_bytes = 0;
};

// Measured kernel times supplied by an external evaluator, when one exists.
struct ExecSample {
  std::vector<double> per_op_us;    // K(Op_j), in pattern node-id order
  std::optional<double> fused_us;   // K(P); absent if generation failed
};

class ExecutionEvaluator {
 public:
  virtual ~ExecutionEvaluator() = default;
  virtual std::optional<ExecSample> measure(const Graph& g,
                                            const FusionPattern& p) = 0;
};

// Off-chip bytes saved by fusing p: one read per internal (producer,
// consumer) pair, plus the producer write when every consumer is inside p.
int64_t saved_bytes(const Graph& g, const FusionPattern& p);

// Extrapolated latency (microseconds) of accessing v consecutive bytes.
double m_of_v(const BandwidthModel& bm, int64_t v);

// Worst-case post-reuse shared allocation of the pattern against the limit.
// Returns (feasible, total bytes requested).
std::pair<bool, int64_t> shared_feasible(const Graph& g, const FusionPattern& p,
                                         const CostConfig& cfg);

PatternScore score_model_based(const Graph& g, const FusionPattern& p,
                               const BandwidthModel& bm, const CostConfig& cfg);

PatternScore score_execution_based(const FusionPattern& p,
                                   const std::vector<double>& per_op_us,
                                   std::optional<double> fused_us,
                                   const CostConfig& cfg);

// True for patterns the model handles poorly: column/scalar reductions mixed
// with row reductions, or gemms mixed with reductions.
bool is_complex_pattern(const Graph& g, const FusionPattern& p);

// Hybrid routing: model-based for simple patterns; execution-based for
// complex ones when an evaluator is present, else model-based fallback.
PatternScore score_pattern(const Graph& g, const FusionPattern& p,
                           const BandwidthModel& bm, const CostConfig& cfg,
                           ExecutionEvaluator* evaluator = nullptr);

}  // namespace stitch

#endif  // STITCH_COST_MODEL_H_
