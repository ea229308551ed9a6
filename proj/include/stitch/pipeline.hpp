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

#ifndef STITCH_PIPELINE_H_
#define STITCH_PIPELINE_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stitch/cost_model.hpp"
#include "stitch/emitter.hpp"
#include "stitch/graph.hpp"
#include "stitch/ilp_solver.hpp"
#include "stitch/pattern_gen.hpp"
#include "stitch/template_ir.hpp"
#include "stitch/transform.hpp"

// End-to-end driver: candidate generation, scoring, ILP selection with cycle
// elimination, graph rewriting, kernel generation, and the evaluation-metric
// report the CLI prints.

namespace stitch {

struct PlanOptions {
  Strategy strategy = Strategy::kBoth;
  SeedConfig seed_cfg;
  MultiStepConfig ms_cfg;
  CostConfig cost_cfg;
  EmitterConfig emit_cfg;
  TemplateLimits limits;
  uint64_t seed = 0;  // recorded in artifacts for randomized harnesses
};

struct CategoryStat {
  int count = 0;
  double share = 0.0;  // estimated-time share of the plan total
};

struct SharedStats {
  double pt_ratio = 0.0;       // fraction of selected patterns needing shared
  int64_t avg_shd_bytes = 0;   // mean allocation over patterns that need it
  int64_t max_shd_bytes = 0;
  double alloc_over_req = 0.0;
  bool any_request = false;
};

struct RunReport {
  double kernel_compression = 1.0;
  std::map<std::string, CategoryStat> pattern_breakdown;
  SharedStats shared_stats;
  double plan_score_total_us = 0.0;
  uint64_t seed = 0;
};

// ILP instance over the non-negative-score candidates only.
struct IlpBuild {
  IlpInstance instance;
  std::vector<int> var_to_pattern;  // instance variable -> pattern index
};

IlpBuild build_ilp_instance(const std::vector<FusionPattern>& patterns,
                            const std::vector<PatternScore>& scores);

struct PlanResult {
  std::vector<FusionPattern> patterns;
  std::vector<PatternScore> scores;
  IlpBuild ilp;
  std::vector<int> selected_patterns;  // pattern indices, ascending
  double total_score_us = 0.0;
  Graph fused;
  RunReport report;
};

PlanResult run_plan(const Graph& g, const BandwidthModel& bm,
                    const PlanOptions& opts,
                    ExecutionEvaluator* evaluator = nullptr);

struct CodegenOptions {
  EmitterConfig emit_cfg;
  TemplateLimits limits;
  std::optional<Template> user_template;
};

struct CodegenResult {
  std::vector<KernelSketch> kernels;  // one best kernel per fused op
};

CodegenResult run_codegen(const Graph& fused, const BandwidthModel& bm,
                          const CodegenOptions& opts,
                          KernelEvaluator* evaluator = nullptr);

// Artifact serialization (stable field order; byte-identical across runs).
std::string plan_to_json(const PlanResult& r);
std::string report_to_json(const RunReport& r);
std::string manifest_to_json(const CodegenResult& r);
std::string report_to_text(const RunReport& r);

// Parses the report.json written by plan; throws ParseError on bad input.
RunReport report_from_json(const std::string& text);

// Per-op (and optional fused-pattern) kernel times from a CSV with header
// `name,kernel_us`; fused rows name the pattern's sorted op ids joined by '+'.
class CsvExecutionEvaluator : public ExecutionEvaluator {
 public:
  static CsvExecutionEvaluator from_csv_file(const std::string& path);
  static CsvExecutionEvaluator from_csv_text(const std::string& text);
  std::optional<ExecSample> measure(const Graph& g,
                                    const FusionPattern& p) override;

 private:
  std::map<std::string, double> times_;
};

}  // namespace stitch

#endif  // STITCH_PIPELINE_H_
