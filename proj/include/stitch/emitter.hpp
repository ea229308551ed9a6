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

#ifndef STITCH_EMITTER_H_
#define STITCH_EMITTER_H_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stitch/cost_model.hpp"
#include "stitch/graph.hpp"
#include "stitch/template_ir.hpp"

// CUDA-C kernel sketch generation: register planning, shared-memory planning
// with dominance-tree reuse, per-schedule emitters for the four composition
// mechanisms (packing, thread, warp, block), and best-kernel selection via a
// static cost proxy.

namespace stitch {

enum class SharedReason { kReduceTransfer, kDotTransfer, kElemwiseStage };

std::string to_string(SharedReason r);

struct SharedRequest {
  std::string op_id;
  int64_t bytes = 0;
  SharedReason reason = SharedReason::kElemwiseStage;
};

struct AllocEntry {
  std::string op_id;
  int64_t offset = 0;
  int64_t size = 0;
  std::optional<std::string> reused_from;
};

struct AllocMap {
  std::vector<AllocEntry> entries;
  int64_t total = 0;  // worst-case bytes the kernel must declare

  const AllocEntry* find(const std::string& op_id) const {
    for (const AllocEntry& e : entries) {
      if (e.op_id == op_id) return &e;
    }
    return nullptr;
  }
  int64_t requested() const {
    int64_t sum = 0;
    for (const AllocEntry& e : entries) sum += e.size;
    return sum;
  }
};

enum class Composition { kPacking, kThread, kWarp, kBlock };

std::string to_string(Composition c);

struct KernelSketch {
  std::string name;
  std::string source;  // CUDA-C text with exactly one kernel entry function
  int cta_num = 1;
  int cta_size = 128;
  int64_t shared_bytes = 0;
  std::set<Composition> composition;
  AllocMap allocs;
  Template tmpl;
  double traffic_bytes = 0.0;  // estimated off-chip bytes touched
  int barrier_count = 0;
};

struct EmitterConfig {
  double barrier_cost_us = 0.5;     // proxy weight per block-level barrier
  double occupancy_weight_us = 5.0; // proxy weight once shared use passes half
  int64_t shared_limit_bytes = 49152;
};

// Post-dominance on the pattern dataflow DAG augmented with a virtual sink
// over the pattern outputs: a post-dominates b iff every path from b to the
// sink passes through a.
class PostDominance {
 public:
  PostDominance(const Graph& g, const FusionPattern& p);
  bool dominates(const std::string& a, const std::string& b) const;

 private:
  std::map<std::string, std::set<std::string>> pdom_;
};

// Ops of p whose values are consumed outside p (or listed as graph outputs).
std::set<std::string> pattern_outputs(const Graph& g, const FusionPattern& p);

// Template-independent transfer analysis, used both for the feasibility gate
// and as the first (minimal) template's shared assignment:
//   - gemm/batched-gemm whose value reaches another gemm or a reduction
//     through in-pattern elementwise ops,
//   - elementwise ops directly feeding an in-pattern gemm/batched-gemm,
//   - reductions whose in-pattern consumers cannot take the value from a
//     warp reduction register (non-elementwise, non-output, or shaped
//     differently than the reduction's kept dims).
std::vector<SharedRequest> canonical_shared_requests(const Graph& g,
                                                     const FusionPattern& p);

// Per-template requests: every S-flagged schedule, block-tree reduction
// scratch, and promotions for scheduled-but-unshared values that in-pattern
// consumers cannot otherwise reach.
std::vector<SharedRequest> build_shared_requests(const Graph& g,
                                                 const FusionPattern& p,
                                                 const Template& t);

// Shared-space reuse planning: topological traversal propagating allocation
// info along dataflow edges; a requesting op reuses the first collected
// allocation it post-dominates and reclaims the rest.
AllocMap shared_planning(const Graph& g, const FusionPattern& p,
                         const std::vector<SharedRequest>& requests);

// Elementwise ops whose value is consumed at least twice inside one schedule
// closure; emission gives each one local variable and no recomputation.
std::map<std::string, std::set<std::string>> register_planning(
    const Graph& g, const FusionPattern& p, const Template& t);

struct EmitResult {
  std::optional<KernelSketch> kernel;
  std::string skip_reason;  // set when the template is infeasible
};

EmitResult emit_kernel(const Graph& g, const FusionPattern& p,
                       const Template& t, const std::string& name,
                       const EmitterConfig& cfg = {});

// Static cost proxy: extrapolated latency of the off-chip bytes touched,
// plus barrier and occupancy penalties.
double kernel_cost_proxy(const KernelSketch& k, const BandwidthModel& bm,
                         const EmitterConfig& cfg);

// Hook for measured kernel times; overrides the proxy when it returns a value.
class KernelEvaluator {
 public:
  virtual ~KernelEvaluator() = default;
  virtual std::optional<double> measure_us(const KernelSketch& k) = 0;
};

// Index of the lowest-cost candidate; ties break toward the earlier template.
size_t select_best(const std::vector<KernelSketch>& candidates,
                   const BandwidthModel& bm, const EmitterConfig& cfg,
                   KernelEvaluator* evaluator = nullptr);

struct KernelSearchResult {
  KernelSketch best;
  std::vector<KernelSketch> candidates;  // every kernel that emitted cleanly
  int skipped_templates = 0;
};

// Full search: enumerate templates (or use the supplied one), plan, emit,
// select. Throws TemplateError when nothing is feasible.
KernelSearchResult generate_best_kernel(
    const Graph& g, const FusionPattern& p, const std::string& name,
    const BandwidthModel& bm, const EmitterConfig& cfg = {},
    const TemplateLimits& limits = {},
    const std::optional<Template>& user_template = std::nullopt,
    KernelEvaluator* evaluator = nullptr);

}  // namespace stitch

#endif  // STITCH_EMITTER_H_
