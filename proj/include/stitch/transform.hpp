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

#ifndef STITCH_TRANSFORM_H_
#define STITCH_TRANSFORM_H_

#include <string>
#include <vector>

#include "stitch/graph.hpp"
#include "stitch/ilp_solver.hpp"

// Executes a fusion plan: each selected pattern becomes one fused super-op
// whose body carries the induced subgraph behind parameter leaves and a
// terminal tuple over every value consumed outside.

namespace stitch {

enum class PatternCategory { kElemwise, kReduction, kGemm };

std::string to_string(PatternCategory c);

// gemm beats reduction beats elemwise.
PatternCategory classify(const Graph& g, const FusionPattern& p);
PatternCategory classify_fused(const OpNode& fused);

// Replaces each selected pattern with a fused op named fusion_<k>. Single-
// output patterns splice directly into consumer operand lists; multi-output
// patterns keep the original output ids alive as get_element nodes.
Graph apply_plan(const Graph& g, const FusionPlan& plan,
                 const std::vector<FusionPattern>& patterns);

// Inlines every fused op back; apply_plan followed by flatten reproduces the
// original dependence structure.
Graph flatten(const Graph& g);

// Multiset of (producer, consumer) dependence edges between kernel-relevant
// ops, with fused bodies expanded; invariant under apply_plan.
std::vector<std::pair<std::string, std::string>> dependence_edges(const Graph& g);

int kernel_op_count(const Graph& g);

// Baseline kernel count over post-fusion kernel count.
double compression_ratio(const Graph& before, const Graph& after);

}  // namespace stitch

#endif  // STITCH_TRANSFORM_H_
