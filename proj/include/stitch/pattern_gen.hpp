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

#ifndef STITCH_PATTERN_GEN_H_
#define STITCH_PATTERN_GEN_H_

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "stitch/graph.hpp"

// Candidate fusion pattern generation. Substitution fusion collapses the
// maximal runs of fusible ops between partition ops; exploratory fusion grows
// patterns from seeds by producer/consumer expansion, rejecting any step that
// would make the contracted graph cyclic.

namespace stitch {

// Ops designated never to fuse; boundary markers for substitution fusion.
struct PartitionSet {
  std::set<std::string> op_ids;
  int stage = 0;
};

struct SeedConfig {
  int max_operands = 10;
  int64_t min_tensor_bytes = 1 << 20;
  int exploration_budget = 512;  // max patterns emitted per seed
};

struct MultiStepConfig {
  // A plain gemm whose contraction FLOP count reaches this joins the
  // partition set at step 0.
  int64_t large_dot_flops = int64_t{1} << 24;
};

enum class Strategy { kSubstitution, kExploratory, kBoth };

// Maximal runs of non-partition fusible ops in topological order, including
// the runs before the first and after the last partition op. Non-fusible ops
// (parameters, constants, tuples) neither join nor break a run.
std::vector<FusionPattern> substitution_fusion(const Graph& g,
                                               const PartitionSet& parts);

// Escalating partition sets: large gemms, then batched gemms, then column
// reductions, then scalar reductions; the union of all runs, deduplicated.
std::vector<FusionPattern> multi_step_patterns(const Graph& g,
                                               const MultiStepConfig& cfg = {});

// Recursive producer/consumer expansion from one seed, worklist-driven with
// a visited set keyed on the node-id set. Every emitted pattern contracts
// acyclically against g. Output is deduplicated and capped at the budget.
std::vector<FusionPattern> exploratory_fusion(const Graph& g,
                                              const FusionPattern& seed,
                                              const SeedConfig& cfg);

// Singleton seeds: elementwise / batched-gemm / reduction ops with at most
// max_operands operands and a large enough input or output tensor.
std::vector<FusionPattern> select_seeds(const Graph& g, const SeedConfig& cfg);

// Full candidate set for the chosen strategy, sorted by node-id set,
// deduplicated, with pattern_id assigned by final position.
std::vector<FusionPattern> generate_patterns(const Graph& g, Strategy strategy,
                                             const SeedConfig& seed_cfg = {},
                                             const MultiStepConfig& ms_cfg = {});

}  // namespace stitch

#endif  // STITCH_PATTERN_GEN_H_
