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

#ifndef STITCH_ILP_SOLVER_H_
#define STITCH_ILP_SOLVER_H_

#include <vector>

#include "stitch/graph.hpp"

// 0/1 program selecting a maximum-total-score disjoint pattern set:
//
//   maximize   sum_j X_j * f(P_j)
//   subject to X_u + X_v <= 1 whenever P_u and P_v intersect
//
// solved exactly by branch and bound (the instances hold dozens of patterns,
// so the trivial additive bound prunes plenty), then iterated with cycle
// constraints until the contracted graph is acyclic.

namespace stitch {

struct PairConstraint {
  int u = 0;
  int v = 0;
};

// sum over pattern_indices of X_i <= |S| - 1: forbids selecting all of them.
struct CycleConstraint {
  std::vector<int> pattern_indices;
};

struct IlpInstance {
  int num_vars = 0;
  std::vector<double> scores;  // all >= 0
  std::vector<PairConstraint> pairs;
  std::vector<CycleConstraint> cycles;
};

struct FusionPlan {
  std::vector<int> selected;  // ascending pattern indices
  double total_score = 0.0;
};

// Exactly the index pairs whose node-id sets intersect.
std::vector<PairConstraint> build_conflicts(
    const std::vector<FusionPattern>& patterns);

// Exact optimum; among optimal solutions, the lexicographically smallest
// selected index set.
FusionPlan solve(const IlpInstance& inst);

// Solve, contract, and on a cyclic result add a constraint over the witness
// cycle's patterns and re-solve, until acyclic.
FusionPlan solve_with_cycle_elimination(const Graph& g,
                                        const std::vector<FusionPattern>& patterns,
                                        const std::vector<double>& scores);

}  // namespace stitch

#endif  // STITCH_ILP_SOLVER_H_
