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

#include "stitch/ilp_solver.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace stitch {

std::vector<PairConstraint> build_conflicts(
    const std::vector<FusionPattern>& patterns) {
  std::vector<PairConstraint> pairs;
  for (size_t u = 0; u < patterns.size(); ++u) {
    for (size_t v = u + 1; v < patterns.size(); ++v) {
      const auto& a = patterns[u].node_ids;
      const auto& b = patterns[v].node_ids;
      const auto& small = a.size() <= b.size() ? a : b;
      const auto& large = a.size() <= b.size() ? b : a;
      bool overlap = std::any_of(small.begin(), small.end(),
                                 [&](const std::string& id) {
                                   return large.count(id) > 0;
                                 });
      if (overlap) {
        pairs.push_back({static_cast<int>(u), static_cast<int>(v)});
      }
    }
  }
  return pairs;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Branch and bound for the best achievable total under partial fixing.
// The bound is the sum of still-free scores; no LP relaxation.
class ValueSearch {
 public:
  explicit ValueSearch(const IlpInstance& inst) : inst_(inst) {
    conflicts_.resize(inst.num_vars);
    for (const PairConstraint& pc : inst_.pairs) {
      conflicts_[pc.u].push_back(pc.v);
      conflicts_[pc.v].push_back(pc.u);
    }
    cycles_of_.resize(inst.num_vars);
    for (size_t c = 0; c < inst_.cycles.size(); ++c) {
      for (int v : inst_.cycles[c].pattern_indices) {
        cycles_of_[v].push_back(static_cast<int>(c));
      }
    }
    order_.resize(inst.num_vars);
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(), [&](int a, int b) {
      return inst_.scores[a] > inst_.scores[b];
    });
  }

  // fixed[v]: -1 free, 0 excluded, 1 included. Returns the best canonical
  // total, or -inf when the fixing itself is inconsistent.
  double max_value(const std::vector<int8_t>& fixed) {
    chosen_.assign(inst_.num_vars, 0);
    cycle_count_.assign(inst_.cycles.size(), 0);
    best_ = kNegInf;
    free_order_.clear();
    double free_sum = 0.0;
    for (int v : order_) {
      if (fixed[v] == -1) {
        free_order_.push_back(v);
        free_sum += inst_.scores[v];
      }
    }
    for (int v = 0; v < inst_.num_vars; ++v) {
      if (fixed[v] != 1) continue;
      if (!can_take(v)) return kNegInf;
      take(v);
    }
    descend(0, free_sum);
    return best_;
  }

 private:
  bool can_take(int v) const {
    for (int c : conflicts_[v]) {
      if (chosen_[c]) return false;
    }
    for (int cy : cycles_of_[v]) {
      int limit = static_cast<int>(inst_.cycles[cy].pattern_indices.size()) - 1;
      if (cycle_count_[cy] + 1 > limit) return false;
    }
    return true;
  }
  void take(int v) {
    chosen_[v] = 1;
    for (int cy : cycles_of_[v]) ++cycle_count_[cy];
  }
  void drop(int v) {
    chosen_[v] = 0;
    for (int cy : cycles_of_[v]) --cycle_count_[cy];
  }
  // Totals are summed in ascending variable order so equal selections
  // always produce the identical double.
  double canonical_total() const {
    double total = 0.0;
    for (int v = 0; v < inst_.num_vars; ++v) {
      if (chosen_[v]) total += inst_.scores[v];
    }
    return total;
  }
  void descend(size_t pos, double remaining) {
    if (pos == free_order_.size()) {
      best_ = std::max(best_, canonical_total());
      return;
    }
    if (canonical_total() + remaining <= best_) return;
    int v = free_order_[pos];
    double rest = remaining - inst_.scores[v];
    if (can_take(v)) {
      take(v);
      descend(pos + 1, rest);
      drop(v);
    }
    descend(pos + 1, rest);
  }

  const IlpInstance& inst_;
  std::vector<std::vector<int>> conflicts_;
  std::vector<std::vector<int>> cycles_of_;
  std::vector<int> order_;
  std::vector<int> free_order_;
  std::vector<char> chosen_;
  std::vector<int> cycle_count_;
  double best_ = kNegInf;
};

}  // namespace

FusionPlan solve(const IlpInstance& inst) {
  if (static_cast<int>(inst.scores.size()) != inst.num_vars) {
    throw GraphError("ILP instance: one score per variable required");
  }
  for (double s : inst.scores) {
    if (s < 0) throw GraphError("ILP instance requires non-negative scores");
  }
  ValueSearch search(inst);
  std::vector<int8_t> fixed(inst.num_vars, -1);
  const double optimum = search.max_value(fixed);

  // Lexicographically smallest optimal index set: at each index prefer
  // closing the set, then including, then excluding.
  std::vector<int> selected;
  double prefix_sum = 0.0;
  for (int v = 0; v < inst.num_vars; ++v) {
    if (prefix_sum == optimum) break;  // closing the set here is lex-smallest
    fixed[v] = 1;
    bool keeps_optimum = search.max_value(fixed) == optimum;
    if (keeps_optimum) {
      selected.push_back(v);
      prefix_sum = 0.0;
      for (int w : selected) prefix_sum += inst.scores[w];
    } else {
      fixed[v] = 0;
    }
  }

  FusionPlan plan;
  plan.selected = selected;
  plan.total_score = prefix_sum;
  return plan;
}

FusionPlan solve_with_cycle_elimination(
    const Graph& g, const std::vector<FusionPattern>& patterns,
    const std::vector<double>& scores) {
  IlpInstance inst;
  inst.num_vars = static_cast<int>(patterns.size());
  inst.scores = scores;
  inst.pairs = build_conflicts(patterns);

  constexpr int kMaxRounds = 10000;
  for (int round = 0; round < kMaxRounds; ++round) {
    FusionPlan plan = solve(inst);
    std::vector<FusionPattern> selected;
    for (int idx : plan.selected) {
      FusionPattern p = patterns[idx];
      p.pattern_id = idx;  // witness reports instance indices
      selected.push_back(std::move(p));
    }
    ContractResult result = contract_plan(g, selected);
    if (!result.cycle.has_value()) return plan;
    if (result.cycle->pattern_ids.empty()) {
      throw InternalError("contraction cycle without any pattern on it");
    }
    inst.cycles.push_back({result.cycle->pattern_ids});
  }
  throw GraphError("cycle elimination did not converge within 10000 rounds");
}

}  // namespace stitch
