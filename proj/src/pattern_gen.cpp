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

#include "stitch/pattern_gen.hpp"

#include <algorithm>
#include <map>

namespace stitch {

namespace {

bool exploratory_fusible(const OpNode& op) {
  // Plain gemms are never grown by exploration, only elementwise,
  // batched-gemm and reduction ops.
  return op.type == OpType::kElementwise || op.type == OpType::kBatchedDot ||
         op.type == OpType::kReduce;
}

void sort_and_dedup(const Graph& g, std::vector<FusionPattern>& patterns) {
  std::sort(patterns.begin(), patterns.end(),
            [](const FusionPattern& a, const FusionPattern& b) {
              return a.node_ids < b.node_ids;
            });
  patterns.erase(std::unique(patterns.begin(), patterns.end(),
                             [](const FusionPattern& a, const FusionPattern& b) {
                               return a.node_ids == b.node_ids;
                             }),
                 patterns.end());
  for (size_t i = 0; i < patterns.size(); ++i) {
    patterns[i].pattern_id = static_cast<int>(i);
    patterns[i].packing = !pattern_is_connected(g, patterns[i]);
  }
}

}  // namespace

std::vector<FusionPattern> substitution_fusion(const Graph& g,
                                               const PartitionSet& parts) {
  std::vector<std::string> order = topological_sort(g);
  std::set<std::string> live = live_nodes(g);
  std::vector<FusionPattern> patterns;
  FusionPattern run;
  auto flush = [&]() {
    if (!run.node_ids.empty()) {
      run.packing = !pattern_is_connected(g, run);
      patterns.push_back(run);
      run = FusionPattern{};
    }
  };
  for (const std::string& id : order) {
    const OpNode& op = g.at(id);
    if (!is_fusible(op) || !live.count(id)) continue;  // non-kernel and dead ops
                                                       // are transparent
    if (parts.op_ids.count(id)) {
      flush();
      continue;
    }
    run.node_ids.insert(id);
  }
  flush();
  return patterns;
}

std::vector<FusionPattern> multi_step_patterns(const Graph& g,
                                               const MultiStepConfig& cfg) {
  PartitionSet parts;
  std::vector<FusionPattern> all;
  size_t prev_size = static_cast<size_t>(-1);
  for (int step = 0; step < 4; ++step) {
    for (const OpNode& n : g.nodes) {
      switch (step) {
        case 0:
          if (n.type == OpType::kDot && dot_flops(g, n) >= cfg.large_dot_flops) {
            parts.op_ids.insert(n.id);
          }
          break;
        case 1:
          if (n.type == OpType::kBatchedDot) parts.op_ids.insert(n.id);
          break;
        case 2:
          if (n.type == OpType::kReduce &&
              reduce_kind(g, n) == ReduceKind::kColumn) {
            parts.op_ids.insert(n.id);
          }
          break;
        case 3:
          if (n.type == OpType::kReduce &&
              reduce_kind(g, n) == ReduceKind::kScalar) {
            parts.op_ids.insert(n.id);
          }
          break;
      }
    }
    // A step that did not extend the partition set reproduces the previous
    // run exactly; skip the rerun.
    if (step > 0 && parts.op_ids.size() == prev_size) continue;
    prev_size = parts.op_ids.size();
    parts.stage = step;
    for (FusionPattern& p : substitution_fusion(g, parts)) {
      all.push_back(std::move(p));
    }
  }
  sort_and_dedup(g, all);
  return all;
}

std::vector<FusionPattern> exploratory_fusion(const Graph& g,
                                              const FusionPattern& seed,
                                              const SeedConfig& cfg) {
  if (seed.node_ids.empty()) return {};
  for (const std::string& id : seed.node_ids) {
    if (!exploratory_fusible(g.at(id))) {
      throw GraphError("exploratory seed contains unfusible op: " + id);
    }
  }
  auto consumers = consumer_map(g);
  std::set<std::string> live = live_nodes(g);
  std::set<std::set<std::string>> visited{seed.node_ids};
  std::vector<FusionPattern> emitted;
  std::vector<std::set<std::string>> work{seed.node_ids};

  auto contraction_cyclic = [&](const std::set<std::string>& ids) {
    FusionPattern p;
    p.node_ids = ids;
    p.pattern_id = 0;
    return contract_plan(g, {p}).cycle.has_value();
  };

  while (!work.empty() &&
         static_cast<int>(emitted.size()) < cfg.exploration_budget) {
    std::set<std::string> cur = work.back();
    work.pop_back();

    // Producer and consumer expansion, deterministic by op id.
    std::set<std::string> candidates;
    for (const std::string& id : cur) {
      const OpNode& n = g.at(id);
      for (const std::string& o : n.operands) {
        if (!cur.count(o) && live.count(o) && exploratory_fusible(g.at(o))) {
          candidates.insert(o);
        }
      }
      for (const std::string& c : consumers[id]) {
        if (!cur.count(c) && live.count(c) && exploratory_fusible(g.at(c))) {
          candidates.insert(c);
        }
      }
    }
    for (const std::string& cand : candidates) {
      if (static_cast<int>(emitted.size()) >= cfg.exploration_budget) break;
      std::set<std::string> grown = cur;
      grown.insert(cand);
      if (visited.count(grown)) continue;
      if (contraction_cyclic(grown)) continue;
      visited.insert(grown);
      FusionPattern p;
      p.node_ids = grown;
      emitted.push_back(p);
      work.push_back(std::move(grown));
    }
  }
  sort_and_dedup(g, emitted);
  return emitted;
}

std::vector<FusionPattern> select_seeds(const Graph& g, const SeedConfig& cfg) {
  std::vector<FusionPattern> seeds;
  std::set<std::string> live = live_nodes(g);
  for (const OpNode& n : g.nodes) {
    if (!exploratory_fusible(n) || !live.count(n.id)) continue;
    if (static_cast<int>(n.operands.size()) > cfg.max_operands) continue;
    int64_t largest = n.shape.byte_count();
    for (const std::string& o : n.operands) {
      largest = std::max(largest, g.at(o).shape.byte_count());
    }
    if (largest < cfg.min_tensor_bytes) continue;
    FusionPattern p;
    p.node_ids = {n.id};
    seeds.push_back(std::move(p));
  }
  sort_and_dedup(g, seeds);
  return seeds;
}

std::vector<FusionPattern> generate_patterns(const Graph& g, Strategy strategy,
                                             const SeedConfig& seed_cfg,
                                             const MultiStepConfig& ms_cfg) {
  std::vector<FusionPattern> all;
  if (strategy == Strategy::kSubstitution || strategy == Strategy::kBoth) {
    for (FusionPattern& p : multi_step_patterns(g, ms_cfg)) {
      all.push_back(std::move(p));
    }
  }
  if (strategy == Strategy::kExploratory || strategy == Strategy::kBoth) {
    for (const FusionPattern& seed : select_seeds(g, seed_cfg)) {
      for (FusionPattern& p : exploratory_fusion(g, seed, seed_cfg)) {
        all.push_back(std::move(p));
      }
    }
  }
  sort_and_dedup(g, all);
  return all;
}

}  // namespace stitch
