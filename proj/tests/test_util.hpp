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

#ifndef STITCH_TESTS_TEST_UTIL_H_
#define STITCH_TESTS_TEST_UTIL_H_

#include <random>
#include <set>
#include <string>
#include <vector>

#include "stitch/graph.hpp"

namespace testutil {

inline stitch::Shape f32(std::vector<int64_t> dims) {
  return {std::move(dims), stitch::DType::f32()};
}

inline stitch::OpNode param(const std::string& id, std::vector<int64_t> dims) {
  stitch::OpNode n;
  n.id = id;
  n.type = stitch::OpType::kParameter;
  n.shape = f32(std::move(dims));
  return n;
}

inline stitch::OpNode ew(const std::string& id, const std::string& name,
                         std::vector<std::string> operands,
                         std::vector<int64_t> dims) {
  stitch::OpNode n;
  n.id = id;
  n.type = stitch::OpType::kElementwise;
  n.elem_name = name;
  n.operands = std::move(operands);
  n.shape = f32(std::move(dims));
  return n;
}

inline stitch::OpNode reduce(const std::string& id, const std::string& operand,
                             std::vector<int> reduce_dims,
                             std::vector<int64_t> out_dims) {
  stitch::OpNode n;
  n.id = id;
  n.type = stitch::OpType::kReduce;
  n.operands = {operand};
  n.reduce_dims = std::move(reduce_dims);
  n.shape = f32(std::move(out_dims));
  return n;
}

inline stitch::OpNode dot(const std::string& id, const std::string& lhs,
                          const std::string& rhs, std::vector<int64_t> out_dims,
                          std::array<int, 2> contract = {1, 0}) {
  stitch::OpNode n;
  n.id = id;
  n.type = stitch::OpType::kDot;
  n.operands = {lhs, rhs};
  n.contract_dims = contract;
  n.shape = f32(std::move(out_dims));
  return n;
}

inline stitch::OpNode tuple(const std::string& id,
                            std::vector<std::string> operands,
                            std::vector<int64_t> dims) {
  stitch::OpNode n;
  n.id = id;
  n.type = stitch::OpType::kTuple;
  n.operands = std::move(operands);
  n.shape = f32(std::move(dims));
  return n;
}

inline stitch::FusionPattern pattern(std::set<std::string> ids, int id = 0) {
  stitch::FusionPattern p;
  p.node_ids = std::move(ids);
  p.pattern_id = id;
  return p;
}

// A chain p -> n1 -> n2 -> ... of unary elementwise ops over one shape.
inline stitch::Graph chain(const std::vector<std::string>& ids,
                           std::vector<int64_t> dims = {4, 4}) {
  stitch::Graph g;
  g.add(param("p", dims));
  std::string prev = "p";
  for (const std::string& id : ids) {
    g.add(ew(id, "exp", {prev}, dims));
    prev = id;
  }
  g.outputs = {ids.back()};
  return g;
}

inline std::string fixture_path(const std::string& name) {
  return std::string(STITCH_REPO_DIR) + "/fixtures/" + name;
}

inline stitch::Graph load_fixture(const std::string& name) {
  return stitch::load_graph(fixture_path(name));
}

// Random layered DAG of same-shape elementwise ops. Every sink is an output,
// so the whole graph is live.
inline stitch::Graph random_dag(std::mt19937& rng, int max_nodes = 20,
                                std::vector<int64_t> dims = {4, 4}) {
  stitch::Graph g;
  std::uniform_int_distribution<int> node_count(2, max_nodes);
  int n = node_count(rng);
  g.add(param("p0", dims));
  g.add(param("p1", dims));
  std::vector<std::string> ids = {"p0", "p1"};
  for (int i = 0; i < n; ++i) {
    std::string id = "n" + std::to_string(i);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(ids.size()) - 1);
    std::uniform_int_distribution<int> arity(1, 2);
    if (arity(rng) == 1) {
      g.add(ew(id, "exp", {ids[pick(rng)]}, dims));
    } else {
      g.add(ew(id, "add", {ids[pick(rng)], ids[pick(rng)]}, dims));
    }
    ids.push_back(id);
  }
  auto consumers = stitch::consumer_map(g);
  for (const stitch::OpNode& node : g.nodes) {
    if (consumers[node.id].empty() && node.type != stitch::OpType::kParameter) {
      g.outputs.push_back(node.id);
    }
  }
  if (g.outputs.empty()) g.outputs.push_back(ids.back());
  return g;
}

// Independent reachability check on the contracted multigraph: true iff the
// plan creates a cycle. Pure brute force over super-node groups.
inline bool contraction_cyclic_oracle(const stitch::Graph& g,
                                      const std::vector<stitch::FusionPattern>& plan) {
  std::map<std::string, int> group;  // node -> group index
  int next = 0;
  for (const auto& p : plan) {
    for (const auto& id : p.node_ids) group[id] = next;
    ++next;
  }
  for (const auto& n : g.nodes) {
    if (!group.count(n.id)) group[n.id] = next++;
  }
  // Edge set between groups.
  std::set<std::pair<int, int>> edges;
  for (const auto& n : g.nodes) {
    for (const auto& o : n.operands) {
      int a = group[o], b = group[n.id];
      if (a != b) edges.insert({a, b});
    }
  }
  // Floyd-Warshall style closure over <= ~25 groups.
  std::vector<std::vector<bool>> reach(next, std::vector<bool>(next, false));
  for (auto [a, b] : edges) reach[a][b] = true;
  for (int k = 0; k < next; ++k) {
    for (int i = 0; i < next; ++i) {
      for (int j = 0; j < next; ++j) {
        reach[i][j] = reach[i][j] || (reach[i][k] && reach[k][j]);
      }
    }
  }
  for (int i = 0; i < next; ++i) {
    if (reach[i][i]) return true;
  }
  return false;
}

}  // namespace testutil

#endif  // STITCH_TESTS_TEST_UTIL_H_
