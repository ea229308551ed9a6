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

#include "stitch/transform.hpp"

#include <algorithm>
#include <map>

namespace stitch {

std::string to_string(PatternCategory c) {
  switch (c) {
    case PatternCategory::kElemwise: return "elemwise";
    case PatternCategory::kReduction: return "reduction";
    case PatternCategory::kGemm: return "gemm";
  }
  return "elemwise";
}

namespace {

PatternCategory classify_kinds(bool has_dot, bool has_reduce) {
  if (has_dot) return PatternCategory::kGemm;
  if (has_reduce) return PatternCategory::kReduction;
  return PatternCategory::kElemwise;
}

}  // namespace

PatternCategory classify(const Graph& g, const FusionPattern& p) {
  bool has_dot = false, has_reduce = false;
  for (const std::string& id : p.node_ids) {
    const OpNode& n = g.at(id);
    has_dot = has_dot || n.type == OpType::kDot || n.type == OpType::kBatchedDot;
    has_reduce = has_reduce || n.type == OpType::kReduce;
  }
  return classify_kinds(has_dot, has_reduce);
}

PatternCategory classify_fused(const OpNode& fused) {
  if (!fused.body) throw GraphError("classify_fused: missing body");
  bool has_dot = false, has_reduce = false;
  for (const OpNode& n : fused.body->nodes) {
    has_dot = has_dot || n.type == OpType::kDot || n.type == OpType::kBatchedDot;
    has_reduce = has_reduce || n.type == OpType::kReduce;
  }
  return classify_kinds(has_dot, has_reduce);
}

Graph apply_plan(const Graph& g, const FusionPlan& plan,
                 const std::vector<FusionPattern>& patterns) {
  // Plan must be disjoint and acyclic before any rewriting.
  std::vector<FusionPattern> selected;
  for (int idx : plan.selected) {
    if (idx < 0 || idx >= static_cast<int>(patterns.size())) {
      throw GraphError("plan selects unknown pattern index");
    }
    selected.push_back(patterns[idx]);
  }
  ContractResult contracted = contract_plan(g, selected);  // throws on overlap
  if (contracted.cycle.has_value()) {
    throw GraphError("plan contraction is cyclic; refusing to apply");
  }

  std::vector<std::string> topo = topological_sort(g);
  std::map<std::string, int> topo_pos;
  for (size_t i = 0; i < topo.size(); ++i) topo_pos[topo[i]] = static_cast<int>(i);

  // Fused ops are numbered by the topological position of their earliest node.
  std::sort(selected.begin(), selected.end(),
            [&](const FusionPattern& a, const FusionPattern& b) {
              int pa = topo_pos[*std::min_element(
                  a.node_ids.begin(), a.node_ids.end(),
                  [&](const std::string& x, const std::string& y) {
                    return topo_pos[x] < topo_pos[y];
                  })];
              int pb = topo_pos[*std::min_element(
                  b.node_ids.begin(), b.node_ids.end(),
                  [&](const std::string& x, const std::string& y) {
                    return topo_pos[x] < topo_pos[y];
                  })];
              return pa < pb;
            });

  auto consumers = consumer_map(g);
  std::map<std::string, int> owner;  // node id -> index into `selected`
  for (size_t i = 0; i < selected.size(); ++i) {
    for (const std::string& id : selected[i].node_ids) {
      if (!is_fusible(g.at(id))) {
        throw GraphError("plan fuses non-kernel op: " + id);
      }
      owner[id] = static_cast<int>(i);
    }
  }

  struct FusedBuild {
    std::string fused_id;
    std::vector<std::string> inputs;    // external operand ids, first-use order
    std::vector<std::string> outputs;   // pattern outputs, lexicographic
    std::shared_ptr<const Graph> body;
  };
  std::vector<FusedBuild> builds(selected.size());

  for (size_t i = 0; i < selected.size(); ++i) {
    const FusionPattern& p = selected[i];
    FusedBuild& b = builds[i];
    b.fused_id = "fusion_" + std::to_string(i);

    for (const std::string& id : topo) {
      if (!p.node_ids.count(id)) continue;
      for (const std::string& o : g.at(id).operands) {
        if (p.node_ids.count(o)) continue;
        if (std::find(b.inputs.begin(), b.inputs.end(), o) == b.inputs.end()) {
          b.inputs.push_back(o);
        }
      }
    }
    for (const std::string& id : p.node_ids) {
      bool external = std::count(g.outputs.begin(), g.outputs.end(), id) > 0;
      for (const std::string& c : consumers[id]) {
        external = external || !p.node_ids.count(c);
      }
      if (external) b.outputs.push_back(id);
    }
    std::sort(b.outputs.begin(), b.outputs.end());
    if (b.outputs.empty()) {
      throw GraphError("pattern has no outputs; nothing escapes " + b.fused_id);
    }

    // Body: parameter leaves, the induced subgraph, one terminal tuple.
    Graph body;
    for (const std::string& in : b.inputs) {
      OpNode param;
      param.id = in;
      param.type = OpType::kParameter;
      param.shape = g.at(in).shape;
      body.add(std::move(param));
    }
    for (const std::string& id : topo) {
      if (p.node_ids.count(id)) body.add(g.at(id));
    }
    OpNode tuple;
    tuple.id = "__outputs";
    tuple.type = OpType::kTuple;
    tuple.operands = b.outputs;
    tuple.shape = g.at(b.outputs.front()).shape;
    body.add(std::move(tuple));
    body.outputs = {"__outputs"};
    b.body = std::make_shared<const Graph>(std::move(body));
  }

  // Rewrite: operand references into single-output patterns rename to the
  // fused op; multi-output patterns keep their output ids as get_element.
  std::map<std::string, std::string> rename;
  for (size_t i = 0; i < selected.size(); ++i) {
    if (builds[i].outputs.size() == 1) {
      rename[builds[i].outputs.front()] = builds[i].fused_id;
    }
  }

  Graph out;
  std::vector<char> emitted(selected.size(), 0);
  for (const std::string& id : topo) {
    auto ow = owner.find(id);
    if (ow == owner.end()) {
      OpNode copy = g.at(id);
      for (std::string& o : copy.operands) {
        auto r = rename.find(o);
        if (r != rename.end()) o = r->second;
      }
      out.add(std::move(copy));
      continue;
    }
    int i = ow->second;
    if (emitted[i]) continue;
    emitted[i] = 1;
    const FusedBuild& b = builds[i];
    OpNode fused;
    fused.id = b.fused_id;
    fused.type = OpType::kFused;
    fused.operands = b.inputs;
    for (std::string& o : fused.operands) {
      auto r = rename.find(o);
      if (r != rename.end()) o = r->second;
    }
    fused.shape = g.at(b.outputs.front()).shape;
    fused.body = b.body;
    fused.fused_category = to_string(classify(g, selected[i]));
    out.add(std::move(fused));
    if (b.outputs.size() > 1) {
      for (size_t k = 0; k < b.outputs.size(); ++k) {
        OpNode get;
        get.id = b.outputs[k];
        get.type = OpType::kGetElement;
        get.operands = {b.fused_id};
        get.tuple_index = static_cast<int>(k);
        get.shape = g.at(b.outputs[k]).shape;
        out.add(std::move(get));
      }
    }
  }
  for (const std::string& o : g.outputs) {
    auto r = rename.find(o);
    out.outputs.push_back(r != rename.end() ? r->second : o);
  }

  std::vector<Diagnostic> diags = validate(out);
  for (const Diagnostic& d : diags) {
    if (!d.warning) {
      throw InternalError("apply_plan produced invalid graph: " + d.node_id +
                          ": " + d.message);
    }
  }
  return out;
}

Graph flatten(const Graph& g) {
  Graph out;
  // get_element ids are reclaimed by the body nodes of the same name;
  // single-output fused ids rename back to the body's sole output.
  std::map<std::string, std::string> rename;
  for (const OpNode& n : g.nodes) {
    if (n.type != OpType::kFused) continue;
    const OpNode& tuple = n.body->at(n.body->outputs.front());
    if (tuple.operands.size() == 1) rename[n.id] = tuple.operands.front();
  }
  for (const OpNode& n : g.nodes) {
    if (n.type == OpType::kGetElement) continue;
    if (n.type != OpType::kFused) {
      OpNode copy = n;
      for (std::string& o : copy.operands) {
        auto r = rename.find(o);
        if (r != rename.end()) o = r->second;
      }
      out.add(std::move(copy));
      continue;
    }
    for (const OpNode& bn : n.body->nodes) {
      if (bn.type == OpType::kParameter || bn.type == OpType::kTuple) continue;
      out.add(bn);
    }
  }
  for (const std::string& o : g.outputs) {
    auto r = rename.find(o);
    out.outputs.push_back(r != rename.end() ? r->second : o);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> dependence_edges(
    const Graph& g) {
  Graph flat = flatten(g);
  std::vector<std::pair<std::string, std::string>> edges;
  for (const OpNode& n : flat.nodes) {
    for (const std::string& o : n.operands) edges.emplace_back(o, n.id);
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

int kernel_op_count(const Graph& g) {
  int count = 0;
  for (const OpNode& n : g.nodes) {
    if (is_kernel_op(n)) ++count;
  }
  return count;
}

double compression_ratio(const Graph& before, const Graph& after) {
  int b = kernel_op_count(before);
  int a = kernel_op_count(after);
  if (a == 0) throw GraphError("compression ratio undefined: no kernels left");
  return static_cast<double>(b) / a;
}

}  // namespace stitch
