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

#include "stitch/graph.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>

#include "json.hpp"

namespace stitch {

using nlohmann::ordered_json;

std::string to_string(DType dt) {
  switch (dt.kind) {
    case DTypeKind::kF32: return "f32";
    case DTypeKind::kF16: return "f16";
    case DTypeKind::kI32: return "i32";
  }
  return "f32";
}

DType dtype_from_string(const std::string& s) {
  if (s == "f32") return DType::f32();
  if (s == "f16") return DType::f16();
  if (s == "i32") return DType::i32();
  throw ParseError("unknown dtype: " + s);
}

int64_t Shape::element_count() const {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  return n;
}

std::string to_string(OpType t) {
  switch (t) {
    case OpType::kParameter: return "parameter";
    case OpType::kConstant: return "constant";
    case OpType::kElementwise: return "elementwise";
    case OpType::kReduce: return "reduce";
    case OpType::kDot: return "dot";
    case OpType::kBatchedDot: return "batched_dot";
    case OpType::kTuple: return "tuple";
    case OpType::kGetElement: return "get_element";
    case OpType::kFused: return "fused";
  }
  return "parameter";
}

std::string to_string(ReduceKind k) {
  switch (k) {
    case ReduceKind::kRow: return "row";
    case ReduceKind::kColumn: return "column";
    case ReduceKind::kScalar: return "scalar";
  }
  return "row";
}

namespace {

OpType op_type_from_string(const std::string& s) {
  if (s == "parameter") return OpType::kParameter;
  if (s == "constant") return OpType::kConstant;
  if (s == "elementwise") return OpType::kElementwise;
  if (s == "reduce") return OpType::kReduce;
  if (s == "dot") return OpType::kDot;
  if (s == "batched_dot") return OpType::kBatchedDot;
  if (s == "tuple") return OpType::kTuple;
  if (s == "get_element") return OpType::kGetElement;
  if (s == "fused") return OpType::kFused;
  throw ParseError("unknown op kind: " + s);
}

const std::set<std::string> kUnaryElemwise = {"log", "exp", "negate", "rsqrt",
                                              "broadcast"};
const std::set<std::string> kBinaryElemwise = {
    "add", "subtract", "multiply", "divide", "maximum", "minimum", "compare"};
const std::set<std::string> kTernaryElemwise = {"select"};

int expected_elemwise_arity(const std::string& name) {
  if (kUnaryElemwise.count(name)) return 1;
  if (kBinaryElemwise.count(name)) return 2;
  if (kTernaryElemwise.count(name)) return 3;
  return -1;
}

}  // namespace

const OpNode* Graph::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return nullptr;
  return &nodes[it->second];
}

const OpNode& Graph::at(const std::string& id) const {
  const OpNode* n = find(id);
  if (n == nullptr) throw GraphError("no such node: " + id);
  return *n;
}

void Graph::add(OpNode node) {
  if (index_.count(node.id)) throw GraphError("duplicate node id: " + node.id);
  index_[node.id] = static_cast<int>(nodes.size());
  nodes.push_back(std::move(node));
}

bool is_fusible(const OpNode& op) {
  switch (op.type) {
    case OpType::kElementwise:
    case OpType::kReduce:
    case OpType::kDot:
    case OpType::kBatchedDot:
      return true;
    default:
      return false;
  }
}

bool is_kernel_op(const OpNode& op) {
  return is_fusible(op) || op.type == OpType::kFused;
}

ReduceKind reduce_kind(const Graph& g, const OpNode& op) {
  const Shape& in = g.at(op.operands.at(0)).shape;
  const int rank = in.rank();
  const int nred = static_cast<int>(op.reduce_dims.size());
  if (nred == rank) return ReduceKind::kScalar;
  bool suffix = true;
  for (int i = 0; i < nred; ++i) {
    if (op.reduce_dims[i] != rank - nred + i) suffix = false;
  }
  if (suffix) return ReduceKind::kRow;
  return ReduceKind::kColumn;
}

int64_t dot_flops(const Graph& g, const OpNode& op) {
  const Shape& lhs = g.at(op.operands.at(0)).shape;
  int64_t k = lhs.dims.at(op.contract_dims[0]);
  return 2 * op.shape.element_count() * k;
}

std::vector<int> broadcast_dim_map(const Shape& in, const Shape& out) {
  std::vector<int> map(in.rank(), -1);
  int o = out.rank() - 1;
  for (int i = in.rank() - 1; i >= 0; --i) {
    while (o >= 0 && out.dims[o] != in.dims[i]) --o;
    if (o < 0) return {};  // no valid embedding
    map[i] = o;
    --o;
  }
  return map;
}

namespace {

Shape shape_from_json(const ordered_json& j) {
  Shape s;
  if (!j.contains("dims") || !j["dims"].is_array()) {
    throw ParseError("shape requires a dims array");
  }
  for (const auto& d : j["dims"]) s.dims.push_back(d.get<int64_t>());
  s.dtype = dtype_from_string(j.value("dtype", std::string("f32")));
  return s;
}

ordered_json shape_to_json(const Shape& s) {
  ordered_json j;
  j["dims"] = s.dims;
  j["dtype"] = to_string(s.dtype);
  return j;
}

Graph graph_from_json(const ordered_json& j);

OpNode node_from_json(const ordered_json& j) {
  OpNode n;
  if (!j.contains("id")) throw ParseError("node missing id");
  n.id = j["id"].get<std::string>();
  if (!j.contains("kind")) throw ParseError("node " + n.id + " missing kind");
  n.type = op_type_from_string(j["kind"].get<std::string>());
  if (j.contains("name")) n.elem_name = j["name"].get<std::string>();
  if (j.contains("operands")) {
    for (const auto& o : j["operands"]) n.operands.push_back(o.get<std::string>());
  }
  if (!j.contains("shape")) throw ParseError("node " + n.id + " missing shape");
  n.shape = shape_from_json(j["shape"]);
  if (j.contains("reduce_dims")) {
    for (const auto& d : j["reduce_dims"]) n.reduce_dims.push_back(d.get<int>());
  }
  if (j.contains("contract_dims")) {
    const auto& cd = j["contract_dims"];
    if (!cd.is_array() || cd.size() != 2) {
      throw ParseError("node " + n.id + ": contract_dims must be [lhs,rhs]");
    }
    n.contract_dims = {cd[0].get<int>(), cd[1].get<int>()};
  }
  if (j.contains("index")) n.tuple_index = j["index"].get<int>();
  if (j.contains("category")) n.fused_category = j["category"].get<std::string>();
  if (j.contains("body")) {
    n.body = std::make_shared<const Graph>(graph_from_json(j["body"]));
  }
  return n;
}

ordered_json node_to_json(const OpNode& n);

ordered_json graph_to_json(const Graph& g) {
  ordered_json j;
  j["nodes"] = ordered_json::array();
  for (const OpNode& n : g.nodes) j["nodes"].push_back(node_to_json(n));
  j["outputs"] = g.outputs;
  return j;
}

ordered_json node_to_json(const OpNode& n) {
  ordered_json j;
  j["id"] = n.id;
  j["kind"] = to_string(n.type);
  if (!n.elem_name.empty()) j["name"] = n.elem_name;
  if (!n.operands.empty()) j["operands"] = n.operands;
  j["shape"] = shape_to_json(n.shape);
  if (!n.reduce_dims.empty()) j["reduce_dims"] = n.reduce_dims;
  if (n.contract_dims[0] >= 0) {
    j["contract_dims"] = {n.contract_dims[0], n.contract_dims[1]};
  }
  if (n.tuple_index >= 0) j["index"] = n.tuple_index;
  if (!n.fused_category.empty()) j["category"] = n.fused_category;
  if (n.body) j["body"] = graph_to_json(*n.body);
  return j;
}

Graph graph_from_json(const ordered_json& j) {
  Graph g;
  if (!j.contains("nodes") || !j["nodes"].is_array()) {
    throw ParseError("graph requires a nodes array");
  }
  for (const auto& nj : j["nodes"]) {
    OpNode n = node_from_json(nj);
    if (g.contains(n.id)) throw ParseError("duplicate node id: " + n.id);
    g.add(std::move(n));
  }
  if (j.contains("outputs")) {
    for (const auto& o : j["outputs"]) g.outputs.push_back(o.get<std::string>());
  }
  return g;
}

// Default contraction: last dim of lhs against second-to-last of rhs.
std::array<int, 2> default_contract_dims(const Shape& lhs, const Shape& rhs) {
  return {lhs.rank() - 1, std::max(0, rhs.rank() - 2)};
}

void check_shape_rule(const Graph& g, const OpNode& n,
                      std::vector<Diagnostic>& diags) {
  auto fail = [&](const std::string& msg) {
    diags.push_back({n.id, "shape", msg, false});
  };
  auto operand_shape = [&](int i) -> const Shape& {
    return g.at(n.operands[i]).shape;
  };
  switch (n.type) {
    case OpType::kParameter:
    case OpType::kConstant:
      break;
    case OpType::kElementwise: {
      if (n.elem_name == "broadcast") {
        const Shape& in = operand_shape(0);
        if (in.rank() > 0 && broadcast_dim_map(in, n.shape).empty()) {
          fail("broadcast input dims are not a subsequence of output dims");
        }
        if (in.dtype != n.shape.dtype) fail("broadcast dtype mismatch");
        break;
      }
      for (size_t i = 0; i < n.operands.size(); ++i) {
        const Shape& s = operand_shape(static_cast<int>(i));
        if (s.dims != n.shape.dims) {
          fail("operand " + n.operands[i] + " dims differ from output dims");
        }
        // compare's output dtype is free; select's predicate dtype is free.
        bool dtype_free = (n.elem_name == "compare") ||
                          (n.elem_name == "select" && i == 0);
        if (!dtype_free && s.dtype != n.shape.dtype) {
          fail("operand " + n.operands[i] + " dtype differs from output");
        }
      }
      break;
    }
    case OpType::kReduce: {
      const Shape& in = operand_shape(0);
      if (n.reduce_dims.empty()) {
        fail("reduce requires a nonempty reduce_dims list");
        break;
      }
      for (size_t i = 0; i < n.reduce_dims.size(); ++i) {
        int d = n.reduce_dims[i];
        if (d < 0 || d >= in.rank()) {
          fail("reduce dim out of range");
          return;
        }
        if (i > 0 && n.reduce_dims[i] <= n.reduce_dims[i - 1]) {
          fail("reduce_dims must be strictly increasing");
          return;
        }
      }
      std::vector<int64_t> expect;
      for (int d = 0; d < in.rank(); ++d) {
        if (!std::count(n.reduce_dims.begin(), n.reduce_dims.end(), d)) {
          expect.push_back(in.dims[d]);
        }
      }
      if (expect != n.shape.dims) fail("output dims inconsistent with reduce_dims");
      if (in.dtype != n.shape.dtype) fail("reduce dtype mismatch");
      break;
    }
    case OpType::kDot: {
      const Shape& lhs = operand_shape(0);
      const Shape& rhs = operand_shape(1);
      auto cd = n.contract_dims[0] >= 0 ? n.contract_dims
                                        : default_contract_dims(lhs, rhs);
      if (cd[0] >= lhs.rank() || cd[1] >= rhs.rank()) {
        fail("contract dim out of range");
        break;
      }
      if (lhs.dims[cd[0]] != rhs.dims[cd[1]]) {
        fail("contracted extents differ");
        break;
      }
      std::vector<int64_t> expect;
      for (int d = 0; d < lhs.rank(); ++d)
        if (d != cd[0]) expect.push_back(lhs.dims[d]);
      for (int d = 0; d < rhs.rank(); ++d)
        if (d != cd[1]) expect.push_back(rhs.dims[d]);
      if (expect != n.shape.dims) fail("output dims inconsistent with dot");
      break;
    }
    case OpType::kBatchedDot: {
      const Shape& lhs = operand_shape(0);
      const Shape& rhs = operand_shape(1);
      if (lhs.rank() != rhs.rank() || lhs.rank() < 3) {
        fail("batched_dot operands must share rank >= 3");
        break;
      }
      int r = lhs.rank();
      auto cd = n.contract_dims[0] >= 0 ? n.contract_dims
                                        : std::array<int, 2>{r - 1, r - 2};
      if (cd[0] != r - 1 || cd[1] != r - 2) {
        fail("batched_dot contraction must be [rank-1, rank-2]");
        break;
      }
      for (int d = 0; d < r - 2; ++d) {
        if (lhs.dims[d] != rhs.dims[d]) fail("batch dims differ");
      }
      if (lhs.dims[r - 1] != rhs.dims[r - 2]) {
        fail("contracted extents differ");
        break;
      }
      std::vector<int64_t> expect(lhs.dims.begin(), lhs.dims.end() - 1);
      expect.push_back(rhs.dims[r - 1]);
      if (expect != n.shape.dims) fail("output dims inconsistent with batched_dot");
      break;
    }
    case OpType::kTuple:
      break;
    case OpType::kGetElement: {
      const OpNode& src = g.at(n.operands[0]);
      if (src.type == OpType::kTuple) {
        if (n.tuple_index < 0 ||
            n.tuple_index >= static_cast<int>(src.operands.size())) {
          fail("get_element index out of range");
        }
      } else if (src.type == OpType::kFused) {
        // Element shape checked against the body's terminal tuple.
        if (!src.body) break;
        const OpNode* t = nullptr;
        for (const auto& bn : src.body->nodes) {
          if (bn.type == OpType::kTuple) t = &bn;
        }
        if (t == nullptr || n.tuple_index < 0 ||
            n.tuple_index >= static_cast<int>(t->operands.size())) {
          fail("get_element index out of range for fused body");
        } else if (src.body->at(t->operands[n.tuple_index]).shape != n.shape) {
          fail("get_element shape differs from fused body element");
        }
      } else {
        fail("get_element operand must be a tuple or fused op");
      }
      break;
    }
    case OpType::kFused: {
      if (!n.body) {
        fail("fused op requires a body graph");
        break;
      }
      int nparams = 0;
      for (const auto& bn : n.body->nodes) {
        if (bn.type == OpType::kParameter) ++nparams;
      }
      if (nparams != static_cast<int>(n.operands.size())) {
        fail("fused operand count differs from body parameter count");
      }
      for (const Diagnostic& d : validate(*n.body)) {
        if (!d.warning) {
          diags.push_back({n.id, "fused-body", d.node_id + ": " + d.message, false});
        }
      }
      break;
    }
  }
}

}  // namespace

std::string format_diagnostics(const std::vector<Diagnostic>& diags) {
  std::ostringstream os;
  for (const Diagnostic& d : diags) {
    os << (d.warning ? "warning" : "error") << " [" << d.rule << "] "
       << d.node_id << ": " << d.message << "\n";
  }
  return os.str();
}

std::vector<Diagnostic> validate(const Graph& g) {
  std::vector<Diagnostic> diags;
  for (const OpNode& n : g.nodes) {
    for (int64_t d : n.shape.dims) {
      if (d < 1) diags.push_back({n.id, "shape", "dims must be positive", false});
    }
    // Arity.
    int expect = -1;
    switch (n.type) {
      case OpType::kParameter:
      case OpType::kConstant:
        expect = 0;
        break;
      case OpType::kElementwise:
        expect = expected_elemwise_arity(n.elem_name);
        if (expect < 0) {
          diags.push_back({n.id, "kind", "unknown elementwise name: " + n.elem_name,
                           false});
          continue;
        }
        break;
      case OpType::kReduce:
        expect = 1;
        break;
      case OpType::kDot:
      case OpType::kBatchedDot:
        expect = 2;
        break;
      case OpType::kGetElement:
        expect = 1;
        break;
      case OpType::kTuple:
      case OpType::kFused:
        if (n.operands.empty()) {
          diags.push_back({n.id, "arity", "requires at least one operand", false});
          continue;
        }
        break;
    }
    if (expect >= 0 && static_cast<int>(n.operands.size()) != expect) {
      diags.push_back({n.id, "arity",
                       "expected " + std::to_string(expect) + " operands, got " +
                           std::to_string(n.operands.size()),
                       false});
      continue;
    }
    // Operand resolution.
    bool resolved = true;
    for (const std::string& o : n.operands) {
      if (!g.contains(o)) {
        diags.push_back({n.id, "operand", "unresolved operand id: " + o, false});
        resolved = false;
      }
    }
    if (!resolved) continue;
    check_shape_rule(g, n, diags);
  }
  for (const std::string& o : g.outputs) {
    if (!g.contains(o)) {
      diags.push_back({o, "output", "unresolved output id", false});
    }
  }
  // Cycle check (only meaningful once operands resolve).
  bool structural_ok =
      std::none_of(diags.begin(), diags.end(),
                   [](const Diagnostic& d) { return d.rule == "operand" ||
                                                    d.rule == "output"; });
  if (structural_ok) {
    try {
      topological_sort(g);
    } catch (const CycleError& e) {
      diags.push_back({"", "cycle", e.what(), false});
    }
    // Dead-node scan: unreachable from any output is a warning only.
    if (!g.outputs.empty()) {
      std::set<std::string> live;
      std::vector<std::string> work(g.outputs.begin(), g.outputs.end());
      while (!work.empty()) {
        std::string id = work.back();
        work.pop_back();
        if (!live.insert(id).second) continue;
        for (const std::string& o : g.at(id).operands) work.push_back(o);
      }
      for (const OpNode& n : g.nodes) {
        if (!live.count(n.id)) {
          diags.push_back({n.id, "dead", "unreachable from graph outputs", true});
        }
      }
    }
  }
  return diags;
}

Graph parse_graph(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("syntax error at byte ") +
                     std::to_string(e.byte) + ": " + e.what());
  }
  Graph g = graph_from_json(j);
  std::vector<Diagnostic> diags = validate(g);
  std::vector<Diagnostic> errors;
  for (const Diagnostic& d : diags) {
    if (!d.warning) errors.push_back(d);
  }
  if (!errors.empty()) throw ValidationError(format_diagnostics(errors));
  return g;
}

Graph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open graph file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_graph(buf.str());
}

std::string print_graph(const Graph& g) {
  return graph_to_json(g).dump(2) + "\n";
}

std::vector<std::string> topological_sort(const Graph& g) {
  std::unordered_map<std::string, int> indegree;
  std::unordered_map<std::string, std::vector<std::string>> succs;
  for (const OpNode& n : g.nodes) indegree[n.id] = 0;
  for (const OpNode& n : g.nodes) {
    for (const std::string& o : n.operands) {
      if (!g.contains(o)) throw GraphError("unresolved operand: " + o);
      succs[o].push_back(n.id);
      ++indegree[n.id];
    }
  }
  std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
  for (const OpNode& n : g.nodes) {
    if (indegree[n.id] == 0) ready.push(n.id);
  }
  std::vector<std::string> order;
  while (!ready.empty()) {
    std::string id = ready.top();
    ready.pop();
    order.push_back(id);
    for (const std::string& s : succs[id]) {
      if (--indegree[s] == 0) ready.push(s);
    }
  }
  if (order.size() != g.nodes.size()) {
    std::vector<std::string> stuck;
    for (const OpNode& n : g.nodes) {
      if (indegree[n.id] > 0) stuck.push_back(n.id);
    }
    std::string msg = "cycle detected involving:";
    for (const std::string& s : stuck) msg += " " + s;
    throw CycleError(msg);
  }
  return order;
}

std::unordered_map<std::string, std::vector<std::string>> consumer_map(
    const Graph& g) {
  std::unordered_map<std::string, std::vector<std::string>> consumers;
  for (const OpNode& n : g.nodes) {
    for (const std::string& o : n.operands) consumers[o].push_back(n.id);
  }
  return consumers;
}

std::set<std::string> live_nodes(const Graph& g) {
  std::set<std::string> live;
  if (g.outputs.empty()) {
    for (const OpNode& n : g.nodes) live.insert(n.id);
    return live;
  }
  std::vector<std::string> work(g.outputs.begin(), g.outputs.end());
  while (!work.empty()) {
    std::string id = work.back();
    work.pop_back();
    if (!g.contains(id) || !live.insert(id).second) continue;
    for (const std::string& o : g.at(id).operands) work.push_back(o);
  }
  return live;
}

ContractResult contract_plan(const Graph& g,
                             const std::vector<FusionPattern>& plan) {
  // Disjointness check.
  std::unordered_map<std::string, int> owner;  // node -> pattern index in plan
  for (size_t i = 0; i < plan.size(); ++i) {
    for (const std::string& id : plan[i].node_ids) {
      if (!g.contains(id)) {
        throw GraphError("pattern references unknown node: " + id);
      }
      auto [it, inserted] = owner.emplace(id, static_cast<int>(i));
      if (!inserted) {
        throw GraphError("patterns overlap on node " + id);
      }
    }
  }

  // Contracted vertex per pattern plus one per untouched node.
  auto super_id = [&](size_t i) {
    return "__pattern_" + std::to_string(plan[i].pattern_id >= 0
                                             ? plan[i].pattern_id
                                             : static_cast<int>(i));
  };
  auto vertex_of = [&](const std::string& id) -> std::string {
    auto it = owner.find(id);
    return it == owner.end() ? id : super_id(it->second);
  };

  // Build contracted adjacency with deterministic neighbor order.
  std::vector<std::string> vertices;
  std::unordered_map<std::string, std::vector<std::string>> adj;
  std::set<std::string> seen;
  for (const OpNode& n : g.nodes) {
    std::string v = vertex_of(n.id);
    if (seen.insert(v).second) vertices.push_back(v);
  }
  for (const OpNode& n : g.nodes) {
    std::string dst = vertex_of(n.id);
    for (const std::string& o : n.operands) {
      std::string src = vertex_of(o);
      if (src != dst) adj[src].push_back(dst);
    }
  }

  // Cycle search: iterative DFS with a path stack to extract a witness.
  std::unordered_map<std::string, int> color;  // 0 white, 1 gray, 2 black
  std::vector<std::string> path;
  std::optional<std::vector<std::string>> cycle_path;
  for (const std::string& root : vertices) {
    if (color[root] != 0) continue;
    std::vector<std::pair<std::string, size_t>> stack{{root, 0}};
    color[root] = 1;
    path.push_back(root);
    while (!stack.empty() && !cycle_path) {
      auto& [v, idx] = stack.back();
      auto& nbrs = adj[v];
      if (idx < nbrs.size()) {
        std::string next = nbrs[idx++];
        if (color[next] == 1) {
          auto it = std::find(path.begin(), path.end(), next);
          cycle_path = std::vector<std::string>(it, path.end());
        } else if (color[next] == 0) {
          color[next] = 1;
          path.push_back(next);
          stack.push_back({next, 0});
        }
      } else {
        color[v] = 2;
        path.pop_back();
        stack.pop_back();
      }
    }
    if (cycle_path) break;
  }

  if (cycle_path) {
    CycleWitness w;
    for (const std::string& v : *cycle_path) {
      if (v.rfind("__pattern_", 0) == 0) {
        w.pattern_ids.push_back(std::stoi(v.substr(10)));
      } else {
        w.node_ids.push_back(v);
      }
    }
    return {std::nullopt, w};
  }

  // Acyclic: materialize the contracted graph.
  Graph out;
  std::set<std::string> emitted;
  for (const OpNode& n : g.nodes) {
    std::string v = vertex_of(n.id);
    if (!emitted.insert(v).second) continue;
    if (v == n.id) {
      OpNode copy = n;
      // Operands pointing into patterns are rewritten to super-nodes.
      for (std::string& o : copy.operands) o = vertex_of(o);
      // A node may read several members of one pattern; collapse duplicates.
      std::vector<std::string> dedup;
      for (const std::string& o : copy.operands) {
        if (std::find(dedup.begin(), dedup.end(), o) == dedup.end()) {
          dedup.push_back(o);
        }
      }
      copy.operands = dedup;
      out.add(std::move(copy));
    } else {
      int pi = owner.at(n.id);
      OpNode super;
      super.id = v;
      super.type = OpType::kFused;
      // External operands of the pattern, deduplicated in first-use order.
      std::vector<std::string> ext;
      for (const OpNode& m : g.nodes) {
        if (!plan[pi].node_ids.count(m.id)) continue;
        for (const std::string& o : m.operands) {
          std::string ov = vertex_of(o);
          if (ov == v) continue;
          if (std::find(ext.begin(), ext.end(), ov) == ext.end()) {
            ext.push_back(ov);
          }
        }
      }
      super.operands = ext;
      super.shape = n.shape;
      out.add(std::move(super));
    }
  }
  for (const std::string& o : g.outputs) out.outputs.push_back(vertex_of(o));
  return {std::move(out), std::nullopt};
}

bool pattern_is_connected(const Graph& g, const FusionPattern& p) {
  if (p.node_ids.empty()) return false;
  auto consumers = consumer_map(g);
  std::set<std::string> visited;
  std::vector<std::string> work{*p.node_ids.begin()};
  while (!work.empty()) {
    std::string id = work.back();
    work.pop_back();
    if (!visited.insert(id).second) continue;
    const OpNode& n = g.at(id);
    for (const std::string& o : n.operands) {
      if (p.node_ids.count(o) && !visited.count(o)) work.push_back(o);
    }
    for (const std::string& c : consumers[id]) {
      if (p.node_ids.count(c) && !visited.count(c)) work.push_back(c);
    }
  }
  return visited.size() == p.node_ids.size();
}

}  // namespace stitch
