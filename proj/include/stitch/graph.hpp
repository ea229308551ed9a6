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

#ifndef STITCH_GRAPH_H_
#define STITCH_GRAPH_H_

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

// Tensor computation DAG: shaped, typed ops plus the structural utilities
// (parse/print, validation, topological sort, plan contraction) every later
// stage builds on. Graphs are immutable after construction and safe to share
// read-only across pipeline stages.

namespace stitch {

class GraphError : public std::runtime_error {
 public:
  explicit GraphError(const std::string& msg) : std::runtime_error(msg) {}
};

class ParseError : public GraphError {
 public:
  explicit ParseError(const std::string& msg) : GraphError(msg) {}
};

class ValidationError : public GraphError {
 public:
  explicit ValidationError(const std::string& msg) : GraphError(msg) {}
};

class CycleError : public GraphError {
 public:
  explicit CycleError(const std::string& msg) : GraphError(msg) {}
};

class InternalError : public GraphError {
 public:
  explicit InternalError(const std::string& msg) : GraphError(msg) {}
};

enum class DTypeKind { kF32, kF16, kI32 };

struct DType {
  DTypeKind kind = DTypeKind::kF32;

  int byte_size() const {
    return kind == DTypeKind::kF16 ? 2 : 4;
  }
  static DType f32() { return {DTypeKind::kF32}; }
  static DType f16() { return {DTypeKind::kF16}; }
  static DType i32() { return {DTypeKind::kI32}; }

  bool operator==(const DType& o) const { return kind == o.kind; }
  bool operator!=(const DType& o) const { return kind != o.kind; }
};

std::string to_string(DType dt);
DType dtype_from_string(const std::string& s);

// Row-major shape; the last dim is contiguous. An empty dim list is a scalar.
struct Shape {
  std::vector<int64_t> dims;
  DType dtype;

  int rank() const { return static_cast<int>(dims.size()); }
  int64_t element_count() const;
  int64_t byte_count() const { return element_count() * dtype.byte_size(); }

  bool operator==(const Shape& o) const {
    return dims == o.dims && dtype == o.dtype;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }
};

enum class OpType {
  kParameter,
  kConstant,
  kElementwise,
  kReduce,
  kDot,
  kBatchedDot,
  kTuple,
  kGetElement,  // fused-graph plumbing: selects one tuple element
  kFused,       // fused-graph super-op with an embedded body graph
};

std::string to_string(OpType t);

// Row: reduced dims are a suffix of the input dims. Column: a strict prefix
// (non-suffix interior reductions behave like columns and classify the same
// way). Scalar: all dims reduced.
enum class ReduceKind { kRow, kColumn, kScalar };

std::string to_string(ReduceKind k);

struct Graph;

struct OpNode {
  std::string id;
  OpType type = OpType::kParameter;
  std::string elem_name;               // for kElementwise: add, exp, ...
  std::vector<std::string> operands;
  Shape shape;                         // output shape
  std::vector<int> reduce_dims;        // for kReduce
  std::array<int, 2> contract_dims{-1, -1};  // for kDot/kBatchedDot
  int tuple_index = -1;                // for kGetElement
  std::shared_ptr<const Graph> body;   // for kFused
  std::string fused_category;          // for kFused: elemwise|reduction|gemm
};

struct Graph {
  std::vector<OpNode> nodes;
  std::vector<std::string> outputs;

  const OpNode* find(const std::string& id) const;
  const OpNode& at(const std::string& id) const;
  bool contains(const std::string& id) const { return find(id) != nullptr; }
  void add(OpNode node);

 private:
  std::unordered_map<std::string, int> index_;
};

// A candidate fusion subgraph. node_ids must induce a connected subgraph
// unless `packing` is set (independent ops composed into one kernel).
struct FusionPattern {
  std::set<std::string> node_ids;
  int pattern_id = -1;
  bool packing = false;
};

struct Diagnostic {
  std::string node_id;
  std::string rule;
  std::string message;
  bool warning = false;
};

std::string format_diagnostics(const std::vector<Diagnostic>& diags);

// True for op kinds that launch kernels and participate in fusion.
bool is_fusible(const OpNode& op);
// True for ops counted as kernel launches (fusible ops plus fused super-ops).
bool is_kernel_op(const OpNode& op);

// Classification of a reduce against its input rank.
ReduceKind reduce_kind(const Graph& g, const OpNode& op);

// Contraction FLOP count of a dot (2 * output elements * contracted extent).
int64_t dot_flops(const Graph& g, const OpNode& op);

// For broadcast nodes: for each input dim, the output dim it maps to
// (rightmost-greedy subsequence match). Empty for scalar inputs.
std::vector<int> broadcast_dim_map(const Shape& in, const Shape& out);

Graph parse_graph(const std::string& text);
Graph load_graph(const std::string& path);
std::string print_graph(const Graph& g);

std::vector<Diagnostic> validate(const Graph& g);

// Deterministic Kahn sort; ties broken by lexicographic id. Throws CycleError.
std::vector<std::string> topological_sort(const Graph& g);

// consumers()[u] lists ops that name u as an operand, in node order;
// duplicates retained when an op reads u more than once.
std::unordered_map<std::string, std::vector<std::string>> consumer_map(
    const Graph& g);

// Nodes reachable from the graph outputs. When no outputs are declared,
// every node counts as live.
std::set<std::string> live_nodes(const Graph& g);

struct CycleWitness {
  std::vector<int> pattern_ids;       // patterns on the witness cycle
  std::vector<std::string> node_ids;  // plain nodes on the witness cycle
};

struct ContractResult {
  std::optional<Graph> graph;        // set when contraction is acyclic
  std::optional<CycleWitness> cycle;
};

// Contracts each pattern to a super-node. Patterns must be pairwise disjoint.
ContractResult contract_plan(const Graph& g,
                             const std::vector<FusionPattern>& plan);

bool pattern_is_connected(const Graph& g, const FusionPattern& p);

}  // namespace stitch

#endif  // STITCH_GRAPH_H_
