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

#include "stitch/emitter.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace stitch {

std::string to_string(SharedReason r) {
  switch (r) {
    case SharedReason::kReduceTransfer: return "reduce_transfer";
    case SharedReason::kDotTransfer: return "dot_transfer";
    case SharedReason::kElemwiseStage: return "elemwise_stage";
  }
  return "elemwise_stage";
}

std::string to_string(Composition c) {
  switch (c) {
    case Composition::kPacking: return "packing";
    case Composition::kThread: return "thread";
    case Composition::kWarp: return "warp";
    case Composition::kBlock: return "block";
  }
  return "thread";
}

namespace {

bool is_dot_kind(const OpNode& op) {
  return op.type == OpType::kDot || op.type == OpType::kBatchedDot;
}

std::string sanitize(const std::string& id) {
  std::string out;
  for (char c : id) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : '_';
  }
  if (out.empty() || std::isdigit(static_cast<unsigned char>(out[0]))) {
    out = "v_" + out;
  }
  return out;
}

std::string ctype_of(DType dt) {
  switch (dt.kind) {
    case DTypeKind::kF32: return "float";
    case DTypeKind::kF16: return "__half";
    case DTypeKind::kI32: return "int";
  }
  return "float";
}

std::string zero_of(DType dt) {
  return dt.kind == DTypeKind::kI32 ? "0" : "0.0f";
}

struct PatternInfo {
  std::vector<std::string> topo;  // pattern members in graph topo order
  std::map<std::string, int> pos;
  std::map<std::string, std::set<std::string>> inside_consumers;
  std::set<std::string> outputs;
};

PatternInfo make_info(const Graph& g, const FusionPattern& p) {
  PatternInfo info;
  for (const std::string& id : topological_sort(g)) {
    if (p.node_ids.count(id)) {
      info.pos[id] = static_cast<int>(info.topo.size());
      info.topo.push_back(id);
    }
  }
  auto consumers = consumer_map(g);
  info.outputs = pattern_outputs(g, p);
  for (const std::string& id : info.topo) {
    for (const std::string& c : consumers[id]) {
      if (p.node_ids.count(c)) info.inside_consumers[id].insert(c);
    }
  }
  return info;
}

std::string base_op_of(const std::string& request_id) {
  size_t pos = request_id.rfind("__tree");
  if (pos != std::string::npos && pos + 6 == request_id.size()) {
    return request_id.substr(0, pos);
  }
  return request_id;
}

// Does the dot's value reach another gemm or a reduction through in-pattern
// elementwise ops? Such values cross schedules and must stage through shared.
bool reaches_heavy(const Graph& g, const PatternInfo& info,
                   const std::string& start) {
  std::vector<std::string> work(info.inside_consumers.count(start)
                                    ? std::vector<std::string>(
                                          info.inside_consumers.at(start).begin(),
                                          info.inside_consumers.at(start).end())
                                    : std::vector<std::string>{});
  std::set<std::string> seen;
  while (!work.empty()) {
    std::string id = work.back();
    work.pop_back();
    if (!seen.insert(id).second) continue;
    const OpNode& op = g.at(id);
    if (op.type == OpType::kReduce || is_dot_kind(op)) return true;
    if (op.type == OpType::kElementwise && info.inside_consumers.count(id)) {
      for (const std::string& c : info.inside_consumers.at(id)) {
        work.push_back(c);
      }
    }
  }
  return false;
}

}  // namespace

std::set<std::string> pattern_outputs(const Graph& g, const FusionPattern& p) {
  auto consumers = consumer_map(g);
  std::set<std::string> outs;
  for (const std::string& id : p.node_ids) {
    bool external = std::count(g.outputs.begin(), g.outputs.end(), id) > 0;
    for (const std::string& c : consumers[id]) {
      external = external || !p.node_ids.count(c);
    }
    if (external) outs.insert(id);
  }
  return outs;
}

PostDominance::PostDominance(const Graph& g, const FusionPattern& p) {
  PatternInfo info = make_info(g, p);
  const std::string kSink = "__sink";
  std::map<std::string, std::vector<std::string>> succs;
  for (const std::string& id : info.topo) {
    std::set<std::string> s;
    if (info.inside_consumers.count(id)) s = info.inside_consumers.at(id);
    if (info.outputs.count(id)) s.insert(kSink);
    succs[id] = {s.begin(), s.end()};
  }
  // Reverse-topological sweep; the DAG needs a single pass.
  pdom_[kSink] = {kSink};
  for (auto it = info.topo.rbegin(); it != info.topo.rend(); ++it) {
    const std::string& id = *it;
    std::set<std::string> meet;
    bool first = true;
    for (const std::string& s : succs[id]) {
      if (first) {
        meet = pdom_[s];
        first = false;
      } else {
        std::set<std::string> next;
        std::set_intersection(meet.begin(), meet.end(), pdom_[s].begin(),
                              pdom_[s].end(),
                              std::inserter(next, next.begin()));
        meet = std::move(next);
      }
    }
    meet.insert(id);
    pdom_[id] = std::move(meet);
  }
}

bool PostDominance::dominates(const std::string& a, const std::string& b) const {
  if (a == b) return false;
  auto it = pdom_.find(b);
  return it != pdom_.end() && it->second.count(a) > 0;
}

std::vector<SharedRequest> canonical_shared_requests(const Graph& g,
                                                     const FusionPattern& p) {
  PatternInfo info = make_info(g, p);
  std::vector<SharedRequest> requests;
  std::set<std::string> claimed;  // consumers taken by a warp-merged reduce
  for (const std::string& id : info.topo) {
    const OpNode& op = g.at(id);
    bool consumed_inside = info.inside_consumers.count(id) &&
                           !info.inside_consumers.at(id).empty();
    if (is_dot_kind(op)) {
      if (reaches_heavy(g, info, id)) {
        requests.push_back({id, op.shape.byte_count(), SharedReason::kDotTransfer});
      }
    } else if (op.type == OpType::kElementwise) {
      bool feeds_dot = false;
      if (consumed_inside) {
        for (const std::string& c : info.inside_consumers.at(id)) {
          feeds_dot = feeds_dot || is_dot_kind(g.at(c));
        }
      }
      if (feeds_dot) {
        requests.push_back(
            {id, op.shape.byte_count(), SharedReason::kElemwiseStage});
      }
    } else if (op.type == OpType::kReduce && consumed_inside) {
      // Warp-mergeable: every consumer is an elementwise pattern output whose
      // shape matches the kept dims, and none is claimed by an earlier reduce.
      bool mergeable = true;
      for (const std::string& c : info.inside_consumers.at(id)) {
        const OpNode& cop = g.at(c);
        mergeable = mergeable && cop.type == OpType::kElementwise &&
                    info.outputs.count(c) > 0 &&
                    cop.shape.dims == op.shape.dims && !claimed.count(c);
      }
      if (mergeable) {
        for (const std::string& c : info.inside_consumers.at(id)) {
          claimed.insert(c);
        }
      } else {
        requests.push_back(
            {id, op.shape.byte_count(), SharedReason::kReduceTransfer});
      }
    }
  }
  return requests;
}

namespace {

constexpr int kDefaultCtaSize = 256;

bool warp_mode_reduce(const Graph&, const OpNode& op, const Schedule& s) {
  if (op.type != OpType::kReduce) return false;
  for (int d : op.reduce_dims) {
    if (s.attrs[d].has(AttrType::kWarp)) return true;
  }
  return false;
}

bool block_mode_reduce(const Graph& g, const OpNode& op, const Schedule& s) {
  if (op.type != OpType::kReduce) return false;
  if (warp_mode_reduce(g, op, s)) return false;
  for (int d : op.reduce_dims) {
    if (s.attrs[d].has(AttrType::kCta)) return true;
  }
  return false;
}

// Warp-merge plan for a template: consumers folded into a warp-reduce
// section, receiving the reduced value as a register.
struct MergePlan {
  std::map<std::string, std::string> into;              // consumer -> reduce
  std::map<std::string, std::vector<std::string>> group;  // reduce -> consumers
};

MergePlan compute_merge(const Graph& g, const PatternInfo& info,
                        const Template& t) {
  MergePlan plan;
  for (const Schedule& s : t.schedules) {
    const OpNode& op = g.at(s.op_id);
    if (!warp_mode_reduce(g, op, s) || s.shared) continue;
    if (!info.inside_consumers.count(s.op_id)) continue;
    const std::set<std::string>& inside = info.inside_consumers.at(s.op_id);
    bool all_mergeable = !inside.empty();
    for (const std::string& c : inside) {
      const Schedule* cs = t.find(c);
      const OpNode& cop = g.at(c);
      all_mergeable = all_mergeable && cs != nullptr && !cs->shared &&
                      cop.type == OpType::kElementwise &&
                      cop.shape.dims == op.shape.dims && !plan.into.count(c);
    }
    if (!all_mergeable) continue;
    for (const std::string& c : inside) {
      plan.into[c] = s.op_id;
      plan.group[s.op_id].push_back(c);
    }
    std::sort(plan.group[s.op_id].begin(), plan.group[s.op_id].end());
  }
  return plan;
}

}  // namespace

std::vector<SharedRequest> build_shared_requests(const Graph& g,
                                                 const FusionPattern& p,
                                                 const Template& t) {
  PatternInfo info = make_info(g, p);
  MergePlan merge = compute_merge(g, info, t);
  int cta = t.cta_size > 0 ? t.cta_size : kDefaultCtaSize;

  std::map<int, std::vector<SharedRequest>> by_pos;
  for (const Schedule& s : t.schedules) {
    const OpNode& op = g.at(s.op_id);
    int pos = info.pos.at(s.op_id);
    bool consumed_inside = info.inside_consumers.count(s.op_id) &&
                           !info.inside_consumers.at(s.op_id).empty();
    SharedReason reason = op.type == OpType::kReduce ? SharedReason::kReduceTransfer
                          : is_dot_kind(op)          ? SharedReason::kDotTransfer
                                                     : SharedReason::kElemwiseStage;
    bool wants = s.shared;
    // A scheduled reduce or gemm whose value other schedules consume must
    // transfer through shared unless a warp merge carries it in registers.
    if (!wants && consumed_inside &&
        (op.type == OpType::kReduce || is_dot_kind(op))) {
      bool merged = merge.group.count(s.op_id) > 0;
      if (!merged) wants = true;
    }
    if (wants) by_pos[pos].push_back({s.op_id, op.shape.byte_count(), reason});
    if (block_mode_reduce(g, op, s)) {
      by_pos[pos].push_back({s.op_id + "__tree",
                             static_cast<int64_t>(cta) * op.shape.dtype.byte_size(),
                             SharedReason::kReduceTransfer});
    }
  }
  std::vector<SharedRequest> requests;
  for (auto& [pos, reqs] : by_pos) {
    for (SharedRequest& r : reqs) requests.push_back(std::move(r));
  }
  return requests;
}

AllocMap shared_planning(const Graph& g, const FusionPattern& p,
                         const std::vector<SharedRequest>& requests) {
  PatternInfo info = make_info(g, p);
  PostDominance pdom(g, p);

  std::map<std::string, std::vector<SharedRequest>> req_of;  // base op -> reqs
  for (const SharedRequest& r : requests) {
    std::string base = base_op_of(r.op_id);
    if (!info.pos.count(base)) {
      throw GraphError("shared request names op outside pattern: " + r.op_id);
    }
    req_of[base].push_back(r);
  }

  struct Slot {
    int64_t offset;
    int64_t size;
    int occupant = -1;  // entry index, -1 when free
  };
  AllocMap out;
  std::vector<Slot> slots;
  std::map<std::string, std::set<int>> info_of;  // op -> live entry indices
  std::map<int, std::string> entry_base;         // entry index -> base op

  auto alloc_fresh = [&](const std::string& op_id, int64_t bytes,
                         const std::string& base) {
    int entry_idx = static_cast<int>(out.entries.size());
    for (Slot& s : slots) {
      if (s.occupant < 0 && s.size >= bytes) {
        s.occupant = entry_idx;
        out.entries.push_back({op_id, s.offset, bytes, std::nullopt});
        entry_base[entry_idx] = base;
        return entry_idx;
      }
    }
    Slot s{out.total, bytes, entry_idx};
    out.total += bytes;
    slots.push_back(s);
    out.entries.push_back({op_id, s.offset, bytes, std::nullopt});
    entry_base[entry_idx] = base;
    return entry_idx;
  };
  auto slot_of_entry = [&](int entry_idx) -> Slot& {
    for (Slot& s : slots) {
      if (s.occupant == entry_idx) return s;
    }
    throw InternalError("entry is not a current slot occupant");
  };

  for (const std::string& inst : info.topo) {
    const OpNode& op = g.at(inst);
    auto reqs = req_of.find(inst);
    if (reqs == req_of.end()) {
      // No shared space needed: propagate allocation info along the edges.
      std::set<int> merged;
      for (const std::string& o : op.operands) {
        if (info_of.count(o)) {
          merged.insert(info_of[o].begin(), info_of[o].end());
        }
      }
      info_of[inst] = std::move(merged);
      continue;
    }
    // Collect predecessor allocations, ordered by producing-op position.
    std::vector<int> prev_allocs;
    {
      std::set<int> collected;
      for (const std::string& o : op.operands) {
        if (info_of.count(o)) {
          collected.insert(info_of[o].begin(), info_of[o].end());
        }
      }
      prev_allocs.assign(collected.begin(), collected.end());
      std::sort(prev_allocs.begin(), prev_allocs.end(), [&](int a, int b) {
        return info.pos.at(entry_base[a]) < info.pos.at(entry_base[b]);
      });
    }
    std::set<int> own;
    for (const SharedRequest& r : reqs->second) {
      bool scratch = r.op_id != inst;
      bool shared_slot = false;
      if (!scratch) {
        for (int prev : prev_allocs) {
          // Only a slot's current occupant can hand its space over.
          bool current = std::any_of(slots.begin(), slots.end(), [&](const Slot& s) {
            return s.occupant == prev;
          });
          if (!current) continue;
          if (!pdom.dominates(inst, entry_base[prev])) continue;
          Slot& slot = slot_of_entry(prev);
          if (slot.size < r.bytes) continue;
          if (!shared_slot) {
            int entry_idx = static_cast<int>(out.entries.size());
            out.entries.push_back(
                {r.op_id, slot.offset, r.bytes, out.entries[prev].op_id});
            entry_base[entry_idx] = inst;
            slot.occupant = entry_idx;
            own.insert(entry_idx);
            shared_slot = true;
          } else {
            slot.occupant = -1;  // reclaim: free for later allocations
          }
        }
      }
      if (!shared_slot) {
        own.insert(alloc_fresh(r.op_id, r.bytes, inst));
      }
    }
    // The requesting op's own result allocation flows downstream.
    std::set<int> flow;
    for (int e : own) {
      if (out.entries[e].op_id == inst) flow.insert(e);
    }
    info_of[inst] = std::move(flow);
  }
  return out;
}

namespace {

// Everything emitted inside one schedule's loop nest: the anchor, its merged
// warp consumers, and every value inlined rather than read from shared.
std::set<std::string> section_closure(const Graph& g, const PatternInfo& info,
                                      const std::set<std::string>& smem_ops,
                                      const std::string& anchor,
                                      const std::vector<std::string>& merged) {
  std::set<std::string> closure{anchor};
  closure.insert(merged.begin(), merged.end());
  std::vector<std::string> work(closure.begin(), closure.end());
  while (!work.empty()) {
    std::string id = work.back();
    work.pop_back();
    for (const std::string& o : g.at(id).operands) {
      if (!info.pos.count(o)) continue;  // external input
      if (smem_ops.count(o)) continue;   // read from shared
      if (closure.count(o)) continue;
      closure.insert(o);
      work.push_back(o);
    }
  }
  return closure;
}

}  // namespace

std::map<std::string, std::set<std::string>> register_planning(
    const Graph& g, const FusionPattern& p, const Template& t) {
  PatternInfo info = make_info(g, p);
  MergePlan merge = compute_merge(g, info, t);
  std::set<std::string> smem_ops;
  for (const SharedRequest& r : build_shared_requests(g, p, t)) {
    if (base_op_of(r.op_id) == r.op_id) smem_ops.insert(r.op_id);
  }

  std::map<std::string, std::set<std::string>> reg;
  for (const Schedule& s : t.schedules) {
    if (merge.into.count(s.op_id)) continue;  // emitted inside its group
    std::vector<std::string> merged;
    if (merge.group.count(s.op_id)) merged = merge.group.at(s.op_id);
    std::set<std::string> closure =
        section_closure(g, info, smem_ops, s.op_id, merged);
    // Merged reduces hand their value over in a register already.
    for (const std::string& id : closure) {
      const OpNode& op = g.at(id);
      if (op.type != OpType::kElementwise || id == s.op_id) continue;
      std::set<std::string> users;
      for (const std::string& c : info.inside_consumers.count(id)
                                      ? info.inside_consumers.at(id)
                                      : std::set<std::string>{}) {
        if (closure.count(c)) users.insert(c);
      }
      if (users.size() >= 2) reg[id].insert(users.begin(), users.end());
    }
  }
  return reg;
}

namespace {

// ---------------------------------------------------------------------------
// Kernel text emission
// ---------------------------------------------------------------------------

struct Scope {
  std::map<std::string, std::string> vars;  // op id -> local variable
  double mult = 1.0;                        // enclosing iteration count
};

class KernelEmitter {
 public:
  KernelEmitter(const Graph& g, const FusionPattern& p, const Template& t,
                std::string name, const EmitterConfig& cfg)
      : g_(g), p_(p), tpl_(t), name_(std::move(name)), cfg_(cfg),
        info_(make_info(g, p)) {}

  EmitResult run() {
    try {
      prepare();
    } catch (const TemplateError& e) {
      return {std::nullopt, e.what()};
    }
    if (!skip_.empty()) return {std::nullopt, skip_};

    for (size_t i = 0; i < sections_.size(); ++i) {
      current_section_ = static_cast<int>(i);
      emit_section(sections_[i]);
      if (!skip_.empty()) return {std::nullopt, skip_};
    }

    KernelSketch k;
    k.name = name_;
    k.cta_num = tpl_.cta_num > 0 ? tpl_.cta_num : 1;
    k.cta_size = tpl_.cta_size > 0 ? tpl_.cta_size : kDefaultCtaSize;
    k.shared_bytes = allocs_.total;
    k.allocs = allocs_;
    k.tmpl = tpl_;
    k.composition = composition();
    k.traffic_bytes = traffic_;
    k.barrier_count = barriers_;
    k.source = assemble(k);
    return {std::move(k), ""};
  }

 private:
  struct Section {
    std::string anchor;
    std::vector<std::string> merged;
    enum Mode { kStandard, kFlat, kWarp, kBlock, kAllThread } mode;
  };

  // --- planning -----------------------------------------------------------

  void prepare() {
    validate_template(tpl_, g_, p_);
    merge_ = compute_merge(g_, info_, tpl_);
    requests_ = build_shared_requests(g_, p_, tpl_);
    allocs_ = shared_planning(g_, p_, requests_);
    if (allocs_.total > cfg_.shared_limit_bytes) {
      skip_ = "shared memory demand " + std::to_string(allocs_.total) +
              " exceeds limit " + std::to_string(cfg_.shared_limit_bytes);
      return;
    }
    for (const AllocEntry& e : allocs_.entries) {
      if (base_op_of(e.op_id) == e.op_id) smem_ops_.insert(e.op_id);
    }
    // Slot table: one declaration per distinct offset, sized to the slot.
    for (const AllocEntry& e : allocs_.entries) {
      auto it = slot_index_.find(e.offset);
      if (it == slot_index_.end()) {
        slot_index_[e.offset] = static_cast<int>(slot_dtype_.size());
        slot_dtype_.push_back(g_.at(base_op_of(e.op_id)).shape.dtype);
        slot_size_.push_back(e.size);
        slot_members_.push_back({e.op_id});
      } else {
        slot_size_[it->second] = std::max(slot_size_[it->second], e.size);
        slot_members_[it->second].push_back(e.op_id);
      }
    }

    // Sections in template order, merged consumers folded away.
    for (const Schedule& s : tpl_.schedules) {
      if (merge_.into.count(s.op_id)) continue;
      Section sec;
      sec.anchor = s.op_id;
      if (merge_.group.count(s.op_id)) sec.merged = merge_.group.at(s.op_id);
      const OpNode& op = g_.at(s.op_id);
      bool all_thread = true;
      for (const DimAttr& a : s.attrs) {
        for (const DimAttr::Level& l : a.levels) {
          all_thread = all_thread && l.type == AttrType::kThread;
        }
      }
      if (all_thread) {
        sec.mode = Section::kAllThread;
      } else if (warp_mode_reduce(g_, op, s)) {
        sec.mode = Section::kWarp;
      } else if (block_mode_reduce(g_, op, s)) {
        sec.mode = Section::kBlock;
      } else {
        sec.mode = Section::kStandard;
        if (op.type == OpType::kElementwise) {
          bool inner = false;
          for (const DimAttr& a : s.attrs) {
            inner = inner || a.has(AttrType::kCta) || a.has(AttrType::kThread);
          }
          if (!inner) sec.mode = Section::kFlat;
        }
      }
      sections_.push_back(std::move(sec));
    }
    for (size_t i = 0; i < sections_.size(); ++i) {
      section_of_[sections_[i].anchor] = static_cast<int>(i);
      for (const std::string& m : sections_[i].merged) {
        section_of_[m] = static_cast<int>(i);
      }
    }
    // Kernel arguments: external inputs in node order, outputs sorted.
    for (const OpNode& n : g_.nodes) {
      if (p_.node_ids.count(n.id)) continue;
      bool used = false;
      for (const std::string& id : info_.topo) {
        for (const std::string& o : g_.at(id).operands) used = used || o == n.id;
      }
      if (used) inputs_.push_back(n.id);
    }
    outputs_.assign(info_.outputs.begin(), info_.outputs.end());
  }

  // --- small emission helpers ---------------------------------------------

  void line(const std::string& s) {
    body_ << std::string(static_cast<size_t>(indent_) * 2, ' ') << s << "\n";
  }
  void open(const std::string& s) {
    line(s + " {");
    ++indent_;
  }
  void close() {
    --indent_;
    line("}");
  }
  void barrier() {
    line("__syncthreads();");
    ++barriers_;
  }

  static bool plain_identifier(const std::string& s) {
    if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    });
  }

  static std::string linear(const std::vector<std::string>& coords,
                            const std::vector<int64_t>& dims) {
    if (coords.empty()) return "0";
    std::string e = coords[0];
    for (size_t i = 1; i < coords.size(); ++i) {
      if (!plain_identifier(e)) e = "(" + e + ")";
      e = e + " * " + std::to_string(dims[i]) + " + " + coords[i];
    }
    return e;
  }

  // Declares coordinate variables for `var` decoded over dims[sel] and
  // returns their names; a single dimension reuses `var` directly.
  std::vector<std::string> decode(const std::string& var,
                                  const std::vector<int64_t>& extents,
                                  const std::vector<std::string>& names) {
    if (extents.empty()) return {};
    if (extents.size() == 1) return {var};
    std::vector<int64_t> stride(extents.size(), 1);
    for (size_t i = extents.size() - 1; i-- > 0;) {
      stride[i] = stride[i + 1] * extents[i + 1];
    }
    std::vector<std::string> coords(extents.size());
    for (size_t i = 0; i < extents.size(); ++i) {
      std::string expr = var;
      if (stride[i] > 1) expr = var + " / " + std::to_string(stride[i]);
      if (i > 0 && stride[i] > 1) expr = "(" + expr + ") % " + std::to_string(extents[i]);
      if (i > 0 && stride[i] == 1) expr = var + " % " + std::to_string(extents[i]);
      line("const long " + names[i] + " = " + expr + ";");
      coords[i] = names[i];
    }
    return coords;
  }

  std::string arg_name(const std::string& id) const { return sanitize(id); }

  // --- value emission ------------------------------------------------------

  // C expression for op `id` at output coordinates `coords`.
  std::string value_of(const std::string& id,
                       const std::vector<std::string>& coords, Scope& scope) {
    if (!p_.node_ids.count(id)) {
      const OpNode& ext = g_.at(id);
      traffic_ += ext.shape.dtype.byte_size() * scope.mult;
      return arg_name(id) + "[" + linear(coords, ext.shape.dims) + "]";
    }
    if (auto it = scope.vars.find(id); it != scope.vars.end()) {
      return it->second;
    }
    if (smem_ops_.count(id)) {
      check_smem_read(id);
      return smem_ref(id, coords);
    }
    return emit_statement(id, coords, scope);
  }

  std::string smem_ref(const std::string& id,
                       const std::vector<std::string>& coords) {
    const AllocEntry* e = allocs_.find(id);
    int slot = slot_index_.at(e->offset);
    const OpNode& op = g_.at(id);
    std::vector<int> grid = grid_output_dims(id);
    std::vector<std::string> slice_coords;
    std::vector<int64_t> slice_dims;
    for (size_t d = 0; d < op.shape.dims.size(); ++d) {
      if (std::count(grid.begin(), grid.end(), static_cast<int>(d))) continue;
      slice_coords.push_back(coords[d]);
      slice_dims.push_back(op.shape.dims[d]);
    }
    return "smem_" + std::to_string(slot) + "[" +
           linear(slice_coords, slice_dims) + "]";
  }

  // Output dims of a scheduled op that its GRID attrs split across blocks.
  std::vector<int> grid_output_dims(const std::string& id) {
    const Schedule* s = tpl_.find(id);
    const OpNode& op = g_.at(id);
    std::vector<int> dims;
    if (op.type == OpType::kReduce) {
      std::set<int> reduced(op.reduce_dims.begin(), op.reduce_dims.end());
      int out_pos = 0;
      for (size_t d = 0; d < s->attrs.size(); ++d) {
        if (reduced.count(static_cast<int>(d))) continue;
        if (s->attrs[d].has(AttrType::kGrid)) dims.push_back(out_pos);
        ++out_pos;
      }
    } else {
      for (size_t d = 0; d < s->attrs.size() && d < op.shape.dims.size(); ++d) {
        if (s->attrs[d].has(AttrType::kGrid)) {
          dims.push_back(static_cast<int>(d));
        }
      }
    }
    return dims;
  }

  void check_smem_read(const std::string& id) {
    auto sec = section_of_.find(id);
    if (sec == section_of_.end() || sec->second >= current_section_) {
      skip_ = "schedule for " + sections_[current_section_].anchor +
              " reads " + id + " before any schedule produced it";
      return;
    }
    // Layout constraint: the slice must stay inside one block's index range.
    auto sig = [&](const std::string& op_id) -> std::pair<bool, int64_t> {
      const Schedule* s = tpl_.find(op_id);
      const OpNode& op = g_.at(op_id);
      std::vector<int64_t> space = iteration_space(g_, op);
      int64_t blocks = 1;
      bool leading = true;
      for (size_t d = 0; d < s->attrs.size(); ++d) {
        if (s->attrs[d].has(AttrType::kGrid)) {
          if (d != 0) leading = false;
          for (const DimAttr::Level& l : s->attrs[d].levels) {
            if (l.type == AttrType::kGrid && l.tile) leading = false;
          }
          blocks *= space[d];
        }
      }
      return {leading, blocks};
    };
    auto [prod_lead, prod_blocks] = sig(id);
    auto [cons_lead, cons_blocks] = sig(sections_[current_section_].anchor);
    if (prod_blocks == 1 && cons_blocks == 1) return;
    if (!(prod_lead && cons_lead && prod_blocks == cons_blocks)) {
      skip_ = "shared value " + id + " would be read outside its block context";
    }
  }

  std::string fresh_loop_var(const std::string& stem) {
    int n = loop_seq_[stem]++;
    return n == 0 ? stem : stem + std::to_string(n);
  }

  std::string emit_statement(const std::string& id,
                             const std::vector<std::string>& coords,
                             Scope& scope) {
    const OpNode& op = g_.at(id);
    std::string var = sanitize(id) + "_v";
    std::string ct = ctype_of(op.shape.dtype);
    if (!sections_.empty() && id != sections_[current_section_].anchor) {
      any_inline_ = true;
    }
    switch (op.type) {
      case OpType::kElementwise: {
        line(ct + " " + var + " = " + elementwise_expr(op, coords, scope) + ";");
        break;
      }
      case OpType::kReduce: {
        const OpNode& in = g_.at(op.operands[0]);
        line(ct + " " + var + " = " + zero_of(op.shape.dtype) + ";");
        std::set<int> reduced(op.reduce_dims.begin(), op.reduce_dims.end());
        Scope inner = scope;
        std::vector<std::string> in_coords(in.shape.dims.size());
        int kept = 0;
        std::vector<std::string> loop_vars;
        for (size_t d = 0; d < in.shape.dims.size(); ++d) {
          if (reduced.count(static_cast<int>(d))) {
            std::string lv = fresh_loop_var("r");
            loop_vars.push_back(lv);
            in_coords[d] = lv;
            open("for (long " + lv + " = 0; " + lv + " < " +
                 std::to_string(in.shape.dims[d]) + "; ++" + lv + ")");
            inner.mult *= static_cast<double>(in.shape.dims[d]);
          } else {
            in_coords[d] = coords[kept++];
          }
        }
        std::string val = value_of(op.operands[0], in_coords, inner);
        line(var + " += " + val + ";");
        for (size_t i = 0; i < loop_vars.size(); ++i) close();
        break;
      }
      case OpType::kDot:
      case OpType::kBatchedDot: {
        const OpNode& lhs = g_.at(op.operands[0]);
        const OpNode& rhs = g_.at(op.operands[1]);
        auto cd = op.contract_dims;
        if (cd[0] < 0) {
          cd = {lhs.shape.rank() - 1, std::max(0, rhs.shape.rank() - 2)};
        }
        line(ct + " " + var + " = " + zero_of(op.shape.dtype) + ";");
        std::string kv = fresh_loop_var("k");
        int64_t kext = lhs.shape.dims[cd[0]];
        open("for (long " + kv + " = 0; " + kv + " < " + std::to_string(kext) +
             "; ++" + kv + ")");
        Scope inner = scope;
        inner.mult *= static_cast<double>(kext);
        std::vector<std::string> lc(lhs.shape.dims.size());
        std::vector<std::string> rc(rhs.shape.dims.size());
        if (op.type == OpType::kBatchedDot) {
          int r = lhs.shape.rank();
          for (int d = 0; d < r - 2; ++d) {
            lc[d] = coords[d];
            rc[d] = coords[d];
          }
          lc[r - 2] = coords[r - 2];
          lc[r - 1] = kv;
          rc[r - 2] = kv;
          rc[r - 1] = coords[r - 1];
        } else {
          int pos = 0;
          for (int d = 0; d < lhs.shape.rank(); ++d) {
            lc[d] = d == cd[0] ? kv : coords[pos++];
          }
          for (int d = 0; d < rhs.shape.rank(); ++d) {
            rc[d] = d == cd[1] ? kv : coords[pos++];
          }
        }
        std::string lv = value_of(op.operands[0], lc, inner);
        std::string rv = value_of(op.operands[1], rc, inner);
        line(var + " += " + lv + " * " + rv + ";");
        close();
        break;
      }
      default:
        throw InternalError("cannot emit value for op kind " +
                            to_string(op.type));
    }
    scope.vars[id] = var;
    return var;
  }

  std::string elementwise_expr(const OpNode& op,
                               const std::vector<std::string>& coords,
                               Scope& scope) {
    auto operand = [&](int i) {
      return value_of(op.operands[i], coords, scope);
    };
    const std::string& f = op.elem_name;
    if (f == "broadcast") {
      const OpNode& in = g_.at(op.operands[0]);
      std::vector<int> map = broadcast_dim_map(in.shape, op.shape);
      std::vector<std::string> in_coords;
      for (int m : map) in_coords.push_back(coords[m]);
      return value_of(op.operands[0], in_coords, scope);
    }
    if (f == "add") return operand(0) + " + " + operand(1);
    if (f == "subtract") return operand(0) + " - " + operand(1);
    if (f == "multiply") return operand(0) + " * " + operand(1);
    if (f == "divide") return operand(0) + " / " + operand(1);
    if (f == "maximum") return "fmaxf(" + operand(0) + ", " + operand(1) + ")";
    if (f == "minimum") return "fminf(" + operand(0) + ", " + operand(1) + ")";
    if (f == "log") return "logf(" + operand(0) + ")";
    if (f == "exp") return "expf(" + operand(0) + ")";
    if (f == "negate") return "-(" + operand(0) + ")";
    if (f == "rsqrt") return "rsqrtf(" + operand(0) + ")";
    if (f == "compare") {
      std::string one = op.shape.dtype.kind == DTypeKind::kI32 ? "1" : "1.0f";
      std::string zero = zero_of(op.shape.dtype);
      return "(" + operand(0) + " > " + operand(1) + ") ? " + one + " : " + zero;
    }
    if (f == "select") {
      return "(" + operand(0) + " != " + zero_of(g_.at(op.operands[0]).shape.dtype) +
             ") ? " + operand(1) + " : " + operand(2);
    }
    throw InternalError("unknown elementwise op: " + f);
  }

  void emit_writes(const std::string& id, const std::vector<std::string>& coords,
                   const std::string& var) {
    const OpNode& op = g_.at(id);
    if (info_.outputs.count(id)) {
      line(arg_name(id) + "[" + linear(coords, op.shape.dims) + "] = " + var +
           ";");
      traffic_ += static_cast<double>(op.shape.byte_count());
    }
    if (smem_ops_.count(id)) {
      line(smem_ref(id, coords) + " = " + var + ";");
      wrote_smem_ = true;
    }
  }

  // --- section emission ----------------------------------------------------

  struct DimSplit {
    std::vector<int> grid, cta, seq;       // indices into the loop space
    std::vector<int64_t> dims;             // loop space extents
    std::vector<int> out_pos;              // loop dim -> output dim (or -1)
  };

  // Loop space of a section: kept dims for reductions, output dims otherwise.
  DimSplit split_dims(const Section& sec) {
    const OpNode& op = g_.at(sec.anchor);
    const Schedule& s = *tpl_.find(sec.anchor);
    DimSplit ds;
    std::vector<int64_t> space = iteration_space(g_, op);
    std::set<int> reduced(op.reduce_dims.begin(), op.reduce_dims.end());
    int out = 0;
    for (size_t d = 0; d < space.size(); ++d) {
      if (op.type == OpType::kReduce && reduced.count(static_cast<int>(d))) {
        continue;
      }
      int idx = static_cast<int>(ds.dims.size());
      ds.dims.push_back(space[d]);
      ds.out_pos.push_back(out++);
      if (s.attrs[d].has(AttrType::kGrid)) {
        ds.grid.push_back(idx);
      } else if (s.attrs[d].has(AttrType::kThread) &&
                 !s.attrs[d].has(AttrType::kCta) &&
                 !s.attrs[d].has(AttrType::kWarp)) {
        ds.seq.push_back(idx);
      } else {
        ds.cta.push_back(idx);
      }
    }
    return ds;
  }

  std::string schedule_comment(const Section& sec) {
    Template one;
    one.schedules = {*tpl_.find(sec.anchor)};
    std::string text = print_template(one);
    if (!text.empty() && text.back() == '\n') text.pop_back();
    std::string c = "// schedule: " + text;
    if (!sec.merged.empty()) {
      c += "  (merged:";
      for (const std::string& m : sec.merged) c += " " + m;
      c += ")";
    }
    return c;
  }

  std::vector<int64_t> extents_of(const DimSplit& ds, const std::vector<int>& sel) {
    std::vector<int64_t> e;
    for (int i : sel) e.push_back(ds.dims[i]);
    return e;
  }
  std::vector<std::string> names_of(const std::vector<int>& sel) {
    std::vector<std::string> n;
    for (int i : sel) n.push_back("i" + std::to_string(i));
    return n;
  }
  int64_t product(const std::vector<int64_t>& v) {
    int64_t p = 1;
    for (int64_t x : v) p *= x;
    return p;
  }

  void emit_section(const Section& sec) {
    wrote_smem_ = false;
    loop_seq_.clear();
    line(schedule_comment(sec));
    DimSplit ds = split_dims(sec);
    std::vector<std::string> coords(ds.dims.size());

    switch (sec.mode) {
      case Section::kAllThread: {
        open("if (bid == 0 && tid == 0)");
        Scope scope;
        for (size_t i = 0; i < ds.dims.size(); ++i) {
          coords[i] = "i" + std::to_string(i);
          open("for (long " + coords[i] + " = 0; " + coords[i] + " < " +
               std::to_string(ds.dims[i]) + "; ++" + coords[i] + ")");
          scope.mult *= static_cast<double>(ds.dims[i]);
        }
        emit_core(sec, coords, scope);
        for (size_t i = 0; i < ds.dims.size(); ++i) close();
        close();
        break;
      }
      case Section::kFlat: {
        int64_t total = product(ds.dims);
        open("for (long idx = bid * (long)blockDim.x + tid; idx < " +
             std::to_string(total) + "; idx += (long)gridDim.x * blockDim.x)");
        std::vector<int> all(ds.dims.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
        auto decoded = decode("idx", ds.dims, names_of(all));
        for (size_t i = 0; i < decoded.size(); ++i) coords[i] = decoded[i];
        Scope scope;
        scope.mult = static_cast<double>(total);
        emit_core(sec, coords, scope);
        close();
        break;
      }
      case Section::kWarp:
        emit_warp_section(sec, ds);
        break;
      case Section::kBlock:
        emit_block_section(sec, ds);
        break;
      case Section::kStandard: {
        int64_t gtotal = product(extents_of(ds, ds.grid));
        open("for (long g = bid; g < " + std::to_string(gtotal) +
             "; g += gridDim.x)");
        auto gc = decode("g", extents_of(ds, ds.grid), names_of(ds.grid));
        for (size_t i = 0; i < ds.grid.size(); ++i) coords[ds.grid[i]] = gc[i];
        int64_t ptotal = product(extents_of(ds, ds.cta));
        open("for (long t = tid; t < " + std::to_string(ptotal) +
             "; t += blockDim.x)");
        auto tc = decode("t", extents_of(ds, ds.cta), names_of(ds.cta));
        for (size_t i = 0; i < ds.cta.size(); ++i) coords[ds.cta[i]] = tc[i];
        for (int sd : ds.seq) {
          coords[sd] = "i" + std::to_string(sd);
          open("for (long " + coords[sd] + " = 0; " + coords[sd] + " < " +
               std::to_string(ds.dims[sd]) + "; ++" + coords[sd] + ")");
        }
        Scope scope;
        scope.mult = static_cast<double>(product(ds.dims));
        emit_core(sec, coords, scope);
        for (size_t i = 0; i < ds.seq.size(); ++i) close();
        close();
        close();
        break;
      }
    }
    if (wrote_smem_) barrier();
    body_ << "\n";
  }

  void emit_core(const Section& sec, const std::vector<std::string>& coords,
                 Scope scope) {
    std::string var = emit_statement(sec.anchor, coords, scope);
    emit_writes(sec.anchor, coords, var);
    for (const std::string& m : sec.merged) {
      std::string mv = emit_statement(m, coords, scope);
      emit_writes(m, coords, mv);
    }
  }

  void emit_warp_section(const Section& sec, const DimSplit& ds) {
    const OpNode& anchor = g_.at(sec.anchor);
    const OpNode& input = g_.at(anchor.operands[0]);
    std::set<int> reduced(anchor.reduce_dims.begin(), anchor.reduce_dims.end());
    std::vector<int64_t> red_extents;
    for (int d : anchor.reduce_dims) red_extents.push_back(input.shape.dims[d]);
    int64_t rtotal = product(red_extents);

    std::vector<std::string> coords(ds.dims.size());
    int64_t gtotal = product(extents_of(ds, ds.grid));
    open("for (long g = bid; g < " + std::to_string(gtotal) +
         "; g += gridDim.x)");
    auto gc = decode("g", extents_of(ds, ds.grid), names_of(ds.grid));
    for (size_t i = 0; i < ds.grid.size(); ++i) coords[ds.grid[i]] = gc[i];

    std::vector<int> rest;
    for (int i : ds.cta) rest.push_back(i);
    for (int i : ds.seq) rest.push_back(i);
    std::sort(rest.begin(), rest.end());
    int64_t ntotal = product(extents_of(ds, rest));
    open("for (long w = warp; w < " + std::to_string(ntotal) + "; w += nwarps)");
    auto wc = decode("w", extents_of(ds, rest), names_of(rest));
    for (size_t i = 0; i < rest.size(); ++i) coords[rest[i]] = wc[i];

    std::string acc = sanitize(sec.anchor) + "_v";
    std::string ct = ctype_of(anchor.shape.dtype);
    line(ct + " " + acc + " = " + zero_of(anchor.shape.dtype) + ";");
    open("for (long q = lane; q < " + std::to_string(rtotal) + "; q += 32)");
    std::vector<std::string> rnames;
    for (int d : anchor.reduce_dims) rnames.push_back("q" + std::to_string(d));
    auto qc = decode("q", red_extents, rnames);
    std::vector<std::string> in_coords(input.shape.dims.size());
    {
      int kept = 0, red = 0;
      for (size_t d = 0; d < input.shape.dims.size(); ++d) {
        if (reduced.count(static_cast<int>(d))) {
          in_coords[d] = qc[red++];
        } else {
          in_coords[d] = coords[kept++];
        }
      }
    }
    Scope inner;
    inner.mult = static_cast<double>(product(ds.dims)) *
                 static_cast<double>(rtotal);
    std::string val = value_of(anchor.operands[0], in_coords, inner);
    line(acc + " += " + val + ";");
    close();

    open("for (int offset = 16; offset > 0; offset >>= 1)");
    line(acc + " += __shfl_down_sync(0xffffffffu, " + acc + ", offset);");
    close();
    used_warp_ = true;

    open("if (lane == 0)");
    Scope lane0;
    lane0.mult = static_cast<double>(product(ds.dims));
    lane0.vars[sec.anchor] = acc;
    emit_writes(sec.anchor, coords, acc);
    for (const std::string& m : sec.merged) {
      std::string mv = emit_statement(m, coords, lane0);
      emit_writes(m, coords, mv);
    }
    close();
    close();
    close();
  }

  void emit_block_section(const Section& sec, const DimSplit& ds) {
    const OpNode& anchor = g_.at(sec.anchor);
    const OpNode& input = g_.at(anchor.operands[0]);
    std::set<int> reduced(anchor.reduce_dims.begin(), anchor.reduce_dims.end());
    std::vector<int64_t> red_extents;
    for (int d : anchor.reduce_dims) red_extents.push_back(input.shape.dims[d]);
    int64_t rtotal = product(red_extents);
    const AllocEntry* tree = allocs_.find(sec.anchor + "__tree");
    if (tree == nullptr) {
      throw InternalError("block reduction without tree scratch: " + sec.anchor);
    }
    std::string tree_ref = "smem_" + std::to_string(slot_index_.at(tree->offset));

    std::vector<std::string> coords(ds.dims.size());
    int64_t gtotal = product(extents_of(ds, ds.grid));
    open("for (long g = bid; g < " + std::to_string(gtotal) +
         "; g += gridDim.x)");
    auto gc = decode("g", extents_of(ds, ds.grid), names_of(ds.grid));
    for (size_t i = 0; i < ds.grid.size(); ++i) coords[ds.grid[i]] = gc[i];
    std::vector<int> rest;
    for (int i : ds.cta) rest.push_back(i);
    for (int i : ds.seq) rest.push_back(i);
    std::sort(rest.begin(), rest.end());
    for (int sd : rest) {
      coords[sd] = "i" + std::to_string(sd);
      open("for (long " + coords[sd] + " = 0; " + coords[sd] + " < " +
           std::to_string(ds.dims[sd]) + "; ++" + coords[sd] + ")");
    }

    std::string part = sanitize(sec.anchor) + "_part";
    std::string ct = ctype_of(anchor.shape.dtype);
    line(ct + " " + part + " = " + zero_of(anchor.shape.dtype) + ";");
    open("for (long q = tid; q < " + std::to_string(rtotal) +
         "; q += blockDim.x)");
    std::vector<std::string> rnames;
    for (int d : anchor.reduce_dims) rnames.push_back("q" + std::to_string(d));
    auto qc = decode("q", red_extents, rnames);
    std::vector<std::string> in_coords(input.shape.dims.size());
    {
      int kept = 0, red = 0;
      for (size_t d = 0; d < input.shape.dims.size(); ++d) {
        if (reduced.count(static_cast<int>(d))) {
          in_coords[d] = qc[red++];
        } else {
          in_coords[d] = coords[kept++];
        }
      }
    }
    Scope inner;
    inner.mult = static_cast<double>(product(ds.dims)) *
                 static_cast<double>(rtotal);
    std::string val = value_of(anchor.operands[0], in_coords, inner);
    line(part + " += " + val + ";");
    close();

    line(tree_ref + "[tid] = " + part + ";");
    barrier();
    open("for (int stride = (int)blockDim.x / 2; stride > 0; stride >>= 1)");
    open("if (tid < stride)");
    line(tree_ref + "[tid] += " + tree_ref + "[tid + stride];");
    close();
    barrier();
    close();
    std::string acc = sanitize(sec.anchor) + "_v";
    line(ct + " " + acc + " = " + tree_ref + "[0];");
    open("if (tid == 0)");
    Scope lane0;
    lane0.mult = static_cast<double>(product(ds.dims));
    lane0.vars[sec.anchor] = acc;
    emit_writes(sec.anchor, coords, acc);
    for (const std::string& m : sec.merged) {
      std::string mv = emit_statement(m, coords, lane0);
      emit_writes(m, coords, mv);
    }
    close();
    barrier();

    for (size_t i = 0; i < rest.size(); ++i) close();
    close();
  }

  // --- kernel assembly ------------------------------------------------------

  std::set<Composition> composition() const {
    std::set<Composition> kinds;
    // Weakly connected components of the pattern.
    std::map<std::string, std::string> parent;
    for (const std::string& id : info_.topo) parent[id] = id;
    std::function<std::string(std::string)> find = [&](std::string x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const std::string& id : info_.topo) {
      for (const std::string& o : g_.at(id).operands) {
        if (info_.pos.count(o)) parent[find(id)] = find(o);
      }
    }
    std::set<std::string> roots;
    for (const std::string& id : info_.topo) roots.insert(find(id));
    if (roots.size() >= 2) kinds.insert(Composition::kPacking);
    if (any_inline_ || info_.topo.size() == 1) kinds.insert(Composition::kThread);
    if (used_warp_) kinds.insert(Composition::kWarp);
    if (allocs_.total > 0) kinds.insert(Composition::kBlock);
    return kinds;
  }

  std::string assemble(const KernelSketch& k) const {
    std::ostringstream out;
    out << "// Kernel sketch for fused op '" << name_ << "' (" << info_.topo.size()
        << " ops). Launch: <<<" << k.cta_num << ", " << k.cta_size << ">>>\n";
    out << "extern \"C\" __global__ void " << sanitize(name_) << "(";
    bool first = true;
    for (const std::string& in : inputs_) {
      if (!first) out << ", ";
      first = false;
      out << "const " << ctype_of(g_.at(in).shape.dtype) << "* __restrict__ "
          << arg_name(in);
    }
    for (const std::string& o : outputs_) {
      if (!first) out << ", ";
      first = false;
      out << ctype_of(g_.at(o).shape.dtype) << "* __restrict__ " << arg_name(o);
    }
    out << ") {\n";
    out << "  const int tid = (int)threadIdx.x;\n";
    out << "  const int bid = (int)blockIdx.x;\n";
    bool warp_sections = false;
    for (const Section& s : sections_) {
      warp_sections = warp_sections || s.mode == Section::kWarp;
    }
    if (warp_sections) {
      out << "  const int lane = tid & 31;\n";
      out << "  const int warp = tid >> 5;\n";
      out << "  const int nwarps = (int)(blockDim.x >> 5);\n";
    }
    for (size_t slot = 0; slot < slot_size_.size(); ++slot) {
      int64_t elems = slot_size_[slot] / slot_dtype_[slot].byte_size();
      out << "  __shared__ " << ctype_of(slot_dtype_[slot]) << " smem_" << slot
          << "[" << elems << "];  //";
      for (const std::string& m : slot_members_[slot]) out << " " << m;
      out << "\n";
    }
    out << "\n";
    out << body_.str();
    out << "}\n";
    return out.str();
  }

  const Graph& g_;
  const FusionPattern& p_;
  const Template& tpl_;
  std::string name_;
  EmitterConfig cfg_;
  PatternInfo info_;
  MergePlan merge_;
  std::vector<SharedRequest> requests_;
  AllocMap allocs_;
  std::set<std::string> smem_ops_;
  std::map<int64_t, int> slot_index_;  // offset -> slot number
  std::vector<DType> slot_dtype_;
  std::vector<int64_t> slot_size_;
  std::vector<std::vector<std::string>> slot_members_;
  std::vector<Section> sections_;
  std::map<std::string, int> section_of_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;

  std::ostringstream body_;
  int indent_ = 1;
  int current_section_ = 0;
  int barriers_ = 0;
  bool used_warp_ = false;
  bool any_inline_ = false;
  bool wrote_smem_ = false;
  double traffic_ = 0.0;
  std::map<std::string, int> loop_seq_;
  std::string skip_;
};

}  // namespace

EmitResult emit_kernel(const Graph& g, const FusionPattern& p,
                       const Template& t, const std::string& name,
                       const EmitterConfig& cfg) {
  KernelEmitter emitter(g, p, t, name, cfg);
  return emitter.run();
}

double kernel_cost_proxy(const KernelSketch& k, const BandwidthModel& bm,
                         const EmitterConfig& cfg) {
  double cost = m_of_v(bm, static_cast<int64_t>(std::llround(k.traffic_bytes)));
  cost += cfg.barrier_cost_us * k.barrier_count;
  double fraction = static_cast<double>(k.shared_bytes) /
                    static_cast<double>(cfg.shared_limit_bytes);
  if (fraction > 0.5) cost += cfg.occupancy_weight_us * fraction;
  return cost;
}

size_t select_best(const std::vector<KernelSketch>& candidates,
                   const BandwidthModel& bm, const EmitterConfig& cfg,
                   KernelEvaluator* evaluator) {
  if (candidates.empty()) throw GraphError("select_best requires a candidate");
  size_t best = 0;
  double best_cost = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    double cost = kernel_cost_proxy(candidates[i], bm, cfg);
    if (evaluator != nullptr) {
      if (std::optional<double> measured = evaluator->measure_us(candidates[i])) {
        cost = *measured;  // measurement beats the proxy
      }
    }
    if (i == 0 || cost < best_cost) {
      best = i;
      best_cost = cost;
    }
  }
  return best;
}

KernelSearchResult generate_best_kernel(
    const Graph& g, const FusionPattern& p, const std::string& name,
    const BandwidthModel& bm, const EmitterConfig& cfg,
    const TemplateLimits& limits, const std::optional<Template>& user_template,
    KernelEvaluator* evaluator) {
  std::vector<Template> templates;
  if (user_template.has_value()) {
    validate_template(*user_template, g, p);
    templates = {*user_template};
  } else {
    templates = generate_templates(g, p, limits);
  }
  KernelSearchResult result;
  std::string last_skip;
  for (const Template& t : templates) {
    EmitResult er = emit_kernel(g, p, t, name, cfg);
    if (er.kernel.has_value()) {
      result.candidates.push_back(std::move(*er.kernel));
    } else {
      ++result.skipped_templates;
      last_skip = er.skip_reason;
    }
  }
  if (result.candidates.empty()) {
    throw TemplateError("no feasible template for " + name +
                        (last_skip.empty() ? "" : ": " + last_skip));
  }
  result.best = result.candidates[select_best(result.candidates, bm, cfg,
                                              evaluator)];
  return result;
}

}  // namespace stitch
