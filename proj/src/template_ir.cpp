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

#include "stitch/template_ir.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

#include "stitch/emitter.hpp"

namespace stitch {

std::string to_string(AttrType t) {
  switch (t) {
    case AttrType::kGrid: return "GRID";
    case AttrType::kWarp: return "WARP";
    case AttrType::kCta: return "CTA";
    case AttrType::kThread: return "THREAD";
  }
  return "GRID";
}

std::vector<int64_t> iteration_space(const Graph& g, const OpNode& op) {
  std::vector<int64_t> dims;
  if (op.type == OpType::kReduce) {
    dims = g.at(op.operands.at(0)).shape.dims;
  } else {
    dims = op.shape.dims;
  }
  if (dims.empty()) dims.push_back(1);
  return dims;
}

namespace {

struct Token {
  enum Kind { kIdent, kInt, kSym, kEnd } kind;
  std::string text;
  int line;
  int col;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) {}

  Token next() {
    skip_space();
    Token t{Token::kEnd, "", line_, col_};
    if (pos_ >= text_.size()) return t;
    char c = text_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      t.kind = Token::kIdent;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
              text_[pos_] == '_')) {
        t.text += take();
      }
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      t.kind = Token::kInt;
      while (pos_ < text_.size() &&
             std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        t.text += take();
      }
      return t;
    }
    t.kind = Token::kSym;
    t.text = std::string(1, take());
    return t;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      take();
    }
  }
  char take() {
    char c = text_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }
  const std::string& text_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

[[noreturn]] void fail_at(const Token& t, const std::string& msg) {
  throw TemplateError("template syntax error at line " + std::to_string(t.line) +
                      ", column " + std::to_string(t.col) + ": " + msg);
}

std::optional<AttrType> attrtype_from(const std::string& s) {
  if (s == "GRID") return AttrType::kGrid;
  if (s == "WARP") return AttrType::kWarp;
  if (s == "CTA") return AttrType::kCta;
  if (s == "THREAD") return AttrType::kThread;
  return std::nullopt;
}

// One lexed identifier holds a whole subattr ("GRID_128"); split it.
DimAttr::Level parse_level(const Token& t) {
  std::string s = t.text;
  if (auto a = attrtype_from(s)) return {*a, std::nullopt};
  size_t us = s.find('_');
  if (us != std::string::npos) {
    auto a = attrtype_from(s.substr(0, us));
    std::string digits = s.substr(us + 1);
    bool numeric = !digits.empty() &&
                   std::all_of(digits.begin(), digits.end(), [](char c) {
                     return std::isdigit(static_cast<unsigned char>(c));
                   });
    if (a && numeric) return {*a, std::stoi(digits)};
  }
  fail_at(t, "unknown attrtype '" + s + "'");
}

}  // namespace

Template parse_template(const std::string& text) {
  Lexer lex(text);
  Template tpl;
  Token t = lex.next();

  while (t.kind != Token::kEnd) {
    if (t.kind != Token::kIdent) fail_at(t, "expected schedule identifier");
    std::string name = t.text;
    t = lex.next();

    if (name == "launch" && t.kind == Token::kInt) {
      if (!tpl.schedules.empty() || tpl.cta_num != 0) {
        fail_at(t, "launch header must come first and appear once");
      }
      tpl.cta_num = std::stoi(t.text);
      t = lex.next();
      if (t.kind != Token::kInt) fail_at(t, "launch requires cta_num cta_size");
      tpl.cta_size = std::stoi(t.text);
      t = lex.next();
      if (t.kind != Token::kSym || t.text != ";") fail_at(t, "expected ';'");
      t = lex.next();
      continue;
    }

    Schedule sched;
    sched.op_id = name;
    if (t.kind != Token::kSym || t.text != "[") fail_at(t, "expected '['");
    t = lex.next();
    while (true) {
      if (t.kind != Token::kIdent) fail_at(t, "expected attr");
      DimAttr attr;
      attr.levels.push_back(parse_level(t));
      t = lex.next();
      while (t.kind == Token::kSym && t.text == "-") {
        t = lex.next();
        if (t.kind != Token::kIdent) fail_at(t, "expected subattr after '-'");
        attr.levels.push_back(parse_level(t));
        t = lex.next();
      }
      sched.attrs.push_back(std::move(attr));
      if (t.kind == Token::kSym && t.text == ",") {
        t = lex.next();
        continue;
      }
      break;
    }
    if (t.kind != Token::kSym || t.text != "]") fail_at(t, "expected ']'");
    t = lex.next();
    if (t.kind == Token::kIdent && t.text == "S") {
      sched.shared = true;
      t = lex.next();
    }
    if (t.kind != Token::kSym || t.text != ";") fail_at(t, "expected ';'");
    t = lex.next();
    tpl.schedules.push_back(std::move(sched));
  }
  validate_template(tpl);
  return tpl;
}

std::string print_template(const Template& t) {
  std::ostringstream os;
  if (t.cta_num != 0 || t.cta_size != 0) {
    os << "launch " << t.cta_num << " " << t.cta_size << ";\n";
  }
  for (const Schedule& s : t.schedules) {
    os << s.op_id << " [";
    for (size_t i = 0; i < s.attrs.size(); ++i) {
      if (i > 0) os << ",";
      const DimAttr& a = s.attrs[i];
      for (size_t l = 0; l < a.levels.size(); ++l) {
        if (l > 0) os << "-";
        os << to_string(a.levels[l].type);
        if (a.levels[l].tile) os << "_" << *a.levels[l].tile;
      }
    }
    os << "]" << (s.shared ? " S" : "") << ";\n";
  }
  return os.str();
}

void validate_template(const Template& t) {
  if (t.schedules.empty()) {
    throw TemplateError("template requires at least one schedule");
  }
  if (t.cta_num < 0) throw TemplateError("cta_num must be positive");
  if (t.cta_size != 0 &&
      (t.cta_size <= 0 || t.cta_size % 32 != 0 || t.cta_size > 1024)) {
    throw TemplateError("cta_size must be a positive multiple of 32, at most 1024");
  }
  std::set<std::string> seen;
  for (const Schedule& s : t.schedules) {
    if (!seen.insert(s.op_id).second) {
      throw TemplateError("duplicate schedule for op " + s.op_id);
    }
    if (s.attrs.empty()) {
      throw TemplateError("schedule " + s.op_id + " has no attrs");
    }
    for (const DimAttr& a : s.attrs) {
      if (a.levels.empty()) {
        throw TemplateError("schedule " + s.op_id + " has an empty attr");
      }
      for (size_t l = 0; l + 1 < a.levels.size(); ++l) {
        if (!a.levels[l].tile) {
          throw TemplateError("schedule " + s.op_id +
                              ": inner tiling levels need explicit tiles");
        }
      }
      for (const DimAttr::Level& l : a.levels) {
        if (l.tile && *l.tile <= 0) {
          throw TemplateError("schedule " + s.op_id + ": tiles must be positive");
        }
      }
    }
  }
}

void validate_template(const Template& t, const Graph& g,
                       const FusionPattern& p) {
  validate_template(t);
  auto consumers = consumer_map(g);
  for (const Schedule& s : t.schedules) {
    if (!p.node_ids.count(s.op_id)) {
      throw TemplateError("schedule names op outside the pattern: " + s.op_id);
    }
    const OpNode& op = g.at(s.op_id);
    size_t rank = iteration_space(g, op).size();
    if (s.attrs.size() != rank) {
      throw TemplateError("schedule " + s.op_id + " has " +
                          std::to_string(s.attrs.size()) + " attrs for a rank-" +
                          std::to_string(rank) + " iteration space");
    }
    if (s.shared) {
      bool consumed_inside = false;
      for (const std::string& c : consumers[s.op_id]) {
        consumed_inside = consumed_inside || p.node_ids.count(c) > 0;
      }
      if (!consumed_inside) {
        throw TemplateError("schedule " + s.op_id +
                            " caches a value no other pattern op consumes");
      }
    }
  }
  for (const std::string& out : pattern_outputs(g, p)) {
    if (t.find(out) == nullptr) {
      throw TemplateError("pattern output " + out + " has no schedule");
    }
  }
}

namespace {

enum class ReducePolicy { kWarp, kThreadSeq, kBlock, kAllThread };
enum class DotMode { kThreadDot, kBlockDot };

std::vector<DimAttr> elementwise_attrs(size_t rank) {
  std::vector<DimAttr> attrs;
  attrs.push_back(DimAttr::plain(AttrType::kGrid));
  for (size_t d = 1; d < rank; ++d) {
    attrs.push_back(DimAttr::plain(AttrType::kCta));
  }
  return attrs;
}

std::vector<DimAttr> reduce_attrs(const OpNode& op, size_t rank,
                                  ReducePolicy policy) {
  std::set<int> reduced(op.reduce_dims.begin(), op.reduce_dims.end());
  std::vector<DimAttr> attrs(rank);
  if (policy == ReducePolicy::kAllThread) {
    for (size_t d = 0; d < rank; ++d) attrs[d] = DimAttr::plain(AttrType::kThread);
    return attrs;
  }
  AttrType on_reduced = policy == ReducePolicy::kWarp    ? AttrType::kWarp
                        : policy == ReducePolicy::kBlock ? AttrType::kCta
                                                         : AttrType::kThread;
  AttrType on_kept_rest = policy == ReducePolicy::kBlock ? AttrType::kThread
                                                         : AttrType::kCta;
  bool first_kept = true;
  for (size_t d = 0; d < rank; ++d) {
    if (reduced.count(static_cast<int>(d))) {
      attrs[d] = DimAttr::plain(on_reduced);
    } else if (first_kept) {
      attrs[d] = DimAttr::plain(AttrType::kGrid);
      first_kept = false;
    } else {
      attrs[d] = DimAttr::plain(on_kept_rest);
    }
  }
  return attrs;
}

std::vector<DimAttr> dot_attrs(size_t rank, DotMode mode) {
  std::vector<DimAttr> attrs;
  attrs.push_back(DimAttr::plain(AttrType::kGrid));
  if (mode == DotMode::kThreadDot) {
    for (size_t d = 1; d < rank; ++d) {
      attrs.push_back(DimAttr::plain(AttrType::kCta));
    }
  } else {
    // Block-cooperative row loop: rows walked sequentially, threads on the
    // trailing dimension.
    for (size_t d = 1; d + 1 < rank; ++d) {
      attrs.push_back(DimAttr::plain(AttrType::kThread));
    }
    if (rank > 1) attrs.push_back(DimAttr::plain(AttrType::kCta));
  }
  return attrs;
}

int64_t grid_blocks(const Graph& g, const OpNode& op, const Schedule& s) {
  std::vector<int64_t> space = iteration_space(g, op);
  std::vector<int64_t> dims = space;
  if (op.type == OpType::kReduce) {
    // Launch sizing follows the kept dims; reduced dims stay inside a block.
    std::set<int> reduced(op.reduce_dims.begin(), op.reduce_dims.end());
    int64_t blocks = 1;
    bool any_cta = false;
    for (size_t d = 0; d < space.size(); ++d) {
      if (reduced.count(static_cast<int>(d))) continue;
      if (s.attrs[d].has(AttrType::kGrid)) blocks *= space[d];
      if (s.attrs[d].has(AttrType::kCta)) any_cta = true;
    }
    (void)any_cta;
    return blocks;
  }
  int64_t blocks = 1;
  bool any_inner = false;
  for (size_t d = 0; d < dims.size(); ++d) {
    const DimAttr& a = s.attrs[d];
    if (a.has(AttrType::kGrid)) {
      std::optional<int> tile;
      for (const DimAttr::Level& l : a.levels) {
        if (l.type == AttrType::kGrid && l.tile) tile = l.tile;
      }
      blocks *= tile ? *tile : dims[d];
    } else {
      any_inner = true;
    }
  }
  if (op.type == OpType::kElementwise && !any_inner) {
    // Flat grid-stride loop over the whole space.
    return -1;  // caller sizes it from the element count
  }
  return blocks;
}

}  // namespace

std::vector<Template> generate_templates(const Graph& g, const FusionPattern& p,
                                         const TemplateLimits& limits) {
  std::vector<std::string> topo = topological_sort(g);
  std::set<std::string> outputs = pattern_outputs(g, p);
  auto consumers = consumer_map(g);

  auto in_pattern_consumers = [&](const std::string& id) {
    std::set<std::string> inside;
    for (const std::string& c : consumers[id]) {
      if (p.node_ids.count(c)) inside.insert(c);
    }
    return inside;
  };

  // Structural transfer analysis shared with the feasibility gate.
  std::vector<SharedRequest> canonical = canonical_shared_requests(g, p);
  std::set<std::string> canonical_set;
  for (const SharedRequest& r : canonical) canonical_set.insert(r.op_id);

  bool has_reduce = false;
  bool has_scheduled_dot = false;
  std::set<std::string> maximal_extra;  // transfers only the maximal axis adds
  for (const std::string& id : topo) {
    if (!p.node_ids.count(id)) continue;
    const OpNode& op = g.at(id);
    std::set<std::string> inside = in_pattern_consumers(id);
    if (op.type == OpType::kReduce) has_reduce = true;
    if (op.type == OpType::kDot || op.type == OpType::kBatchedDot) {
      if (canonical_set.count(id) || outputs.count(id)) has_scheduled_dot = true;
      if (!inside.empty() && !canonical_set.count(id)) maximal_extra.insert(id);
    }
    if (op.type == OpType::kReduce && !inside.empty() &&
        !canonical_set.count(id)) {
      maximal_extra.insert(id);  // warp-mergeable reduce, forced to shared
    }
  }

  std::vector<ReducePolicy> reduce_axis = {ReducePolicy::kWarp};
  if (has_reduce) {
    reduce_axis = {ReducePolicy::kWarp, ReducePolicy::kThreadSeq,
                   ReducePolicy::kBlock, ReducePolicy::kAllThread};
  }
  std::vector<DotMode> dot_axis = {DotMode::kThreadDot};
  if (has_scheduled_dot || !maximal_extra.empty()) {
    dot_axis = {DotMode::kThreadDot, DotMode::kBlockDot};
  }
  std::vector<bool> maximal_axis = {false};
  if (!maximal_extra.empty()) maximal_axis = {false, true};
  std::vector<int> cta_axis = {128, 256};

  std::vector<Template> out;
  std::set<std::string> seen;
  for (bool maximal : maximal_axis) {
    for (ReducePolicy policy : reduce_axis) {
      for (DotMode mode : dot_axis) {
        for (int cta : cta_axis) {
          if (static_cast<int>(out.size()) >= limits.max_templates) break;
          // Shared set: canonical transfers, plus the maximal extras, plus
          // mergeable reduces whenever the policy rules out warp merging.
          std::set<std::string> shared = canonical_set;
          if (maximal) {
            shared.insert(maximal_extra.begin(), maximal_extra.end());
          }
          if (policy != ReducePolicy::kWarp) {
            for (const std::string& id : maximal_extra) {
              if (g.at(id).type == OpType::kReduce) shared.insert(id);
            }
          }
          Template tpl;
          tpl.cta_size = cta;
          for (const std::string& id : topo) {
            if (!p.node_ids.count(id)) continue;
            const OpNode& op = g.at(id);
            bool mergeable_reduce = op.type == OpType::kReduce &&
                                    maximal_extra.count(id) && !shared.count(id);
            bool anchored = outputs.count(id) > 0 || shared.count(id) > 0 ||
                            mergeable_reduce;
            if (!anchored) continue;
            Schedule s;
            s.op_id = id;
            s.shared = shared.count(id) > 0;
            size_t rank = iteration_space(g, op).size();
            switch (op.type) {
              case OpType::kReduce:
                s.attrs = reduce_attrs(op, rank, policy);
                break;
              case OpType::kDot:
              case OpType::kBatchedDot:
                s.attrs = dot_attrs(rank, mode);
                break;
              default:
                s.attrs = elementwise_attrs(rank);
                break;
            }
            tpl.schedules.push_back(std::move(s));
          }
          // Launch parameters from the widest grid requirement.
          int64_t blocks = 1;
          for (const Schedule& s : tpl.schedules) {
            const OpNode& op = g.at(s.op_id);
            int64_t b = grid_blocks(g, op, s);
            if (b < 0) {
              int64_t total = iteration_space(g, op).size() == 1
                                  ? iteration_space(g, op)[0]
                                  : op.shape.element_count();
              b = (total + cta - 1) / cta;
            }
            blocks = std::max(blocks, b);
          }
          tpl.cta_num = static_cast<int>(std::min<int64_t>(blocks, 65535));
          std::string key = print_template(tpl);
          if (seen.insert(key).second) out.push_back(std::move(tpl));
        }
      }
    }
  }
  return out;
}

}  // namespace stitch
