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

#ifndef STITCH_TEMPLATE_IR_H_
#define STITCH_TEMPLATE_IR_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stitch/graph.hpp"

// Implementation templates: a compact schedule list that uniquely identifies
// one kernel implementation of a fusion pattern. Grammar:
//
//   <template>      ::= <schedule-list>
//   <schedule-list> ::= <schedule> <schedule-list> | <schedule>
//   <schedule>      ::= <identifier> '[' <attr-list> ']' ';'
//                     | <identifier> '[' <attr-list> ']' 'S' ';'
//   <attr-list>     ::= <attr> ',' <attr-list> | <attr>
//   <attr>          ::= <attrtype> | <subattr-list>
//   <subattr-list>  ::= <subattr> '-' <subattr-list> | <subattr>
//   <subattr>       ::= <attrtype> '_' <integer>
//   <attrtype>      ::= 'GRID' | 'WARP' | 'CTA' | 'THREAD'
//
// plus an optional launch header line `launch <cta_num> <cta_size>;` carrying
// the kernel launch parameters.

namespace stitch {

class TemplateError : public GraphError {
 public:
  explicit TemplateError(const std::string& msg) : GraphError(msg) {}
};

enum class AttrType { kGrid, kWarp, kCta, kThread };

std::string to_string(AttrType t);

// One iteration dimension with one or more tiling levels, e.g. GRID_128-WARP_2.
struct DimAttr {
  struct Level {
    AttrType type;
    std::optional<int> tile;
    bool operator==(const Level& o) const {
      return type == o.type && tile == o.tile;
    }
  };
  std::vector<Level> levels;

  static DimAttr plain(AttrType t) { return {{{t, std::nullopt}}}; }
  bool has(AttrType t) const {
    for (const Level& l : levels) {
      if (l.type == t) return true;
    }
    return false;
  }
  bool operator==(const DimAttr& o) const { return levels == o.levels; }
};

// Per-op parallelization: one DimAttr per iteration-space dimension plus the
// S flag asking the generator to cache the result in shared memory.
struct Schedule {
  std::string op_id;
  std::vector<DimAttr> attrs;
  bool shared = false;

  bool operator==(const Schedule& o) const {
    return op_id == o.op_id && attrs == o.attrs && shared == o.shared;
  }
};

struct Template {
  std::vector<Schedule> schedules;
  int cta_num = 0;   // 0 = unspecified (derive at emission)
  int cta_size = 0;  // 0 = unspecified

  const Schedule* find(const std::string& op_id) const {
    for (const Schedule& s : schedules) {
      if (s.op_id == op_id) return &s;
    }
    return nullptr;
  }
  bool operator==(const Template& o) const {
    return schedules == o.schedules && cta_num == o.cta_num &&
           cta_size == o.cta_size;
  }
};

struct TemplateLimits {
  int max_templates = 64;
};

// Iteration space of an op: input dims for reductions, output dims otherwise;
// scalar spaces are padded to a single extent-1 dimension.
std::vector<int64_t> iteration_space(const Graph& g, const OpNode& op);

Template parse_template(const std::string& text);
std::string print_template(const Template& t);

// Structural checks; with a graph/pattern also checks op membership and the
// attrs-vs-rank agreement of every schedule. Throws TemplateError.
void validate_template(const Template& t);
void validate_template(const Template& t, const Graph& g,
                       const FusionPattern& p);

// Bounded deterministic enumeration: reduce archetypes (warp / thread-
// sequential / block-tree / all-thread), gemm modes (per-element / block row
// loop), a minimal and a maximal shared-transfer assignment, and cta_size in
// {128, 256}; truncated to limits.max_templates.
std::vector<Template> generate_templates(const Graph& g, const FusionPattern& p,
                                         const TemplateLimits& limits = {});

}  // namespace stitch

#endif  // STITCH_TEMPLATE_IR_H_
