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

#include "stitch/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace stitch {

using nlohmann::ordered_json;

IlpBuild build_ilp_instance(const std::vector<FusionPattern>& patterns,
                            const std::vector<PatternScore>& scores) {
  IlpBuild build;
  std::vector<FusionPattern> kept;
  for (size_t i = 0; i < patterns.size(); ++i) {
    if (scores[i].score_us < 0) continue;  // negative gain: never fused
    build.var_to_pattern.push_back(static_cast<int>(i));
    build.instance.scores.push_back(scores[i].score_us);
    kept.push_back(patterns[i]);
  }
  build.instance.num_vars = static_cast<int>(kept.size());
  build.instance.pairs = build_conflicts(kept);
  return build;
}

PlanResult run_plan(const Graph& g, const BandwidthModel& bm,
                    const PlanOptions& opts, ExecutionEvaluator* evaluator) {
  PlanResult result;
  result.patterns = generate_patterns(g, opts.strategy, opts.seed_cfg,
                                      opts.ms_cfg);
  result.scores.reserve(result.patterns.size());
  for (const FusionPattern& p : result.patterns) {
    result.scores.push_back(
        score_pattern(g, p, bm, opts.cost_cfg, evaluator));
  }
  result.ilp = build_ilp_instance(result.patterns, result.scores);

  std::vector<FusionPattern> kept;
  for (int idx : result.ilp.var_to_pattern) kept.push_back(result.patterns[idx]);
  FusionPlan plan =
      solve_with_cycle_elimination(g, kept, result.ilp.instance.scores);
  for (int var : plan.selected) {
    result.selected_patterns.push_back(result.ilp.var_to_pattern[var]);
  }
  std::sort(result.selected_patterns.begin(), result.selected_patterns.end());
  result.total_score_us = plan.total_score;

  FusionPlan by_pattern_index;
  by_pattern_index.selected = result.selected_patterns;
  by_pattern_index.total_score = plan.total_score;
  result.fused = apply_plan(g, by_pattern_index, result.patterns);

  // Report metrics over the selected plan.
  RunReport& rep = result.report;
  rep.seed = opts.seed;
  rep.kernel_compression = compression_ratio(g, result.fused);
  rep.plan_score_total_us = plan.total_score;
  rep.pattern_breakdown["elemwise"] = {};
  rep.pattern_breakdown["reduction"] = {};
  rep.pattern_breakdown["gemm"] = {};
  double total = 0.0;
  for (int idx : result.selected_patterns) total += result.scores[idx].score_us;
  int needing = 0;
  int64_t alloc_sum = 0, req_sum = 0;
  for (int idx : result.selected_patterns) {
    const FusionPattern& p = result.patterns[idx];
    CategoryStat& stat = rep.pattern_breakdown[to_string(classify(g, p))];
    stat.count += 1;
    if (total > 0) stat.share += result.scores[idx].score_us / total;
    std::vector<SharedRequest> reqs = canonical_shared_requests(g, p);
    if (reqs.empty()) continue;
    ++needing;
    int64_t req = 0;
    for (const SharedRequest& r : reqs) req += r.bytes;
    AllocMap allocs = shared_planning(g, p, reqs);
    alloc_sum += allocs.total;
    req_sum += req;
    rep.shared_stats.max_shd_bytes =
        std::max(rep.shared_stats.max_shd_bytes, allocs.total);
  }
  if (!result.selected_patterns.empty()) {
    rep.shared_stats.pt_ratio =
        static_cast<double>(needing) /
        static_cast<double>(result.selected_patterns.size());
  }
  if (needing > 0) {
    rep.shared_stats.any_request = true;
    rep.shared_stats.avg_shd_bytes = alloc_sum / needing;
    rep.shared_stats.alloc_over_req =
        static_cast<double>(alloc_sum) / static_cast<double>(req_sum);
  }
  return result;
}

CodegenResult run_codegen(const Graph& fused, const BandwidthModel& bm,
                          const CodegenOptions& opts,
                          KernelEvaluator* evaluator) {
  CodegenResult result;
  for (const OpNode& n : fused.nodes) {
    if (n.type != OpType::kFused) continue;
    if (!n.body) throw GraphError("fused op without body: " + n.id);
    const Graph& body = *n.body;
    FusionPattern p;
    for (const OpNode& bn : body.nodes) {
      if (is_fusible(bn)) p.node_ids.insert(bn.id);
    }
    p.pattern_id = 0;
    p.packing = !pattern_is_connected(body, p);
    KernelSearchResult search =
        generate_best_kernel(body, p, n.id, bm, opts.emit_cfg, opts.limits,
                             opts.user_template, evaluator);
    result.kernels.push_back(std::move(search.best));
  }
  return result;
}

namespace {

ordered_json shared_stats_json(const SharedStats& s) {
  ordered_json j;
  j["pt_ratio"] = s.pt_ratio;
  j["avg_shd_bytes"] = s.avg_shd_bytes;
  j["max_shd_bytes"] = s.max_shd_bytes;
  if (s.any_request) {
    j["alloc_over_req"] = s.alloc_over_req;
  } else {
    j["alloc_over_req"] = nullptr;  // printed as n/a
  }
  return j;
}

ordered_json report_json(const RunReport& r) {
  ordered_json j;
  j["kernel_compression"] = r.kernel_compression;
  ordered_json breakdown;
  for (const char* key : {"elemwise", "reduction", "gemm"}) {
    const CategoryStat& stat = r.pattern_breakdown.count(key)
                                   ? r.pattern_breakdown.at(key)
                                   : CategoryStat{};
    breakdown[key] = {{"count", stat.count}, {"share", stat.share}};
  }
  j["pattern_breakdown"] = breakdown;
  j["shared_stats"] = shared_stats_json(r.shared_stats);
  j["plan_score_total_us"] = r.plan_score_total_us;
  j["seed"] = r.seed;
  return j;
}

}  // namespace

std::string plan_to_json(const PlanResult& r) {
  ordered_json j;
  j["patterns"] = ordered_json::array();
  for (size_t i = 0; i < r.patterns.size(); ++i) {
    const FusionPattern& p = r.patterns[i];
    ordered_json pj;
    pj["id"] = p.pattern_id;
    pj["nodes"] = std::vector<std::string>(p.node_ids.begin(), p.node_ids.end());
    pj["packing"] = p.packing;
    pj["score_us"] = r.scores[i].score_us;
    pj["feasible"] = r.scores[i].feasible;
    pj["saved_bytes"] = r.scores[i].saved_bytes;
    j["patterns"].push_back(std::move(pj));
  }
  j["selected"] = r.selected_patterns;
  j["total_score_us"] = r.total_score_us;
  j["report"] = report_json(r.report);
  return j.dump(2) + "\n";
}

std::string report_to_json(const RunReport& r) {
  return report_json(r).dump(2) + "\n";
}

std::string manifest_to_json(const CodegenResult& r) {
  ordered_json j;
  j["kernels"] = ordered_json::array();
  for (const KernelSketch& k : r.kernels) {
    ordered_json kj;
    kj["fused_op"] = k.name;
    kj["kernel"] = k.name;
    kj["cta_num"] = k.cta_num;
    kj["cta_size"] = k.cta_size;
    kj["shared_bytes"] = k.shared_bytes;
    std::vector<std::string> kinds;
    for (Composition c : k.composition) kinds.push_back(to_string(c));
    kj["composition"] = kinds;
    kj["shared_allocs"] = ordered_json::array();
    for (const AllocEntry& e : k.allocs.entries) {
      ordered_json ej;
      ej["op"] = e.op_id;
      ej["offset"] = e.offset;
      ej["size"] = e.size;
      if (e.reused_from) ej["reused_from"] = *e.reused_from;
      kj["shared_allocs"].push_back(std::move(ej));
    }
    kj["template"] = print_template(k.tmpl);
    j["kernels"].push_back(std::move(kj));
  }
  return j.dump(2) + "\n";
}

std::string report_to_text(const RunReport& r) {
  std::ostringstream os;
  os << "kernel compression ratio: " << r.kernel_compression << "\n";
  os << "pattern breakdown (count / estimated-time share):\n";
  for (const char* key : {"elemwise", "reduction", "gemm"}) {
    const CategoryStat& stat = r.pattern_breakdown.count(key)
                                   ? r.pattern_breakdown.at(key)
                                   : CategoryStat{};
    os << "  " << key << ": " << stat.count << " / " << stat.share << "\n";
  }
  const SharedStats& s = r.shared_stats;
  os << "shared memory: pt-ratio " << s.pt_ratio << ", shd-avg "
     << s.avg_shd_bytes << " B, max-shd " << s.max_shd_bytes << " B, alloc/req ";
  if (s.any_request) {
    os << s.alloc_over_req;
  } else {
    os << "n/a";
  }
  os << "\n";
  os << "plan score total: " << r.plan_score_total_us << " us\n";
  return os.str();
}

RunReport report_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  RunReport r;
  r.kernel_compression = j.at("kernel_compression").get<double>();
  for (auto& [key, val] : j.at("pattern_breakdown").items()) {
    r.pattern_breakdown[key] = {val.at("count").get<int>(),
                                val.at("share").get<double>()};
  }
  const auto& s = j.at("shared_stats");
  r.shared_stats.pt_ratio = s.at("pt_ratio").get<double>();
  r.shared_stats.avg_shd_bytes = s.at("avg_shd_bytes").get<int64_t>();
  r.shared_stats.max_shd_bytes = s.at("max_shd_bytes").get<int64_t>();
  if (!s.at("alloc_over_req").is_null()) {
    r.shared_stats.any_request = true;
    r.shared_stats.alloc_over_req = s.at("alloc_over_req").get<double>();
  }
  r.plan_score_total_us = j.at("plan_score_total_us").get<double>();
  if (j.contains("seed")) r.seed = j.at("seed").get<uint64_t>();
  return r;
}

CsvExecutionEvaluator CsvExecutionEvaluator::from_csv_text(
    const std::string& text) {
  CsvExecutionEvaluator ev;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("name,kernel_us", 0) != 0) {
    throw ParseError("kernel-times CSV: expected header 'name,kernel_us'");
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw ParseError("kernel-times CSV line " + std::to_string(lineno) +
                       ": expected 'name,kernel_us'");
    }
    ev.times_[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
  }
  return ev;
}

CsvExecutionEvaluator CsvExecutionEvaluator::from_csv_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open kernel-times CSV: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_csv_text(buf.str());
}

std::optional<ExecSample> CsvExecutionEvaluator::measure(const Graph&,
                                                         const FusionPattern& p) {
  ExecSample sample;
  for (const std::string& id : p.node_ids) {
    auto it = times_.find(id);
    if (it == times_.end()) return std::nullopt;
    sample.per_op_us.push_back(it->second);
  }
  std::string fused_key;
  for (const std::string& id : p.node_ids) {
    fused_key += fused_key.empty() ? id : "+" + id;
  }
  auto it = times_.find(fused_key);
  if (it == times_.end()) return std::nullopt;
  sample.fused_us = it->second;
  return sample;
}

}  // namespace stitch
