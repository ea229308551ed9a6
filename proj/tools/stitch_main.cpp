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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "stitch/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string bandwidth_model_path;
  double phi_us = 8.0;
  int64_t shared_limit = 49152;
  int max_templates = 64;
};

stitch::BandwidthModel resolve_bandwidth_model(const std::string& flag_path) {
  if (!flag_path.empty()) {
    return stitch::BandwidthModel::from_csv_file(flag_path);
  }
  if (const char* env = std::getenv("STITCH_BANDWIDTH_MODEL")) {
    if (env[0] != '\0') return stitch::BandwidthModel::from_csv_file(env);
  }
  return stitch::BandwidthModel::default_model();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw stitch::GraphError("cannot write " + path.string());
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw stitch::ParseError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int cmd_plan(const std::string& graph_path, const std::string& out_dir,
             const CommonFlags& common, const std::string& strategy,
             int max_operands, int64_t seed_min_bytes, uint64_t seed,
             const std::string& op_times_path) {
  stitch::Graph g = stitch::load_graph(graph_path);
  for (const stitch::Diagnostic& d : stitch::validate(g)) {
    if (d.warning) {
      std::cerr << "warning: " << d.node_id << ": " << d.message << "\n";
    }
  }
  stitch::PlanOptions opts;
  if (strategy == "substitution") {
    opts.strategy = stitch::Strategy::kSubstitution;
  } else if (strategy == "exploratory") {
    opts.strategy = stitch::Strategy::kExploratory;
  } else {
    opts.strategy = stitch::Strategy::kBoth;
  }
  opts.cost_cfg.phi_us = common.phi_us;
  opts.cost_cfg.shared_limit_bytes = common.shared_limit;
  opts.emit_cfg.shared_limit_bytes = common.shared_limit;
  opts.limits.max_templates = common.max_templates;
  opts.seed_cfg.max_operands = max_operands;
  opts.seed_cfg.min_tensor_bytes = seed_min_bytes;
  opts.seed = seed;

  stitch::BandwidthModel bm = resolve_bandwidth_model(common.bandwidth_model_path);
  std::optional<stitch::CsvExecutionEvaluator> evaluator;
  if (!op_times_path.empty()) {
    evaluator = stitch::CsvExecutionEvaluator::from_csv_file(op_times_path);
  }
  stitch::PlanResult result =
      stitch::run_plan(g, bm, opts, evaluator ? &*evaluator : nullptr);

  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "plan.json", stitch::plan_to_json(result));
  write_file(fs::path(out_dir) / "fused_graph.json",
             stitch::print_graph(result.fused));
  write_file(fs::path(out_dir) / "report.json",
             stitch::report_to_json(result.report));
  std::cout << "plan: " << result.patterns.size() << " candidates, "
            << result.selected_patterns.size() << " selected, compression "
            << result.report.kernel_compression << "\n";
  return 0;
}

int cmd_codegen(const std::string& fused_path, const std::string& out_dir,
                const CommonFlags& common, const std::string& template_path) {
  stitch::Graph fused = stitch::load_graph(fused_path);
  stitch::CodegenOptions opts;
  opts.emit_cfg.shared_limit_bytes = common.shared_limit;
  opts.limits.max_templates = common.max_templates;
  if (!template_path.empty()) {
    opts.user_template = stitch::parse_template(read_file(template_path));
  }
  stitch::BandwidthModel bm = resolve_bandwidth_model(common.bandwidth_model_path);
  stitch::CodegenResult result = stitch::run_codegen(fused, bm, opts);

  fs::create_directories(out_dir);
  for (const stitch::KernelSketch& k : result.kernels) {
    write_file(fs::path(out_dir) / (k.name + ".cu"), k.source);
  }
  write_file(fs::path(out_dir) / "manifest.json",
             stitch::manifest_to_json(result));
  std::cout << "codegen: " << result.kernels.size() << " kernels\n";
  return 0;
}

int cmd_report(const std::string& dir, const std::string& format) {
  fs::path report_path = fs::path(dir) / "report.json";
  if (!fs::exists(report_path)) {
    // Allow pointing straight at a report.json, too.
    if (fs::exists(dir) && !fs::is_directory(dir)) {
      report_path = dir;
    } else {
      throw stitch::ParseError("no report.json under " + dir);
    }
  }
  std::string text = read_file(report_path);
  stitch::RunReport report = stitch::report_from_json(text);
  if (format == "json") {
    std::cout << stitch::report_to_json(report);
  } else {
    std::cout << stitch::report_to_text(report);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fusion planning and kernel sketch generation for tensor DAGs"};
  app.require_subcommand(1);

  CommonFlags common;
  std::string graph_path, fused_path, out_dir = ".", strategy = "both";
  std::string template_path, report_dir, format = "text", op_times;
  int max_operands = 10;
  int64_t seed_min_bytes = 1 << 20;
  uint64_t seed = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--bandwidth-model", common.bandwidth_model_path,
                    "bandwidth table CSV (default: built-in synthetic table; "
                    "env STITCH_BANDWIDTH_MODEL overrides)");
    cmd->add_option("--phi-us", common.phi_us, "kernel launch latency, us");
    cmd->add_option("--shared-limit-bytes", common.shared_limit,
                    "per-block shared memory threshold");
    cmd->add_option("--max-templates", common.max_templates,
                    "cap on enumerated templates per pattern");
  };

  CLI::App* plan = app.add_subcommand("plan", "select a fusion plan");
  plan->add_option("graph", graph_path, "input graph JSON")->required();
  plan->add_option("-o,--out", out_dir, "artifact directory");
  plan->add_option("--strategy", strategy, "substitution|exploratory|both")
      ->check(CLI::IsMember({"substitution", "exploratory", "both"}));
  plan->add_option("--max-operands", max_operands, "seed operand cutoff");
  plan->add_option("--seed-min-bytes", seed_min_bytes, "seed tensor size floor");
  plan->add_option("--seed", seed, "RNG seed recorded for test harnesses");
  plan->add_option("--op-times", op_times,
                   "measured kernel times CSV for execution-based scoring");
  add_common(plan);

  CLI::App* codegen = app.add_subcommand("codegen", "emit kernel sketches");
  codegen->add_option("fused_graph", fused_path, "fused graph JSON")->required();
  codegen->add_option("-o,--out", out_dir, "output directory");
  codegen->add_option("--template", template_path,
                      "use this template file instead of enumerating");
  add_common(codegen);

  CLI::App* report = app.add_subcommand("report", "print plan metrics");
  report->add_option("dir", report_dir, "artifact directory (or report.json)")
      ->required();
  report->add_option("--format", format, "json|text")
      ->check(CLI::IsMember({"json", "text"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (plan->parsed()) {
      return cmd_plan(graph_path, out_dir, common, strategy, max_operands,
                      seed_min_bytes, seed, op_times);
    }
    if (codegen->parsed()) {
      return cmd_codegen(fused_path, out_dir, common, template_path);
    }
    if (report->parsed()) {
      return cmd_report(report_dir, format);
    }
  } catch (const stitch::InternalError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
