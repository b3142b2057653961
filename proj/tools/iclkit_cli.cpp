#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "iclkit/errors.hpp"
#include "iclkit/interchange.hpp"
#include "iclkit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace iclkit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

LayerRange parse_range(const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) {
      const auto l = std::stoull(text);
      return {l, l};
    }
    return {std::stoull(text.substr(0, colon)), std::stoull(text.substr(colon + 1))};
  } catch (const std::logic_error&) {
    throw ConfigError("--layers expects START:END, got '" + text + "'");
  }
}

ModelCfg parse_model(const std::string& text) {
  std::vector<std::uint64_t> parts;
  std::stringstream ss(text);
  std::string item;
  try {
    while (std::getline(ss, item, ',')) parts.push_back(std::stoull(item));
  } catch (const std::logic_error&) {
    parts.clear();
  }
  if (parts.size() != 4) {
    throw ConfigError("--model expects n_layers,n_heads,head_dim,kv_bytes_per_element, got '" + text + "'");
  }
  return {parts[0], parts[1], parts[2], parts[3]};
}

std::vector<AttentionMetric> parse_metrics(const std::string& text) {
  std::vector<AttentionMetric> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(metric_from_name(item));
  }
  if (out.empty()) throw ConfigError("--metrics is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iclkit: in-context captioning analysis toolkit"};
  app.require_subcommand(1);

  std::string config, out_dir, format, run_path, captions_path, metrics_text = "ACAR,IEAR,VCAR";
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;

  auto* build = app.add_subcommand("build", "retrieve ICEs and render demonstration sequences");
  build->add_option("--config", config, "pipeline config (JSON)")->required();
  build->add_option("--out", out_dir, "output directory (overrides config)");
  build->add_option("--seed", seed, "seed (overrides config)");

  auto* score = app.add_subcommand("score", "score generated captions");
  score->add_option("--config", config, "pipeline config (JSON)")->required();
  score->add_option("--captions", captions_path, "generated captions JSON")->required();
  score->add_option("--out", out_dir, "output directory (overrides config)");
  score->add_option("--format", format, "print the report to stdout")->check(CLI::IsMember({"csv"}));

  auto* attn = app.add_subcommand("attn", "per-layer attention metrics over a run bundle");
  attn->add_option("--run", run_path, "run directory or manifest")->required();
  attn->add_option("--metrics", metrics_text, "comma-separated subset of ACAR,IEAR,VCAR");
  attn->add_option("--out", out_dir, "output directory")->required();
  attn->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  attn->add_option("--format", format, "print the profile to stdout")->check(CLI::IsMember({"csv"}));

  std::string kind_text, seg_path, layers_text = "0:0", model_text;
  std::size_t prune_layer = 0;
  std::optional<std::size_t> prediction_layer, full_len, kept_len;
  bool no_recover = false;
  auto* plan = app.add_subcommand("plan", "emit attention masks or a pruning schedule with KV estimates");
  plan->add_option("--kind", kind_text, "anchor | context | prune")->required();
  plan->add_option("--seg", seg_path, "segmentation JSON");
  plan->add_option("--layers", layers_text, "inclusive layer range START:END for masks");
  plan->add_option("--model", model_text, "n_layers,n_heads,head_dim,kv_bytes_per_element")->required();
  plan->add_option("--prune-layer", prune_layer, "first pruned layer k (zero-based)");
  plan->add_option("--prediction-layer", prediction_layer, "layer p where all tokens return (default: last layer)");
  plan->add_flag("--no-recover", no_recover, "keep only anchors and queries through the last layer");
  plan->add_option("--full-len", full_len, "prompt length (default: segmentation size)");
  plan->add_option("--kept-len", kept_len, "kept tokens (default: anchors + queries)");
  plan->add_option("--out", out_dir, "output directory")->required();

  auto* synth = app.add_subcommand("synth", "generate a synthetic run bundle");
  synth->add_option("--config", config, "synth spec (JSON)")->required();
  synth->add_option("--out", out_dir, "output run directory")->required();
  synth->add_option("--seed", seed, "seed (overrides spec)");

  auto* validate = app.add_subcommand("validate", "load and cross-check a run bundle");
  validate->add_option("--run", run_path, "run directory or manifest")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (build->parsed()) {
      auto cfg = load_pipeline_config(config);
      if (!out_dir.empty()) cfg.paths.out = out_dir;
      if (seed) cfg.seed = *seed;
      const auto result = cmd_build(cfg);
      print_warnings(result.warnings);
      std::cout << "wrote " << result.sequences.size() << " sequences to " << cfg.demos_path().string() << "\n";
    } else if (score->parsed()) {
      auto cfg = load_pipeline_config(config);
      if (!out_dir.empty()) cfg.paths.out = out_dir;
      const auto report = cmd_score(cfg, captions_path);
      print_warnings(report.warnings);
      if (format == "csv") {
        std::cout << report_csv(report);
      } else {
        for (const auto& [k, v] : report.aggregates) std::cout << k << " " << format_double(v) << "\n";
      }
    } else if (attn->parsed()) {
      const auto report = cmd_attn(run_path, parse_metrics(metrics_text), out_dir, jobs);
      print_warnings(report.warnings);
      if (format == "csv") {
        std::cout << profile_csv(report.layers);
      } else {
        for (const auto& [k, v] : report.means) std::cout << k << " " << format_double(v) << "\n";
      }
    } else if (plan->parsed()) {
      PlanRequest req;
      req.kind = plan_kind_from_name(kind_text);
      if (!seg_path.empty()) req.segmentation = seg_path;
      req.layers = parse_range(layers_text);
      req.model = parse_model(model_text);
      req.prune_layer = prune_layer;
      req.prediction_layer = prediction_layer;
      req.recover = !no_recover;
      req.full_length = full_len;
      req.kept_length = kept_len;
      std::cout << cmd_plan(req, out_dir).table;
    } else if (synth->parsed()) {
      std::cout << "wrote " << cmd_synth(config, out_dir, seed).string() << "\n";
    } else if (validate->parsed()) {
      const auto summary = cmd_validate(run_path);
      print_warnings(summary.warnings);
      std::cout << summary.text;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}
