#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iclkit/assignment.hpp"
#include "iclkit/attention_metrics.hpp"
#include "iclkit/captions.hpp"
#include "iclkit/efficiency.hpp"
#include "iclkit/retrieval.hpp"

namespace iclkit {

struct MetricToggles {
  bool cider = true;
  bool clipscore = true;
  bool chair = true;
  bool shortcut = true;
  bool attention = true;
};

struct PipelinePaths {
  std::optional<std::filesystem::path> captions;
  std::optional<std::filesystem::path> embeddings;
  std::optional<std::filesystem::path> embedding_ids;
  std::optional<std::filesystem::path> text_embeddings;
  std::optional<std::filesystem::path> text_embedding_ids;
  std::optional<std::filesystem::path> run;
  std::optional<std::filesystem::path> lexicon;
  std::optional<std::filesystem::path> demos;
  std::filesystem::path out = "out";
};

// One experiment cell: retrieval method x caption source x shot count.
// Relative paths resolve against the config file's directory.
struct PipelineConfig {
  RetrievalMethod retrieval = RetrievalMethod::SIIR;
  CaptionSource caption_source = CaptionSource::FHL;
  std::optional<CaptionSource> mhl_anchor;
  std::size_t shots = 4;
  std::uint64_t seed = 0;
  std::vector<std::string> queries;  // empty: every image in the pool
  MetricToggles metrics;
  PromptTemplate prompt;
  PipelinePaths paths;
  std::string raw;  // the config bytes as read

  // Throws ConfigError if shots == 0 or a configured path does not exist.
  void validate() const;
  std::filesystem::path demos_path() const;
};

PipelineConfig pipeline_config_from_text(const std::string& text, const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct BuildResult {
  std::vector<BuiltSequence> sequences;
  nlohmann::json document;
  std::vector<std::string> warnings;
};

// Retrieves ICE images for each query, assigns captions and renders the
// prompts. SIIR items are ordered with the most similar ICE last. RS draws
// use one seed per query taken in query order from Xoshiro256ss(cfg.seed).
BuildResult run_build(const PipelineConfig& cfg);
BuildResult cmd_build(const PipelineConfig& cfg);  // run_build + writes demos.json

struct GeneratedCaption {
  std::string sample_id;
  std::string caption;
};

// [{sample_id, caption}, ...] or {"captions": [...]}
std::vector<GeneratedCaption> load_generated_captions(const std::filesystem::path& path);

struct ReportRow {
  std::string sample_id;
  std::string metric;
  double value = 0.0;
};

struct ProfileRow {
  std::size_t layer = 0;
  std::string metric;
  double value = 0.0;
  bool sentinel = false;
};

struct Report {
  std::vector<ReportRow> rows;
  std::vector<ProfileRow> profiles;
  std::map<std::string, double> aggregates;
  std::vector<std::string> warnings;
  std::string config_echo;

  // Mean over rows of `metric` (NaN if none).
  double column_mean(const std::string& metric) const;
  std::optional<double> value(const std::string& sample_id, const std::string& metric) const;
};

// Row metric names.
inline constexpr const char* kColCider = "CIDEr";
inline constexpr const char* kColClipScore = "CLIPScore";
inline constexpr const char* kColChairMentions = "CHAIR_mentions";
inline constexpr const char* kColChairHallucinated = "CHAIR_hallucinated";
inline constexpr const char* kColChairI = "CHi";
inline constexpr const char* kColChairS = "CHs";
inline constexpr const char* kColShortcut = "ShortcutCIDEr";
inline constexpr const char* kColVcar = "VCAR";

Report run_score(const PipelineConfig& cfg, const std::vector<GeneratedCaption>& captions,
                 const nlohmann::json& demos);
Report cmd_score(const PipelineConfig& cfg, const std::filesystem::path& captions_path);

struct AttnSampleProfile {
  std::string sample_id;
  LayerProfile profile;
};

struct AttnReport {
  std::vector<AttnSampleProfile> samples;
  std::vector<ProfileRow> layers;  // mean over samples per layer and metric
  std::map<std::string, double> means;
  std::vector<std::string> warnings;
};

AttnReport run_attn(const RunBundle& bundle, const std::vector<AttentionMetric>& metrics, std::size_t jobs = 1);
AttnReport cmd_attn(const std::filesystem::path& run_path, const std::vector<AttentionMetric>& metrics,
                    const std::filesystem::path& out_dir, std::size_t jobs = 1);

enum class PlanKind { Anchor, Context, Prune };
PlanKind plan_kind_from_name(std::string_view name);

struct PlanRequest {
  PlanKind kind = PlanKind::Prune;
  std::optional<std::filesystem::path> segmentation;
  LayerRange layers;
  std::size_t prune_layer = 0;
  std::optional<std::size_t> prediction_layer;  // default: last layer
  bool recover = true;
  ModelCfg model;
  std::optional<std::size_t> full_length;  // default: segmentation size
  std::optional<std::size_t> kept_length;  // default: anchors + queries
};

struct PlanResult {
  std::optional<MaskPlan> mask;
  std::optional<PrunePlan> prune;
  KvEstimate kv;
  std::string table;  // human-readable summary
};

PlanResult run_plan(const PlanRequest& req);
PlanResult cmd_plan(const PlanRequest& req, const std::filesystem::path& out_dir);

// Writes a run directory (manifest, segmentation, f32 attention) from a
// synth spec file. See README for the schema.
std::filesystem::path cmd_synth(const std::filesystem::path& spec_path, const std::filesystem::path& out_dir,
                                std::optional<std::uint64_t> seed_override = std::nullopt);

struct ValidationSummary {
  std::size_t samples = 0;
  std::size_t with_image = 0;
  std::size_t without_image = 0;
  std::vector<std::string> warnings;
  std::string text;
};

ValidationSummary cmd_validate(const std::filesystem::path& run_path);

std::string format_double(double v);
std::string report_csv(const Report& report);
std::string profile_csv(const std::vector<ProfileRow>& rows);

}  // namespace iclkit
