#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iclkit/model_cfg.hpp"
#include "iclkit/segmentation.hpp"

namespace iclkit {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Lower-triangular (key <= query) mask; entry (query, key).
BoolMatrix causal_mask(std::size_t seq_len);

enum class MaskKind { AnchorCentric, ContextCentric, Composite };

std::string_view mask_kind_name(MaskKind kind);

struct LayerRange {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
};

// Per-layer allowed (query, key) pairs. Layers outside the range keep the
// plain causal mask.
class MaskPlan {
 public:
  MaskPlan(MaskKind kind, LayerRange range, std::vector<BoolMatrix> layers, std::string predicate);

  MaskKind kind() const { return kind_; }
  LayerRange range() const { return range_; }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t seq_len() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().rows()); }
  const BoolMatrix& layer(std::size_t l) const { return layers_.at(l); }
  const std::vector<BoolMatrix>& layers() const { return layers_; }
  // Human-readable form of the restriction, e.g. "layers 10..30: key in A|Q".
  const std::string& predicate() const { return predicate_; }

  // Pairs allowed by both plans, layer by layer.
  MaskPlan intersect(const MaskPlan& other) const;

  std::size_t allowed_pairs(std::size_t l) const { return static_cast<std::size_t>(layers_.at(l).count()); }

 private:
  MaskKind kind_;
  LayerRange range_;
  std::vector<BoolMatrix> layers_;
  std::string predicate_;
};

// Within [range.start, range.end] query j may attend key i iff i is an
// anchor or query token and i <= j.
MaskPlan anchor_mask(const TokenSegmentation& seg, LayerRange range, std::size_t n_layers);

// Within the range a token of ICE k may attend key i <= j iff i belongs to
// ICE k or is an anchor or query token. Rows outside any ICE stay causal.
MaskPlan context_mask(const TokenSegmentation& seg, LayerRange range, std::size_t n_layers);

// Mask files: `<stem>.mask.iclt` (u8 [layers][seq][seq]) and
// `<stem>.mask.json` metadata.
void save_mask_plan(const MaskPlan& plan, const std::filesystem::path& dir, const std::string& stem);

struct PrunePlan {
  std::size_t prune_layer = 0;       // first pruned layer k
  std::size_t prediction_layer = 0;  // p; layers [k, p) run on kept tokens
  bool recover = true;               // restore all tokens from layer p on
  std::size_t n_layers = 0;
  std::size_t full_length = 0;
  std::vector<std::size_t> kept_indices;  // anchors and queries, when known
  std::size_t kept_length = 0;
  std::vector<std::size_t> layer_lengths;  // effective sequence length per layer

  bool is_identity() const;
};

// Keeps anchors and the query tokens from layer `prune_layer`. Layers
// before it see every token; layers in [prune_layer, prediction_layer) see
// the kept tokens; layers from prediction_layer on see every token again
// when `recover` is set, the kept tokens otherwise. prune_layer ==
// n_layers means no pruning. Otherwise requires prune_layer <
// prediction_layer <= n_layers; prediction_layer == n_layers leaves no
// recovery layer inside the model.
PrunePlan prune_plan(const TokenSegmentation& seg, std::size_t prune_layer, bool recover,
                     std::size_t prediction_layer, std::size_t n_layers);

// Same schedule from token counts alone.
PrunePlan prune_plan_from_counts(std::size_t full_length, std::size_t kept_length, std::size_t prune_layer,
                                 bool recover, std::size_t prediction_layer, std::size_t n_layers);

nlohmann::json prune_plan_to_json(const PrunePlan& plan);

struct KvEstimate {
  std::uint64_t bytes = 0;
  std::uint64_t baseline_bytes = 0;
  double savings = 0.0;  // 1 - bytes / baseline_bytes
};

// Prompt-only self-attention KV cache:
//   2 * kv_bytes_per_element * n_heads * head_dim * sum_l len(l)
// with len(l) = full_length everywhere for the baseline and the plan's
// schedule otherwise.
KvEstimate kv_estimate(const ModelCfg& cfg, const PrunePlan* plan, std::size_t full_length);

}  // namespace iclkit
