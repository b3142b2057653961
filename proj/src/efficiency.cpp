#include "iclkit/efficiency.hpp"

#include <nlohmann/json.hpp>

#include "iclkit/errors.hpp"
#include "iclkit/interchange.hpp"

namespace iclkit {

using nlohmann::json;

BoolMatrix causal_mask(std::size_t seq_len) {
  const auto n = static_cast<Eigen::Index>(seq_len);
  BoolMatrix m = BoolMatrix::Constant(n, n, false);
  m.triangularView<Eigen::Lower>().setConstant(true);
  return m;
}

std::string_view mask_kind_name(MaskKind kind) {
  switch (kind) {
    case MaskKind::AnchorCentric: return "anchor_centric";
    case MaskKind::ContextCentric: return "context_centric";
    case MaskKind::Composite: return "composite";
  }
  return "?";
}

MaskPlan::MaskPlan(MaskKind kind, LayerRange range, std::vector<BoolMatrix> layers, std::string predicate)
    : kind_(kind), range_(range), layers_(std::move(layers)), predicate_(std::move(predicate)) {
  for (const auto& m : layers_) {
    if (m.rows() != m.cols() || m.rows() != layers_.front().rows()) {
      throw DomainError("mask plan layers must share one square shape");
    }
    if (m.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().any()) {
      throw DomainError("mask plan allows a non-causal pair");
    }
  }
}

MaskPlan MaskPlan::intersect(const MaskPlan& other) const {
  if (other.layer_count() != layer_count() || other.seq_len() != seq_len()) {
    throw DomainError("cannot intersect mask plans of different shapes");
  }
  std::vector<BoolMatrix> out;
  out.reserve(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) out.push_back(layers_[l].array() && other.layers_[l].array());
  const LayerRange span{std::min(range_.start, other.range_.start), std::max(range_.end, other.range_.end)};
  const MaskKind kind = other.kind_ == kind_ ? kind_ : MaskKind::Composite;
  return MaskPlan(kind, span, std::move(out), predicate_ + " AND " + other.predicate_);
}

namespace {

void check_range(LayerRange range, std::size_t n_layers) {
  if (range.start > range.end) {
    throw DomainError("mask layer range [" + std::to_string(range.start) + "," + std::to_string(range.end) +
                      "] is empty");
  }
  if (range.end >= n_layers) {
    throw DomainError("mask layer range end " + std::to_string(range.end) + " exceeds the model's " +
                      std::to_string(n_layers) + " layers");
  }
}

MaskPlan assemble(MaskKind kind, LayerRange range, std::size_t n_layers, const BoolMatrix& restricted,
                  std::string predicate) {
  const BoolMatrix causal = causal_mask(static_cast<std::size_t>(restricted.rows()));
  std::vector<BoolMatrix> layers;
  layers.reserve(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    layers.push_back(l >= range.start && l <= range.end ? restricted : causal);
  }
  return MaskPlan(kind, range, std::move(layers),
                  "layers " + std::to_string(range.start) + ".." + std::to_string(range.end) + ": " +
                      std::move(predicate));
}

}  // namespace

MaskPlan anchor_mask(const TokenSegmentation& seg, LayerRange range, std::size_t n_layers) {
  check_range(range, n_layers);
  const std::size_t n = seg.size();
  BoolMatrix m = BoolMatrix::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), false);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i <= j; ++i) {
      m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = seg.is_anchor_or_query(i);
    }
  }
  return assemble(MaskKind::AnchorCentric, range, n_layers, m, "key <= query and key in anchors|queries");
}

MaskPlan context_mask(const TokenSegmentation& seg, LayerRange range, std::size_t n_layers) {
  check_range(range, n_layers);
  const std::size_t n = seg.size();
  BoolMatrix m = BoolMatrix::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), false);
  for (std::size_t j = 0; j < n; ++j) {
    const auto row_ice = seg[j].ice_index;
    for (std::size_t i = 0; i <= j; ++i) {
      const bool allowed = !row_ice || seg[i].ice_index == row_ice || seg.is_anchor_or_query(i);
      m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = allowed;
    }
  }
  return assemble(MaskKind::ContextCentric, range, n_layers, m,
                  "key <= query and (query outside ICEs or key in same ICE|anchors|queries)");
}

void save_mask_plan(const MaskPlan& plan, const std::filesystem::path& dir, const std::string& stem) {
  const std::size_t L = plan.layer_count(), S = plan.seq_len();
  std::vector<float> data;
  data.reserve(L * S * S);
  for (const auto& m : plan.layers()) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c) ? 1.0f : 0.0f);
    }
  }
  save_tensor(Tensor(DType::U8, {L, S, S}, std::move(data)), dir / (stem + ".mask.iclt"));
  const json meta = {{"kind", mask_kind_name(plan.kind())},
                     {"layer_start", plan.range().start},
                     {"layer_end", plan.range().end},
                     {"n_layers", L},
                     {"seq_len", S},
                     {"predicate", plan.predicate()},
                     {"matrix", stem + ".mask.iclt"}};
  write_file_atomic(dir / (stem + ".mask.json"), meta.dump(2) + "\n");
}

// -------------------------------------------------------------------- prune

bool PrunePlan::is_identity() const {
  for (auto len : layer_lengths) {
    if (len != full_length) return false;
  }
  return true;
}

PrunePlan prune_plan_from_counts(std::size_t full_length, std::size_t kept_length, std::size_t prune_layer,
                                 bool recover, std::size_t prediction_layer, std::size_t n_layers) {
  if (n_layers == 0) throw DomainError("prune plan needs at least one layer");
  if (full_length == 0) throw DomainError("prune plan needs a positive sequence length");
  if (kept_length > full_length) throw DomainError("kept token count exceeds the sequence length");
  if (prune_layer > n_layers) {
    throw DomainError("prune layer " + std::to_string(prune_layer) + " exceeds " + std::to_string(n_layers) + " layers");
  }
  PrunePlan plan;
  plan.prune_layer = prune_layer;
  plan.recover = recover;
  plan.n_layers = n_layers;
  plan.full_length = full_length;
  plan.kept_length = kept_length;
  if (prune_layer == n_layers) {
    plan.prediction_layer = n_layers;
    plan.layer_lengths.assign(n_layers, full_length);
    return plan;
  }
  if (prune_layer >= prediction_layer) {
    throw DomainError("prune layer " + std::to_string(prune_layer) + " must precede prediction layer " +
                      std::to_string(prediction_layer));
  }
  if (prediction_layer > n_layers) {
    throw DomainError("prediction layer " + std::to_string(prediction_layer) + " exceeds " + std::to_string(n_layers) +
                      " layers");
  }
  plan.prediction_layer = prediction_layer;
  plan.layer_lengths.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    if (l < prune_layer) {
      plan.layer_lengths[l] = full_length;
    } else if (l < prediction_layer) {
      plan.layer_lengths[l] = kept_length;
    } else {
      plan.layer_lengths[l] = recover ? full_length : kept_length;
    }
  }
  return plan;
}

PrunePlan prune_plan(const TokenSegmentation& seg, std::size_t prune_layer, bool recover,
                     std::size_t prediction_layer, std::size_t n_layers) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (seg.is_anchor_or_query(i)) kept.push_back(i);
  }
  PrunePlan plan = prune_plan_from_counts(seg.size(), kept.size(), prune_layer, recover, prediction_layer, n_layers);
  plan.kept_indices = std::move(kept);
  return plan;
}

json prune_plan_to_json(const PrunePlan& plan) {
  return {{"prune_layer", plan.prune_layer},
          {"prediction_layer", plan.prediction_layer},
          {"recover", plan.recover},
          {"n_layers", plan.n_layers},
          {"full_length", plan.full_length},
          {"kept_length", plan.kept_length},
          {"kept_indices", plan.kept_indices},
          {"layer_lengths", plan.layer_lengths}};
}

KvEstimate kv_estimate(const ModelCfg& cfg, const PrunePlan* plan, std::size_t full_length) {
  cfg.validate();
  if (full_length == 0) throw DomainError("kv_estimate needs a positive sequence length");
  const std::uint64_t per_token_layer = 2 * cfg.kv_bytes_per_element * cfg.n_heads * cfg.head_dim;
  KvEstimate est;
  est.baseline_bytes = per_token_layer * cfg.n_layers * full_length;
  if (plan == nullptr) {
    est.bytes = est.baseline_bytes;
    return est;
  }
  if (plan->layer_lengths.size() != cfg.n_layers) {
    throw DomainError("prune plan covers " + std::to_string(plan->layer_lengths.size()) + " layers, model has " +
                      std::to_string(cfg.n_layers));
  }
  std::uint64_t token_layers = 0;
  for (auto len : plan->layer_lengths) token_layers += len;
  est.bytes = per_token_layer * token_layers;
  est.savings = 1.0 - static_cast<double>(est.bytes) / static_cast<double>(est.baseline_bytes);
  return est;
}

}  // namespace iclkit
