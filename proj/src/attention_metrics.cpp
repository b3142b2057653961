#include "iclkit/attention_metrics.hpp"

#include <algorithm>
#include <string>

namespace iclkit {

std::string_view metric_name(AttentionMetric m) {
  switch (m) {
    case AttentionMetric::Acar: return "ACAR";
    case AttentionMetric::Iear: return "IEAR";
    case AttentionMetric::Vcar: return "VCAR";
  }
  return "?";
}

AttentionMetric metric_from_name(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "ACAR") return AttentionMetric::Acar;
  if (upper == "IEAR") return AttentionMetric::Iear;
  if (upper == "VCAR") return AttentionMetric::Vcar;
  throw ConfigError("unknown attention metric '" + std::string(name) + "'");
}

namespace {

using Index = Eigen::Index;
using IndexList = std::vector<Index>;

IndexList to_index_list(const std::vector<std::size_t>& v) { return IndexList(v.begin(), v.end()); }

template <typename Scalar>
void check_inputs(const BasicAttentionRecord<Scalar>& rec, const TokenSegmentation& seg, std::size_t layer) {
  if (rec.tensor.rank() != 4) throw DomainError("attention record must have rank 4");
  if (rec.seq_len() != seg.size()) {
    throw DomainError("segmentation has " + std::to_string(seg.size()) + " tokens but attention seq_len is " +
                      std::to_string(rec.seq_len()));
  }
  if (layer >= rec.layer_count()) {
    throw DomainError("layer " + std::to_string(layer) + " out of range (" + std::to_string(rec.layer_count()) +
                      " layers)");
  }
}

// 1 where key <= query for the rows x cols grid.
Eigen::ArrayXXd causal_mask(const IndexList& rows, const IndexList& cols) {
  const auto r = Eigen::Map<const Eigen::Array<Index, Eigen::Dynamic, 1>>(rows.data(), static_cast<Index>(rows.size()));
  const auto c = Eigen::Map<const Eigen::Array<Index, 1, Eigen::Dynamic>>(cols.data(), static_cast<Index>(cols.size()));
  return (c.replicate(r.size(), 1) <= r.replicate(1, c.size())).cast<double>();
}

struct PairMean {
  double mean = 0.0;
  Index count = 0;
};

// Mean of M(query, key) over queries x keys restricted to key <= query.
PairMean causal_pair_mean(const Eigen::MatrixXd& M, const IndexList& queries, const IndexList& keys) {
  if (queries.empty() || keys.empty()) return {};
  const Eigen::ArrayXXd mask = causal_mask(queries, keys);
  const Index count = static_cast<Index>(mask.sum());
  if (count == 0) return {};
  return {(M(queries, keys).array() * mask).sum() / static_cast<double>(count), count};
}

}  // namespace

template <typename Scalar>
double attention_flow(const BasicAttentionRecord<Scalar>& rec, std::size_t layer, std::size_t key, std::size_t query) {
  if (layer >= rec.layer_count() || key >= rec.seq_len() || query >= rec.seq_len()) {
    throw DomainError("attention_flow: index out of range");
  }
  if (key > query) throw DomainError("attention_flow: key " + std::to_string(key) + " is after query " + std::to_string(query));
  double sum = 0.0;
  for (std::size_t h = 0; h < rec.head_count(); ++h) sum += static_cast<double>(rec.weight(layer, h, query, key));
  return sum / static_cast<double>(rec.head_count());
}

template <typename Scalar>
Eigen::MatrixXd head_mean(const BasicAttentionRecord<Scalar>& rec, std::size_t layer) {
  using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto S = static_cast<Index>(rec.seq_len());
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(S, S);
  for (std::size_t h = 0; h < rec.head_count(); ++h) {
    const Scalar* base = rec.tensor.data().data() + rec.tensor.offset(layer, h, 0, 0);
    mean += Eigen::Map<const RowMajor>(base, S, S).template cast<double>();
  }
  return mean / static_cast<double>(rec.head_count());
}

template <typename Scalar>
MetricValue acar(const BasicAttentionRecord<Scalar>& rec, const TokenSegmentation& seg, std::size_t layer) {
  check_inputs(rec, seg, layer);
  if (seg.anchors().empty() || seg.context().empty()) throw DomainError("ACAR needs anchor and context tokens");
  const Eigen::MatrixXd M = head_mean(rec, layer);
  const IndexList queries = to_index_list(seg.queries());
  const auto anchor = causal_pair_mean(M, queries, to_index_list(seg.anchors()));
  const auto context = causal_pair_mean(M, queries, to_index_list(seg.context()));
  if (anchor.count == 0 || context.count == 0) throw DomainError("ACAR pair sets are empty");
  return MetricValue::ratio(anchor.mean, context.mean);
}

template <typename Scalar>
MetricValue iear(const BasicAttentionRecord<Scalar>& rec, const TokenSegmentation& seg, std::size_t layer) {
  check_inputs(rec, seg, layer);
  if (seg.ice_count() < 2) throw DomainError("IEAR needs at least two ICEs");
  const Eigen::MatrixXd M = head_mean(rec, layer);

  double ratio_sum = 0.0;
  std::size_t used = 0;
  bool any_sentinel = false;
  for (std::size_t k = 0; k < seg.ice_count(); ++k) {
    const IndexList own = to_index_list(seg.ice_context(k));
    IndexList other;
    for (auto i : seg.context()) {
      if (seg[i].ice_index != k) other.push_back(static_cast<Index>(i));
    }
    if (own.empty() || other.empty()) continue;

    const Eigen::ArrayXXd own_mask = causal_mask(own, own);
    const Eigen::ArrayXXd other_mask = causal_mask(own, other);
    const Eigen::ArrayXd own_count = own_mask.rowwise().sum();
    const Eigen::ArrayXd other_count = other_mask.rowwise().sum();
    const Eigen::ArrayXd own_sum = (M(own, own).array() * own_mask).rowwise().sum();
    const Eigen::ArrayXd other_sum = (M(own, other).array() * other_mask).rowwise().sum();

    const Eigen::Array<bool, Eigen::Dynamic, 1> valid = other_count > 0.0;
    const Index rows = valid.count();
    if (rows == 0) continue;
    const double intra = valid.select(own_sum / own_count.max(1.0), 0.0).sum() / static_cast<double>(rows);
    const double extra = valid.select(other_sum / other_count.max(1.0), 0.0).sum() / static_cast<double>(rows);
    const auto ratio = MetricValue::ratio(intra, extra);
    ++used;
    if (ratio.sentinel) {
      any_sentinel = true;
    } else {
      ratio_sum += ratio.value;
    }
  }
  if (used == 0) throw DomainError("IEAR has no ICE with causal extra-ICE pairs");
  if (any_sentinel) return MetricValue::infinite();
  return {ratio_sum / static_cast<double>(used), false};
}

template <typename Scalar>
MetricValue vcar(const BasicAttentionRecord<Scalar>& with_image, const BasicAttentionRecord<Scalar>& without_image,
                 const TokenSegmentation& seg, std::size_t layer) {
  check_inputs(with_image, seg, layer);
  check_inputs(without_image, seg, layer);
  if (with_image.variant != Variant::WithQueryImage || without_image.variant != Variant::WithoutQueryImage) {
    throw DomainError("VCAR needs a with_query_image and a without_query_image record");
  }
  if (with_image.tensor.shape() != without_image.tensor.shape()) throw DomainError("VCAR records differ in shape");
  if (seg.context().empty()) throw DomainError("VCAR needs context tokens");

  const Eigen::MatrixXd with_m = head_mean(with_image, layer);
  const Eigen::MatrixXd without_m = head_mean(without_image, layer);
  const IndexList queries = to_index_list(seg.queries());
  const double qq_with = causal_pair_mean(with_m, queries, queries).mean;
  const double qq_without = causal_pair_mean(without_m, queries, queries).mean;
  const auto cq = causal_pair_mean(with_m, queries, to_index_list(seg.context()));
  if (cq.count == 0) throw DomainError("VCAR context-query pair set is empty");
  return MetricValue::ratio(qq_with - qq_without, cq.mean);
}

LayerProfile make_profile(AttentionMetric metric, std::vector<MetricValue> values) {
  LayerProfile profile{metric, std::move(values), 0.0, 0};
  double sum = 0.0;
  std::size_t finite = 0;
  for (const auto& v : profile.values) {
    if (v.sentinel) {
      ++profile.sentinel_count;
    } else {
      sum += v.value;
      ++finite;
    }
  }
  if (finite == 0) {
    throw DomainError(std::string(metric_name(metric)) + " profile has no finite layer value");
  }
  profile.mean = sum / static_cast<double>(finite);
  return profile;
}

template <typename Scalar>
LayerProfile layer_profile(AttentionMetric metric, const BasicAttentionRecord<Scalar>& rec,
                           const std::type_identity_t<BasicAttentionRecord<Scalar>>* without_image, const TokenSegmentation& seg) {
  if (metric == AttentionMetric::Vcar && without_image == nullptr) {
    throw DomainError("VCAR profile needs the without_query_image record");
  }
  std::vector<MetricValue> values;
  values.reserve(rec.layer_count());
  for (std::size_t l = 0; l < rec.layer_count(); ++l) {
    switch (metric) {
      case AttentionMetric::Acar: values.push_back(acar(rec, seg, l)); break;
      case AttentionMetric::Iear: values.push_back(iear(rec, seg, l)); break;
      case AttentionMetric::Vcar: values.push_back(vcar(rec, *without_image, seg, l)); break;
    }
  }
  return make_profile(metric, std::move(values));
}

#define ICLKIT_INSTANTIATE(Scalar)                                                                              \
  template double attention_flow(const BasicAttentionRecord<Scalar>&, std::size_t, std::size_t, std::size_t);   \
  template Eigen::MatrixXd head_mean(const BasicAttentionRecord<Scalar>&, std::size_t);                         \
  template MetricValue acar(const BasicAttentionRecord<Scalar>&, const TokenSegmentation&, std::size_t);        \
  template MetricValue iear(const BasicAttentionRecord<Scalar>&, const TokenSegmentation&, std::size_t);        \
  template MetricValue vcar(const BasicAttentionRecord<Scalar>&, const BasicAttentionRecord<Scalar>&,           \
                            const TokenSegmentation&, std::size_t);                                             \
  template LayerProfile layer_profile(AttentionMetric, const BasicAttentionRecord<Scalar>&,                     \
                                      const BasicAttentionRecord<Scalar>*, const TokenSegmentation&);

ICLKIT_INSTANTIATE(float)
ICLKIT_INSTANTIATE(double)

#undef ICLKIT_INSTANTIATE

}  // namespace iclkit
