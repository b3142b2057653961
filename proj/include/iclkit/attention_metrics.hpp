#pragma once

#include <limits>
#include <string_view>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "iclkit/interchange.hpp"
#include "iclkit/segmentation.hpp"

namespace iclkit {

// A ratio metric value. A zero denominator yields +inf with `sentinel` set.
struct MetricValue {
  double value = 0.0;
  bool sentinel = false;

  static MetricValue infinite() { return {std::numeric_limits<double>::infinity(), true}; }
  static MetricValue ratio(double numerator, double denominator) {
    return denominator == 0.0 ? infinite() : MetricValue{numerator / denominator, false};
  }
};

enum class AttentionMetric { Acar, Iear, Vcar };

std::string_view metric_name(AttentionMetric m);
AttentionMetric metric_from_name(std::string_view name);

// A_l(key, query): attention the `query` token pays to `key` at `layer`,
// averaged over heads. Requires key <= query.
template <typename Scalar>
double attention_flow(const BasicAttentionRecord<Scalar>& rec, std::size_t layer, std::size_t key, std::size_t query);

// Head-averaged [query][key] attention matrix of one layer.
template <typename Scalar>
Eigen::MatrixXd head_mean(const BasicAttentionRecord<Scalar>& rec, std::size_t layer);

// Anchor-to-context ratio: mean A over (anchor, query) pairs divided by mean
// A over (context, query) pairs. Only causal pairs (key <= query) count.
template <typename Scalar>
MetricValue acar(const BasicAttentionRecord<Scalar>& rec, const TokenSegmentation& seg, std::size_t layer);

// Intra/extra ICE ratio averaged over ICEs. For ICE k the rows are its
// context tokens that have at least one earlier context token of another
// ICE; each row contributes its mean attention to context keys of ICE k and
// its mean attention to context keys of other ICEs (causal keys only), and
// the two row means are averaged over those rows. ICEs with no such rows
// (always the first) are left out of the average. Needs two or more ICEs.
template <typename Scalar>
MetricValue iear(const BasicAttentionRecord<Scalar>& rec, const TokenSegmentation& seg, std::size_t layer);

// Visual-to-caption ratio: (mean A over query-query pairs with the query
// image - the same without it) / mean A over (context, query) pairs with
// the image. Unclamped; may be negative.
template <typename Scalar>
MetricValue vcar(const BasicAttentionRecord<Scalar>& with_image, const BasicAttentionRecord<Scalar>& without_image,
                 const TokenSegmentation& seg, std::size_t layer);

struct LayerProfile {
  AttentionMetric metric = AttentionMetric::Acar;
  std::vector<MetricValue> values;
  // Mean over non-sentinel layers.
  double mean = 0.0;
  std::size_t sentinel_count = 0;
};

// One value per layer. `without_image` is required for VCAR and ignored
// otherwise. Throws DomainError if every layer is a sentinel.
template <typename Scalar>
LayerProfile layer_profile(AttentionMetric metric, const BasicAttentionRecord<Scalar>& rec,
                           const std::type_identity_t<BasicAttentionRecord<Scalar>>* without_image, const TokenSegmentation& seg);

LayerProfile make_profile(AttentionMetric metric, std::vector<MetricValue> values);

}  // namespace iclkit
