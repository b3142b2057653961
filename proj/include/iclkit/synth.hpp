#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iclkit/attention_metrics.hpp"
#include "iclkit/interchange.hpp"
#include "iclkit/random.hpp"
#include "iclkit/segmentation.hpp"
#include "iclkit/text_metrics.hpp"

namespace iclkit {

// Parameters of a synthetic attention dump. Row j gives visible key i the
// unnormalized weight
//   1 + anchor_strength * [i is an anchor]
//     + window_strength * [i and j share an ICE]
//     + noise * u,   u ~ U[0,1) from Xoshiro256ss(seed)
// and each row is then normalized. Noise draws run over (layer, head, row,
// key) in row-major order, visible keys only.
struct SynthSpec {
  TokenSegmentation seg;
  std::size_t n_layers = 1;
  std::size_t n_heads = 1;
  double anchor_strength = 0.0;
  double window_strength = 0.0;
  double noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

BasicAttentionRecord<double> gen_attention(const SynthSpec& spec, Variant variant = Variant::WithQueryImage,
                                           std::string sample_id = "synth");

// Random valid segmentation with at most `max_tokens` tokens (at least
// 3 + 2 * min_ices, else DomainError):
// BOS, then ICEs of [IMAGE_MARK, context..., PERIOD?, DELIM?], an optional
// query image marker, then two query tokens.
TokenSegmentation random_segmentation(Xoshiro256ss& rng, std::size_t max_tokens, std::size_t min_ices = 2);

// Brute-force reference for the attention metrics: every token pair is
// enumerated and tested against the role predicates, and A is re-averaged
// over heads from the raw tensor for each pair. No shared code with the
// fast path beyond the record and segmentation types.
template <typename Scalar>
MetricValue oracle_metric(AttentionMetric which, const BasicAttentionRecord<Scalar>& rec,
                          const std::type_identity_t<BasicAttentionRecord<Scalar>>* without_image, const TokenSegmentation& seg,
                          std::size_t layer);

// Direct transcription of CIDEr(-D): dense vectors over the union
// vocabulary, document frequencies counted by scanning `corpus` (each entry
// is one document's reference captions) for every n-gram.
double oracle_cider(const std::string& candidate, std::span<const std::string> refs,
                    std::span<const std::vector<std::string>> corpus, CiderVariant variant = CiderVariant::CiderD);

SynthSpec synth_spec_from_json(const nlohmann::json& doc, const TokenSegmentation& seg);

}  // namespace iclkit
