#include "iclkit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>

namespace iclkit {

void SynthSpec::validate() const {
  if (n_layers == 0 || n_heads == 0) throw DomainError("synth spec needs at least one layer and head");
  if (anchor_strength < 0.0 || window_strength < 0.0 || noise < 0.0) {
    throw DomainError("synth strengths and noise must be non-negative");
  }
  if (seg.size() < 2) throw DomainError("synth spec needs a segmentation");
}

BasicAttentionRecord<double> gen_attention(const SynthSpec& spec, Variant variant, std::string sample_id) {
  spec.validate();
  const std::size_t S = spec.seg.size();
  auto tensor = BasicTensor<double>::zeros(DType::F32, {spec.n_layers, spec.n_heads, S, S});
  Xoshiro256ss rng(spec.seed);
  std::vector<double> row(S);
  for (std::size_t l = 0; l < spec.n_layers; ++l) {
    for (std::size_t h = 0; h < spec.n_heads; ++h) {
      for (std::size_t j = 0; j < S; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i <= j; ++i) {
          double w = 1.0;
          if (is_anchor(spec.seg[i].role)) w += spec.anchor_strength;
          if (spec.seg[i].ice_index && spec.seg[i].ice_index == spec.seg[j].ice_index) w += spec.window_strength;
          if (spec.noise > 0.0) w += spec.noise * rng.uniform();
          row[i] = w;
          total += w;
        }
        for (std::size_t i = 0; i <= j; ++i) tensor(l, h, j, i) = row[i] / total;
      }
    }
  }
  return {std::move(tensor), std::move(sample_id), variant};
}

TokenSegmentation random_segmentation(Xoshiro256ss& rng, std::size_t max_tokens, std::size_t min_ices) {
  // BOS + two query tokens + an image mark and one context token per ICE.
  if (min_ices == 0 || max_tokens < 3 + 2 * min_ices) {
    throw DomainError("random_segmentation: " + std::to_string(max_tokens) + " tokens cannot hold " +
                      std::to_string(min_ices) + " ICEs");
  }
  const std::size_t max_ices = std::min(min_ices + 2, (max_tokens - 3) / 2);
  for (;;) {
    std::vector<TokenLabel> labels{{Role::Bos, std::nullopt}};
    const std::size_t ices = min_ices + static_cast<std::size_t>(rng.bounded(max_ices - min_ices + 1));
    for (std::size_t k = 0; k < ices; ++k) {
      labels.push_back({Role::ImageMark, k});
      const std::size_t ctx = 1 + static_cast<std::size_t>(rng.bounded(3));
      for (std::size_t c = 0; c < ctx; ++c) labels.push_back({Role::ContextText, k});
      if (rng.bounded(2)) labels.push_back({Role::Period, k});
      if (rng.bounded(2)) labels.push_back({Role::Delim, k});
    }
    if (rng.bounded(2)) labels.push_back({Role::ImageMark, std::nullopt});
    labels.push_back({Role::Query, std::nullopt});
    labels.push_back({Role::Query, std::nullopt});
    if (labels.size() <= max_tokens) return TokenSegmentation(std::move(labels));
  }
}

// ------------------------------------------------------------------ oracles

namespace {

template <typename Scalar>
double flow(const BasicAttentionRecord<Scalar>& rec, std::size_t layer, std::size_t key, std::size_t query) {
  double sum = 0.0;
  for (std::size_t h = 0; h < rec.head_count(); ++h) sum += static_cast<double>(rec.weight(layer, h, query, key));
  return sum / static_cast<double>(rec.head_count());
}

template <typename Scalar, typename KeyPred, typename QueryPred>
std::pair<double, std::size_t> enumerate_pairs(const BasicAttentionRecord<Scalar>& rec, std::size_t layer,
                                               KeyPred in_keys, QueryPred in_queries) {
  double sum = 0.0;
  std::size_t count = 0;
  const std::size_t S = rec.seq_len();
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t j = 0; j < S; ++j) {
      if (i > j || !in_keys(i) || !in_queries(j)) continue;
      sum += flow(rec, layer, i, j);
      ++count;
    }
  }
  return {sum, count};
}

}  // namespace

template <typename Scalar>
MetricValue oracle_metric(AttentionMetric which, const BasicAttentionRecord<Scalar>& rec,
                          const std::type_identity_t<BasicAttentionRecord<Scalar>>* without_image, const TokenSegmentation& seg,
                          std::size_t layer) {
  if (rec.seq_len() != seg.size() || layer >= rec.layer_count()) throw DomainError("oracle: record/segmentation mismatch");
  auto anchor = [&](std::size_t i) { return is_anchor(seg[i].role); };
  auto query = [&](std::size_t i) { return seg[i].role == Role::Query; };
  auto context = [&](std::size_t i) { return seg[i].role == Role::ContextText; };

  switch (which) {
    case AttentionMetric::Acar: {
      const auto [a_sum, a_n] = enumerate_pairs(rec, layer, anchor, query);
      const auto [c_sum, c_n] = enumerate_pairs(rec, layer, context, query);
      if (a_n == 0 || c_n == 0) throw DomainError("oracle ACAR: empty pair set");
      return MetricValue::ratio(a_sum / static_cast<double>(a_n), c_sum / static_cast<double>(c_n));
    }
    case AttentionMetric::Iear: {
      std::size_t ices = 0;
      for (const auto& label : seg.labels()) {
        if (label.ice_index) ices = std::max(ices, *label.ice_index + 1);
      }
      if (ices < 2) throw DomainError("oracle IEAR: fewer than two ICEs");
      double total = 0.0;
      std::size_t used = 0;
      bool sentinel = false;
      for (std::size_t k = 0; k < ices; ++k) {
        double intra_sum = 0.0, extra_sum = 0.0;
        std::size_t rows = 0;
        for (std::size_t j = 0; j < seg.size(); ++j) {
          if (!context(j) || seg[j].ice_index != k) continue;
          double in_sum = 0.0, out_sum = 0.0;
          std::size_t in_n = 0, out_n = 0;
          for (std::size_t i = 0; i <= j; ++i) {
            if (!context(i)) continue;
            if (seg[i].ice_index == k) {
              in_sum += flow(rec, layer, i, j);
              ++in_n;
            } else {
              out_sum += flow(rec, layer, i, j);
              ++out_n;
            }
          }
          if (out_n == 0) continue;
          intra_sum += in_sum / static_cast<double>(in_n);
          extra_sum += out_sum / static_cast<double>(out_n);
          ++rows;
        }
        if (rows == 0) continue;
        ++used;
        const auto r = MetricValue::ratio(intra_sum / static_cast<double>(rows), extra_sum / static_cast<double>(rows));
        if (r.sentinel) {
          sentinel = true;
        } else {
          total += r.value;
        }
      }
      if (used == 0) throw DomainError("oracle IEAR: no ICE has extra-ICE pairs");
      if (sentinel) return MetricValue::infinite();
      return {total / static_cast<double>(used), false};
    }
    case AttentionMetric::Vcar: {
      if (without_image == nullptr) throw DomainError("oracle VCAR needs the without-image record");
      const auto [qq_sum, qq_n] = enumerate_pairs(rec, layer, query, query);
      const auto [qq0_sum, qq0_n] = enumerate_pairs(*without_image, layer, query, query);
      const auto [c_sum, c_n] = enumerate_pairs(rec, layer, context, query);
      if (c_n == 0) throw DomainError("oracle VCAR: empty context pair set");
      const double diff = qq_sum / static_cast<double>(qq_n) - qq0_sum / static_cast<double>(qq0_n);
      return MetricValue::ratio(diff, c_sum / static_cast<double>(c_n));
    }
  }
  return {};
}

template MetricValue oracle_metric(AttentionMetric, const BasicAttentionRecord<float>&,
                                   const BasicAttentionRecord<float>*, const TokenSegmentation&, std::size_t);
template MetricValue oracle_metric(AttentionMetric, const BasicAttentionRecord<double>&,
                                   const BasicAttentionRecord<double>*, const TokenSegmentation&, std::size_t);

double oracle_cider(const std::string& candidate, std::span<const std::string> refs,
                    std::span<const std::vector<std::string>> corpus, CiderVariant variant) {
  if (refs.empty()) throw DomainError("oracle_cider: no references");
  const auto cand_tokens = tokenize(candidate);
  if (cand_tokens.empty()) return 0.0;

  using Gram = std::vector<std::string>;
  auto grams_of = [](const std::vector<std::string>& tokens, std::size_t n) {
    std::vector<Gram> out;
    for (std::size_t s = 0; s + n <= tokens.size(); ++s) out.emplace_back(tokens.begin() + s, tokens.begin() + s + n);
    return out;
  };
  auto contains = [&](const std::string& caption, const Gram& g) {
    for (const auto& h : grams_of(tokenize(caption), g.size())) {
      if (h == g) return true;
    }
    return false;
  };
  auto idf = [&](const Gram& g) {
    std::size_t df = 0;
    for (const auto& doc : corpus) {
      for (const auto& caption : doc) {
        if (contains(caption, g)) {
          ++df;
          break;
        }
      }
    }
    return std::log(static_cast<double>(corpus.size()) / std::max<double>(1.0, static_cast<double>(df)));
  };

  double total = 0.0;
  for (const auto& ref : refs) {
    const auto ref_tokens = tokenize(ref);
    const double delta = static_cast<double>(cand_tokens.size()) - static_cast<double>(ref_tokens.size());
    const double penalty = variant == CiderVariant::CiderD ? std::exp(-delta * delta / 72.0) : 1.0;
    double per_ref = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
      std::vector<Gram> vocab;
      auto add = [&](const Gram& g) {
        if (std::find(vocab.begin(), vocab.end(), g) == vocab.end()) vocab.push_back(g);
      };
      const auto cg = grams_of(cand_tokens, n);
      const auto rg = grams_of(ref_tokens, n);
      for (const auto& g : cg) add(g);
      for (const auto& g : rg) add(g);

      std::vector<double> cv(vocab.size()), rv(vocab.size());
      for (std::size_t v = 0; v < vocab.size(); ++v) {
        const double w = idf(vocab[v]);
        cv[v] = static_cast<double>(std::count(cg.begin(), cg.end(), vocab[v])) * w;
        rv[v] = static_cast<double>(std::count(rg.begin(), rg.end(), vocab[v])) * w;
      }
      double dot = 0.0, cn = 0.0, rn = 0.0;
      for (std::size_t v = 0; v < vocab.size(); ++v) {
        const double c = variant == CiderVariant::CiderD ? std::min(cv[v], rv[v]) : cv[v];
        dot += c * rv[v];
        cn += cv[v] * cv[v];
        rn += rv[v] * rv[v];
      }
      double sim = dot;
      if (cn > 0.0 && rn > 0.0) sim /= std::sqrt(cn) * std::sqrt(rn);
      per_ref += sim * penalty;
    }
    total += per_ref / 4.0;
  }
  return total / static_cast<double>(refs.size()) * 10.0;
}

SynthSpec synth_spec_from_json(const nlohmann::json& doc, const TokenSegmentation& seg) {
  SynthSpec spec;
  spec.seg = seg;
  try {
    spec.n_layers = doc.value("n_layers", std::size_t{1});
    spec.n_heads = doc.value("n_heads", std::size_t{1});
    spec.anchor_strength = doc.value("anchor_strength", 0.0);
    spec.window_strength = doc.value("window_strength", 0.0);
    spec.noise = doc.value("noise", 0.0);
    spec.seed = doc.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace iclkit
