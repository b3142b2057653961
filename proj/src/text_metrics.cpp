#include "iclkit/text_metrics.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "iclkit/errors.hpp"
#include "iclkit/interchange.hpp"

namespace iclkit {

using nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80) {
      current.push_back(ch);
    } else if (c >= 'A' && c <= 'Z') {
      current.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

NGramProfile::NGramProfile(std::span<const std::string> tokens) : length_(tokens.size()) {
  for (std::size_t n = 1; n <= kMaxN; ++n) {
    for (std::size_t start = 0; start + n <= tokens.size(); ++start) {
      std::string key = tokens[start];
      for (std::size_t t = 1; t < n; ++t) {
        key += ' ';
        key += tokens[start + t];
      }
      ++counts_[n - 1][key];
    }
  }
}

DocumentFrequency DocumentFrequency::from_documents(std::span<const std::vector<std::string>> documents) {
  DocumentFrequency out;
  out.document_count_ = documents.size();
  for (const auto& doc : documents) {
    std::set<std::string> present;
    for (const auto& caption : doc) {
      const auto profile = NGramProfile::of(caption);
      for (std::size_t n = 1; n <= NGramProfile::kMaxN; ++n) {
        for (const auto& [gram, count] : profile.counts(n)) present.insert(gram);
      }
    }
    for (const auto& gram : present) ++out.df_[gram];
  }
  return out;
}

int DocumentFrequency::df(const std::string& ngram) const {
  auto it = df_.find(ngram);
  return it == df_.end() ? 0 : it->second;
}

double DocumentFrequency::idf(const std::string& ngram) const {
  return std::log(static_cast<double>(document_count_)) - std::log(std::max(1.0, static_cast<double>(df(ngram))));
}

namespace {

struct TfIdf {
  std::array<std::map<std::string, double>, NGramProfile::kMaxN> vec;
  std::array<double, NGramProfile::kMaxN> norm{};
  std::size_t length = 0;
};

TfIdf weigh(const NGramProfile& profile, const DocumentFrequency& df) {
  TfIdf out;
  out.length = profile.length();
  for (std::size_t n = 1; n <= NGramProfile::kMaxN; ++n) {
    double sq = 0.0;
    for (const auto& [gram, count] : profile.counts(n)) {
      const double w = count * df.idf(gram);
      out.vec[n - 1].emplace(gram, w);
      sq += w * w;
    }
    out.norm[n - 1] = std::sqrt(sq);
  }
  return out;
}

}  // namespace

CiderScore cider(std::string_view candidate, std::span<const std::string> refs, const DocumentFrequency& df,
                 const CiderOptions& options) {
  if (refs.empty()) throw DomainError("cider: reference list is empty");
  const auto cand_profile = NGramProfile::of(candidate);
  if (cand_profile.length() == 0) return {0.0, true};
  const TfIdf cand = weigh(cand_profile, df);
  const bool clipped = options.variant == CiderVariant::CiderD;

  std::array<double, NGramProfile::kMaxN> sum{};
  for (const auto& ref_text : refs) {
    const TfIdf ref = weigh(NGramProfile::of(ref_text), df);
    const double delta = static_cast<double>(cand.length) - static_cast<double>(ref.length);
    const double penalty = clipped ? std::exp(-(delta * delta) / (2.0 * options.sigma * options.sigma)) : 1.0;
    for (std::size_t n = 0; n < NGramProfile::kMaxN; ++n) {
      double overlap = 0.0;
      for (const auto& [gram, w] : cand.vec[n]) {
        auto it = ref.vec[n].find(gram);
        if (it == ref.vec[n].end()) continue;
        overlap += (clipped ? std::min(w, it->second) : w) * it->second;
      }
      if (cand.norm[n] != 0.0 && ref.norm[n] != 0.0) overlap /= cand.norm[n] * ref.norm[n];
      sum[n] += overlap * penalty;
    }
  }
  double mean = 0.0;
  for (double s : sum) mean += s;
  mean /= static_cast<double>(NGramProfile::kMaxN);
  return {mean / static_cast<double>(refs.size()) * 10.0, false};
}

CiderScore shortcut_cider(std::string_view generated, std::span<const std::string> ice_captions,
                          const CiderOptions& options) {
  if (ice_captions.empty()) throw DomainError("shortcut_cider: no ICE captions");
  const auto refs = ice_captions.first(std::min(kShortcutRefCount, ice_captions.size()));
  std::vector<std::vector<std::string>> docs;
  for (const auto& r : refs) docs.push_back({r});
  return cider(generated, refs, DocumentFrequency::from_documents(docs), options);
}

// -------------------------------------------------------------------- CHAIR

ChairLexicon::ChairLexicon(std::set<std::string> categories, std::map<std::string, std::string> synonyms)
    : categories_(std::move(categories)) {
  auto add = [&](const std::string& surface, const std::string& category) {
    auto tokens = tokenize(surface);
    if (tokens.empty()) throw DataError("lexicon surface form '" + surface + "' has no word characters");
    auto [it, inserted] = surfaces_.emplace(tokens, category);
    if (!inserted && it->second != category) {
      throw DataError("lexicon surface form '" + surface + "' maps to both '" + it->second + "' and '" + category +
                      "'");
    }
    longest_ = std::max(longest_, tokens.size());
  };
  for (const auto& [surface, category] : synonyms) {
    if (!categories_.contains(category)) {
      throw DataError("synonym '" + surface + "' maps to unknown category '" + category + "'");
    }
    add(surface, category);
  }
  for (const auto& category : categories_) {
    if (!surfaces_.contains(tokenize(category))) add(category, category);
  }
}

std::vector<ObjectMention> ChairLexicon::find_mentions(std::string_view caption) const {
  const auto tokens = tokenize(caption);
  std::vector<ObjectMention> out;
  std::size_t pos = 0;
  while (pos < tokens.size()) {
    std::size_t matched = 0;
    for (std::size_t len = std::min(longest_, tokens.size() - pos); len > 0; --len) {
      std::vector<std::string> window(tokens.begin() + static_cast<std::ptrdiff_t>(pos),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(pos + len));
      if (auto it = surfaces_.find(window); it != surfaces_.end()) {
        std::string surface = window[0];
        for (std::size_t t = 1; t < window.size(); ++t) surface += ' ' + window[t];
        out.push_back({std::move(surface), it->second, pos, false});
        matched = len;
        break;
      }
    }
    pos += matched > 0 ? matched : 1;
  }
  return out;
}

ChairLexicon chair_lexicon_from_json(const json& doc) {
  try {
    return ChairLexicon(doc.at("categories").get<std::set<std::string>>(),
                        doc.value("synonyms", std::map<std::string, std::string>{}));
  } catch (const json::exception& e) {
    throw DataError(std::string("CHAIR lexicon: ") + e.what());
  }
}

ChairLexicon load_chair_lexicon(const std::filesystem::path& path) {
  try {
    return chair_lexicon_from_json(read_json_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

ChairResult chair(std::span<const std::pair<std::string, std::string>> captions, const CaptionDataset& dataset,
                  const ChairLexicon& lexicon) {
  ChairResult result;
  for (const auto& [image_id, caption] : captions) {
    const auto& gt = dataset.at(image_id).gt_objects;
    if (!gt) throw DataError("image '" + image_id + "' has no gt_objects for CHAIR");
    ChairDetail detail{image_id, lexicon.find_mentions(caption), 0};
    for (auto& m : detail.mentions) {
      m.hallucinated = !gt->contains(m.category);
      if (m.hallucinated) ++detail.hallucinated;
    }
    result.mentions += detail.mentions.size();
    result.hallucinated_mentions += detail.hallucinated;
    if (detail.hallucinated > 0) ++result.hallucinated_captions;
    result.details.push_back(std::move(detail));
  }
  if (result.mentions > 0) {
    result.chair_i = static_cast<double>(result.hallucinated_mentions) / static_cast<double>(result.mentions);
  }
  if (!captions.empty()) {
    result.chair_s = static_cast<double>(result.hallucinated_captions) / static_cast<double>(captions.size());
  }
  return result;
}

}  // namespace iclkit
