#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iclkit/captions.hpp"
#include "iclkit/retrieval.hpp"

namespace iclkit {

// Lowercase ASCII letters and split on anything that is not [a-z0-9].
// Bytes >= 0x80 are kept as word characters so UTF-8 text is not split
// mid-codepoint.
std::vector<std::string> tokenize(std::string_view text);

// Counts of the 1..4-grams of one caption. N-gram keys are the tokens
// joined by single spaces.
class NGramProfile {
 public:
  static constexpr std::size_t kMaxN = 4;

  explicit NGramProfile(std::span<const std::string> tokens);
  static NGramProfile of(std::string_view text) { return NGramProfile(tokenize(text)); }

  const std::map<std::string, int>& counts(std::size_t n) const { return counts_.at(n - 1); }
  std::size_t length() const { return length_; }

 private:
  std::array<std::map<std::string, int>, kMaxN> counts_;
  std::size_t length_ = 0;
};

// Document frequencies over a reference corpus. Each document is the
// reference caption set of one image; an n-gram counts at most once per
// document.
class DocumentFrequency {
 public:
  static DocumentFrequency from_documents(std::span<const std::vector<std::string>> documents);

  // log(N_docs / max(1, df(ngram)))
  double idf(const std::string& ngram) const;
  int df(const std::string& ngram) const;
  std::size_t document_count() const { return document_count_; }

 private:
  std::map<std::string, int> df_;
  std::size_t document_count_ = 0;
};

enum class CiderVariant { CiderD, Plain };

struct CiderOptions {
  CiderVariant variant = CiderVariant::CiderD;
  double sigma = 6.0;
};

struct CiderScore {
  double value = 0.0;
  // Candidate had no tokens; value is 0.
  bool empty_candidate = false;
};

// CIDEr-D by default: per n = 1..4, TF-IDF vectors, clipped overlap
// min(cand, ref) * ref over |cand| |ref|, Gaussian length penalty, averaged
// over refs and n, times 10. Plain mode drops clipping and the penalty.
CiderScore cider(std::string_view candidate, std::span<const std::string> refs, const DocumentFrequency& df,
                 const CiderOptions& options = {});

inline constexpr std::size_t kShortcutRefCount = 4;

// CIDEr of `generated` against the first four ICE captions, with document
// frequencies taken over those same captions (one document each). Large
// values mean the output copies its demonstrations.
CiderScore shortcut_cider(std::string_view generated, std::span<const std::string> ice_captions,
                          const CiderOptions& options = {});

struct ObjectMention {
  std::string surface;
  std::string category;
  std::size_t token_offset = 0;
  bool hallucinated = false;
};

class ChairLexicon {
 public:
  ChairLexicon() = default;
  // Category names are implicit surface forms of themselves. Throws
  // DataError if a synonym targets an unknown category or two surface forms
  // tokenize identically while naming different categories.
  ChairLexicon(std::set<std::string> categories, std::map<std::string, std::string> synonyms);

  const std::set<std::string>& categories() const { return categories_; }

  // Greedy left-to-right scan taking the longest surface form at each
  // position; matched tokens are consumed.
  std::vector<ObjectMention> find_mentions(std::string_view caption) const;

 private:
  std::set<std::string> categories_;
  std::map<std::vector<std::string>, std::string> surfaces_;
  std::size_t longest_ = 0;
};

ChairLexicon chair_lexicon_from_json(const nlohmann::json& doc);
ChairLexicon load_chair_lexicon(const std::filesystem::path& path);

struct ChairDetail {
  std::string image_id;
  std::vector<ObjectMention> mentions;
  std::size_t hallucinated = 0;
};

struct ChairResult {
  double chair_i = 0.0;  // hallucinated mentions / all mentions, 0 when none
  double chair_s = 0.0;  // captions with a hallucination / all captions
  std::size_t mentions = 0;
  std::size_t hallucinated_mentions = 0;
  std::size_t hallucinated_captions = 0;
  std::vector<ChairDetail> details;
};

ChairResult chair(std::span<const std::pair<std::string, std::string>> captions, const CaptionDataset& dataset,
                  const ChairLexicon& lexicon);

inline constexpr double kClipScoreWeight = 2.5;

template <typename DerivedA, typename DerivedB>
double clipscore(const Eigen::MatrixBase<DerivedA>& image_embedding, const Eigen::MatrixBase<DerivedB>& text_embedding,
                 double weight = kClipScoreWeight) {
  const double cos = cosine_similarity(image_embedding, text_embedding);
  return weight * (cos > 0.0 ? cos : 0.0);
}

}  // namespace iclkit
