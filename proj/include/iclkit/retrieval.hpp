#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iclkit/embedding.hpp"
#include "iclkit/errors.hpp"

namespace iclkit {

enum class RetrievalMethod { RS, SIIR };

std::string_view method_name(RetrievalMethod m);
RetrievalMethod method_from_name(std::string_view name);

struct ScoredItem {
  std::string id;
  double score = 0.0;

  friend bool operator==(const ScoredItem&, const ScoredItem&) = default;
};

struct RetrievalResult {
  std::string query_id;
  RetrievalMethod method = RetrievalMethod::RS;
  std::vector<ScoredItem> items;

  std::vector<std::string> item_ids() const;
};

// dot(a, b) / (|a| |b|), accumulated in double. Works on any pair of Eigen
// vector expressions of the same length.
template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw DomainError("cosine_similarity: dimension mismatch");
  const auto ad = a.template cast<double>();
  const auto bd = b.template cast<double>();
  const double na = ad.norm();
  const double nb = bd.norm();
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine_similarity: zero vector");
  return ad.dot(bd) / (na * nb);
}

// Top-k corpus items by cosine similarity to the query's embedding, query
// excluded, descending score with ties broken by ascending id.
RetrievalResult siir_retrieve(const std::string& query_id, const EmbeddingTable& table, std::size_t k);

// k distinct ids drawn uniformly without replacement from `ids` minus
// `exclude`, via a partial Fisher-Yates shuffle driven by
// Xoshiro256ss(seed).bounded(). Candidate order is the order of `ids`.
RetrievalResult rs_sample(std::span<const std::string> ids, std::size_t k, std::uint64_t seed,
                          const std::string& exclude);

}  // namespace iclkit
