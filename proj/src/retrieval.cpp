#include "iclkit/retrieval.hpp"

#include <algorithm>
#include <numeric>

#include "iclkit/random.hpp"

namespace iclkit {

std::string_view method_name(RetrievalMethod m) { return m == RetrievalMethod::RS ? "RS" : "SIIR"; }

RetrievalMethod method_from_name(std::string_view name) {
  if (name == "RS") return RetrievalMethod::RS;
  if (name == "SIIR") return RetrievalMethod::SIIR;
  throw ConfigError("unknown retrieval method '" + std::string(name) + "'");
}

std::vector<std::string> RetrievalResult::item_ids() const {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(item.id);
  return out;
}

RetrievalResult siir_retrieve(const std::string& query_id, const EmbeddingTable& table, std::size_t k) {
  const std::size_t q = table.index_of(query_id);
  if (k + 1 > table.size()) {
    throw DomainError("SIIR: k = " + std::to_string(k) + " exceeds corpus size minus the query (" +
                      std::to_string(table.size() - 1) + ")");
  }

  const Eigen::MatrixXd corpus = table.matrix().cast<double>();
  const Eigen::VectorXd query = corpus.row(static_cast<Eigen::Index>(q)).transpose();
  const Eigen::VectorXd norms = corpus.rowwise().norm();
  const double query_norm = query.norm();
  if (query_norm == 0.0) throw DomainError("SIIR: query '" + query_id + "' has a zero embedding");
  const Eigen::VectorXd scores = (corpus * query).cwiseQuotient(norms * query_norm);

  std::vector<std::size_t> order;
  order.reserve(table.size() - 1);
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (i == q) continue;
    if (norms[static_cast<Eigen::Index>(i)] == 0.0) {
      throw DomainError("SIIR: corpus item '" + table.ids()[i] + "' has a zero embedding");
    }
    order.push_back(i);
  }
  const auto& ids = table.ids();
  auto better = [&](std::size_t a, std::size_t b) {
    const double sa = scores[static_cast<Eigen::Index>(a)], sb = scores[static_cast<Eigen::Index>(b)];
    if (sa != sb) return sa > sb;
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);

  RetrievalResult result{query_id, RetrievalMethod::SIIR, {}};
  result.items.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    result.items.push_back({ids[order[r]], scores[static_cast<Eigen::Index>(order[r])]});
  }
  return result;
}

RetrievalResult rs_sample(std::span<const std::string> ids, std::size_t k, std::uint64_t seed,
                          const std::string& exclude) {
  std::vector<std::string> pool;
  pool.reserve(ids.size());
  for (const auto& id : ids) {
    if (id != exclude) pool.push_back(id);
  }
  if (k > pool.size()) {
    throw DomainError("RS: k = " + std::to_string(k) + " exceeds the " + std::to_string(pool.size()) +
                      " available ids");
  }
  Xoshiro256ss rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.bounded(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  RetrievalResult result{exclude, RetrievalMethod::RS, {}};
  for (std::size_t i = 0; i < k; ++i) result.items.push_back({pool[i], 0.0});
  return result;
}

}  // namespace iclkit
