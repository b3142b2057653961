#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "iclkit/tensor.hpp"

namespace iclkit {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Precomputed embeddings, one row per id.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  // Throws ConsistencyError on duplicate ids, row-count mismatch, or a
  // `normalized` flag contradicted by the row norms (tolerance 1e-5).
  EmbeddingTable(std::vector<std::string> ids, RowMatrixXf matrix, bool normalized);
  static EmbeddingTable from_tensor(std::vector<std::string> ids, const Tensor& tensor, bool normalized);

  const std::vector<std::string>& ids() const { return ids_; }
  const RowMatrixXf& matrix() const { return matrix_; }
  bool normalized() const { return normalized_; }
  std::size_t size() const { return ids_.size(); }
  Eigen::Index dim() const { return matrix_.cols(); }

  std::optional<std::size_t> find(const std::string& id) const;
  // Throws DataError for unknown ids.
  std::size_t index_of(const std::string& id) const;
  auto row(std::size_t i) const { return matrix_.row(static_cast<Eigen::Index>(i)); }

  Tensor to_tensor() const;

 private:
  std::vector<std::string> ids_;
  RowMatrixXf matrix_;
  bool normalized_ = false;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace iclkit
