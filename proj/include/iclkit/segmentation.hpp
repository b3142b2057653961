#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace iclkit {

enum class Role { Bos, ImageMark, ContextText, Period, Delim, Query };

std::string_view role_name(Role role);
Role role_from_name(std::string_view name);

// Anchors are the tokens that collect attention: BOS, image markers,
// terminal periods and chunk delimiters.
constexpr bool is_anchor(Role role) {
  return role == Role::Bos || role == Role::ImageMark || role == Role::Period || role == Role::Delim;
}

struct TokenLabel {
  Role role;
  std::optional<std::size_t> ice_index;

  friend bool operator==(const TokenLabel&, const TokenLabel&) = default;
};

// Per-token role labels for one prompt.
//
// Validated on construction:
//  * exactly the last two tokens carry Role::Query;
//  * ICE indices start at 0, are consecutive, and each ICE occupies one
//    contiguous index range in ascending order;
//  * BOS and query tokens carry no ICE index, context tokens always do.
class TokenSegmentation {
 public:
  TokenSegmentation() = default;
  explicit TokenSegmentation(std::vector<TokenLabel> labels);

  std::size_t size() const { return labels_.size(); }
  const TokenLabel& operator[](std::size_t i) const { return labels_[i]; }
  const std::vector<TokenLabel>& labels() const { return labels_; }

  const std::vector<std::size_t>& anchors() const { return anchors_; }
  const std::vector<std::size_t>& queries() const { return queries_; }
  const std::vector<std::size_t>& context() const { return context_; }

  std::size_t ice_count() const { return ice_tokens_.size(); }
  // Every token labelled with ICE `k`, anchors included.
  const std::vector<std::size_t>& ice_tokens(std::size_t k) const { return ice_tokens_.at(k); }
  // Context (non-anchor) tokens of ICE `k`.
  const std::vector<std::size_t>& ice_context(std::size_t k) const { return ice_context_.at(k); }

  bool is_anchor_or_query(std::size_t i) const;

  friend bool operator==(const TokenSegmentation& a, const TokenSegmentation& b) {
    return a.labels_ == b.labels_;
  }

 private:
  std::vector<TokenLabel> labels_;
  std::vector<std::size_t> anchors_;
  std::vector<std::size_t> queries_;
  std::vector<std::size_t> context_;
  std::vector<std::vector<std::size_t>> ice_tokens_;
  std::vector<std::vector<std::size_t>> ice_context_;
};

// Structured-text form: array of {index, role, ice_index} records.
TokenSegmentation segmentation_from_json(const nlohmann::json& doc);
nlohmann::json segmentation_to_json(const TokenSegmentation& seg);

}  // namespace iclkit
