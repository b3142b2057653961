#include "iclkit/segmentation.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <string>

#include "iclkit/errors.hpp"

namespace iclkit {

namespace {

constexpr std::string_view kRoleNames[] = {"BOS", "IMAGE_MARK", "CONTEXT_TEXT", "PERIOD", "DELIM", "QUERY"};

}  // namespace

std::string_view role_name(Role role) { return kRoleNames[static_cast<int>(role)]; }

Role role_from_name(std::string_view name) {
  for (int r = 0; r < 6; ++r) {
    if (kRoleNames[r] == name) return static_cast<Role>(r);
  }
  throw DataError("unknown token role '" + std::string(name) + "'");
}

TokenSegmentation::TokenSegmentation(std::vector<TokenLabel> labels) : labels_(std::move(labels)) {
  const std::size_t n = labels_.size();
  if (n < 2) throw DataError("segmentation needs at least two tokens for the query set");

  std::optional<std::size_t> current_ice;
  bool ice_closed = false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& label = labels_[i];
    const bool tail = i + 2 >= n;
    if ((label.role == Role::Query) != tail) {
      throw DataError("query role must label exactly the last two tokens (token " + std::to_string(i) + ")");
    }
    if ((label.role == Role::Query || label.role == Role::Bos) && label.ice_index) {
      throw DataError("token " + std::to_string(i) + " with role " + std::string(role_name(label.role)) +
                      " cannot belong to an ICE");
    }
    if (label.role == Role::ContextText && !label.ice_index) {
      throw DataError("context token " + std::to_string(i) + " has no ICE index");
    }

    if (label.ice_index) {
      const std::size_t k = *label.ice_index;
      if (!current_ice || k != *current_ice) {
        const std::size_t expected = current_ice ? *current_ice + 1 : 0;
        if (k != expected) {
          throw DataError("ICE index " + std::to_string(k) + " at token " + std::to_string(i) +
                          " breaks contiguous ordering (expected " + std::to_string(expected) + ")");
        }
        current_ice = k;
        ice_tokens_.emplace_back();
        ice_context_.emplace_back();
        ice_closed = false;
      } else if (ice_closed) {
        throw DataError("ICE " + std::to_string(k) + " is not contiguous (token " + std::to_string(i) + ")");
      }
      ice_tokens_[k].push_back(i);
      if (label.role == Role::ContextText) ice_context_[k].push_back(i);
    } else if (current_ice) {
      ice_closed = true;
    }

    if (is_anchor(label.role)) {
      anchors_.push_back(i);
    } else if (label.role == Role::Query) {
      queries_.push_back(i);
    } else {
      context_.push_back(i);
    }
  }
}

bool TokenSegmentation::is_anchor_or_query(std::size_t i) const {
  const Role r = labels_.at(i).role;
  return is_anchor(r) || r == Role::Query;
}

TokenSegmentation segmentation_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw DataError("segmentation must be a JSON array of token records");
  std::vector<std::optional<TokenLabel>> slots(doc.size());
  for (const auto& rec : doc) {
    if (!rec.is_object() || !rec.contains("index") || !rec.contains("role")) {
      throw DataError("segmentation record needs 'index' and 'role'");
    }
    const auto index = rec.at("index").get<std::size_t>();
    if (index >= slots.size() || slots[index]) {
      throw DataError("segmentation index " + std::to_string(index) + " is out of range or repeated");
    }
    TokenLabel label{role_from_name(rec.at("role").get<std::string>()), std::nullopt};
    if (auto it = rec.find("ice_index"); it != rec.end() && !it->is_null()) {
      label.ice_index = it->get<std::size_t>();
    }
    slots[index] = label;
  }
  std::vector<TokenLabel> labels;
  labels.reserve(slots.size());
  for (auto& s : slots) labels.push_back(*s);
  return TokenSegmentation(std::move(labels));
}

nlohmann::json segmentation_to_json(const TokenSegmentation& seg) {
  auto out = nlohmann::json::array();
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const auto& label = seg[i];
    out.push_back({{"index", i},
                   {"role", role_name(label.role)},
                   {"ice_index", label.ice_index ? nlohmann::json(*label.ice_index) : nlohmann::json(nullptr)}});
  }
  return out;
}

}  // namespace iclkit
