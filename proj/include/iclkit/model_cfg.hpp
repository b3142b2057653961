#pragma once

#include <cstdint>

namespace iclkit {

// Host model dimensions needed for KV-cache sizing.
struct ModelCfg {
  std::uint64_t n_layers = 0;
  std::uint64_t n_heads = 0;
  std::uint64_t head_dim = 0;
  std::uint64_t kv_bytes_per_element = 0;

  // Throws DomainError unless every field is positive.
  void validate() const;

  friend bool operator==(const ModelCfg&, const ModelCfg&) = default;
};

}  // namespace iclkit
