#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "iclkit/interchange.hpp"
#include "iclkit/random.hpp"
#include "iclkit/segmentation.hpp"

namespace iclkit::test {

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(ICLKIT_FIXTURES) / rel; }

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("iclkit_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

// Builds a segmentation from a compact role string: B bos, I image mark,
// T context text, P period, D delim, Q query, and a digit for the ICE index
// following I/T/P/D. Example: "B I0 T0 D0 I1 T1 Q Q".
inline TokenSegmentation seg_from(const std::string& spec) {
  std::vector<TokenLabel> labels;
  std::size_t pos = 0;
  while (pos < spec.size()) {
    if (spec[pos] == ' ') {
      ++pos;
      continue;
    }
    const char c = spec[pos++];
    Role role = Role::Bos;
    switch (c) {
      case 'B': role = Role::Bos; break;
      case 'I': role = Role::ImageMark; break;
      case 'T': role = Role::ContextText; break;
      case 'P': role = Role::Period; break;
      case 'D': role = Role::Delim; break;
      case 'Q': role = Role::Query; break;
      default: throw std::invalid_argument("bad role char");
    }
    std::optional<std::size_t> ice;
    if (pos < spec.size() && std::isdigit(static_cast<unsigned char>(spec[pos]))) ice = spec[pos++] - '0';
    labels.push_back({role, ice});
  }
  return TokenSegmentation(std::move(labels));
}

// Random causal row-stochastic record with strictly positive visible weights.
template <typename Scalar = double>
BasicAttentionRecord<Scalar> random_record(std::size_t layers, std::size_t heads, std::size_t n, Xoshiro256ss& rng,
                                           Variant variant = Variant::WithQueryImage) {
  auto t = BasicTensor<Scalar>::zeros(DType::F32, {layers, heads, n, n});
  for (std::size_t l = 0; l < layers; ++l)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t j = 0; j < n; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i <= j; ++i) {
          const double w = 0.05 + rng.uniform();
          t(l, h, j, i) = static_cast<Scalar>(w);
          sum += w;
        }
        for (std::size_t i = 0; i <= j; ++i) t(l, h, j, i) = static_cast<Scalar>(t(l, h, j, i) / sum);
      }
  return {std::move(t), "rand", variant};
}

template <typename Scalar = double>
BasicAttentionRecord<Scalar> uniform_record(std::size_t layers, std::size_t heads, std::size_t n,
                                            Variant variant = Variant::WithQueryImage) {
  auto t = BasicTensor<Scalar>::zeros(DType::F32, {layers, heads, n, n});
  for (std::size_t l = 0; l < layers; ++l)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i <= j; ++i) t(l, h, j, i) = Scalar(1) / static_cast<Scalar>(j + 1);
  return {std::move(t), "uniform", variant};
}

}  // namespace iclkit::test
