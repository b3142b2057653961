#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "iclkit/embedding.hpp"
#include "iclkit/model_cfg.hpp"
#include "iclkit/segmentation.hpp"
#include "iclkit/tensor.hpp"

namespace iclkit {

// Container layout (.iclt), little-endian throughout:
//   "ICLT" | version u8 = 1 | dtype u8 | rank u8 | pad u8 = 0
//   rank x u64 extents
//   row-major payload
inline constexpr char kTensorMagic[4] = {'I', 'C', 'L', 'T'};
inline constexpr std::uint8_t kTensorVersion = 1;
inline constexpr std::size_t kTensorHeaderSize = 8;

void write_tensor(const Tensor& tensor, std::ostream& out);
Tensor read_tensor(std::istream& in);
void save_tensor(const Tensor& tensor, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

enum class Variant { WithQueryImage, WithoutQueryImage };
std::string_view variant_name(Variant v);
Variant variant_from_name(std::string_view name);

// Row-stochastic tolerance applied to loaded attention dumps; wide enough
// to absorb f16 rounding of softmax outputs.
inline constexpr double kRowSumTolerance = 1e-3;

// Attention weights of shape [layers][heads][seq][seq]; entry [l,h,row,col]
// is how much query token `row` attends to key token `col`.
template <typename Scalar>
struct BasicAttentionRecord {
  BasicTensor<Scalar> tensor;
  std::string sample_id;
  Variant variant = Variant::WithQueryImage;

  std::size_t layer_count() const { return static_cast<std::size_t>(tensor.extent(0)); }
  std::size_t head_count() const { return static_cast<std::size_t>(tensor.extent(1)); }
  std::size_t seq_len() const { return static_cast<std::size_t>(tensor.extent(2)); }

  Scalar weight(std::size_t layer, std::size_t head, std::size_t row, std::size_t col) const {
    return tensor(layer, head, row, col);
  }

  // Checks rank/shape, causality (zero above the diagonal) and that each
  // row sums to 1 within `tolerance`. Throws ConsistencyError.
  void validate(double tolerance = kRowSumTolerance) const;
};

using AttentionRecord = BasicAttentionRecord<float>;

extern template struct BasicAttentionRecord<float>;
extern template struct BasicAttentionRecord<double>;

struct GenerationSettings {
  std::optional<double> temperature;
  std::optional<int> shots;
};

struct ModelInfo {
  std::string name;
  ModelCfg cfg;
  std::optional<std::string> attention_dtype;
  std::optional<std::string> layer_indexing;  // how captured layers map to model layers
  GenerationSettings generation;
};

struct RunSample {
  std::string id;
  TokenSegmentation segmentation;
  std::optional<AttentionRecord> with_image;
  std::optional<AttentionRecord> without_image;
  std::optional<std::string> caption;
};

// Immutable once loaded.
struct RunBundle {
  int version = 1;
  ModelInfo model;
  std::vector<RunSample> samples;
  std::map<std::string, EmbeddingTable> embeddings;  // "image", "text", ...
  std::filesystem::path root;
  // Mask/prune plan the run was captured under, if any.
  std::optional<std::string> plan_file;
  std::optional<std::string> plan_sha256;

  const RunSample* find(const std::string& sample_id) const;
};

inline constexpr int kManifestVersion = 1;

// Accepts a manifest file or a run directory holding manifest.json. Every
// referenced file is read and cross-checked before returning.
RunBundle load_run(const std::filesystem::path& manifest_path);

TokenSegmentation load_segmentation(const std::filesystem::path& path);
void save_segmentation(const TokenSegmentation& seg, const std::filesystem::path& path);

// Embedding table = .iclt matrix + sidecar {"ids": [...], "normalized": bool}.
EmbeddingTable load_embedding_table(const std::filesystem::path& tensor_path,
                                    const std::filesystem::path& ids_path);
void save_embedding_table(const EmbeddingTable& table, const std::filesystem::path& tensor_path,
                          const std::filesystem::path& ids_path);

// Job description handed to the model-side exporter.
struct ExportJob {
  std::string model;
  std::filesystem::path demos;
  std::vector<std::size_t> layers;  // empty: every layer
  std::vector<std::size_t> heads;   // empty: every head
  std::vector<Variant> variants{Variant::WithQueryImage};
  std::optional<std::filesystem::path> plan;
  double temperature = 1.0;
  std::size_t max_tokens = 20;
  DType attention_dtype = DType::F16;
  std::filesystem::path out;

  // Throws ConfigError: empty model, no or repeated variants, temperature
  // <= 0, max_tokens == 0, attention dtype other than f16/f32.
  void validate() const;
};

// Relative paths resolve against `base_dir`.
ExportJob export_job_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
nlohmann::json export_job_to_json(const ExportJob& job);

nlohmann::json read_json_file(const std::filesystem::path& path);
// Writes to a sibling temp file and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace iclkit
