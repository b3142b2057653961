#include "iclkit/interchange.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <sstream>

namespace iclkit {

namespace fs = std::filesystem;
using nlohmann::json;

void ModelCfg::validate() const {
  if (n_layers == 0 || n_heads == 0 || head_dim == 0 || kv_bytes_per_element == 0) {
    throw DomainError("model config fields n_layers, n_heads, head_dim, kv_bytes_per_element must be positive");
  }
}

// ---------------------------------------------------------------- tensors

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((v >> (8 * b)) & 0xFF);
  out.write(bytes, 8);
}

std::uint64_t get_u64(const unsigned char* bytes) {
  std::uint64_t v = 0;
  for (int b = 7; b >= 0; --b) v = (v << 8) | bytes[b];
  return v;
}

void encode_scalar(DType dtype, float value, unsigned char* out) {
  switch (dtype) {
    case DType::F32: {
      const auto bits = std::bit_cast<std::uint32_t>(value);
      for (int b = 0; b < 4; ++b) out[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xFF);
      return;
    }
    case DType::F16: {
      const auto bits = float_to_half_bits(value);
      out[0] = static_cast<unsigned char>(bits & 0xFF);
      out[1] = static_cast<unsigned char>(bits >> 8);
      return;
    }
    case DType::U8: {
      if (!(value >= 0.0f && value <= 255.0f) || std::trunc(value) != value) {
        throw FormatError("u8 tensor holds non-byte value " + std::to_string(value));
      }
      out[0] = static_cast<unsigned char>(value);
      return;
    }
  }
}

float decode_scalar(DType dtype, const unsigned char* in) {
  switch (dtype) {
    case DType::F32: {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | in[b];
      return std::bit_cast<float>(bits);
    }
    case DType::F16:
      return half_bits_to_float(static_cast<std::uint16_t>(in[0] | (in[1] << 8)));
    case DType::U8:
      return static_cast<float>(in[0]);
  }
  return 0.0f;
}

}  // namespace

void write_tensor(const Tensor& tensor, std::ostream& out) {
  if (!is_valid_dtype_code(static_cast<std::uint8_t>(tensor.dtype()))) {
    throw FormatError("unsupported dtype");
  }
  if (tensor.rank() > 255) throw FormatError("tensor rank exceeds 255");
  if (element_count(tensor.shape()) != tensor.size()) throw FormatError("tensor data does not match its shape");

  const char header[kTensorHeaderSize] = {kTensorMagic[0],
                                          kTensorMagic[1],
                                          kTensorMagic[2],
                                          kTensorMagic[3],
                                          static_cast<char>(kTensorVersion),
                                          static_cast<char>(tensor.dtype()),
                                          static_cast<char>(tensor.rank()),
                                          0};
  out.write(header, kTensorHeaderSize);
  for (auto extent : tensor.shape()) put_u64(out, extent);

  const std::size_t width = dtype_width(tensor.dtype());
  constexpr std::size_t kChunk = 1 << 16;
  std::vector<unsigned char> buffer(kChunk * width);
  const auto data = tensor.data();
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, data.size() - start);
    for (std::size_t i = 0; i < n; ++i) encode_scalar(tensor.dtype(), data[start + i], &buffer[i * width]);
    out.write(reinterpret_cast<const char*>(buffer.data()), static_cast<std::streamsize>(n * width));
  }
  if (!out) throw FormatError("failed writing tensor payload");
}

Tensor read_tensor(std::istream& in) {
  unsigned char header[kTensorHeaderSize];
  if (!in.read(reinterpret_cast<char*>(header), kTensorHeaderSize)) {
    throw FormatError("truncated tensor header");
  }
  if (std::memcmp(header, kTensorMagic, 4) != 0) throw FormatError("bad tensor magic");
  if (header[4] != kTensorVersion) {
    throw FormatError("unsupported tensor version " + std::to_string(header[4]));
  }
  if (!is_valid_dtype_code(header[5])) {
    throw FormatError("unsupported dtype code " + std::to_string(header[5]));
  }
  if (header[7] != 0) throw FormatError("nonzero header padding byte");
  const auto dtype = static_cast<DType>(header[5]);
  const std::size_t rank = header[6];

  Shape shape(rank);
  for (auto& extent : shape) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw FormatError("truncated tensor extents");
    extent = get_u64(bytes);
  }
  const std::uint64_t count = element_count(shape);
  const std::size_t width = dtype_width(dtype);
  if (count > std::numeric_limits<std::uint64_t>::max() / width) throw FormatError("tensor payload size overflows");

  // Read in chunks so a forged extent cannot force a huge allocation
  // before truncation is detected.
  std::vector<float> data;
  constexpr std::uint64_t kChunk = 1 << 16;
  std::vector<unsigned char> buffer(kChunk * width);
  for (std::uint64_t done = 0; done < count;) {
    const std::uint64_t n = std::min(kChunk, count - done);
    if (!in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(n * width))) {
      throw FormatError("truncated tensor payload: expected " + std::to_string(count * width) + " bytes");
    }
    for (std::uint64_t i = 0; i < n; ++i) data.push_back(decode_scalar(dtype, &buffer[i * width]));
    done += n;
  }
  return Tensor(dtype, std::move(shape), std::move(data));
}

void save_tensor(const Tensor& tensor, const fs::path& path) {
  std::ostringstream out(std::ios::binary);
  write_tensor(tensor, out);
  write_file_atomic(path, out.str());
}

Tensor load_tensor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open tensor file " + path.string());
  try {
    return read_tensor(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- records

std::string_view variant_name(Variant v) {
  return v == Variant::WithQueryImage ? "with_query_image" : "without_query_image";
}

Variant variant_from_name(std::string_view name) {
  if (name == "with_query_image") return Variant::WithQueryImage;
  if (name == "without_query_image") return Variant::WithoutQueryImage;
  throw DataError("unknown attention variant '" + std::string(name) + "'");
}

template <typename Scalar>
void BasicAttentionRecord<Scalar>::validate(double tolerance) const {
  const auto& shape = tensor.shape();
  if (shape.size() != 4) throw ConsistencyError(sample_id + ": attention tensor must have rank 4");
  if (shape[2] != shape[3]) throw ConsistencyError(sample_id + ": attention matrices must be square");
  if (shape[0] == 0 || shape[1] == 0 || shape[2] == 0) {
    throw ConsistencyError(sample_id + ": attention tensor has an empty axis");
  }
  if (tensor.dtype() == DType::U8) throw ConsistencyError(sample_id + ": attention tensor must be f32 or f16");
  const std::size_t L = layer_count(), H = head_count(), S = seq_len();
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t row = 0; row < S; ++row) {
        double sum = 0.0;
        for (std::size_t col = 0; col < S; ++col) {
          const double w = weight(l, h, row, col);
          if (!std::isfinite(w) || w < 0.0) {
            throw ConsistencyError(sample_id + ": invalid attention weight at layer " + std::to_string(l) +
                                   " head " + std::to_string(h));
          }
          if (col > row && w != 0.0) {
            throw ConsistencyError(sample_id + ": non-causal attention at layer " + std::to_string(l) + " head " +
                                   std::to_string(h) + " row " + std::to_string(row));
          }
          sum += w;
        }
        if (std::abs(sum - 1.0) > tolerance) {
          throw ConsistencyError(sample_id + ": attention row " + std::to_string(row) + " at layer " +
                                 std::to_string(l) + " head " + std::to_string(h) + " sums to " +
                                 std::to_string(sum));
        }
      }
    }
  }
}

template struct BasicAttentionRecord<float>;
template struct BasicAttentionRecord<double>;

// -------------------------------------------------------------- embeddings

EmbeddingTable::EmbeddingTable(std::vector<std::string> ids, RowMatrixXf matrix, bool normalized)
    : ids_(std::move(ids)), matrix_(std::move(matrix)), normalized_(normalized) {
  if (static_cast<Eigen::Index>(ids_.size()) != matrix_.rows()) {
    throw ConsistencyError("embedding table has " + std::to_string(ids_.size()) + " ids but " +
                           std::to_string(matrix_.rows()) + " rows");
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) throw ConsistencyError("duplicate embedding id '" + ids_[i] + "'");
  }
  if (normalized_) {
    for (Eigen::Index r = 0; r < matrix_.rows(); ++r) {
      const double norm = matrix_.row(r).cast<double>().norm();
      if (std::abs(norm - 1.0) > 1e-5) {
        throw ConsistencyError("embedding '" + ids_[static_cast<std::size_t>(r)] +
                               "' is flagged normalized but has norm " + std::to_string(norm));
      }
    }
  }
}

EmbeddingTable EmbeddingTable::from_tensor(std::vector<std::string> ids, const Tensor& tensor, bool normalized) {
  if (tensor.rank() != 2) throw ConsistencyError("embedding tensor must have rank 2");
  if (tensor.dtype() == DType::U8) throw ConsistencyError("embedding tensor must be f32 or f16");
  const auto rows = static_cast<Eigen::Index>(tensor.extent(0));
  const auto cols = static_cast<Eigen::Index>(tensor.extent(1));
  RowMatrixXf matrix = Eigen::Map<const RowMatrixXf>(tensor.data().data(), rows, cols);
  return EmbeddingTable(std::move(ids), std::move(matrix), normalized);
}

std::optional<std::size_t> EmbeddingTable::find(const std::string& id) const {
  if (auto it = index_.find(id); it != index_.end()) return it->second;
  return std::nullopt;
}

std::size_t EmbeddingTable::index_of(const std::string& id) const {
  if (auto i = find(id)) return *i;
  throw DataError("unknown embedding id '" + id + "'");
}

Tensor EmbeddingTable::to_tensor() const {
  std::vector<float> data(matrix_.data(), matrix_.data() + matrix_.size());
  return Tensor(DType::F32, {static_cast<std::uint64_t>(matrix_.rows()), static_cast<std::uint64_t>(matrix_.cols())},
                std::move(data));
}

EmbeddingTable load_embedding_table(const fs::path& tensor_path, const fs::path& ids_path) {
  const json sidecar = read_json_file(ids_path);
  std::vector<std::string> ids;
  bool normalized = false;
  try {
    ids = sidecar.at("ids").get<std::vector<std::string>>();
    normalized = sidecar.value("normalized", false);
  } catch (const json::exception& e) {
    throw LoadError(ids_path.string() + ": " + e.what());
  }
  return EmbeddingTable::from_tensor(std::move(ids), load_tensor(tensor_path), normalized);
}

void save_embedding_table(const EmbeddingTable& table, const fs::path& tensor_path, const fs::path& ids_path) {
  save_tensor(table.to_tensor(), tensor_path);
  const json sidecar = {{"ids", table.ids()}, {"normalized", table.normalized()}};
  write_file_atomic(ids_path, sidecar.dump(2) + "\n");
}

// -------------------------------------------------------------------- files

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw LoadError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

TokenSegmentation load_segmentation(const fs::path& path) {
  const json doc = read_json_file(path);
  try {
    return segmentation_from_json(doc);
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_segmentation(const TokenSegmentation& seg, const fs::path& path) {
  write_file_atomic(path, segmentation_to_json(seg).dump(1) + "\n");
}

// ------------------------------------------------------------------ bundles

const RunSample* RunBundle::find(const std::string& sample_id) const {
  for (const auto& s : samples) {
    if (s.id == sample_id) return &s;
  }
  return nullptr;
}

namespace {

fs::path resolve(const fs::path& root, const std::string& relative) {
  const fs::path p = root / relative;
  if (!fs::exists(p)) throw LoadError("missing file " + p.string());
  return p;
}

AttentionRecord load_record(const fs::path& path, const std::string& sample_id, Variant variant) {
  AttentionRecord rec{load_tensor(path), sample_id, variant};
  rec.validate();
  return rec;
}

}  // namespace

RunBundle load_run(const fs::path& manifest_path) {
  fs::path manifest = manifest_path;
  if (fs::is_directory(manifest)) manifest /= "manifest.json";
  if (!fs::exists(manifest)) throw LoadError("missing file " + manifest.string());

  RunBundle bundle;
  bundle.root = manifest.parent_path();
  const json doc = read_json_file(manifest);

  try {
    bundle.version = doc.at("version").get<int>();
    if (bundle.version != kManifestVersion) {
      throw ConsistencyError("unsupported manifest version " + std::to_string(bundle.version));
    }

    const json& model = doc.at("model");
    bundle.model.name = model.value("name", std::string{});
    bundle.model.cfg.n_layers = model.at("n_layers").get<std::uint64_t>();
    bundle.model.cfg.n_heads = model.at("n_heads").get<std::uint64_t>();
    bundle.model.cfg.head_dim = model.at("head_dim").get<std::uint64_t>();
    bundle.model.cfg.kv_bytes_per_element = model.at("kv_bytes_per_element").get<std::uint64_t>();
    bundle.model.cfg.validate();
    if (model.contains("attention_dtype")) bundle.model.attention_dtype = model.at("attention_dtype").get<std::string>();
    if (model.contains("layer_indexing")) bundle.model.layer_indexing = model.at("layer_indexing").get<std::string>();
    if (auto plan = doc.find("plan"); plan != doc.end() && !plan->is_null()) {
      bundle.plan_file = plan->at("file").get<std::string>();
      bundle.plan_sha256 = plan->value("sha256", std::string{});
    }
    if (auto gen = model.find("generation"); gen != model.end()) {
      if (gen->contains("temperature")) bundle.model.generation.temperature = gen->at("temperature").get<double>();
      if (gen->contains("shots")) bundle.model.generation.shots = gen->at("shots").get<int>();
    }

    std::set<std::string> seen;
    for (const json& entry : doc.at("samples")) {
      RunSample sample;
      sample.id = entry.at("id").get<std::string>();
      if (!seen.insert(sample.id).second) throw ConsistencyError("duplicate sample id '" + sample.id + "'");
      sample.segmentation = load_segmentation(resolve(bundle.root, entry.at("segmentation").get<std::string>()));
      if (auto attn = entry.find("attention"); attn != entry.end()) {
        for (auto it = attn->begin(); it != attn->end(); ++it) {
          const Variant variant = variant_from_name(it.key());
          auto rec = load_record(resolve(bundle.root, it.value().get<std::string>()), sample.id, variant);
          if (rec.seq_len() != sample.segmentation.size()) {
            throw ConsistencyError("sample '" + sample.id + "': attention seq_len " + std::to_string(rec.seq_len()) +
                                   " does not match segmentation token count " +
                                   std::to_string(sample.segmentation.size()));
          }
          if (rec.layer_count() > bundle.model.cfg.n_layers || rec.head_count() > bundle.model.cfg.n_heads) {
            throw ConsistencyError("sample '" + sample.id + "': attention tensor exceeds model layer/head counts");
          }
          (variant == Variant::WithQueryImage ? sample.with_image : sample.without_image) = std::move(rec);
        }
        if (sample.with_image && sample.without_image &&
            sample.with_image->tensor.shape() != sample.without_image->tensor.shape()) {
          throw ConsistencyError("sample '" + sample.id + "': attention variants differ in shape");
        }
      }
      if (auto cap = entry.find("caption"); cap != entry.end() && !cap->is_null()) {
        sample.caption = cap->get<std::string>();
      }
      bundle.samples.push_back(std::move(sample));
    }

    if (auto files = doc.find("files"); files != doc.end()) {
      if (auto emb = files->find("embeddings"); emb != files->end()) {
        for (auto it = emb->begin(); it != emb->end(); ++it) {
          bundle.embeddings.emplace(
              it.key(), load_embedding_table(resolve(bundle.root, it.value().at("tensor").get<std::string>()),
                                             resolve(bundle.root, it.value().at("ids").get<std::string>())));
        }
      }
    }
  } catch (const json::exception& e) {
    throw LoadError(manifest.string() + ": " + e.what());
  }

  // Caption embeddings are keyed by sample id.
  if (auto text = bundle.embeddings.find("text"); text != bundle.embeddings.end()) {
    for (const auto& id : text->second.ids()) {
      if (bundle.find(id) == nullptr) {
        throw ConsistencyError("text embedding id '" + id + "' does not resolve to a sample");
      }
    }
  }
  return bundle;
}

void ExportJob::validate() const {
  if (model.empty()) throw ConfigError("export job: model is empty");
  if (variants.empty()) throw ConfigError("export job: no attention variants requested");
  if (std::set<Variant>(variants.begin(), variants.end()).size() != variants.size()) {
    throw ConfigError("export job: repeated attention variant");
  }
  if (!(temperature > 0.0)) throw ConfigError("export job: temperature must be positive");
  if (max_tokens == 0) throw ConfigError("export job: max_tokens must be positive");
  if (attention_dtype != DType::F16 && attention_dtype != DType::F32) {
    throw ConfigError("export job: attention dtype must be f16 or f32");
  }
}

ExportJob export_job_from_json(const json& doc, const fs::path& base_dir) {
  ExportJob job;
  try {
    job.model = doc.at("model").get<std::string>();
    job.demos = base_dir / doc.at("demos").get<std::string>();
    job.out = base_dir / doc.at("out").get<std::string>();
    if (auto capture = doc.find("capture"); capture != doc.end()) {
      job.layers = capture->value("layers", std::vector<std::size_t>{});
      job.heads = capture->value("heads", std::vector<std::size_t>{});
      if (auto v = capture->find("variants"); v != capture->end()) {
        job.variants.clear();
        for (const auto& name : *v) job.variants.push_back(variant_from_name(name.get<std::string>()));
      }
      if (capture->contains("dtype")) job.attention_dtype = dtype_from_name(capture->at("dtype").get<std::string>());
    }
    if (auto plan = doc.find("plan"); plan != doc.end() && !plan->is_null()) job.plan = base_dir / plan->get<std::string>();
    if (auto gen = doc.find("generation"); gen != doc.end()) {
      job.temperature = gen->value("temperature", job.temperature);
      job.max_tokens = gen->value("max_tokens", job.max_tokens);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("export job: ") + e.what());
  } catch (const FormatError& e) {
    throw ConfigError(std::string("export job: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(std::string("export job: ") + e.what());
  }
  job.validate();
  return job;
}

json export_job_to_json(const ExportJob& job) {
  json variants = json::array();
  for (auto v : job.variants) variants.push_back(variant_name(v));
  json doc = {{"model", job.model},
              {"demos", job.demos.string()},
              {"out", job.out.string()},
              {"capture",
               {{"layers", job.layers}, {"heads", job.heads}, {"variants", variants}, {"dtype", dtype_name(job.attention_dtype)}}},
              {"generation", {{"temperature", job.temperature}, {"max_tokens", job.max_tokens}}}};
  doc["plan"] = job.plan ? json(job.plan->string()) : json(nullptr);
  return doc;
}

}  // namespace iclkit
