#include <doctest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iclkit/errors.hpp"
#include "iclkit/interchange.hpp"
#include "support.hpp"

using namespace iclkit;
using iclkit::test::fixture;
using iclkit::test::TempDir;

namespace {

std::string to_bytes(const Tensor& t) {
  std::ostringstream out;
  write_tensor(t, out);
  return out.str();
}

Tensor from_bytes(const std::string& bytes) {
  std::istringstream in(bytes);
  return read_tensor(in);
}

}  // namespace

TEST_CASE("scalar tensor layout") {
  const Tensor t(DType::F32, {}, {0.0f});
  const std::string bytes = to_bytes(t);
  REQUIRE(bytes.size() == 12);
  CHECK(bytes.substr(0, 4) == "ICLT");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 1);
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 0);
  CHECK(bytes.substr(8) == std::string(4, '\0'));
  CHECK(from_bytes(bytes) == t);
}

TEST_CASE("identity round trip and little-endian payload") {
  const Tensor eye(DType::F32, {2, 2}, {1, 0, 0, 1});
  const std::string bytes = to_bytes(eye);
  REQUIRE(bytes.size() == 8 + 16 + 16);
  std::uint64_t extent = 0;
  std::memcpy(&extent, bytes.data() + 8, 8);
  CHECK(extent == 2);
  float first = 0;
  std::memcpy(&first, bytes.data() + 24, 4);
  CHECK(first == 1.0f);
  const Tensor back = from_bytes(bytes);
  CHECK(back.data()[0] == 1.0f);
  CHECK(back.data()[1] == 0.0f);
  CHECK(back.data()[3] == 1.0f);
}

TEST_CASE("1000 random f32 values round trip bitwise") {
  Xoshiro256ss rng(42);
  std::vector<float> values(1000);
  for (auto& v : values) {
    std::uint32_t bits = static_cast<std::uint32_t>(rng.next());
    bits = (bits & ~(0xffu << 23)) | (static_cast<std::uint32_t>(rng.bounded(255)) << 23);  // finite exponents
    std::memcpy(&v, &bits, 4);
  }
  const Tensor t(DType::F32, {10, 100}, values);
  const std::string bytes = to_bytes(t);
  const std::string again = to_bytes(from_bytes(bytes));
  CHECK(bytes == again);
  CHECK(std::memcmp(bytes.data() + 8 + 16, values.data(), 4000) == 0);
}

TEST_CASE("f16 round trip") {
  const Tensor t(DType::F16, {3}, {0.5f, -2.0f, 0.333251953125f});
  const std::string bytes = to_bytes(t);
  CHECK(bytes.size() == 8 + 8 + 6);
  CHECK(from_bytes(bytes) == t);
  CHECK(half_bits_to_float(float_to_half_bits(1.0f)) == 1.0f);
  CHECK(float_to_half_bits(1.0f) == 0x3c00);
}

TEST_CASE("corrupt headers are rejected") {
  const std::string good = to_bytes(Tensor(DType::F32, {2, 3}, {1, 2, 3, 4, 5, 6}));
  SUBCASE("magic") {
    std::string bad = good;
    bad.replace(0, 4, "XXXX");
    CHECK_THROWS_AS(from_bytes(bad), FormatError);
  }
  SUBCASE("version") {
    std::string bad = good;
    bad[4] = 2;
    CHECK_THROWS_AS(from_bytes(bad), FormatError);
  }
  SUBCASE("dtype") {
    std::string bad = good;
    bad[5] = 9;
    CHECK_THROWS_AS(from_bytes(bad), FormatError);
  }
  SUBCASE("truncated payload") {
    for (std::size_t cut = 1; cut <= 24; cut += 5) {
      CHECK_THROWS_AS(from_bytes(good.substr(0, good.size() - cut)), FormatError);
    }
  }
  SUBCASE("truncated header") { CHECK_THROWS_AS(from_bytes(good.substr(0, 6)), FormatError); }
}

TEST_CASE("tensor validation") {
  CHECK_THROWS_AS(Tensor(DType::F32, {2, 2}, {1, 2, 3}), FormatError);
  CHECK_THROWS_AS(element_count({~std::uint64_t{0}, 4}), FormatError);
}

TEST_CASE("save/load file") {
  TempDir dir("tensor");
  const Tensor t(DType::F32, {2}, {3.5f, -1.0f});
  save_tensor(t, dir / "t.iclt");
  CHECK(load_tensor(dir / "t.iclt") == t);
  CHECK_THROWS_AS(load_tensor(dir / "missing.iclt"), LoadError);
}

TEST_CASE("segmentation invariants") {
  using iclkit::test::seg_from;
  const auto seg = seg_from("B I0 T0 P0 D0 I1 T1 D1 Q Q");
  CHECK(seg.ice_count() == 2);
  CHECK(seg.anchors() == std::vector<std::size_t>{0, 1, 3, 4, 5, 7});
  CHECK(seg.queries() == std::vector<std::size_t>{8, 9});
  CHECK(seg.ice_context(1) == std::vector<std::size_t>{6});
  CHECK(segmentation_from_json(segmentation_to_json(seg)) == seg);

  CHECK_THROWS_AS(seg_from("B I0 T0 Q"), DataError);          // one query token
  CHECK_THROWS_AS(seg_from("B I0 Q T0 Q"), DataError);        // queries not last
  CHECK_THROWS_AS(seg_from("B I1 T1 Q Q"), DataError);        // ICE index not starting at 0
  CHECK_THROWS_AS(seg_from("B I0 T1 T0 Q Q"), DataError);     // non-contiguous
  CHECK_THROWS_AS(seg_from("B T Q Q"), DataError);            // context without ICE
}

TEST_CASE("load_run fixtures") {
  SUBCASE("basic") {
    const RunBundle run = load_run(fixture("run_basic"));
    REQUIRE(run.samples.size() == 1);
    const auto& rec = *run.samples[0].with_image;
    CHECK(rec.tensor.shape() == Shape{2, 1, 6, 6});
    CHECK(rec.layer_count() == 2);
    CHECK(rec.weight(0, 0, 5, 2) == doctest::Approx(1.0 / 6));
    CHECK(rec.weight(1, 0, 5, 0) == 1.0f);
    CHECK(run.samples[0].caption == "a cat.");
    CHECK(!run.samples[0].without_image);
    CHECK(run.model.cfg.n_layers == 2);
  }
  SUBCASE("manifest path accepted") { CHECK(load_run(fixture("run_basic/manifest.json")).samples.size() == 1); }
  SUBCASE("empty") {
    const RunBundle run = load_run(fixture("run_empty"));
    CHECK(run.samples.empty());
  }
  SUBCASE("length mismatch") {
    try {
      load_run(fixture("run_mismatch"));
      FAIL("expected ConsistencyError");
    } catch (const ConsistencyError& e) {
      CHECK(std::string(e.what()).find("s0") != std::string::npos);
    }
  }
}

TEST_CASE("load_run rejects broken bundles") {
  TempDir dir("run");
  std::filesystem::copy(fixture("run_basic"), dir.path());
  auto manifest = read_json_file(dir / "manifest.json");

  SUBCASE("missing file") {
    manifest["samples"][0]["attention"]["with_query_image"] = "gone.iclt";
    write_file_atomic(dir / "manifest.json", manifest.dump());
    try {
      load_run(dir.path());
      FAIL("expected LoadError");
    } catch (const LoadError& e) {
      CHECK(std::string(e.what()).find("missing file") != std::string::npos);
    }
  }
  SUBCASE("duplicate sample id") {
    manifest["samples"].push_back(manifest["samples"][0]);
    write_file_atomic(dir / "manifest.json", manifest.dump());
    CHECK_THROWS_AS(load_run(dir.path()), Error);
  }
  SUBCASE("more layers than the model") {
    manifest["model"]["n_layers"] = 1;
    write_file_atomic(dir / "manifest.json", manifest.dump());
    CHECK_THROWS_AS(load_run(dir.path()), ConsistencyError);
  }
  SUBCASE("non-causal weights") {
    auto t = load_tensor(dir / "attn.iclt");
    t(0, 0, 0, 1) = 0.5f;
    save_tensor(t, dir / "attn.iclt");
    CHECK_THROWS_AS(load_run(dir.path()), Error);
  }
}

TEST_CASE("attention record validation") {
  auto rec = iclkit::test::uniform_record<float>(1, 1, 4);
  CHECK_NOTHROW(rec.validate());
  rec.tensor(0, 0, 3, 0) += 0.01f;
  CHECK_THROWS(rec.validate());
}

TEST_CASE("embedding table round trip and checks") {
  TempDir dir("emb");
  RowMatrixXf m(2, 3);
  m << 1, 0, 0, 0, 0.6f, 0.8f;
  const EmbeddingTable t({"a", "b"}, m, true);
  save_embedding_table(t, dir / "e.iclt", dir / "e.ids.json");
  const auto back = load_embedding_table(dir / "e.iclt", dir / "e.ids.json");
  CHECK(back.ids() == t.ids());
  CHECK(back.matrix() == t.matrix());
  CHECK(back.index_of("b") == 1);
  CHECK_THROWS_AS(back.index_of("zz"), DataError);
  CHECK_THROWS_AS(EmbeddingTable({"a", "a"}, m, false), ConsistencyError);
  RowMatrixXf unnorm = m * 2.0f;
  CHECK_THROWS_AS(EmbeddingTable({"a", "b"}, unnorm, true), ConsistencyError);
}

TEST_CASE("manifest plan provenance and layer indexing") {
  TempDir dir("run");
  std::filesystem::copy(fixture("run_basic"), dir.path());
  auto manifest = read_json_file(dir / "manifest.json");
  CHECK(!load_run(dir.path()).plan_file);

  manifest["plan"] = {{"file", "plan.mask.iclt"}, {"sha256", "ab12"}};
  manifest["model"]["layer_indexing"] = "zero_based";
  write_file_atomic(dir / "manifest.json", manifest.dump());
  const RunBundle run = load_run(dir.path());
  CHECK(run.plan_file == std::optional<std::string>("plan.mask.iclt"));
  CHECK(run.plan_sha256 == std::optional<std::string>("ab12"));
  CHECK(run.model.layer_indexing == std::optional<std::string>("zero_based"));
}

TEST_CASE("export job parse and validate") {
  const nlohmann::json doc = {
      {"model", "open-flamingo-9b"},
      {"demos", "demos.json"},
      {"out", "runs/a"},
      {"capture", {{"layers", {0, 5, 31}}, {"variants", {"with_query_image", "without_query_image"}}, {"dtype", "f32"}}},
      {"plan", "plan.prune.json"},
      {"generation", {{"temperature", 0.7}, {"max_tokens", 30}}}};
  const ExportJob job = export_job_from_json(doc, "/base");
  CHECK(job.model == "open-flamingo-9b");
  CHECK(job.demos == std::filesystem::path("/base/demos.json"));
  CHECK(job.layers == std::vector<std::size_t>{0, 5, 31});
  CHECK(job.heads.empty());
  CHECK(job.variants.size() == 2);
  CHECK(job.attention_dtype == DType::F32);
  CHECK(job.plan == std::optional<std::filesystem::path>("/base/plan.prune.json"));
  CHECK(job.temperature == 0.7);
  CHECK(job.max_tokens == 30);

  const ExportJob again = export_job_from_json(export_job_to_json(job));
  CHECK(export_job_to_json(again) == export_job_to_json(job));

  const nlohmann::json minimal = {{"model", "m"}, {"demos", "d.json"}, {"out", "o"}};
  const ExportJob defaults = export_job_from_json(minimal);
  CHECK(defaults.variants == std::vector<Variant>{Variant::WithQueryImage});
  CHECK(defaults.attention_dtype == DType::F16);
  CHECK(!defaults.plan);

  auto bad = minimal;
  bad["generation"] = {{"temperature", 0.0}};
  CHECK_THROWS_AS(export_job_from_json(bad), ConfigError);
  bad = minimal;
  bad["capture"] = {{"variants", nlohmann::json::array()}};
  CHECK_THROWS_AS(export_job_from_json(bad), ConfigError);
  bad["capture"] = {{"variants", {"with_query_image", "with_query_image"}}};
  CHECK_THROWS_AS(export_job_from_json(bad), ConfigError);
  bad["capture"] = {{"variants", {"no_image"}}};
  CHECK_THROWS_AS(export_job_from_json(bad), ConfigError);
  bad["capture"] = {{"dtype", "u8"}};
  CHECK_THROWS_AS(export_job_from_json(bad), ConfigError);
  bad = minimal;
  bad.erase("model");
  CHECK_THROWS_AS(export_job_from_json(bad), ConfigError);
}
