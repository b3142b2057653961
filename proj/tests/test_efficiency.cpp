#include <doctest.h>

#include <set>

#include <nlohmann/json.hpp>

#include "iclkit/efficiency.hpp"
#include "iclkit/errors.hpp"
#include "iclkit/interchange.hpp"
#include "support.hpp"

using namespace iclkit;
using iclkit::test::seg_from;
using iclkit::test::TempDir;

namespace {

using PairSet = std::set<std::pair<std::size_t, std::size_t>>;  // (query row, key)

PairSet allowed(const BoolMatrix& m) {
  PairSet out;
  for (Eigen::Index j = 0; j < m.rows(); ++j)
    for (Eigen::Index i = 0; i < m.cols(); ++i)
      if (m(j, i)) out.emplace(static_cast<std::size_t>(j), static_cast<std::size_t>(i));
  return out;
}

PairSet causal_pairs(std::size_t n) {
  PairSet out;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i <= j; ++i) out.emplace(j, i);
  return out;
}

const ModelCfg kLargeCfg{32, 32, 128, 2};

}  // namespace

TEST_CASE("anchor mask matches the hand list") {
  // anchors {0, 2}, queries {4, 5}
  const auto seg = seg_from("B T0 D0 T1 Q Q");
  const auto plan = anchor_mask(seg, {1, 2}, 4);
  const PairSet hand{{0, 0}, {1, 0}, {2, 0}, {2, 2}, {3, 0}, {3, 2}, {4, 0}, {4, 2}, {4, 4},
                     {5, 0}, {5, 2}, {5, 4}, {5, 5}};
  CHECK(allowed(plan.layer(1)) == hand);
  CHECK(allowed(plan.layer(2)) == hand);
  CHECK(allowed(plan.layer(0)) == causal_pairs(6));
  CHECK(allowed(plan.layer(3)) == causal_pairs(6));
  CHECK(plan.allowed_pairs(1) == 13);
}

TEST_CASE("anchor mask is vacuous when every token is an anchor or query") {
  const auto seg = seg_from("B I0 P0 D0 Q Q");
  const auto plan = anchor_mask(seg, {0, 1}, 2);
  for (std::size_t l = 0; l < 2; ++l) CHECK(plan.layer(l) == causal_mask(seg.size()));
}

TEST_CASE("mask ranges are validated") {
  const auto seg = seg_from("B T0 D0 T1 Q Q");
  CHECK_THROWS_AS(anchor_mask(seg, {3, 2}, 4), DomainError);
  CHECK_THROWS_AS(anchor_mask(seg, {0, 4}, 4), DomainError);
  CHECK_THROWS_AS(context_mask(seg, {2, 1}, 4), DomainError);
}

TEST_CASE("context mask on two ICEs") {
  const auto seg = seg_from("B I0 T0 D0 I1 T1 D1 Q Q");
  const auto plan = context_mask(seg, {0, 0}, 1);
  PairSet expected = causal_pairs(seg.size());
  for (std::size_t row : {4, 5, 6}) expected.erase({row, 2});
  CHECK(allowed(plan.layer(0)) == expected);
  // Anchors stay visible to every row.
  for (auto a : seg.anchors())
    for (std::size_t j = a; j < seg.size(); ++j) CHECK(plan.layer(0)(j, a));
}

TEST_CASE("context mask on one ICE is causal") {
  const auto seg = seg_from("B I0 T0 T0 D0 Q Q");
  CHECK(context_mask(seg, {0, 0}, 1).layer(0) == causal_mask(seg.size()));
}

TEST_CASE("composition and monotonicity") {
  const auto seg = seg_from("B I0 T0 T0 P0 D0 I1 T1 P1 D1 I2 T2 D2 Q Q");
  const auto a = anchor_mask(seg, {1, 3}, 5);
  const auto c = context_mask(seg, {2, 4}, 5);
  const auto both = a.intersect(c);
  CHECK(both.kind() == MaskKind::Composite);
  for (std::size_t l = 0; l < 5; ++l) {
    const auto pa = allowed(a.layer(l)), pc = allowed(c.layer(l)), pb = allowed(both.layer(l));
    PairSet inter;
    std::set_intersection(pa.begin(), pa.end(), pc.begin(), pc.end(), std::inserter(inter, inter.begin()));
    CHECK(pb == inter);
  }
  // Anchor masking is stricter than context masking on every layer both cover.
  CHECK(allowed(a.layer(2)).size() <= allowed(c.layer(2)).size());
  // Widening the range never re-allows a pair.
  const auto narrow = anchor_mask(seg, {2, 2}, 5), wide = anchor_mask(seg, {1, 3}, 5);
  std::size_t narrow_total = 0, wide_total = 0;
  for (std::size_t l = 0; l < 5; ++l) {
    const auto pn = allowed(narrow.layer(l)), pw = allowed(wide.layer(l));
    CHECK(std::includes(pn.begin(), pn.end(), pw.begin(), pw.end()));
    narrow_total += pn.size();
    wide_total += pw.size();
  }
  CHECK(wide_total < narrow_total);
}

TEST_CASE("mask files") {
  TempDir dir("mask");
  const auto seg = seg_from("B T0 D0 T1 Q Q");
  const auto plan = anchor_mask(seg, {1, 2}, 4);
  save_mask_plan(plan, dir.path(), "p");
  const auto t = load_tensor(dir / "p.mask.iclt");
  CHECK(t.dtype() == DType::U8);
  CHECK(t.shape() == Shape{4, 6, 6});
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t i = 0; i < 6; ++i) CHECK((t(l, j, i) == 1.0f) == plan.layer(l)(j, i));
  const auto meta = read_json_file(dir / "p.mask.json");
  CHECK(meta.at("kind") == "anchor_centric");
}

TEST_CASE("prune schedules") {
  SUBCASE("toy walk") {
    const auto seg = seg_from("B T0 D0 T1 Q Q");
    const auto p = prune_plan(seg, 1, true, 3, 4);
    CHECK(p.kept_indices == std::vector<std::size_t>{0, 2, 4, 5});
    CHECK(p.layer_lengths == std::vector<std::size_t>{6, 4, 4, 6});
    const auto no_recover = prune_plan(seg, 1, false, 3, 4);
    CHECK(no_recover.layer_lengths == std::vector<std::size_t>{6, 4, 4, 4});
  }
  SUBCASE("identity") {
    const auto p = prune_plan_from_counts(1046, 214, 32, true, 31, 32);
    CHECK(p.is_identity());
    CHECK(kv_estimate(kLargeCfg, &p, 1046).savings == 0.0);
  }
  SUBCASE("32-shot shape") {
    const auto p = prune_plan_from_counts(1046, 192, 10, true, 31, 32);
    for (std::size_t l = 0; l < 32; ++l) CHECK(p.layer_lengths[l] == (l < 10 || l == 31 ? 1046u : 192u));
  }
  SUBCASE("invalid") {
    CHECK_THROWS_AS(prune_plan_from_counts(10, 4, 5, true, 5, 8), DomainError);
    CHECK_THROWS_AS(prune_plan_from_counts(10, 4, 5, true, 9, 8), DomainError);
    CHECK_THROWS_AS(prune_plan_from_counts(10, 11, 1, true, 2, 8), DomainError);
  }
  SUBCASE("json") {
    const auto j = prune_plan_to_json(prune_plan_from_counts(6, 4, 1, true, 3, 4));
    CHECK(j.at("layer_lengths") == nlohmann::json({6, 4, 4, 6}));
  }
}

TEST_CASE("kv estimates") {
  CHECK(kv_estimate(kLargeCfg, nullptr, 1046).bytes == 548405248ULL);
  CHECK(kv_estimate(kLargeCfg, nullptr, 150).bytes == 78643200ULL);
  const auto fast10 = prune_plan_from_counts(1046, 214, 10, true, 31, 32);
  const auto kv = kv_estimate(kLargeCfg, &fast10, 1046);
  CHECK(kv.bytes == 16384ULL * (10 * 1046 + 21 * 214 + 1046));
  CHECK(kv.baseline_bytes == 548405248ULL);
  CHECK(kv.savings == doctest::Approx(1.0 - double(kv.bytes) / 548405248.0));
  CHECK_THROWS(kv_estimate(ModelCfg{0, 32, 128, 2}, nullptr, 10));
}
