#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "iclkit/errors.hpp"
#include "iclkit/random.hpp"
#include "iclkit/retrieval.hpp"

using namespace iclkit;

namespace {

EmbeddingTable random_table(std::size_t n, Eigen::Index dim, std::uint64_t seed, float scale = 1.0f) {
  Xoshiro256ss rng(seed);
  RowMatrixXf m(static_cast<Eigen::Index>(n), dim);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < dim; ++c) m(r, c) = static_cast<float>(rng.uniform() * 2.0 - 1.0) * scale;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("item" + std::to_string(i));
  return EmbeddingTable(ids, m, false);
}

// Full sort over naive loop cosines.
std::vector<std::string> brute_force(const EmbeddingTable& t, const std::string& query, std::size_t k) {
  const auto& m = t.matrix();
  const auto q = static_cast<Eigen::Index>(t.index_of(query));
  std::vector<std::pair<double, std::string>> all;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r == q) continue;
    double dot = 0, na = 0, nb = 0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      dot += double(m(q, c)) * double(m(r, c));
      na += double(m(q, c)) * double(m(q, c));
      nb += double(m(r, c)) * double(m(r, c));
    }
    all.emplace_back(dot / (std::sqrt(na) * std::sqrt(nb)), t.ids()[static_cast<std::size_t>(r)]);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(all[i].second);
  return out;
}

}  // namespace

TEST_CASE("cosine similarity") {
  Eigen::Vector3d x(1, 0, 0);
  CHECK(cosine_similarity(x, x) == 1.0);
  CHECK(cosine_similarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)) == 0.0);
  const double expected = 32.0 / (std::sqrt(14.0) * std::sqrt(77.0));
  CHECK(cosine_similarity(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(4, 5, 6)) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(expected == doctest::Approx(0.974631).epsilon(1e-6));
  CHECK_THROWS_AS(cosine_similarity(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0)), DomainError);
  CHECK_THROWS_AS(cosine_similarity(Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(3)), DomainError);
}

TEST_CASE("siir matches brute force ranking") {
  const auto t = random_table(50, 8, 3);
  for (const char* q : {"item0", "item17", "item49"}) {
    CHECK(siir_retrieve(q, t, 5).item_ids() == brute_force(t, q, 5));
  }
}

TEST_CASE("siir properties") {
  const auto t = random_table(30, 6, 9);
  SUBCASE("query excluded, exhaustive k gives a permutation") {
    const auto r = siir_retrieve("item4", t, 29).item_ids();
    std::set<std::string> s(r.begin(), r.end());
    CHECK(s.size() == 29);
    CHECK(!s.contains("item4"));
  }
  SUBCASE("prefix") {
    const auto big = siir_retrieve("item2", t, 10).item_ids();
    for (std::size_t k = 1; k < 10; ++k) {
      const auto small = siir_retrieve("item2", t, k).item_ids();
      CHECK(std::equal(small.begin(), small.end(), big.begin()));
    }
  }
  SUBCASE("scores descend") {
    const auto r = siir_retrieve("item2", t, 29);
    for (std::size_t i = 1; i < r.items.size(); ++i) CHECK(r.items[i - 1].score >= r.items[i].score);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(siir_retrieve("nope", t, 1), DataError);
    CHECK_THROWS(siir_retrieve("item0", t, 30));
  }
}

TEST_CASE("siir duplicate embedding ranks first with score 1") {
  RowMatrixXf m(4, 3);
  m << 1, 2, 3, 0, 1, 0, 1, 2, 3, -1, 0, 0;
  const EmbeddingTable t({"q", "a", "dup", "b"}, m, false);
  const auto r = siir_retrieve("q", t, 3);
  CHECK(r.items[0].id == "dup");
  CHECK(r.items[0].score == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("siir ties break by ascending id") {
  RowMatrixXf m(4, 2);
  m << 1, 0, 0, 1, 0, 1, 0, 1;
  const EmbeddingTable t({"q", "c", "a", "b"}, m, false);
  CHECK(siir_retrieve("q", t, 3).item_ids() == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("rs determinism and coverage") {
  std::vector<std::string> ids;
  for (int i = 0; i < 12; ++i) ids.push_back("i" + std::to_string(i));
  const auto a = rs_sample(ids, 5, 77, "i3");
  const auto b = rs_sample(ids, 5, 77, "i3");
  CHECK(a.item_ids() == b.item_ids());
  CHECK(rs_sample(ids, 5, 78, "i3").item_ids() != a.item_ids());
  const auto all = rs_sample(ids, 11, 5, "i3").item_ids();
  std::set<std::string> s(all.begin(), all.end());
  CHECK(s.size() == 11);
  CHECK(!s.contains("i3"));
  CHECK_THROWS(rs_sample(ids, 12, 5, "i3"));
}

TEST_CASE("rs uniformity over a seed sweep") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("i" + std::to_string(i));
  std::map<std::string, int> hits;
  constexpr int kDraws = 10000;
  for (int seed = 0; seed < kDraws; ++seed) ++hits[rs_sample(ids, 1, static_cast<std::uint64_t>(seed), "").items[0].id];
  const double expected = kDraws / 10.0;
  const double sigma = std::sqrt(kDraws * 0.1 * 0.9);
  double chi2 = 0;
  for (const auto& id : ids) {
    CHECK(std::abs(hits[id] - expected) <= 3 * sigma);
    chi2 += (hits[id] - expected) * (hits[id] - expected) / expected;
  }
  CHECK(chi2 < 27.88);  // df = 9, p = 0.001
}

TEST_CASE("xoshiro reference stream") {
  // SplitMix64 seeded with 0 starts 0xe220a8397b1dcdaf.
  SplitMix64 sm(0);
  CHECK(sm.next() == 0xe220a8397b1dcdafULL);
  Xoshiro256ss a(1), b(1);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(a.bounded(7) < 7);
  }
}
