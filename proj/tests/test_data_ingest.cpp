#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "midgn/data_ingest.hpp"
#include "midgn/error.hpp"

using namespace midgn;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
  const auto dir = std::filesystem::temp_directory_path() / "midgn_ingest_tests";
  std::filesystem::create_directories(dir);
  const auto p = dir / name;
  std::ofstream(p) << body;
  return p;
}

InteractionMatrix random_matrix(std::size_t rows, std::size_t cols, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Id> r(0, static_cast<Id>(rows - 1)), c(0, static_cast<Id>(cols - 1));
  std::vector<IdPair> pairs;
  for (std::size_t j = 0; j < n; ++j) pairs.emplace_back(r(rng), c(rng));
  return InteractionMatrix(rows, cols, std::move(pairs));
}

}  // namespace

TEST_CASE("load_interactions: empty file with expected dims") {
  const auto m = load_interactions(temp_file("empty.txt", ""), 3, 2);
  CHECK(m.n_rows() == 3);
  CHECK(m.n_cols() == 2);
  CHECK(m.nnz() == 0);
}

TEST_CASE("load_interactions: duplicates are dropped and counted") {
  const auto m = load_interactions(temp_file("dup.txt", "0\t1\n0\t1\n2\t0\n"), 3, 2);
  CHECK(m.nnz() == 2);
  CHECK(m.duplicates_dropped() == 1);
  CHECK(m.contains(0, 1));
  CHECK(m.contains(2, 0));
}

TEST_CASE("load_interactions: dims inferred from max id") {
  const auto m = load_interactions(temp_file("infer.txt", "4\t1\n\n0\t7\n"));
  CHECK(m.n_rows() == 5);
  CHECK(m.n_cols() == 8);
}

TEST_CASE("load_interactions: malformed line reports its line number") {
  const auto p = temp_file("bad.txt", "0\t1\n1 x\n");
  try {
    load_interactions(p);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(load_interactions(temp_file("neg.txt", "-1\t0\n")), ParseError);
}

TEST_CASE("load_interactions: id beyond expected dimension is a bounds error") {
  CHECK_THROWS_AS(load_interactions(temp_file("oob.txt", "3\t0\n"), 3, 2), BoundsError);
  CHECK_THROWS_AS(load_interactions(temp_file("oob2.txt", "0\t2\n"), 3, 2), BoundsError);
}

TEST_CASE("write/load round trip preserves the pair set") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto m = random_matrix(40, 30, 200, seed);
    const auto p = std::filesystem::temp_directory_path() / "midgn_ingest_tests" / "rt.txt";
    write_interactions(p, m);
    CHECK(load_interactions(p, m.n_rows(), m.n_cols()) == m);
  }
}

TEST_CASE("split_interactions: exact proportions and guard rule") {
  std::vector<IdPair> pairs;
  for (Id b = 0; b < 10; ++b) pairs.emplace_back(0, b);
  pairs.emplace_back(1, 3);
  const InteractionMatrix m(2, 10, pairs);
  const auto s = split_interactions(m, {0.7, 0.1, 0.2}, 11);
  std::size_t tr = 0, va = 0, te = 0;
  for (auto& p : s.train.pairs()) tr += p.first == 0;
  for (auto& p : s.val.pairs()) va += p.first == 0;
  for (auto& p : s.test.pairs()) te += p.first == 0;
  CHECK(tr == 7);
  CHECK(va == 1);
  CHECK(te == 2);
  CHECK(s.train.contains(1, 3));  // single pair stays in train
}

TEST_CASE("split_interactions: invalid ratios") {
  const InteractionMatrix m(1, 1, {{0, 0}});
  CHECK_THROWS_AS(split_interactions(m, {0.7, 0.2, 0.2}, 1), ConfigError);
  CHECK_THROWS_AS(split_interactions(m, {1.0, 0.0, 0.0}, 1), ConfigError);
}

TEST_CASE("split_interactions: partition property and determinism over seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = random_matrix(30, 50, 400, seed + 100);
    const auto s = split_interactions(m, {0.7, 0.1, 0.2}, seed);
    std::set<IdPair> all;
    std::set<Id> train_users;
    for (auto& p : s.train.pairs()) train_users.insert(p.first);
    std::size_t total = 0;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      for (auto& p : part->pairs()) {
        CHECK(all.insert(p).second);  // disjoint
        ++total;
      }
    }
    CHECK(total == m.nnz());
    CHECK(std::equal(all.begin(), all.end(), m.pairs().begin(), m.pairs().end()));
    for (const auto* part : {&s.val, &s.test})
      for (auto& p : part->pairs()) CHECK(train_users.count(p.first) == 1);
    const auto again = split_interactions(m, {0.7, 0.1, 0.2}, seed);
    CHECK(again.train == s.train);
    CHECK(again.val == s.val);
    CHECK(again.test == s.test);
  }
}

TEST_CASE("sample_triples: one per train pair with valid negatives") {
  const auto m = random_matrix(25, 40, 300, 9);
  const auto s = split_interactions(m, {0.7, 0.1, 0.2}, 3);
  const auto triples = sample_triples(s, 17);
  CHECK(triples.size() == s.train.nnz());
  for (const auto& t : triples) {
    CHECK(s.train.contains(t.user, t.pos_bundle));
    CHECK_FALSE(m.contains(t.user, t.neg_bundle));
  }
}

TEST_CASE("sample_triples: forced negative") {
  // user 0 holds bundles 0..6 and 8 of 9 (spread across splits); b7 is the only choice
  std::vector<IdPair> train{{0, 0}, {0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}};
  SplitDataset s;
  s.train = InteractionMatrix(1, 9, train);
  s.val = InteractionMatrix(1, 9, {{0, 6}});
  s.test = InteractionMatrix(1, 9, {{0, 8}});
  for (const auto& t : sample_triples(s, 5)) CHECK(t.neg_bundle == 7);

  SplitDataset two;
  two.train = InteractionMatrix(1, 2, {{0, 0}});
  two.val = two.test = InteractionMatrix(1, 2, {});
  for (std::uint64_t seed = 0; seed < 10000; ++seed) CHECK(sample_triples(two, seed).front().neg_bundle == 1);
}

TEST_CASE("sample_triples: user holding every bundle is skipped") {
  SplitDataset s;
  s.train = InteractionMatrix(2, 2, {{0, 0}, {0, 1}, {1, 0}});
  s.val = s.test = InteractionMatrix(2, 2, {});
  const auto triples = sample_triples(s, 1);
  REQUIRE(triples.size() == 1);
  CHECK(triples[0].user == 1);
  CHECK(triples[0].neg_bundle == 1);
}

TEST_CASE("validate_stats: densities and published references") {
  const InteractionMatrix y(4, 3, {{0, 0}, {1, 1}});
  const InteractionMatrix h(3, 5, {{0, 0}});
  const InteractionMatrix r(4, 5, {{0, 0}, {3, 4}});
  const auto rep = validate_stats(y, h, r, "toy");
  CHECK(rep.users == 4);
  CHECK(rep.items == 5);
  CHECK(rep.user_bundle_density == doctest::Approx(2.0 / 12.0));
  CHECK_FALSE(rep.has_reference);

  const auto flagged = validate_stats(y, h, r, "Youshu");
  CHECK(flagged.has_reference);
  CHECK(flagged.mismatches.size() == 6);

  CHECK_THROWS_AS(validate_stats(y, InteractionMatrix(2, 5, {}), r, "x"), StructuralError);
}

TEST_CASE("published statistics and the density they imply") {
  const auto y = published_stats("Youshu");
  REQUIRE(y);
  CHECK(y->users == 8039);
  CHECK(y->bundles == 4771);
  CHECK(y->items == 32770);
  CHECK(y->user_bundle == 51337);
  CHECK(y->bundle_item == 176667);
  CHECK(y->user_item == 138515);
  const auto n = published_stats("NetEase");
  REQUIRE(n);
  CHECK(n->users == 18528);
  CHECK(n->bundles == 22864);
  CHECK(n->items == 123628);
  // 51,337 / (8,039 * 4,771) = 0.13%
  const double density = 51337.0 / (8039.0 * 4771.0);
  CHECK(std::round(density * 10000.0) / 100.0 == doctest::Approx(0.13));
}
