#include <random>

#include "doctest.h"
#include "midgn/crossview.hpp"
#include "oracle/scalar_oracle.hpp"
#include "toy.hpp"

using namespace midgn;

TEST_CASE("cross_propagate: hand example") {
  // u0-b0, u1-b0, u1-b1
  const BipartiteGraph g(InteractionMatrix(2, 2, {{0, 0}, {1, 0}, {1, 1}}));
  Matrix eu(2, 1), eb(2, 1);
  eu(0, 0) = 1.0;
  eu(1, 0) = 2.0;
  eb(0, 0) = 3.0;
  eb(1, 0) = 5.0;
  const auto v = cross_propagate(g, eu, eb);
  CHECK(v.user(0, 0) == doctest::Approx(3.0 / std::sqrt(2.0)));
  CHECK(v.user(1, 0) == doctest::Approx(3.0 / 2.0 + 5.0 / std::sqrt(2.0)));
  CHECK(v.bundle(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0) + 2.0 / 2.0));
  CHECK(v.bundle(1, 0) == doctest::Approx(2.0 / std::sqrt(2.0)));
}

TEST_CASE("cross_propagate matches the dense normalized adjacency") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<Id> pu(0, 14), pb(0, 10);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<IdPair> pairs;
    for (int j = 0; j < 40; ++j) pairs.emplace_back(pu(rng), pb(rng));
    const InteractionMatrix y(15, 11, pairs);
    Matrix eu(15, 6), eb(11, 6);
    for (double& x : eu.flat()) x = u(rng);
    for (double& x : eb.flat()) x = u(rng);
    const auto v = cross_propagate(BipartiteGraph(y), eu, eb);
    oracle::Mat vu, vb;
    oracle::cross_view(toy::dense(y), toy::rows(eu), toy::rows(eb), vu, vb);
    for (std::size_t r = 0; r < 15; ++r)
      for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(v.user(r, j) - vu[r][j]) < 1e-10);
    for (std::size_t r = 0; r < 11; ++r)
      for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(v.bundle(r, j) - vb[r][j]) < 1e-10);
  }
}

TEST_CASE("cross_propagate_backward is the adjoint") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const BipartiteGraph g(InteractionMatrix(4, 3, {{0, 0}, {0, 2}, {1, 1}, {3, 0}, {3, 1}, {3, 2}}));
  Matrix eu(4, 2), eb(3, 2), gu(4, 2), gb(3, 2);
  for (auto* m : {&eu, &eb, &gu, &gb})
    for (double& x : m->flat()) x = u(rng);
  const auto v = cross_propagate(g, eu, eb);
  // <G, A x> == <A^T G, x>
  double lhs = 0.0;
  for (std::size_t j = 0; j < v.user.size(); ++j) lhs += gu.flat()[j] * v.user.flat()[j];
  for (std::size_t j = 0; j < v.bundle.size(); ++j) lhs += gb.flat()[j] * v.bundle.flat()[j];
  Matrix du(4, 2), db(3, 2);
  cross_propagate_backward(g, gu, gb, du, db);
  double rhs = 0.0;
  for (std::size_t j = 0; j < eu.size(); ++j) rhs += du.flat()[j] * eu.flat()[j];
  for (std::size_t j = 0; j < eb.size(); ++j) rhs += db.flat()[j] * eb.flat()[j];
  CHECK(std::abs(lhs - rhs) < 1e-12);
  // user 2 has no train edges
  CHECK(v.user(2, 0) == 0.0);
  CHECK(du(2, 1) == 0.0);
}
