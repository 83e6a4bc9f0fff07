#include <cmath>
#include <random>

#include "doctest.h"
#include "midgn/contrast.hpp"

using namespace midgn;

TEST_CASE("info_nce: K = 1 is zero") {
  Matrix e(3, 4, 0.5), v(3, 4, -0.2);
  Matrix ge(3, 4), gv(3, 4);
  const double loss = info_nce_loss({&e, &v, {0, 1, 2}}, {1, 1.0, false}, &ge, &gv);
  CHECK(loss == 0.0);
  for (double g : ge.flat()) CHECK(g == 0.0);
}

TEST_CASE("info_nce: identical chunks give ln K") {
  for (std::size_t K : {2u, 3u, 4u}) {
    Matrix e(1, 2 * K, 0.3), v(1, 2 * K, 0.7);
    CHECK(info_nce_loss({&e, &v, {0}}, {K, 1.0, false}) == doctest::Approx(std::log(static_cast<double>(K))));
  }
}

TEST_CASE("info_nce: two intents with positive logit 1 and negative 0") {
  // e chunks (1), (1); v chunks chosen so <e_0, v_0> = 1, <e_0, v_1> = 0 and symmetric for k = 1
  Matrix e(1, 2), v(1, 2);
  e(0, 0) = 1.0;
  e(0, 1) = 1.0;
  v(0, 0) = 1.0;
  v(0, 1) = 0.0;
  // k = 0: logits (1, 0); k = 1: logits (0 positive, 1 negative)
  const auto r = info_nce({&e, &v, {0}}, {2, 1.0, false}, 1.0, nullptr, nullptr);
  CHECK(r.terms == 2);
  const double k0 = std::log1p(std::exp(-1.0));
  CHECK(k0 == doctest::Approx(0.3132616875182228).epsilon(1e-15));
  CHECK(r.loss_sum == doctest::Approx(k0 + std::log1p(std::exp(1.0))).epsilon(1e-12));
}

TEST_CASE("info_nce: temperature and empty batch") {
  Matrix e(1, 2), v(1, 2);
  e(0, 0) = 2.0;
  v(0, 0) = 1.0;
  // logits / tau with tau = 2 -> (1, 0) for k = 0 and (0, 0) for k = 1
  const auto r = info_nce({&e, &v, {0}}, {2, 2.0, false}, 1.0, nullptr, nullptr);
  CHECK(r.loss_sum == doctest::Approx(std::log1p(std::exp(-1.0)) + std::log(2.0)));
  CHECK(info_nce_loss({&e, &v, {}}, {2, 1.0, false}) == 0.0);
}

TEST_CASE("info_nce: gradient against central differences") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (bool symmetric : {false, true}) {
    Matrix e(3, 6), v(3, 6);
    for (double& x : e.flat()) x = u(rng);
    for (double& x : v.flat()) x = u(rng);
    const ContrastConfig cfg{3, 0.5, symmetric};
    const std::vector<std::size_t> rows{0, 2};
    Matrix ge(3, 6), gv(3, 6);
    info_nce_loss({&e, &v, rows}, cfg, &ge, &gv);
    const double h = 1e-6;
    for (auto [m, g] : {std::pair{&e, &ge}, std::pair{&v, &gv}}) {
      for (std::size_t j = 0; j < m->size(); ++j) {
        const double keep = m->flat()[j];
        m->flat()[j] = keep + h;
        const double up = info_nce_loss({&e, &v, rows}, cfg);
        m->flat()[j] = keep - h;
        const double down = info_nce_loss({&e, &v, rows}, cfg);
        m->flat()[j] = keep;
        CHECK(std::abs((up - down) / (2 * h) - g->flat()[j]) < 1e-7);
      }
    }
    for (std::size_t j = 0; j < 6; ++j) CHECK(ge(1, j) == 0.0);
  }
}
