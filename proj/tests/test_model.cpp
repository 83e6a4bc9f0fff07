#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "midgn/error.hpp"
#include "midgn/model.hpp"
#include "oracle/scalar_oracle.hpp"
#include "toy.hpp"

using namespace midgn;

namespace {

std::vector<ParamCoord> every_coordinate(const ParameterStore& s) {
  std::vector<ParamCoord> out;
  for (auto t : kTables)
    for (std::size_t r = 0; r < s.table(t).rows(); ++r)
      for (std::size_t c = 0; c < s.table(t).cols(); ++c) out.push_back({t, r, c});
  return out;
}

}  // namespace

TEST_CASE("full_forward matches the dense oracle on the toy graph") {
  const auto ds = toy::dataset();
  const auto split = toy::all_train(ds);
  for (std::size_t K : {1u, 2u, 4u}) {
    auto cfg = toy::config(K, 2, 2);
    const auto graphs = ModelGraphs::build(ds, split.train);
    const auto s = toy::params(ds, cfg, 3 + K);
    const auto out = full_forward(s, graphs, cfg);
    const auto want = oracle::forward(toy::dense(ds.user_item), toy::dense(ds.bundle_item), toy::dense(ds.user_bundle),
                                      toy::rows(s.user), toy::rows(s.bundle), toy::rows(s.item), K, 2, 2, true);
    for (Id u = 0; u < 2; ++u)
      for (Id b = 0; b < 2; ++b) CHECK(std::abs(score(out, u, b) - want.scores[u][b]) < 1e-8);
  }
}

TEST_CASE("score splits into the two view products") {
  const auto ds = toy::dataset();
  const auto cfg = toy::config();
  const auto graphs = ModelGraphs::build(ds, ds.user_bundle);
  const auto out = full_forward(toy::params(ds, cfg, 1), graphs, cfg);
  const double local = dot(out.e_user.row(1), out.e_bundle.row(0));
  const double global = dot(out.v_user.row(1), out.v_bundle.row(0));
  CHECK(score(out, 1, 0) == doctest::Approx(local + global).epsilon(1e-14));
  const auto many = score_pairs(out, {{0, 0}, {1, 0}});
  CHECK(many[1] == score(out, 1, 0));
}

TEST_CASE("bpr_loss: all-zero parameters give ln 2 per triple") {
  const auto ds = toy::dataset();
  auto cfg = toy::config();
  const auto graphs = ModelGraphs::build(ds, ds.user_bundle);
  auto s = toy::params(ds, cfg, 1);
  for (auto t : kTables) s.table(t).fill(0.0);
  const auto out = full_forward(s, graphs, cfg);
  const auto r = bpr_loss(out, toy::triples(), s, graphs, cfg, nullptr);
  CHECK(r.ranking_loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));
  CHECK(r.reg_loss == 0.0);
}

TEST_CASE("bpr_loss: L2 term covers the batch rows") {
  const auto ds = toy::dataset();
  auto cfg = toy::config();
  cfg.optimizer.l2 = 0.5;
  const auto graphs = ModelGraphs::build(ds, ds.user_bundle);
  const auto s = toy::params(ds, cfg, 2);
  const std::vector<TrainingTriple> batch{{0, 0, 1}};
  const auto rows = regularized_rows(graphs, batch);
  CHECK(rows.users == std::vector<std::size_t>{0});
  CHECK(rows.bundles == std::vector<std::size_t>{0, 1});
  CHECK(rows.items == std::vector<std::size_t>{0, 1, 2});
  double sq = 0.0;
  for (double x : s.user.row(0)) sq += x * x;
  for (double x : s.bundle.flat()) sq += x * x;
  for (double x : s.item.flat()) sq += x * x;
  const auto r = bpr_loss(full_forward(s, graphs, cfg), batch, s, graphs, cfg, nullptr);
  CHECK(r.reg_loss == doctest::Approx(0.5 * sq).epsilon(1e-14));
}

TEST_CASE("analytic gradients agree with central differences") {
  const auto ds = toy::dataset();
  const auto graphs = ModelGraphs::build(ds, ds.user_bundle);
  struct Variant {
    const char* name;
    bool no_local, no_global, seeded;
    std::size_t K;
  };
  for (const auto& v : {Variant{"full", false, false, true, 2}, Variant{"literal", false, false, false, 2},
                        Variant{"no-local", true, false, true, 2}, Variant{"no-global", false, true, true, 2},
                        Variant{"K1", false, false, true, 1}}) {
    CAPTURE(v.name);
    auto cfg = toy::config(v.K, 2, 2);
    cfg.no_local = v.no_local;
    cfg.no_global = v.no_global;
    cfg.seed_routing_from_input = v.seeded;
    cfg.optimizer.l2 = 1e-2;
    const auto s = toy::params(ds, cfg, 11);
    const auto sample = every_coordinate(s);

    GradientBuffer g(s);
    bpr_loss(full_forward(s, graphs, cfg), toy::triples(), s, graphs, cfg, &g);
    auto bpr = [&](const ParameterStore& p) {
      return bpr_loss(full_forward(p, graphs, cfg), toy::triples(), p, graphs, cfg, nullptr).total();
    };
    const auto rb = finite_difference_check(bpr, s, g, sample, 1e-4, 1e-4);
    CHECK_MESSAGE(rb.pass, "bpr max rel error " << rb.max_rel_error);

    if (v.K > 1) {
      GradientBuffer gc(s);
      contrast_loss(full_forward(s, graphs, cfg), toy::triples(), s, graphs, cfg, &gc);
      auto cl = [&](const ParameterStore& p) {
        return contrast_loss(full_forward(p, graphs, cfg), toy::triples(), p, graphs, cfg, nullptr);
      };
      const auto rc = finite_difference_check(cl, s, gc, sample, 1e-4, 1e-4);
      CHECK_MESSAGE(rc.pass, "contrast max rel error " << rc.max_rel_error);
    }
  }
}

TEST_CASE("predict_all masks train bundles only") {
  const auto ds = toy::dataset();
  const auto cfg = toy::config();
  const auto graphs = ModelGraphs::build(ds, ds.user_bundle);
  const auto out = full_forward(toy::params(ds, cfg, 4), graphs, cfg);
  const auto sc = predict_all(out, 0, graphs.user_bundle);
  REQUIRE(sc.size() == 2);
  CHECK(std::isinf(sc[0]));
  CHECK(sc[0] < 0);
  CHECK(sc[1] == score(out, 0, 1));
}

TEST_CASE("ModelConfig: validation and json round trip") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.variant_name() == "full");
  c.no_local = c.no_global = true;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.dim = 10;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.temperature = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  ModelConfig d;
  d.intents = 8;
  d.layers = 1;
  d.no_contrast = true;
  d.alternation = Alternation::per_epoch;
  ModelConfig e;
  e.merge_json(d.to_json());
  CHECK(e.to_json() == d.to_json());
  CHECK_THROWS_AS(e.merge_json({{"no_such_key", 1}}), ConfigError);
}

TEST_CASE("train_epoch: loss falls and runs are reproducible") {
  const auto ds = toy::dataset();
  auto cfg = toy::config();
  cfg.optimizer.learning_rate = 0.05;
  const auto split = toy::all_train(ds);
  const auto graphs = ModelGraphs::build(ds, split.train);
  auto a = init_parameters(2, 2, 3, cfg.dim, cfg.intents, cfg.seed);
  auto b = a;
  const auto first = train_epoch(a, graphs, split, cfg, 0);
  CHECK(first.bpr_updates == 1);
  CHECK(first.contrast_updates == 1);
  EpochMetrics last;
  for (std::size_t e = 1; e < 30; ++e) last = train_epoch(a, graphs, split, cfg, e);
  CHECK(last.bpr_loss < first.bpr_loss);
  train_epoch(b, graphs, split, cfg, 0);
  for (std::size_t e = 1; e < 30; ++e) train_epoch(b, graphs, split, cfg, e);
  for (auto t : kTables) CHECK(a.table(t) == b.table(t));
}

TEST_CASE("train_epoch: contrast ablation skips the contrast step") {
  const auto ds = toy::dataset();
  auto cfg = toy::config();
  cfg.no_contrast = true;
  const auto split = toy::all_train(ds);
  const auto graphs = ModelGraphs::build(ds, split.train);
  auto s = init_parameters(2, 2, 3, cfg.dim, cfg.intents, 1);
  const auto m = train_epoch(s, graphs, split, cfg, 0);
  CHECK(m.contrast_updates == 0);
  CHECK(s.step == 1);
}

TEST_CASE("train_epoch: non-finite parameters raise and dump the batch") {
  const auto ds = toy::dataset();
  const auto cfg = toy::config();
  const auto split = toy::all_train(ds);
  const auto graphs = ModelGraphs::build(ds, split.train);
  auto s = init_parameters(2, 2, 3, cfg.dim, cfg.intents, 1);
  s.item(0, 0) = std::numeric_limits<double>::infinity();
  const auto dir = std::filesystem::temp_directory_path() / "midgn_crash_test";
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(train_epoch(s, graphs, split, cfg, 0, dir), NumericError);
  CHECK(std::filesystem::exists(dir / "crash.ckpt"));
  CHECK(std::filesystem::exists(dir / "crash_batch.tsv"));
}
