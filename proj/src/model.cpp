#include "midgn/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include <spdlog/spdlog.h>

#include "midgn/error.hpp"
#include "midgn/parallel.hpp"

namespace midgn {

void ModelConfig::validate() const {
  if (intents == 0 || dim == 0 || dim % intents != 0) {
    throw ConfigError("embedding size " + std::to_string(dim) + " must be a positive multiple of intents " +
                      std::to_string(intents));
  }
  if (layers == 0) throw ConfigError("layers must be >= 1");
  if (routing_iters == 0) throw ConfigError("routing iterations must be >= 1");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (contrast_every == 0) throw ConfigError("contrast_every must be >= 1");
  if (!(temperature > 0)) throw ConfigError("temperature must be > 0");
  if (no_local && no_global) throw ConfigError("ablating both the local and the global view leaves no disentangling");
  optimizer.validate();
}

std::string ModelConfig::variant_name() const {
  if (no_contrast) return "w/o contra.";
  if (no_local) return "w/o local";
  if (no_global) return "w/o global";
  return "full";
}

nlohmann::json ModelConfig::to_json() const {
  return {
      {"dim", dim},
      {"intents", intents},
      {"layers", layers},
      {"routing_iters", routing_iters},
      {"seed_routing_from_input", seed_routing_from_input},
      {"tau", temperature},
      {"symmetric_contrast", symmetric_contrast},
      {"lr", optimizer.learning_rate},
      {"beta1", optimizer.beta1},
      {"beta2", optimizer.beta2},
      {"epsilon", optimizer.epsilon},
      {"lambda", optimizer.l2},
      {"init", init == InitScheme::normal ? "normal" : "xavier_uniform"},
      {"batch_size", batch_size},
      {"epochs", epochs},
      {"alternation", alternation == Alternation::per_epoch ? "per_epoch" : "per_batch"},
      {"contrast_every", contrast_every},
      {"no_contrast", no_contrast},
      {"no_local", no_local},
      {"no_global", no_global},
      {"seed", seed},
  };
}

void ModelConfig::merge_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "dim") dim = val.get<std::size_t>();
      else if (key == "intents") intents = val.get<std::size_t>();
      else if (key == "layers") layers = val.get<std::size_t>();
      else if (key == "routing_iters") routing_iters = val.get<std::size_t>();
      else if (key == "seed_routing_from_input") seed_routing_from_input = val.get<bool>();
      else if (key == "tau") temperature = val.get<double>();
      else if (key == "symmetric_contrast") symmetric_contrast = val.get<bool>();
      else if (key == "lr") optimizer.learning_rate = val.get<double>();
      else if (key == "beta1") optimizer.beta1 = val.get<double>();
      else if (key == "beta2") optimizer.beta2 = val.get<double>();
      else if (key == "epsilon") optimizer.epsilon = val.get<double>();
      else if (key == "lambda") optimizer.l2 = val.get<double>();
      else if (key == "init") {
        const auto s = val.get<std::string>();
        if (s == "normal") init = InitScheme::normal;
        else if (s == "xavier_uniform") init = InitScheme::xavier_uniform;
        else throw ConfigError("unknown init scheme '" + s + "'");
      } else if (key == "batch_size") batch_size = val.get<std::size_t>();
      else if (key == "epochs") epochs = val.get<std::size_t>();
      else if (key == "alternation") {
        const auto s = val.get<std::string>();
        if (s == "per_batch") alternation = Alternation::per_batch;
        else if (s == "per_epoch") alternation = Alternation::per_epoch;
        else throw ConfigError("unknown alternation '" + s + "'");
      } else if (key == "contrast_every") contrast_every = val.get<std::size_t>();
      else if (key == "no_contrast") no_contrast = val.get<bool>();
      else if (key == "no_local") no_local = val.get<bool>();
      else if (key == "no_global") no_global = val.get<bool>();
      else if (key == "seed") seed = val.get<std::uint64_t>();
      else throw ConfigError("unknown model config key '" + key + "'");
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("bad value for '" + key + "': " + ex.what());
    }
  }
}

ModelGraphs ModelGraphs::build(const Dataset& ds, const InteractionMatrix& train_user_bundle) {
  if (train_user_bundle.n_rows() != ds.n_users() || train_user_bundle.n_cols() != ds.n_bundles()) {
    throw StructuralError("train user-bundle matrix does not match the dataset dimensions");
  }
  return {BipartiteGraph(ds.user_item), BipartiteGraph(ds.bundle_item), BipartiteGraph(train_user_bundle)};
}

namespace {

void check_graphs(const ParameterStore& store, const ModelGraphs& g) {
  const bool ok = g.user_item.left_count() == store.user.rows() && g.user_item.right_count() == store.item.rows() &&
                  g.bundle_item.left_count() == store.bundle.rows() &&
                  g.bundle_item.right_count() == store.item.rows() &&
                  g.user_bundle.left_count() == store.user.rows() &&
                  g.user_bundle.right_count() == store.bundle.rows();
  if (!ok) throw StructuralError("graphs are not dimensionally consistent with the parameter store");
}

// Plain symmetric aggregation broadcast to every chunk and summed over layers.
Matrix plain_view(const BipartiteGraph& g, const Matrix& item, std::size_t intents, std::size_t layers) {
  const Matrix agg = plain_aggregate(g, item);
  const std::size_t w = item.cols();
  Matrix out(g.left_count(), w * intents);
  const double scale = static_cast<double>(layers);
  for (std::size_t c = 0; c < out.rows(); ++c)
    for (std::size_t k = 0; k < intents; ++k) axpy(scale, agg.row(c), out.chunk(c, k, w));
  return out;
}

void plain_view_backward(const BipartiteGraph& g, const Matrix& grad_out, std::size_t intents, std::size_t layers,
                         Matrix& grad_item) {
  const std::size_t w = grad_item.cols();
  Matrix g_agg(g.left_count(), w);
  const double scale = static_cast<double>(layers);
  for (std::size_t c = 0; c < g_agg.rows(); ++c)
    for (std::size_t k = 0; k < intents; ++k) axpy(scale, grad_out.chunk(c, k, w), g_agg.row(c));
  plain_aggregate_backward(g, g_agg, grad_item);
}

void add_into(GradientBuffer& grads, Table t, const Matrix& g) {
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const auto src = g.row(r);
    if (std::all_of(src.begin(), src.end(), [](double x) { return x == 0.0; })) continue;
    axpy(1.0, src, grads.row(t, r));
  }
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

}  // namespace

ForwardOutputs full_forward(const ParameterStore& store, const ModelGraphs& graphs, const ModelConfig& cfg) {
  cfg.validate();
  check_graphs(store, graphs);
  if (store.dim != cfg.dim || store.intents != cfg.intents) {
    throw ConfigError("parameter store layout (d=" + std::to_string(store.dim) + ", K=" +
                      std::to_string(store.intents) + ") does not match the model config");
  }
  ForwardOutputs out;
  const auto routing = cfg.routing();
  if (cfg.no_global) {
    out.e_user = plain_view(graphs.user_item, store.item, cfg.intents, cfg.layers);
  } else {
    out.user_trace = disentangle_stack(graphs.user_item, store.user, store.item, cfg.layers, routing);
    out.e_user = out.user_trace->output;
  }
  if (cfg.no_local) {
    out.e_bundle = plain_view(graphs.bundle_item, store.item, cfg.intents, cfg.layers);
  } else {
    out.bundle_trace = disentangle_stack(graphs.bundle_item, store.bundle, store.item, cfg.layers, routing);
    out.e_bundle = out.bundle_trace->output;
  }
  auto v = cross_propagate(graphs.user_bundle, out.e_user, out.e_bundle);
  out.v_user = std::move(v.user);
  out.v_bundle = std::move(v.bundle);
  return out;
}

void full_backward(const ParameterStore& store, const ModelGraphs& graphs, const ModelConfig& cfg,
                   const ForwardOutputs& fwd, Matrix grad_e_user, Matrix grad_v_user, Matrix grad_e_bundle,
                   Matrix grad_v_bundle, GradientBuffer& grads) {
  cross_propagate_backward(graphs.user_bundle, grad_v_user, grad_v_bundle, grad_e_user, grad_e_bundle);

  Matrix g_user(store.user.rows(), store.user.cols());
  Matrix g_bundle(store.bundle.rows(), store.bundle.cols());
  Matrix g_item(store.item.rows(), store.item.cols());
  const auto routing = cfg.routing();
  if (fwd.user_trace) {
    disentangle_stack_backward(graphs.user_item, *fwd.user_trace, store.item, routing, grad_e_user, g_user, g_item);
  } else {
    plain_view_backward(graphs.user_item, grad_e_user, cfg.intents, cfg.layers, g_item);
  }
  if (fwd.bundle_trace) {
    disentangle_stack_backward(graphs.bundle_item, *fwd.bundle_trace, store.item, routing, grad_e_bundle, g_bundle,
                               g_item);
  } else {
    plain_view_backward(graphs.bundle_item, grad_e_bundle, cfg.intents, cfg.layers, g_item);
  }
  add_into(grads, Table::user, g_user);
  add_into(grads, Table::bundle, g_bundle);
  add_into(grads, Table::item, g_item);
}

double score(const ForwardOutputs& out, Id user, Id bundle) {
  if (user >= out.e_user.rows() || bundle >= out.e_bundle.rows()) {
    throw BoundsError("score: (" + std::to_string(user) + ", " + std::to_string(bundle) + ") out of range");
  }
  return dot(out.e_user.row(user), out.e_bundle.row(bundle)) + dot(out.v_user.row(user), out.v_bundle.row(bundle));
}

std::vector<double> score_pairs(const ForwardOutputs& out, const std::vector<IdPair>& pairs) {
  std::vector<double> s;
  s.reserve(pairs.size());
  for (const auto& [u, b] : pairs) s.push_back(score(out, u, b));
  return s;
}

RegularizedRows regularized_rows(const ModelGraphs& graphs, const std::vector<TrainingTriple>& batch) {
  std::vector<std::uint8_t> u_seen(graphs.user_item.left_count(), 0);
  std::vector<std::uint8_t> b_seen(graphs.bundle_item.left_count(), 0);
  std::vector<std::uint8_t> i_seen(graphs.user_item.right_count(), 0);
  for (const auto& t : batch) {
    u_seen[t.user] = 1;
    b_seen[t.pos_bundle] = 1;
    b_seen[t.neg_bundle] = 1;
  }
  RegularizedRows rows;
  for (std::size_t u = 0; u < u_seen.size(); ++u) {
    if (!u_seen[u]) continue;
    rows.users.push_back(u);
    for (Id i : graphs.user_item.neighbors(Side::left, u).ids) i_seen[i] = 1;
  }
  for (std::size_t b = 0; b < b_seen.size(); ++b) {
    if (!b_seen[b]) continue;
    rows.bundles.push_back(b);
    for (Id i : graphs.bundle_item.neighbors(Side::left, b).ids) i_seen[i] = 1;
  }
  for (std::size_t i = 0; i < i_seen.size(); ++i)
    if (i_seen[i]) rows.items.push_back(i);
  return rows;
}

BprResult bpr_loss(const ForwardOutputs& out, const std::vector<TrainingTriple>& batch, const ParameterStore& store,
                   const ModelGraphs& graphs, const ModelConfig& cfg, GradientBuffer* grads) {
  if (batch.empty()) throw ConfigError("BPR batch must not be empty");
  BprResult res;
  Matrix g_eu, g_vu, g_eb, g_vb;
  if (grads) {
    g_eu = Matrix(out.e_user.rows(), out.e_user.cols());
    g_vu = Matrix(out.v_user.rows(), out.v_user.cols());
    g_eb = Matrix(out.e_bundle.rows(), out.e_bundle.cols());
    g_vb = Matrix(out.v_bundle.rows(), out.v_bundle.cols());
  }
  for (const auto& t : batch) {
    const double x = score(out, t.user, t.pos_bundle) - score(out, t.user, t.neg_bundle);
    res.ranking_loss += softplus(-x);
    if (!grads) continue;
    const double gx = -sigmoid(-x);  // d softplus(-x) / dx
    const auto eu = out.e_user.row(t.user), vu = out.v_user.row(t.user);
    axpy(gx, out.e_bundle.row(t.pos_bundle), g_eu.row(t.user));
    axpy(-gx, out.e_bundle.row(t.neg_bundle), g_eu.row(t.user));
    axpy(gx, out.v_bundle.row(t.pos_bundle), g_vu.row(t.user));
    axpy(-gx, out.v_bundle.row(t.neg_bundle), g_vu.row(t.user));
    axpy(gx, eu, g_eb.row(t.pos_bundle));
    axpy(-gx, eu, g_eb.row(t.neg_bundle));
    axpy(gx, vu, g_vb.row(t.pos_bundle));
    axpy(-gx, vu, g_vb.row(t.neg_bundle));
  }
  if (grads) full_backward(store, graphs, cfg, out, std::move(g_eu), std::move(g_vu), std::move(g_eb), std::move(g_vb),
                           *grads);

  const double lambda = cfg.optimizer.l2;
  if (lambda > 0) {
    const auto rows = regularized_rows(graphs, batch);
    auto reg = [&](Table t, const std::vector<std::size_t>& ids) {
      for (std::size_t r : ids) {
        const auto p = store.table(t).row(r);
        res.reg_loss += lambda * dot(p, p);
        if (grads) axpy(2.0 * lambda, p, grads->row(t, r));
      }
    };
    reg(Table::user, rows.users);
    reg(Table::bundle, rows.bundles);
    reg(Table::item, rows.items);
  }
  return res;
}

double contrast_loss(const ForwardOutputs& out, const std::vector<TrainingTriple>& batch,
                     const ParameterStore& store, const ModelGraphs& graphs, const ModelConfig& cfg,
                     GradientBuffer* grads) {
  std::vector<std::size_t> users, bundles;
  {
    std::vector<std::uint8_t> us(out.e_user.rows(), 0), bs(out.e_bundle.rows(), 0);
    for (const auto& t : batch) {
      us[t.user] = 1;
      bs[t.pos_bundle] = 1;
      bs[t.neg_bundle] = 1;
    }
    for (std::size_t u = 0; u < us.size(); ++u)
      if (us[u]) users.push_back(u);
    for (std::size_t b = 0; b < bs.size(); ++b)
      if (bs[b]) bundles.push_back(b);
  }
  const auto ccfg = cfg.contrast();
  const std::size_t terms = (users.size() + bundles.size()) * cfg.intents * (cfg.symmetric_contrast ? 2 : 1);
  if (terms == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(terms);

  Matrix g_eu, g_vu, g_eb, g_vb;
  if (grads) {
    g_eu = Matrix(out.e_user.rows(), out.e_user.cols());
    g_vu = Matrix(out.v_user.rows(), out.v_user.cols());
    g_eb = Matrix(out.e_bundle.rows(), out.e_bundle.cols());
    g_vb = Matrix(out.v_bundle.rows(), out.v_bundle.cols());
  }
  const auto ru = info_nce({&out.e_user, &out.v_user, users}, ccfg, scale, grads ? &g_eu : nullptr,
                           grads ? &g_vu : nullptr);
  const auto rb = info_nce({&out.e_bundle, &out.v_bundle, bundles}, ccfg, scale, grads ? &g_eb : nullptr,
                           grads ? &g_vb : nullptr);
  if (grads) full_backward(store, graphs, cfg, out, std::move(g_eu), std::move(g_vu), std::move(g_eb), std::move(g_vb),
                           *grads);
  return (ru.loss_sum + rb.loss_sum) * scale;
}

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  // splitmix64 of (seed, epoch)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (epoch + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void write_crash(const std::optional<std::filesystem::path>& dir, const ParameterStore& store,
                 const std::vector<TrainingTriple>& batch, const std::string& what) {
  if (!dir) return;
  std::filesystem::create_directories(*dir);
  save_checkpoint(*dir / "crash.ckpt", store, {{"reason", what}});
  std::ofstream out(*dir / "crash_batch.tsv");
  for (const auto& t : batch) out << t.user << '\t' << t.pos_bundle << '\t' << t.neg_bundle << '\n';
}

}  // namespace

EpochMetrics train_epoch(ParameterStore& store, const ModelGraphs& graphs, const SplitDataset& split,
                         const ModelConfig& cfg, std::size_t epoch_index,
                         const std::optional<std::filesystem::path>& crash_dir) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  EpochMetrics m;
  m.epoch = epoch_index;

  const auto triples = sample_triples(split, epoch_seed(cfg.seed, epoch_index));
  std::vector<std::vector<TrainingTriple>> batches;
  for (std::size_t lo = 0; lo < triples.size(); lo += cfg.batch_size) {
    const std::size_t hi = std::min(triples.size(), lo + cfg.batch_size);
    batches.emplace_back(triples.begin() + lo, triples.begin() + hi);
  }
  m.batches = batches.size();

  GradientBuffer grads(store);
  double bpr_sum = 0.0, contrast_sum = 0.0;

  auto bpr_update = [&](const std::vector<TrainingTriple>& batch) {
    grads.zero();
    const auto fwd = full_forward(store, graphs, cfg);
    const auto res = bpr_loss(fwd, batch, store, graphs, cfg, &grads);
    if (!std::isfinite(res.total())) {
      write_crash(crash_dir, store, batch, "non-finite BPR loss");
      throw NumericError("non-finite BPR loss in epoch " + std::to_string(epoch_index));
    }
    adam_step(store, grads, cfg.optimizer);
    bpr_sum += res.ranking_loss;
    ++m.bpr_updates;
  };
  auto contrast_update = [&](const std::vector<TrainingTriple>& batch) {
    grads.zero();
    const auto fwd = full_forward(store, graphs, cfg);
    const double loss = contrast_loss(fwd, batch, store, graphs, cfg, &grads);
    if (!std::isfinite(loss)) {
      write_crash(crash_dir, store, batch, "non-finite contrast loss");
      throw NumericError("non-finite contrast loss in epoch " + std::to_string(epoch_index));
    }
    adam_step(store, grads, cfg.optimizer);
    contrast_sum += loss;
    ++m.contrast_updates;
  };

  if (cfg.alternation == Alternation::per_batch) {
    for (std::size_t b = 0; b < batches.size(); ++b) {
      bpr_update(batches[b]);
      if (!cfg.no_contrast && b % cfg.contrast_every == 0) contrast_update(batches[b]);
    }
  } else {
    for (const auto& batch : batches) bpr_update(batch);
    if (!cfg.no_contrast) {
      for (std::size_t b = 0; b < batches.size(); b += cfg.contrast_every) contrast_update(batches[b]);
    }
  }

  m.bpr_loss = triples.empty() ? 0.0 : bpr_sum / static_cast<double>(triples.size());
  m.contrast_loss = m.contrast_updates == 0 ? 0.0 : contrast_sum / static_cast<double>(m.contrast_updates);
  m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return m;
}

std::vector<double> predict_all(const ForwardOutputs& out, Id user, const BipartiteGraph& train_user_bundle) {
  if (user >= out.e_user.rows()) throw BoundsError("user " + std::to_string(user) + " out of range");
  const std::size_t n = out.e_bundle.rows();
  std::vector<double> s(n);
  const auto eu = out.e_user.row(user), vu = out.v_user.row(user);
  for (std::size_t b = 0; b < n; ++b) s[b] = dot(eu, out.e_bundle.row(b)) + dot(vu, out.v_bundle.row(b));
  for (Id b : train_user_bundle.neighbors(Side::left, user).ids) s[b] = -std::numeric_limits<double>::infinity();
  return s;
}

}  // namespace midgn
