#include "midgn/synth.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "midgn/error.hpp"

namespace midgn {

void SynthConfig::validate() const {
  if (n_users == 0 || n_bundles == 0 || true_intents == 0 || items_per_intent == 0 || bundles_per_user == 0 ||
      intents_per_bundle == 0 || items_per_bundle == 0 || items_per_user == 0 || intents_per_user == 0) {
    throw ConfigError("synthetic counts must be positive");
  }
  if (n_items != 0 && n_items != true_intents * items_per_intent) {
    throw ConfigError("n_items must equal true_intents * items_per_intent");
  }
  if (intents_per_bundle > true_intents) throw ConfigError("intents_per_bundle exceeds true_intents");
  if (intents_per_user > true_intents) throw ConfigError("intents_per_user exceeds true_intents");
  if (items_per_bundle < intents_per_bundle) throw ConfigError("items_per_bundle must cover every bundle intent");
  if (items_per_bundle > intents_per_bundle * items_per_intent) throw ConfigError("items_per_bundle too large");
  if (bundles_per_user > n_bundles) throw ConfigError("bundles_per_user exceeds n_bundles");
  if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw ConfigError("noise_rate must lie in [0, 1)");
}

nlohmann::json SynthConfig::to_json() const {
  return {{"n_users", n_users},
          {"n_items", item_count()},
          {"n_bundles", n_bundles},
          {"true_intents", true_intents},
          {"items_per_intent", items_per_intent},
          {"bundles_per_user", bundles_per_user},
          {"intents_per_bundle", intents_per_bundle},
          {"items_per_bundle", items_per_bundle},
          {"items_per_user", items_per_user},
          {"intents_per_user", intents_per_user},
          {"noise_rate", noise_rate},
          {"seed", seed}};
}

void SynthConfig::merge_json(const nlohmann::json& j) {
  for (const auto& [key, val] : j.items()) {
    if (key == "n_users") n_users = val.get<std::size_t>();
    else if (key == "n_items") n_items = val.get<std::size_t>();
    else if (key == "n_bundles") n_bundles = val.get<std::size_t>();
    else if (key == "true_intents") true_intents = val.get<std::size_t>();
    else if (key == "items_per_intent") items_per_intent = val.get<std::size_t>();
    else if (key == "bundles_per_user") bundles_per_user = val.get<std::size_t>();
    else if (key == "intents_per_bundle") intents_per_bundle = val.get<std::size_t>();
    else if (key == "items_per_bundle") items_per_bundle = val.get<std::size_t>();
    else if (key == "items_per_user") items_per_user = val.get<std::size_t>();
    else if (key == "intents_per_user") intents_per_user = val.get<std::size_t>();
    else if (key == "noise_rate") noise_rate = val.get<double>();
    else if (key == "seed") seed = val.get<std::uint64_t>();
    else throw ConfigError("unknown synth config key '" + key + "'");
  }
}

namespace {

std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

// Labeled edge list -> matrix plus labels aligned with its sorted pairs.
// A clean label wins over a noise label on the same pair.
std::pair<InteractionMatrix, std::vector<int>> to_labeled(std::size_t rows, std::size_t cols,
                                                          const std::vector<std::pair<IdPair, int>>& edges) {
  std::map<IdPair, int> label;
  for (const auto& [p, l] : edges) {
    auto [it, inserted] = label.emplace(p, l);
    if (!inserted && it->second == kNoiseLabel) it->second = l;
  }
  std::vector<IdPair> pairs;
  std::vector<int> labels;
  for (const auto& [p, l] : label) {
    pairs.push_back(p);
    labels.push_back(l);
  }
  return {InteractionMatrix(rows, cols, std::move(pairs)), std::move(labels)};
}

}  // namespace

SynthData generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::size_t T = cfg.true_intents;
  const std::size_t n_items = cfg.item_count();

  std::vector<int> item_intent(n_items);
  for (std::size_t i = 0; i < n_items; ++i) item_intent[i] = static_cast<int>(i / cfg.items_per_intent);
  auto item_of = [&](std::size_t intent, std::size_t slot) { return static_cast<Id>(intent * cfg.items_per_intent + slot); };
  std::uniform_int_distribution<std::size_t> any_item(0, n_items - 1);
  std::uniform_int_distribution<std::size_t> in_cluster(0, cfg.items_per_intent - 1);
  std::bernoulli_distribution noisy(cfg.noise_rate);

  // bundles: items drawn round-robin from their sampled intents
  std::vector<std::vector<std::size_t>> bundle_intents(cfg.n_bundles);
  std::vector<std::pair<IdPair, int>> bi_edges;
  for (std::size_t b = 0; b < cfg.n_bundles; ++b) {
    bundle_intents[b] = sample_distinct(T, cfg.intents_per_bundle, rng);
    std::vector<std::vector<std::size_t>> pools;
    for (std::size_t j = 0; j < bundle_intents[b].size(); ++j) pools.push_back(sample_distinct(cfg.items_per_intent, cfg.items_per_intent, rng));
    for (std::size_t j = 0; j < cfg.items_per_bundle; ++j) {
      const std::size_t which = j % bundle_intents[b].size();
      const std::size_t k = bundle_intents[b][which];
      const Id item = item_of(k, pools[which][j / bundle_intents[b].size()]);
      if (noisy(rng)) bi_edges.push_back({{static_cast<Id>(b), static_cast<Id>(any_item(rng))}, kNoiseLabel});
      else bi_edges.push_back({{static_cast<Id>(b), item}, static_cast<int>(k)});
    }
  }

  std::vector<std::pair<IdPair, int>> ub_edges, ui_edges;
  std::gamma_distribution<double> gamma(1.0, 1.0);
  std::uniform_int_distribution<std::size_t> any_bundle(0, cfg.n_bundles - 1);
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    std::vector<double> pref(T, 0.0);
    double total = 0.0;
    for (std::size_t k : sample_distinct(T, cfg.intents_per_user, rng)) {
      pref[k] = gamma(rng) + 0.1;
      total += pref[k];
    }
    for (double& p : pref) p /= total;

    // bundles by affinity, without replacement
    std::vector<double> affinity(cfg.n_bundles, 0.0);
    for (std::size_t b = 0; b < cfg.n_bundles; ++b)
      for (std::size_t k : bundle_intents[b]) affinity[b] += pref[k];
    std::size_t positive = 0;
    for (double a : affinity) positive += a > 0 ? 1 : 0;
    const std::size_t want = std::min(cfg.bundles_per_user, positive);
    for (std::size_t j = 0; j < want; ++j) {
      std::discrete_distribution<std::size_t> pick(affinity.begin(), affinity.end());
      const std::size_t b = pick(rng);
      affinity[b] = 0.0;
      const Id bundle = noisy(rng) ? static_cast<Id>(any_bundle(rng)) : static_cast<Id>(b);
      ub_edges.push_back({{static_cast<Id>(u), bundle}, 0});
    }

    std::discrete_distribution<std::size_t> pick_intent(pref.begin(), pref.end());
    for (std::size_t j = 0; j < cfg.items_per_user; ++j) {
      const std::size_t k = pick_intent(rng);
      const Id item = item_of(k, in_cluster(rng));
      if (noisy(rng)) ui_edges.push_back({{static_cast<Id>(u), static_cast<Id>(any_item(rng))}, kNoiseLabel});
      else ui_edges.push_back({{static_cast<Id>(u), item}, static_cast<int>(k)});
    }
  }

  SynthData out;
  out.dataset.name = "synthetic";
  out.dataset.user_bundle = to_labeled(cfg.n_users, cfg.n_bundles, ub_edges).first;
  auto [h, h_labels] = to_labeled(cfg.n_bundles, n_items, bi_edges);
  auto [r, r_labels] = to_labeled(cfg.n_users, n_items, ui_edges);
  out.dataset.bundle_item = std::move(h);
  out.dataset.user_item = std::move(r);
  out.truth.item_intent = std::move(item_intent);
  out.truth.bundle_item_labels = std::move(h_labels);
  out.truth.user_item_labels = std::move(r_labels);
  return out;
}

nlohmann::json GroundTruth::to_json(const Dataset& ds) const {
  auto edges = [](const InteractionMatrix& m, const std::vector<int>& labels) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t e = 0; e < m.nnz(); ++e) arr.push_back({m.pairs()[e].first, m.pairs()[e].second, labels[e]});
    return arr;
  };
  return {{"item_intent", item_intent},
          {"user_item", edges(ds.user_item, user_item_labels)},
          {"bundle_item", edges(ds.bundle_item, bundle_item_labels)}};
}

void write_synthetic(const std::filesystem::path& dir, const SynthData& data) {
  write_dataset(dir, data.dataset);
  std::ofstream out(dir / "ground_truth.json");
  if (!out) throw IoError("cannot write ground_truth.json");
  out << data.truth.to_json(data.dataset).dump() << '\n';
}

std::vector<int> hungarian_max(const std::vector<std::vector<double>>& weights) {
  const std::size_t rows = weights.size();
  if (rows == 0) return {};
  const std::size_t cols = weights[0].size();
  const bool transpose = rows > cols;
  const std::size_t n = transpose ? cols : rows;  // n <= m
  const std::size_t m = transpose ? rows : cols;
  auto cost = [&](std::size_t i, std::size_t j) { return transpose ? -weights[j][i] : -weights[i][j]; };

  // potentials-based assignment, 1-indexed
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> match(rows, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transpose) match[j - 1] = static_cast<int>(p[j] - 1);
    else match[p[j] - 1] = static_cast<int>(j - 1);
  }
  return match;
}

double intent_alignment(const IntentConfidence& normalized, const std::vector<int>& edge_labels,
                        std::size_t true_intents) {
  if (normalized.edge_count() == 0) throw ConfigError("intent alignment needs a non-empty confidence dump");
  if (edge_labels.size() != normalized.edge_count()) {
    throw StructuralError("edge labels do not match the confidence dump");
  }
  const std::size_t K = normalized.intents();
  std::vector<std::vector<double>> co(K, std::vector<double>(true_intents, 0.0));
  std::size_t labeled = 0;
  for (std::size_t e = 0; e < edge_labels.size(); ++e) {
    if (edge_labels[e] == kNoiseLabel) continue;
    if (edge_labels[e] < 0 || static_cast<std::size_t>(edge_labels[e]) >= true_intents) {
      throw BoundsError("edge label " + std::to_string(edge_labels[e]) + " out of range");
    }
    const auto row = normalized.edge(e);
    const auto k = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    co[k][static_cast<std::size_t>(edge_labels[e])] += 1.0;
    ++labeled;
  }
  if (labeled == 0) throw ConfigError("no labeled edges to align");
  const auto match = hungarian_max(co);
  double matched = 0.0;
  for (std::size_t k = 0; k < K; ++k)
    if (match[k] >= 0) matched += co[k][static_cast<std::size_t>(match[k])];
  return matched / static_cast<double>(labeled);
}

}  // namespace midgn
