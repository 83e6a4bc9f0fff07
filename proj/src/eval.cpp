#include "midgn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "midgn/error.hpp"
#include "midgn/parallel.hpp"

namespace midgn {

double recall_at_k(std::span<const Id> ranked, std::span<const Id> relevant, std::size_t k) {
  if (relevant.empty()) throw ConfigError("recall@k needs a non-empty relevant set");
  std::size_t hits = 0;
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t p = 0; p < n; ++p)
    if (std::find(relevant.begin(), relevant.end(), ranked[p]) != relevant.end()) ++hits;
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_k(std::span<const Id> ranked, std::span<const Id> relevant, std::size_t k) {
  if (relevant.empty()) throw ConfigError("ndcg@k needs a non-empty relevant set");
  double dcg = 0.0;
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t p = 0; p < n; ++p)
    if (std::find(relevant.begin(), relevant.end(), ranked[p]) != relevant.end()) dcg += 1.0 / std::log2(p + 2.0);
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, relevant.size());
  for (std::size_t p = 0; p < ideal; ++p) idcg += 1.0 / std::log2(p + 2.0);
  return dcg / idcg;
}

std::vector<Id> top_k(std::span<const double> scores, std::size_t k) {
  std::vector<Id> ids;
  ids.reserve(scores.size());
  for (std::size_t b = 0; b < scores.size(); ++b)
    if (scores[b] != -std::numeric_limits<double>::infinity()) ids.push_back(static_cast<Id>(b));
  const auto better = [&](Id a, Id b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
  const std::size_t n = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(), better);
  ids.resize(n);
  return ids;
}

namespace {

std::vector<std::vector<Id>> per_user(const InteractionMatrix& m) {
  std::vector<std::vector<Id>> lists(m.n_rows());
  for (const auto& [u, b] : m.pairs()) lists[u].push_back(b);
  return lists;
}

template <typename ScoreFn>
RankingReport rank_users(std::size_t n_users, const InteractionMatrix& held_out, const std::vector<std::size_t>& ks,
                         bool keep_lists, ScoreFn&& scores_for) {
  if (ks.empty()) throw ConfigError("evaluation needs at least one cutoff");
  const auto relevant = per_user(held_out);
  const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
  std::vector<Id> users;
  for (std::size_t u = 0; u < n_users; ++u)
    if (!relevant[u].empty()) users.push_back(static_cast<Id>(u));

  // per-user metrics laid out [user][2 * kidx + {0 recall, 1 ndcg}]
  std::vector<double> metrics(users.size() * ks.size() * 2, 0.0);
  std::vector<std::vector<Id>> lists(keep_lists ? users.size() : 0);
  parallel_for(users.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t j = lo; j < hi; ++j) {
      const Id u = users[j];
      const std::vector<double> s = scores_for(u);
      const auto top = top_k(s, max_k);
      for (std::size_t q = 0; q < ks.size(); ++q) {
        metrics[(j * ks.size() + q) * 2] = recall_at_k(top, relevant[u], ks[q]);
        metrics[(j * ks.size() + q) * 2 + 1] = ndcg_at_k(top, relevant[u], ks[q]);
      }
      if (keep_lists) lists[j] = top;
    }
  });

  RankingReport rep;
  rep.ks = ks;
  rep.users_evaluated = users.size();
  for (std::size_t q = 0; q < ks.size(); ++q) {
    double r = 0.0, n = 0.0;
    for (std::size_t j = 0; j < users.size(); ++j) {
      r += metrics[(j * ks.size() + q) * 2];
      n += metrics[(j * ks.size() + q) * 2 + 1];
    }
    const double denom = users.empty() ? 1.0 : static_cast<double>(users.size());
    rep.recall[ks[q]] = r / denom;
    rep.ndcg[ks[q]] = n / denom;
  }
  if (keep_lists)
    for (std::size_t j = 0; j < users.size(); ++j) rep.top_lists.emplace_back(users[j], std::move(lists[j]));
  return rep;
}

}  // namespace

RankingReport evaluate(const ForwardOutputs& out, const SplitDataset& split, const std::vector<std::size_t>& ks,
                       EvalTarget target, bool keep_lists) {
  const BipartiteGraph train(split.train);
  const auto& held_out = target == EvalTarget::test ? split.test : split.val;
  return rank_users(out.e_user.rows(), held_out, ks, keep_lists,
                    [&](Id u) { return predict_all(out, u, train); });
}

RankingReport evaluate_scores(const Matrix& scores, const InteractionMatrix& held_out, const std::vector<std::size_t>& ks,
                              bool keep_lists) {
  return rank_users(scores.rows(), held_out, ks, keep_lists, [&](Id u) {
    const auto r = scores.row(u);
    return std::vector<double>(r.begin(), r.end());
  });
}

nlohmann::json RankingReport::to_json(bool with_lists) const {
  nlohmann::json j;
  j["users_evaluated"] = users_evaluated;
  j["ks"] = ks;
  for (std::size_t k : ks) {
    j["recall@" + std::to_string(k)] = recall.at(k);
    j["ndcg@" + std::to_string(k)] = ndcg.at(k);
  }
  if (with_lists) {
    nlohmann::json lists = nlohmann::json::array();
    for (const auto& [u, top] : top_lists) lists.push_back({{"user", u}, {"top", top}});
    j["top_lists"] = lists;
  }
  return j;
}

std::string RankingReport::to_csv(const std::string& dataset, const std::string& config, bool header) const {
  std::ostringstream out;
  out.precision(10);
  if (header) out << "dataset,config,k,metric,value\n";
  for (std::size_t k : ks) {
    out << dataset << ',' << config << ',' << k << ",recall," << recall.at(k) << '\n';
    out << dataset << ',' << config << ',' << k << ",ndcg," << ndcg.at(k) << '\n';
  }
  return out.str();
}

}  // namespace midgn
