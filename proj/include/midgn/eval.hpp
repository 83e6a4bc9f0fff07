#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "midgn/data_ingest.hpp"
#include "midgn/graph.hpp"
#include "midgn/model.hpp"

namespace midgn {

double recall_at_k(std::span<const Id> ranked, std::span<const Id> relevant, std::size_t k);
double ndcg_at_k(std::span<const Id> ranked, std::span<const Id> relevant, std::size_t k);

/// Ids of the `k` best finite scores, ordered by score descending then id
/// ascending. -inf entries (masked bundles) are never returned.
std::vector<Id> top_k(std::span<const double> scores, std::size_t k);

struct RankingReport {
  std::vector<std::size_t> ks;
  std::map<std::size_t, double> recall;
  std::map<std::size_t, double> ndcg;
  std::size_t users_evaluated = 0;
  std::vector<std::pair<Id, std::vector<Id>>> top_lists;  // (user, top max(ks))

  nlohmann::json to_json(bool with_lists = false) const;
  /// Rows of `dataset,config,k,metric,value`.
  std::string to_csv(const std::string& dataset, const std::string& config, bool header = true) const;
};

enum class EvalTarget { validation, test };

/// Ranks all bundles not in the user's train set for every user with at
/// least one held-out bundle; macro-averages the metrics over those users.
RankingReport evaluate(const ForwardOutputs& out, const SplitDataset& split, const std::vector<std::size_t>& ks,
                       EvalTarget target = EvalTarget::test, bool keep_lists = false);

/// Same metrics from an arbitrary user x bundle score matrix with the mask
/// already applied (entries of -inf are excluded).
RankingReport evaluate_scores(const Matrix& scores, const InteractionMatrix& held_out, const std::vector<std::size_t>& ks,
                              bool keep_lists = false);

}  // namespace midgn
