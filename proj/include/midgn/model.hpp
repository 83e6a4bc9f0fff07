#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "midgn/contrast.hpp"
#include "midgn/crossview.hpp"
#include "midgn/data_ingest.hpp"
#include "midgn/disentangle.hpp"
#include "midgn/graph.hpp"
#include "midgn/params.hpp"

namespace midgn {

enum class Alternation { per_batch, per_epoch };

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t intents = 4;
  std::size_t layers = 3;
  std::size_t routing_iters = 2;
  bool seed_routing_from_input = true;
  double temperature = 1.0;
  bool symmetric_contrast = false;
  OptimizerConfig optimizer{};
  InitScheme init = InitScheme::xavier_uniform;
  std::size_t batch_size = 4096;
  std::size_t epochs = 1;
  Alternation alternation = Alternation::per_batch;
  std::size_t contrast_every = 1;  // contrast update after every n-th BPR batch
  bool no_contrast = false;
  bool no_local = false;
  bool no_global = false;
  std::uint64_t seed = 2022;

  void validate() const;
  RoutingConfig routing() const { return {intents, routing_iters, seed_routing_from_input}; }
  ContrastConfig contrast() const { return {intents, temperature, symmetric_contrast}; }
  std::string variant_name() const;

  nlohmann::json to_json() const;
  /// Overrides fields present in `j`; unknown keys are a ConfigError.
  void merge_json(const nlohmann::json& j);
};

/// The three graphs the model propagates over. The user-bundle graph must be
/// built from train pairs only.
struct ModelGraphs {
  BipartiteGraph user_item;
  BipartiteGraph bundle_item;
  BipartiteGraph user_bundle;

  static ModelGraphs build(const Dataset& ds, const InteractionMatrix& train_user_bundle);
};

struct ForwardOutputs {
  Matrix e_user, v_user;      // M x d
  Matrix e_bundle, v_bundle;  // O x d
  // routing traces; empty when that side is ablated
  std::optional<StackTrace> user_trace;
  std::optional<StackTrace> bundle_trace;
};

ForwardOutputs full_forward(const ParameterStore& store, const ModelGraphs& graphs, const ModelConfig& cfg);

/// Back-propagates gradients w.r.t. the four representation matrices into
/// the parameter tables. Rows with any non-zero gradient are marked touched.
void full_backward(const ParameterStore& store, const ModelGraphs& graphs, const ModelConfig& cfg,
                   const ForwardOutputs& fwd, Matrix grad_e_user, Matrix grad_v_user, Matrix grad_e_bundle,
                   Matrix grad_v_bundle, GradientBuffer& grads);

/// (e_u ++ v_u) . (e_b ++ v_b)
double score(const ForwardOutputs& out, Id user, Id bundle);
std::vector<double> score_pairs(const ForwardOutputs& out, const std::vector<IdPair>& pairs);

struct BprResult {
  double ranking_loss = 0.0;  // sum of softplus(-(y_pos - y_neg))
  double reg_loss = 0.0;      // lambda * ||theta_batch||^2
  double total() const { return ranking_loss + reg_loss; }
};

/// Rows regularized for a batch: distinct batch users and bundles, plus the
/// items adjacent to them in the user-item and bundle-item graphs.
struct RegularizedRows {
  std::vector<std::size_t> users, bundles, items;
};
RegularizedRows regularized_rows(const ModelGraphs& graphs, const std::vector<TrainingTriple>& batch);

/// BPR loss over `batch`. When `grads` is non-null the gradient of the loss
/// is written into it (representation part back-propagated through the
/// model, L2 part added directly).
BprResult bpr_loss(const ForwardOutputs& out, const std::vector<TrainingTriple>& batch, const ParameterStore& store,
                   const ModelGraphs& graphs, const ModelConfig& cfg, GradientBuffer* grads);

/// Mean chunk InfoNCE over the distinct users and bundles of `batch`, both
/// views. Gradient of the mean goes into `grads` when non-null.
double contrast_loss(const ForwardOutputs& out, const std::vector<TrainingTriple>& batch,
                     const ParameterStore& store, const ModelGraphs& graphs, const ModelConfig& cfg,
                     GradientBuffer* grads);

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t batches = 0;
  std::size_t bpr_updates = 0;
  std::size_t contrast_updates = 0;
  double bpr_loss = 0.0;       // mean ranking loss per triple
  double contrast_loss = 0.0;  // mean over contrast updates
  double wall_time = 0.0;      // seconds
};

/// One epoch of alternating optimization. Throws NumericError on a
/// non-finite loss; when `crash_dir` is set the offending batch and the
/// parameters before the failing update are written there first.
EpochMetrics train_epoch(ParameterStore& store, const ModelGraphs& graphs, const SplitDataset& split,
                         const ModelConfig& cfg, std::size_t epoch_index,
                         const std::optional<std::filesystem::path>& crash_dir = std::nullopt);

/// Scores for every bundle with the user's train bundles set to -inf.
std::vector<double> predict_all(const ForwardOutputs& out, Id user, const BipartiteGraph& train_user_bundle);

}  // namespace midgn
