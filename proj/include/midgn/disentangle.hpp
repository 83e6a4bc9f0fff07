#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "midgn/graph.hpp"
#include "midgn/matrix.hpp"

namespace midgn {

/// Per-edge, per-intent routing scores, stored edge-major (edge_count x K).
class IntentConfidence {
 public:
  IntentConfidence() = default;
  IntentConfidence(std::size_t edges, std::size_t intents, double fill)
      : intents_(intents), values_(edges * intents, fill) {}

  std::size_t intents() const noexcept { return intents_; }
  std::size_t edge_count() const noexcept { return intents_ == 0 ? 0 : values_.size() / intents_; }
  std::span<double> edge(std::size_t e) { return {values_.data() + e * intents_, intents_}; }
  std::span<const double> edge(std::size_t e) const { return {values_.data() + e * intents_, intents_}; }
  double& at(std::size_t e, std::size_t k) { return values_[e * intents_ + k]; }
  double at(std::size_t e, std::size_t k) const { return values_[e * intents_ + k]; }
  std::span<const double> flat() const noexcept { return values_; }

 private:
  std::size_t intents_ = 0;
  std::vector<double> values_;
};

/// Node state as K chunks per node: row c holds chunk k in columns
/// [k*w, (k+1)*w).
using ChunkedNodeState = Matrix;

struct RoutingConfig {
  std::size_t intents = 1;
  std::size_t iterations = 2;
  // Before the first aggregation, raise each edge's confidences by the dot
  // product of the node's input chunks with the item. Without this the
  // input chunks never reach the output and all intents stay identical.
  bool seed_from_input = true;
};

IntentConfidence init_confidence(const BipartiteGraph& graph, std::size_t intents);

/// Row-wise softmax over intents.
IntentConfidence normalize_confidence(const IntentConfidence& conf);

/// A_k(c, i) += <chunk_k(c), i> for every edge.
void confidence_update(const BipartiteGraph& graph, IntentConfidence& conf, const ChunkedNodeState& nodes,
                       const Matrix& item_emb);

/// Symmetric-normalized aggregation of item embeddings weighted by the
/// normalized confidences. Nodes without neighbors get zero chunks.
ChunkedNodeState weighted_aggregate(const BipartiteGraph& graph, const IntentConfidence& normalized,
                                    const Matrix& item_emb);

struct RouteResult {
  ChunkedNodeState nodes;
  IntentConfidence conf;
};

/// One routing iteration: normalize, aggregate, then raise the confidences
/// by the new chunks. Item embeddings are read only.
RouteResult route_iteration(const BipartiteGraph& graph, const IntentConfidence& conf,
                            const ChunkedNodeState& nodes, const Matrix& item_emb);

/// Intermediates of one layer, kept for the backward pass.
struct LayerTrace {
  ChunkedNodeState input;
  std::vector<IntentConfidence> weights;     // normalized confidences per iteration
  std::vector<ChunkedNodeState> states;      // aggregated chunks per iteration
  std::vector<Matrix> node_degree;           // per iteration, left_count x K
  std::vector<Matrix> item_degree;           // per iteration, right_count x K

  const ChunkedNodeState& output() const { return states.back(); }
};

LayerTrace disentangle_layer(const BipartiteGraph& graph, const ChunkedNodeState& input, const Matrix& item_emb,
                             const RoutingConfig& cfg);

struct StackTrace {
  std::vector<LayerTrace> layers;
  ChunkedNodeState output;  // sum of layer outputs, input excluded
};

StackTrace disentangle_stack(const BipartiteGraph& graph, const ChunkedNodeState& init, const Matrix& item_emb,
                             std::size_t layers, const RoutingConfig& cfg);

/// Back-propagates `grad_output` (gradient w.r.t. StackTrace::output).
/// Adds into `grad_init` (left_count x d) and `grad_item` (right_count x w).
void disentangle_stack_backward(const BipartiteGraph& graph, const StackTrace& trace, const Matrix& item_emb,
                                const RoutingConfig& cfg, const Matrix& grad_output, Matrix& grad_init,
                                Matrix& grad_item);

/// sum_i item_i / sqrt(|N_c| |N_i|), one chunk wide.
Matrix plain_aggregate(const BipartiteGraph& graph, const Matrix& item_emb);

/// Adds the gradient of plain_aggregate w.r.t. the item table.
void plain_aggregate_backward(const BipartiteGraph& graph, const Matrix& grad_output, Matrix& grad_item);

/// Writes `edge_id, left, right, k, weight` rows.
void dump_confidences(const std::filesystem::path& path, const BipartiteGraph& graph,
                      const IntentConfidence& normalized);

}  // namespace midgn
