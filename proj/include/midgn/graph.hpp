#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "midgn/data_ingest.hpp"

namespace midgn {

enum class Side { left, right };

/// Neighbor slice of one node: `ids[j]` is the j-th neighbor and `edges[j]`
/// the canonical id of the connecting edge. Views into the graph storage.
struct NeighborSlice {
  std::span<const Id> ids;
  std::span<const std::size_t> edges;

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
};

/// Immutable bipartite graph stored as two CSR structures. Edge ids follow
/// the lexicographic (left, right) order, so edge e is position e of the
/// forward adjacency.
class BipartiteGraph {
 public:
  BipartiteGraph() = default;
  explicit BipartiteGraph(const InteractionMatrix& m);

  std::size_t left_count() const noexcept { return left_count_; }
  std::size_t right_count() const noexcept { return right_count_; }
  std::size_t edge_count() const noexcept { return fwd_ids_.size(); }

  NeighborSlice neighbors(Side side, std::size_t id) const;
  std::size_t degree(Side side, std::size_t id) const;

  // Endpoints of edge e.
  Id edge_left(std::size_t e) const { return edge_left_[e]; }
  Id edge_right(std::size_t e) const { return fwd_ids_[e]; }

 private:
  std::size_t left_count_ = 0;
  std::size_t right_count_ = 0;
  std::vector<std::size_t> fwd_offsets_{0};
  std::vector<Id> fwd_ids_;
  std::vector<std::size_t> fwd_edges_;
  std::vector<Id> edge_left_;
  std::vector<std::size_t> rev_offsets_{0};
  std::vector<Id> rev_ids_;
  std::vector<std::size_t> rev_edges_;
};

inline BipartiteGraph build_bipartite(const InteractionMatrix& m) { return BipartiteGraph(m); }

}  // namespace midgn
