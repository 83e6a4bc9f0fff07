#include "midgn/graph.hpp"

#include <numeric>

#include "midgn/error.hpp"

namespace midgn {

BipartiteGraph::BipartiteGraph(const InteractionMatrix& m)
    : left_count_(m.n_rows()), right_count_(m.n_cols()) {
  const auto& pairs = m.pairs();  // sorted, unique
  const std::size_t n_edges = pairs.size();

  fwd_offsets_.assign(left_count_ + 1, 0);
  rev_offsets_.assign(right_count_ + 1, 0);
  for (const auto& [l, r] : pairs) {
    ++fwd_offsets_[l + 1];
    ++rev_offsets_[r + 1];
  }
  std::partial_sum(fwd_offsets_.begin(), fwd_offsets_.end(), fwd_offsets_.begin());
  std::partial_sum(rev_offsets_.begin(), rev_offsets_.end(), rev_offsets_.begin());

  fwd_ids_.resize(n_edges);
  fwd_edges_.resize(n_edges);
  edge_left_.resize(n_edges);
  rev_ids_.resize(n_edges);
  rev_edges_.resize(n_edges);
  std::vector<std::size_t> cursor(rev_offsets_.begin(), rev_offsets_.end() - 1);
  for (std::size_t e = 0; e < n_edges; ++e) {
    const auto [l, r] = pairs[e];
    fwd_ids_[e] = r;
    fwd_edges_[e] = e;
    edge_left_[e] = l;
    // left ids arrive in ascending order, so reverse lists come out sorted
    const std::size_t slot = cursor[r]++;
    rev_ids_[slot] = l;
    rev_edges_[slot] = e;
  }
}

NeighborSlice BipartiteGraph::neighbors(Side side, std::size_t id) const {
  if (side == Side::left) {
    if (id >= left_count_) throw BoundsError("left id " + std::to_string(id) + " out of range");
    const auto b = fwd_offsets_[id], e = fwd_offsets_[id + 1];
    return {std::span<const Id>(fwd_ids_).subspan(b, e - b),
            std::span<const std::size_t>(fwd_edges_).subspan(b, e - b)};
  }
  if (id >= right_count_) throw BoundsError("right id " + std::to_string(id) + " out of range");
  const auto b = rev_offsets_[id], e = rev_offsets_[id + 1];
  return {std::span<const Id>(rev_ids_).subspan(b, e - b),
          std::span<const std::size_t>(rev_edges_).subspan(b, e - b)};
}

std::size_t BipartiteGraph::degree(Side side, std::size_t id) const { return neighbors(side, id).size(); }

}  // namespace midgn
