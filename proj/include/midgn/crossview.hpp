#pragma once

#include "midgn/graph.hpp"
#include "midgn/matrix.hpp"

namespace midgn {

struct CrossViewState {
  Matrix user;    // v_u, M x d
  Matrix bundle;  // v_b, O x d
};

/// One LightGCN-style hop over the user-bundle graph: each side receives
/// the other side's representations scaled by 1/sqrt(|N_u| |N_b|). Nodes
/// without train edges get zero rows.
CrossViewState cross_propagate(const BipartiteGraph& ub_graph, const Matrix& user_rep, const Matrix& bundle_rep);

/// Adjoint of cross_propagate: adds dL/d(user_rep) and dL/d(bundle_rep).
void cross_propagate_backward(const BipartiteGraph& ub_graph, const Matrix& grad_v_user, const Matrix& grad_v_bundle,
                              Matrix& grad_user_rep, Matrix& grad_bundle_rep);

}  // namespace midgn
