#include "midgn/crossview.hpp"

#include <cmath>

#include "midgn/error.hpp"
#include "midgn/parallel.hpp"

namespace midgn {

namespace {

// out.row(a) += sum_{b in N(a)} src.row(b) / sqrt(|N(a)| |N(b)|)
void propagate(const BipartiteGraph& g, Side from, const Matrix& src, Matrix& out) {
  const Side other = from == Side::left ? Side::right : Side::left;
  const std::size_t n = from == Side::left ? g.left_count() : g.right_count();
  parallel_for(n, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t a = lo; a < hi; ++a) {
      const auto nb = g.neighbors(from, a);
      const double da = static_cast<double>(nb.size());
      for (Id b : nb.ids) {
        const double db = static_cast<double>(g.degree(other, b));
        axpy(1.0 / std::sqrt(da * db), src.row(b), out.row(a));
      }
    }
  });
}

}  // namespace

CrossViewState cross_propagate(const BipartiteGraph& ub_graph, const Matrix& user_rep, const Matrix& bundle_rep) {
  if (user_rep.rows() != ub_graph.left_count() || bundle_rep.rows() != ub_graph.right_count() ||
      user_rep.cols() != bundle_rep.cols()) {
    throw StructuralError("cross-view inputs do not match the user-bundle graph");
  }
  CrossViewState v{Matrix(user_rep.rows(), user_rep.cols()), Matrix(bundle_rep.rows(), bundle_rep.cols())};
  propagate(ub_graph, Side::left, bundle_rep, v.user);
  propagate(ub_graph, Side::right, user_rep, v.bundle);
  return v;
}

void cross_propagate_backward(const BipartiteGraph& ub_graph, const Matrix& grad_v_user, const Matrix& grad_v_bundle,
                              Matrix& grad_user_rep, Matrix& grad_bundle_rep) {
  // the normalized adjacency is symmetric, so the adjoint swaps the roles
  propagate(ub_graph, Side::right, grad_v_user, grad_bundle_rep);
  propagate(ub_graph, Side::left, grad_v_bundle, grad_user_rep);
}

}  // namespace midgn
