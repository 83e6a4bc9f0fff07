#include "midgn/contrast.hpp"

#include <algorithm>
#include <cmath>

#include "midgn/error.hpp"

namespace midgn {

namespace {

// -log softmax(logits)[pos]; writes softmax into probs.
double log_softmax_term(std::span<const double> logits, std::size_t pos, std::span<double> probs) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - mx);
    total += probs[k];
  }
  for (double& p : probs) p /= total;
  return mx + std::log(total) - logits[pos];
}

// One direction: anchors from `anchor`, candidates from `cand`.
double directional(const Matrix& anchor, const Matrix& cand, std::size_t row, const ContrastConfig& cfg, double scale,
                   Matrix* grad_anchor, Matrix* grad_cand) {
  const std::size_t K = cfg.intents;
  const std::size_t w = anchor.cols() / K;
  const double inv_tau = 1.0 / cfg.temperature;
  std::vector<double> logits(K), probs(K);
  double sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const auto a = anchor.chunk(row, k, w);
    for (std::size_t k2 = 0; k2 < K; ++k2) logits[k2] = dot(a, cand.chunk(row, k2, w)) * inv_tau;
    sum += log_softmax_term(logits, k, probs);
    if (grad_anchor == nullptr && grad_cand == nullptr) continue;
    for (std::size_t k2 = 0; k2 < K; ++k2) {
      const double g = scale * (probs[k2] - (k2 == k ? 1.0 : 0.0)) * inv_tau;
      if (grad_anchor) axpy(g, cand.chunk(row, k2, w), grad_anchor->chunk(row, k, w));
      if (grad_cand) axpy(g, a, grad_cand->chunk(row, k2, w));
    }
  }
  return sum;
}

}  // namespace

ContrastResult info_nce(const ContrastBatch& batch, const ContrastConfig& cfg, double scale, Matrix* grad_e,
                        Matrix* grad_v) {
  if (cfg.intents == 0 || !(cfg.temperature > 0)) throw ConfigError("InfoNCE needs K >= 1 and temperature > 0");
  const Matrix& e = *batch.e_view;
  const Matrix& v = *batch.v_view;
  if (e.rows() != v.rows() || e.cols() != v.cols() || e.cols() % cfg.intents != 0) {
    throw StructuralError("contrast views must share a K-chunk layout");
  }
  ContrastResult res;
  for (std::size_t row : batch.rows) {
    res.loss_sum += directional(e, v, row, cfg, scale, grad_e, grad_v);
    res.terms += cfg.intents;
    if (cfg.symmetric) {
      res.loss_sum += directional(v, e, row, cfg, scale, grad_v, grad_e);
      res.terms += cfg.intents;
    }
  }
  return res;
}

double info_nce_loss(const ContrastBatch& batch, const ContrastConfig& cfg, Matrix* grad_e, Matrix* grad_v) {
  const std::size_t terms = batch.rows.size() * cfg.intents * (cfg.symmetric ? 2 : 1);
  if (terms == 0) return 0.0;
  const auto res = info_nce(batch, cfg, 1.0 / static_cast<double>(terms), grad_e, grad_v);
  return res.loss_sum / static_cast<double>(res.terms);
}

}  // namespace midgn
