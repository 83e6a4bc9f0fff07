#pragma once

#include <vector>

#include "midgn/matrix.hpp"

namespace midgn {

struct ContrastConfig {
  std::size_t intents = 1;
  double temperature = 1.0;
  // also score each v-chunk against the entity's e-chunks
  bool symmetric = false;
};

/// Rows to contrast: each entry selects row `rows[j]` of both views.
struct ContrastBatch {
  const Matrix* e_view = nullptr;
  const Matrix* v_view = nullptr;
  std::vector<std::size_t> rows;
};

struct ContrastResult {
  double loss_sum = 0.0;  // sum of per-(entity, intent) terms
  std::size_t terms = 0;
};

/// Chunk-level InfoNCE: for row c and intent k, the positive is v_ck and the
/// negatives are the same row's other v chunks. Adds `scale` times the
/// gradient of the summed terms into grad_e / grad_v (same shapes as the
/// views) when they are non-null.
ContrastResult info_nce(const ContrastBatch& batch, const ContrastConfig& cfg, double scale, Matrix* grad_e,
                        Matrix* grad_v);

/// Mean of the terms over the batch; gradients are those of the mean.
double info_nce_loss(const ContrastBatch& batch, const ContrastConfig& cfg, Matrix* grad_e = nullptr,
                     Matrix* grad_v = nullptr);

}  // namespace midgn
