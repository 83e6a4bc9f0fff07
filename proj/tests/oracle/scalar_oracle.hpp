#pragma once

// Brute-force reference for the forward pass, written against dense
// adjacency matrices with nested vectors. Shares no code with the library
// kernels so it can serve as an independent check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, Vec(c, 0.0)); }

/// One view of stacked routing layers. adj is n x N (0/1), x0 is n x d,
/// item is N x (d/K). Returns the layer sum.
inline Mat disentangle_view(const Mat& adj, const Mat& x0, const Mat& item, std::size_t K, std::size_t L,
                            std::size_t T, bool seeded) {
  const std::size_t n = adj.size();
  const std::size_t N = item.size();
  const std::size_t w = item.empty() ? 0 : item[0].size();
  const std::size_t d = K * w;
  Mat total = zeros(n, d);
  Mat x = x0;
  for (std::size_t l = 0; l < L; ++l) {
    // A[c][i][k]
    std::vector<Mat> A(n, Mat(N, Vec(K, 1.0)));
    auto raise = [&](const Mat& state) {
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t i = 0; i < N; ++i) {
          if (adj[c][i] == 0.0) continue;
          for (std::size_t k = 0; k < K; ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < w; ++j) s += state[c][k * w + j] * item[i][j];
            A[c][i][k] += s;
          }
        }
    };
    if (seeded) raise(x);
    Mat s = zeros(n, d);
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<Mat> P(n, Mat(N, Vec(K, 0.0)));
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t i = 0; i < N; ++i) {
          if (adj[c][i] == 0.0) continue;
          double z = 0.0;
          for (std::size_t k = 0; k < K; ++k) z += std::exp(A[c][i][k]);
          for (std::size_t k = 0; k < K; ++k) P[c][i][k] = std::exp(A[c][i][k]) / z;
        }
      s = zeros(n, d);
      for (std::size_t k = 0; k < K; ++k) {
        Vec dc(n, 0.0), di(N, 0.0);
        for (std::size_t c = 0; c < n; ++c)
          for (std::size_t i = 0; i < N; ++i) {
            dc[c] += P[c][i][k];
            di[i] += P[c][i][k];
          }
        for (std::size_t c = 0; c < n; ++c)
          for (std::size_t i = 0; i < N; ++i) {
            if (adj[c][i] == 0.0) continue;
            const double coef = P[c][i][k] / std::sqrt(dc[c] * di[i]);
            for (std::size_t j = 0; j < w; ++j) s[c][k * w + j] += coef * item[i][j];
          }
      }
      if (t + 1 < T) raise(s);
    }
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t j = 0; j < d; ++j) total[c][j] += s[c][j];
    x = s;
  }
  return total;
}

/// sum_i item_i / sqrt(|N_c| |N_i|) over a dense adjacency.
inline Mat plain_view(const Mat& adj, const Mat& item) {
  const std::size_t n = adj.size(), N = item.size(), w = item.empty() ? 0 : item[0].size();
  Mat out = zeros(n, w);
  for (std::size_t c = 0; c < n; ++c) {
    const double dc = std::accumulate(adj[c].begin(), adj[c].end(), 0.0);
    for (std::size_t i = 0; i < N; ++i) {
      if (adj[c][i] == 0.0) continue;
      double di = 0.0;
      for (std::size_t c2 = 0; c2 < n; ++c2) di += adj[c2][i];
      for (std::size_t j = 0; j < w; ++j) out[c][j] += item[i][j] / std::sqrt(dc * di);
    }
  }
  return out;
}

/// v_left = D_l^-1/2 Y D_r^-1/2 e_right, and the transpose for v_right.
inline void cross_view(const Mat& Y, const Mat& e_left, const Mat& e_right, Mat& v_left, Mat& v_right) {
  const std::size_t M = Y.size(), O = Y.empty() ? 0 : Y[0].size();
  const std::size_t d = e_left.empty() ? 0 : e_left[0].size();
  Vec dl(M, 0.0), dr(O, 0.0);
  for (std::size_t u = 0; u < M; ++u)
    for (std::size_t b = 0; b < O; ++b) {
      dl[u] += Y[u][b];
      dr[b] += Y[u][b];
    }
  v_left = zeros(M, d);
  v_right = zeros(O, d);
  for (std::size_t u = 0; u < M; ++u)
    for (std::size_t b = 0; b < O; ++b) {
      if (Y[u][b] == 0.0) continue;
      const double norm = 1.0 / (std::sqrt(dl[u]) * std::sqrt(dr[b]));
      for (std::size_t j = 0; j < d; ++j) {
        v_left[u][j] += norm * e_right[b][j];
        v_right[b][j] += norm * e_left[u][j];
      }
    }
}

struct Outputs {
  Mat e_user, v_user, e_bundle, v_bundle;
  Mat scores;  // M x O
};

inline Outputs forward(const Mat& R, const Mat& H, const Mat& Y, const Mat& user, const Mat& bundle, const Mat& item,
                       std::size_t K, std::size_t L, std::size_t T, bool seeded) {
  Outputs o;
  o.e_user = disentangle_view(R, user, item, K, L, T, seeded);
  o.e_bundle = disentangle_view(H, bundle, item, K, L, T, seeded);
  cross_view(Y, o.e_user, o.e_bundle, o.v_user, o.v_bundle);
  const std::size_t M = user.size(), O = bundle.size();
  o.scores = zeros(M, O);
  for (std::size_t u = 0; u < M; ++u)
    for (std::size_t b = 0; b < O; ++b) {
      // concatenate then dot
      Vec lhs = o.e_user[u], rhs = o.e_bundle[b];
      lhs.insert(lhs.end(), o.v_user[u].begin(), o.v_user[u].end());
      rhs.insert(rhs.end(), o.v_bundle[b].begin(), o.v_bundle[b].end());
      double s = 0.0;
      for (std::size_t j = 0; j < lhs.size(); ++j) s += lhs[j] * rhs[j];
      o.scores[u][b] = s;
    }
  return o;
}

/// Recall/NDCG by sorting every candidate with std::sort, relevance by
/// linear membership scan.
struct NaiveMetrics {
  double recall;
  double ndcg;
};

inline NaiveMetrics naive_metrics(const Vec& scores, const std::vector<bool>& masked, const std::vector<int>& relevant,
                                  std::size_t k) {
  std::vector<int> order;
  for (std::size_t b = 0; b < scores.size(); ++b)
    if (!masked[b]) order.push_back(static_cast<int>(b));
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  double hits = 0.0, dcg = 0.0, idcg = 0.0;
  for (std::size_t p = 0; p < order.size() && p < k; ++p) {
    bool rel = false;
    for (int r : relevant) rel = rel || r == order[p];
    if (rel) {
      hits += 1.0;
      dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    }
  }
  for (std::size_t p = 0; p < relevant.size() && p < k; ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return {hits / static_cast<double>(relevant.size()), dcg / idcg};
}

}  // namespace oracle
