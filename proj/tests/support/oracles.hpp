#pragma once

// Reference implementations used only by tests. They are written with plain
// loops over std::vector and share no code with the library's tape.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "kgtn/ggnn.hpp"
#include "kgtn/matrix.hpp"

namespace kgtn::oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat to_mat(const Matrix& m) {
  Mat out(m.rows(), Vec(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

inline Matrix from_mat(const Mat& m) {
  Matrix out(m.size(), m.empty() ? 0 : m[0].size());
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) out(i, j) = m[i][j];
  return out;
}

/// y = M v for M given row-major as a Mat.
inline Vec mat_vec(const Mat& m, const Vec& v) {
  Vec out(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += m[i][j] * v[j];
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// a_k = [sum_k' A[k][k'] h_k', sum_k' A[k'][k] h_k'], entry by entry.
inline Mat ggnn_aggregate(const Mat& a, const Mat& h) {
  const std::size_t k = h.size();
  const std::size_t d = h[0].size();
  Mat out(k, Vec(2 * d, 0.0));
  for (std::size_t node = 0; node < k; ++node) {
    for (std::size_t other = 0; other < k; ++other) {
      for (std::size_t c = 0; c < d; ++c) {
        out[node][c] += a[node][other] * h[other][c];
        out[node][d + c] += a[other][node] * h[other][c];
      }
    }
  }
  return out;
}

struct GateParams {
  Mat wz, uz, wr, ur, w, u, out;
  Vec bias;
};

inline GateParams gate_params(const ggnn::GGNNParams& p) {
  return {to_mat(p.w_z), to_mat(p.u_z), to_mat(p.w_r), to_mat(p.u_r),
          to_mat(p.w),   to_mat(p.u),   to_mat(p.output), to_mat(p.output_bias)[0]};
}

/// One GRU-style update, node by node and coordinate by coordinate.
inline Mat ggnn_update(const Mat& msg, const Mat& h, const GateParams& p) {
  Mat out(h.size());
  for (std::size_t node = 0; node < h.size(); ++node) {
    const Vec wz_a = mat_vec(p.wz, msg[node]);
    const Vec uz_h = mat_vec(p.uz, h[node]);
    const Vec wr_a = mat_vec(p.wr, msg[node]);
    const Vec ur_h = mat_vec(p.ur, h[node]);
    const std::size_t d = h[node].size();
    Vec z(d), r(d), rh(d);
    for (std::size_t c = 0; c < d; ++c) {
      z[c] = sigmoid(wz_a[c] + uz_h[c]);
      r[c] = sigmoid(wr_a[c] + ur_h[c]);
      rh[c] = r[c] * h[node][c];
    }
    const Vec w_a = mat_vec(p.w, msg[node]);
    const Vec u_rh = mat_vec(p.u, rh);
    out[node].resize(d);
    for (std::size_t c = 0; c < d; ++c) {
      const double cand = std::tanh(w_a[c] + u_rh[c]);
      out[node][c] = (1.0 - z[c]) * h[node][c] + z[c] * cand;
    }
  }
  return out;
}

/// h^0 = W^init, T updates, then w*_k = O [h^T_k ; h^0_k] + b.
inline Mat ggnn_propagate(const Mat& a, const Mat& w_init, const GateParams& p, std::size_t iterations) {
  Mat h = w_init;
  for (std::size_t t = 0; t < iterations; ++t) h = ggnn_update(ggnn_aggregate(a, h), h, p);
  Mat out(h.size());
  for (std::size_t node = 0; node < h.size(); ++node) {
    Vec joined = h[node];
    joined.insert(joined.end(), w_init[node].begin(), w_init[node].end());
    out[node] = mat_vec(p.out, joined);
    for (std::size_t c = 0; c < out[node].size(); ++c) out[node][c] += p.bias[c];
  }
  return out;
}

/// All-pairs shortest path lengths over an unweighted undirected graph with n nodes.
inline Mat floyd_warshall(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  const double inf = std::numeric_limits<double>::infinity();
  Mat d(n, Vec(n, inf));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0.0;
  for (auto [a, b] : edges) d[a][b] = d[b][a] = std::min(d[a][b], 1.0);
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][m] + d[m][j]);
  return d;
}

/// Central finite difference of a scalar function of a flat parameter vector.
inline Vec numeric_gradient(const std::function<double(const Vec&)>& f, Vec x, double eps) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double plus = f(x);
    x[i] = orig - eps;
    const double minus = f(x);
    x[i] = orig;
    g[i] = (plus - minus) / (2 * eps);
  }
  return g;
}

/// Top-k membership by fully sorting category indices (stable, so ties go to the lower index).
inline bool in_top_k_by_sort(const Vec& scores, std::size_t label, std::size_t k_top) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return std::find(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_top), label) !=
         order.begin() + static_cast<std::ptrdiff_t>(k_top);
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

inline ggnn::GGNNParams random_ggnn(std::size_t d, std::mt19937_64& rng, double scale = 0.5) {
  ggnn::GGNNParams p;
  p.w_z = random_matrix(d, 2 * d, rng, -scale, scale);
  p.u_z = random_matrix(d, d, rng, -scale, scale);
  p.w_r = random_matrix(d, 2 * d, rng, -scale, scale);
  p.u_r = random_matrix(d, d, rng, -scale, scale);
  p.w = random_matrix(d, 2 * d, rng, -scale, scale);
  p.u = random_matrix(d, d, rng, -scale, scale);
  p.output = random_matrix(d, 2 * d, rng, -scale, scale);
  p.output_bias = random_matrix(1, d, rng, -scale, scale);
  return p;
}

}  // namespace kgtn::oracle
