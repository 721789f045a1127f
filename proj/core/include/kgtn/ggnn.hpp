#pragma once

// Gated graph propagation over classifier weights.
//
// Each category is a graph node whose hidden state starts as its initial
// classifier weight. Every round, a node gathers the correlation-weighted sum
// of its neighbors' states along incoming and outgoing edges, and a GRU-style
// gate decides how much of that message to absorb. After T rounds an affine
// output map over [h^T | h^0] yields the refined classifier weights.

#include <cstddef>
#include <random>
#include <string>

#include "kgtn/autodiff.hpp"
#include "kgtn/checkpoint.hpp"
#include "kgtn/graph.hpp"
#include "kgtn/matrix.hpp"

namespace kgtn::ggnn {

enum class WeightRole { Initial, Hidden, Refined };

struct WeightTable {
  Matrix values;
  WeightRole role = WeightRole::Initial;
};

namespace names {
inline constexpr const char* kWz = "ggnn.W_z";
inline constexpr const char* kUz = "ggnn.U_z";
inline constexpr const char* kWr = "ggnn.W_r";
inline constexpr const char* kUr = "ggnn.U_r";
inline constexpr const char* kW = "ggnn.W";
inline constexpr const char* kU = "ggnn.U";
inline constexpr const char* kOutput = "ggnn.output";
inline constexpr const char* kOutputBias = "ggnn.output_bias";
inline constexpr const char* kWInit = "w_init";
}  // namespace names

/// Shared gating and output parameters for hidden dimension d.
/// W_* and the output map are d x 2d; U_* are d x d; the bias is 1 x d.
struct GGNNParams {
  Matrix w_z, u_z, w_r, u_r, w, u;
  Matrix output;
  Matrix output_bias;

  std::size_t dim() const { return u.rows(); }

  /// All gating matrices zero, output map [I | 0], zero bias.
  static GGNNParams identity(std::size_t d);
  /// Gating matrices ~ U(-1/sqrt(2d), 1/sqrt(2d)); output map [I | 0]; zero bias.
  static GGNNParams initialized(std::size_t d, std::mt19937_64& rng);

  void validate() const;

  void register_in(ad::ParamSet& params) const;
  static GGNNParams from(const ad::ParamSet& params);
  void write_to(TensorMap& tensors) const;
  static GGNNParams read_from(const TensorMap& tensors);
};

/// W^init with rows ~ N(0, stddev^2).
Matrix random_initial_weights(std::size_t k, std::size_t d, double stddev, std::mt19937_64& rng);

/// Parameter leaves on a tape, one per GGNNParams field, under the names above.
struct ParamExprs {
  ad::Expr w_z, u_z, w_r, u_r, w, u, output, output_bias;
};

ParamExprs declare_params(ad::Tape& tape, std::size_t d);

// Differentiable building blocks.

ad::Expr init_hidden(ad::Expr w_init);
/// Rows are [sum_j a_kj h_j | sum_j a_jk h_j].
ad::Expr aggregate(ad::Expr adjacency, ad::Expr adjacency_t, ad::Expr hidden);
ad::Expr gated_update(ad::Expr message, ad::Expr hidden, const ParamExprs& p);
ad::Expr propagate(const CategoryGraph& graph, ad::Expr w_init, const ParamExprs& p,
                   std::size_t iterations);

// Value-level entry points; each runs the differentiable path on a scratch tape.

WeightTable init_hidden(const WeightTable& w_init);
Matrix aggregate(const CategoryGraph& graph, const WeightTable& hidden);
WeightTable gated_update(const Matrix& message, const WeightTable& hidden, const GGNNParams& params);
WeightTable propagate(const CategoryGraph& graph, const WeightTable& w_init, const GGNNParams& params,
                      std::size_t iterations);

}  // namespace kgtn::ggnn
