#pragma once

// Tape-based reverse-mode differentiation over dense matrices.
//
// A Tape records a DAG of primitive operations. Input and parameter leaves are
// symbolic; their values come from Bindings / ParamSet when the tape is
// evaluated. Nodes are appended in topological order, so evaluation is a single
// forward sweep and the backward pass a single reverse sweep.

#include <cstddef>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kgtn/matrix.hpp"

namespace kgtn::ad {

/// NaN or Inf produced while evaluating or differentiating a tape.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An input or parameter leaf has no value, or its value has the wrong shape.
class BindingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation undefined for the given values (e.g. normalizing a zero row).
class DomainError : public std::runtime_error {
 public:
  DomainError(const std::string& what, std::string node_label, std::size_t row)
      : std::runtime_error(what), node_label_(std::move(node_label)), row_(row) {}
  const std::string& node_label() const { return node_label_; }
  std::size_t row() const { return row_; }

 private:
  std::string node_label_;
  std::size_t row_;
};

enum class Op {
  Input,
  Parameter,
  Constant,
  MatMul,
  MatMulNT,
  Add,
  Sub,
  Mul,
  ScalarMul,
  Scale,
  ConcatCols,
  Sigmoid,
  Tanh,
  RowSum,
  Softmax,
  SoftmaxCrossEntropy,
  NegLogLikelihood,
  SquaredL2Norm,
  Mean,
  RowNormalize,
  Elementwise,
};

std::string_view op_name(Op op);

/// Elementwise function with a caller-supplied derivative.
struct ElementwiseFn {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

struct Node {
  Op op = Op::Input;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> inputs;
  std::string label;
  Matrix constant;
  double factor = 0.0;
  std::vector<std::size_t> class_labels;
  ElementwiseFn fn;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Expr {
 public:
  Expr() = default;

  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  std::size_t rows() const;
  std::size_t cols() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Expr(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Expr input(std::string name, std::size_t rows, std::size_t cols);
  Expr parameter(std::string name, std::size_t rows, std::size_t cols);
  Expr constant(Matrix value, std::string label = {});

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }

  /// Human-readable node reference for diagnostics, e.g. "node #4 (matmul 'gate_z')".
  std::string describe(std::size_t id) const;

  /// Attaches a diagnostic label to an existing node.
  Expr label(Expr e, std::string text);

  Expr push(Node node);

 private:
  std::vector<Node> nodes_;
};

Expr matmul(Expr a, Expr b);
/// a * b^T
Expr matmul_nt(Expr a, Expr b);
Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
/// Elementwise product.
Expr mul(Expr a, Expr b);
/// s * a where s is a 1x1 expression.
Expr scalar_mul(Expr s, Expr a);
Expr scale(Expr a, double factor);
Expr concat_cols(Expr a, Expr b);
Expr sigmoid(Expr a);
Expr tanh(Expr a);
/// N x M -> N x 1
Expr row_sum(Expr a);
Expr softmax(Expr logits);
/// Mean over rows of -log softmax(logits)[label]; 1x1.
Expr softmax_cross_entropy(Expr logits, std::vector<std::size_t> labels);
/// Mean over rows of -log(max(p[label], 1e-12)); 1x1.
Expr negative_log_likelihood(Expr probs, std::vector<std::size_t> labels);
/// Sum of squared entries; 1x1.
Expr squared_l2_norm(Expr a);
/// Mean of all entries; 1x1.
Expr mean(Expr a);
/// Each row divided by its L2 norm. Rows with norm below 1e-12 raise DomainError.
Expr row_normalize(Expr a);
Expr elementwise(Expr a, ElementwiseFn fn, std::string label = {});

inline constexpr double kNormGuard = 1e-12;
inline constexpr double kProbabilityFloor = 1e-12;

using Bindings = std::map<std::string, Matrix, std::less<>>;
using GradientMap = std::map<std::string, Matrix, std::less<>>;

/// Named trainable tensors with per-tensor momentum buffers.
class ParamSet {
 public:
  void add(std::string name, Matrix value);
  bool contains(std::string_view name) const;
  const Matrix& value(std::string_view name) const;
  Matrix& value(std::string_view name);
  const Matrix& momentum(std::string_view name) const;
  Matrix& momentum(std::string_view name);
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

 private:
  struct Entry {
    Matrix value;
    Matrix momentum;
  };
  const Entry& entry(std::string_view name) const;
  std::map<std::string, Entry, std::less<>> entries_;
};

/// Forward value of `root`. Parameter leaves resolve from `params` first, then
/// from `bindings`.
Matrix evaluate(Expr root, const Bindings& bindings, const ParamSet* params = nullptr);

struct ValueAndGradients {
  double value = 0.0;
  GradientMap gradients;
};

/// Scalar value of `root` and its gradient w.r.t. every tensor in `wrt`.
/// Tensors in `wrt` that `root` does not depend on receive zero gradients.
ValueAndGradients value_and_gradients(Expr root, const ParamSet& wrt, const Bindings& bindings);

GradientMap gradients(Expr root, const ParamSet& wrt, const Bindings& bindings);

/// Max over all parameter entries of |analytic - numeric| / max(1e-8, |analytic| + |numeric|),
/// numeric being the central difference with step `epsilon`.
double finite_difference_check(Expr root, const ParamSet& params, const Bindings& bindings,
                               double epsilon);

}  // namespace kgtn::ad
