#include "kgtn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kgtn::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Parameter: return "parameter";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::MatMulNT: return "matmul_nt";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::ScalarMul: return "scalar_mul";
    case Op::Scale: return "scale";
    case Op::ConcatCols: return "concat_cols";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::RowSum: return "row_sum";
    case Op::Softmax: return "softmax";
    case Op::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case Op::NegLogLikelihood: return "negative_log_likelihood";
    case Op::SquaredL2Norm: return "squared_l2_norm";
    case Op::Mean: return "mean";
    case Op::RowNormalize: return "row_normalize";
    case Op::Elementwise: return "elementwise";
  }
  return "unknown";
}

std::size_t Expr::rows() const { return tape_->node(id_).rows; }
std::size_t Expr::cols() const { return tape_->node(id_).cols; }

// ---------------------------------------------------------------------------
// Tape construction

Expr Tape::push(Node node) {
  for (std::size_t in : node.inputs) {
    if (in >= nodes_.size()) throw std::logic_error("Tape::push: input refers to a later node");
  }
  nodes_.push_back(std::move(node));
  return Expr(this, nodes_.size() - 1);
}

Expr Tape::input(std::string name, std::size_t rows, std::size_t cols) {
  Node n;
  n.op = Op::Input;
  n.rows = rows;
  n.cols = cols;
  n.label = std::move(name);
  return push(std::move(n));
}

Expr Tape::parameter(std::string name, std::size_t rows, std::size_t cols) {
  Node n;
  n.op = Op::Parameter;
  n.rows = rows;
  n.cols = cols;
  n.label = std::move(name);
  return push(std::move(n));
}

Expr Tape::constant(Matrix value, std::string label) {
  Node n;
  n.op = Op::Constant;
  n.rows = value.rows();
  n.cols = value.cols();
  n.label = std::move(label);
  n.constant = std::move(value);
  return push(std::move(n));
}

Expr Tape::label(Expr e, std::string text) {
  nodes_.at(e.id()).label = std::move(text);
  return e;
}

std::string Tape::describe(std::size_t id) const {
  const Node& n = nodes_.at(id);
  std::string out = "node #" + std::to_string(id) + " (" + std::string(op_name(n.op));
  if (!n.label.empty()) out += " '" + n.label + "'";
  return out + ")";
}

namespace {

Tape& same_tape(Expr a, Expr b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("expressions belong to different tapes");
  return a.tape();
}

[[noreturn]] void shape_fail(Tape& t, std::string_view op, Expr a, Expr b) {
  throw ShapeError(std::string(op) + ": incompatible operands " + t.describe(a.id()) + " [" +
                   shape_string(a.rows(), a.cols()) + "] and " + t.describe(b.id()) + " [" +
                   shape_string(b.rows(), b.cols()) + "]");
}

Expr unary(Op op, Expr a, std::size_t rows, std::size_t cols) {
  Node n;
  n.op = op;
  n.rows = rows;
  n.cols = cols;
  n.inputs = {a.id()};
  return a.tape().push(std::move(n));
}

Expr binary(Op op, Expr a, Expr b, std::size_t rows, std::size_t cols) {
  Node n;
  n.op = op;
  n.rows = rows;
  n.cols = cols;
  n.inputs = {a.id(), b.id()};
  return a.tape().push(std::move(n));
}

Expr same_shape_binary(Op op, Expr a, Expr b) {
  Tape& t = same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(t, op_name(op), a, b);
  return binary(op, a, b, a.rows(), a.cols());
}

Expr labelled_loss(Op op, Expr x, std::vector<std::size_t> labels) {
  if (labels.size() != x.rows()) {
    throw ShapeError(std::string(op_name(op)) + ": " + std::to_string(labels.size()) +
                     " labels for " + x.tape().describe(x.id()) + " with " +
                     std::to_string(x.rows()) + " rows");
  }
  for (std::size_t y : labels) {
    if (y >= x.cols()) {
      throw std::out_of_range(std::string(op_name(op)) + ": label " + std::to_string(y) +
                              " out of range for " + std::to_string(x.cols()) + " classes");
    }
  }
  Node n;
  n.op = op;
  n.rows = 1;
  n.cols = 1;
  n.inputs = {x.id()};
  n.class_labels = std::move(labels);
  return x.tape().push(std::move(n));
}

}  // namespace

Expr matmul(Expr a, Expr b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) shape_fail(t, "matmul", a, b);
  return binary(Op::MatMul, a, b, a.rows(), b.cols());
}

Expr matmul_nt(Expr a, Expr b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.cols()) shape_fail(t, "matmul_nt", a, b);
  return binary(Op::MatMulNT, a, b, a.rows(), b.rows());
}

Expr add(Expr a, Expr b) { return same_shape_binary(Op::Add, a, b); }
Expr sub(Expr a, Expr b) { return same_shape_binary(Op::Sub, a, b); }
Expr mul(Expr a, Expr b) { return same_shape_binary(Op::Mul, a, b); }

Expr scalar_mul(Expr s, Expr a) {
  Tape& t = same_tape(s, a);
  if (s.rows() != 1 || s.cols() != 1) shape_fail(t, "scalar_mul", s, a);
  return binary(Op::ScalarMul, s, a, a.rows(), a.cols());
}

Expr scale(Expr a, double factor) {
  Node n;
  n.op = Op::Scale;
  n.rows = a.rows();
  n.cols = a.cols();
  n.inputs = {a.id()};
  n.factor = factor;
  return a.tape().push(std::move(n));
}

Expr concat_cols(Expr a, Expr b) {
  Tape& t = same_tape(a, b);
  if (a.rows() != b.rows()) shape_fail(t, "concat_cols", a, b);
  return binary(Op::ConcatCols, a, b, a.rows(), a.cols() + b.cols());
}

Expr sigmoid(Expr a) { return unary(Op::Sigmoid, a, a.rows(), a.cols()); }
Expr tanh(Expr a) { return unary(Op::Tanh, a, a.rows(), a.cols()); }
Expr row_sum(Expr a) { return unary(Op::RowSum, a, a.rows(), 1); }
Expr softmax(Expr logits) { return unary(Op::Softmax, logits, logits.rows(), logits.cols()); }

Expr softmax_cross_entropy(Expr logits, std::vector<std::size_t> labels) {
  return labelled_loss(Op::SoftmaxCrossEntropy, logits, std::move(labels));
}

Expr negative_log_likelihood(Expr probs, std::vector<std::size_t> labels) {
  return labelled_loss(Op::NegLogLikelihood, probs, std::move(labels));
}

Expr squared_l2_norm(Expr a) { return unary(Op::SquaredL2Norm, a, 1, 1); }
Expr mean(Expr a) { return unary(Op::Mean, a, 1, 1); }
Expr row_normalize(Expr a) { return unary(Op::RowNormalize, a, a.rows(), a.cols()); }

Expr elementwise(Expr a, ElementwiseFn fn, std::string label) {
  Node n;
  n.op = Op::Elementwise;
  n.rows = a.rows();
  n.cols = a.cols();
  n.inputs = {a.id()};
  n.fn = std::move(fn);
  n.label = std::move(label);
  return a.tape().push(std::move(n));
}

// ---------------------------------------------------------------------------
// ParamSet

void ParamSet::add(std::string name, Matrix value) {
  if (entries_.contains(name)) throw std::invalid_argument("ParamSet: duplicate parameter '" + name + "'");
  Matrix momentum(value.rows(), value.cols());
  entries_.emplace(std::move(name), Entry{std::move(value), std::move(momentum)});
}

bool ParamSet::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

const ParamSet::Entry& ParamSet::entry(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamSet: unknown parameter '" + std::string(name) + "'");
  return it->second;
}

const Matrix& ParamSet::value(std::string_view name) const { return entry(name).value; }
Matrix& ParamSet::value(std::string_view name) { return const_cast<Entry&>(entry(name)).value; }
const Matrix& ParamSet::momentum(std::string_view name) const { return entry(name).momentum; }
Matrix& ParamSet::momentum(std::string_view name) { return const_cast<Entry&>(entry(name)).momentum; }

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.size();
  return n;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto in = z.row(i);
    auto dst = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      dst[j] = std::exp(in[j] - mx);
      total += dst[j];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

class Evaluator {
 public:
  Evaluator(const Tape& tape, std::size_t root, const Bindings& bindings, const ParamSet* params)
      : tape_(tape), root_(root), bindings_(bindings), params_(params) {}

  void forward() {
    reachable_.assign(root_ + 1, false);
    reachable_[root_] = true;
    for (std::size_t id = root_ + 1; id-- > 0;) {
      if (!reachable_[id]) continue;
      for (std::size_t in : tape_.node(id).inputs) reachable_[in] = true;
    }
    // Only nodes on a path to a parameter in `params_` need adjoints.
    needs_grad_.assign(root_ + 1, false);
    for (std::size_t id = 0; id <= root_; ++id) {
      if (!reachable_[id]) continue;
      const Node& n = tape_.node(id);
      bool needs = n.op == Op::Parameter && params_ != nullptr && params_->contains(n.label);
      for (std::size_t in : n.inputs) needs = needs || needs_grad_[in];
      needs_grad_[id] = needs;
    }
    values_.assign(root_ + 1, Matrix());
    view_.assign(root_ + 1, nullptr);
    for (std::size_t id = 0; id <= root_; ++id) {
      if (!reachable_[id]) continue;
      // Leaves are read in place; only computed nodes own storage.
      view_[id] = leaf(id);
      if (view_[id] == nullptr) {
        values_[id] = compute(id);
        view_[id] = &values_[id];
      }
      if (!all_finite(*view_[id])) {
        throw NumericalError("non-finite value produced at " + tape_.describe(id));
      }
    }
  }

  const Matrix& value(std::size_t id) const { return *view_[id]; }

  /// Reverse sweep from the (scalar) root; returns adjoints of every node.
  std::vector<Matrix> backward() const {
    std::vector<Matrix> adj(root_ + 1);
    adj[root_] = Matrix(1, 1, 1.0);
    for (std::size_t id = root_ + 1; id-- > 0;) {
      if (adj[id].empty() || !reachable_[id] || !needs_grad_[id]) continue;
      if (!all_finite(adj[id])) throw NumericalError("non-finite gradient at " + tape_.describe(id));
      propagate(id, adj);
    }
    return adj;
  }

 private:
  const Matrix& resolve_leaf(std::size_t id) const {
    const Node& n = tape_.node(id);
    const Matrix* found = nullptr;
    if (n.op == Op::Parameter && params_ != nullptr && params_->contains(n.label)) {
      found = &params_->value(n.label);
    } else if (auto it = bindings_.find(n.label); it != bindings_.end()) {
      found = &it->second;
    }
    if (found == nullptr) throw BindingError("unbound " + tape_.describe(id));
    if (found->rows() != n.rows || found->cols() != n.cols) {
      throw BindingError("binding for " + tape_.describe(id) + " has shape " + shape_string(*found) +
                         ", expected " + shape_string(n.rows, n.cols));
    }
    return *found;
  }

  const Matrix* leaf(std::size_t id) const {
    const Node& n = tape_.node(id);
    switch (n.op) {
      case Op::Input:
      case Op::Parameter: return &resolve_leaf(id);
      case Op::Constant: return &n.constant;
      default: return nullptr;
    }
  }

  Matrix compute(std::size_t id) const {
    const Node& n = tape_.node(id);
    auto in = [&](std::size_t k) -> const Matrix& { return *view_[n.inputs[k]]; };
    switch (n.op) {
      case Op::Input:
      case Op::Parameter: return resolve_leaf(id);
      case Op::Constant: return n.constant;
      case Op::MatMul: return kgtn::matmul(in(0), in(1));
      case Op::MatMulNT: return kgtn::matmul_nt(in(0), in(1));
      case Op::Add: return in(0) + in(1);
      case Op::Sub: return in(0) - in(1);
      case Op::Mul: return hadamard(in(0), in(1));
      case Op::ScalarMul: return in(0)(0, 0) * in(1);
      case Op::Scale: return n.factor * in(0);
      case Op::ConcatCols: return kgtn::concat_cols(in(0), in(1));
      case Op::Sigmoid: {
        Matrix out = in(0);
        for (double& v : out.data()) v = stable_sigmoid(v);
        return out;
      }
      case Op::Tanh: {
        Matrix out = in(0);
        for (double& v : out.data()) v = std::tanh(v);
        return out;
      }
      case Op::RowSum: {
        const Matrix& a = in(0);
        Matrix out(a.rows(), 1);
        for (std::size_t i = 0; i < a.rows(); ++i) {
          double acc = 0.0;
          for (double v : a.row(i)) acc += v;
          out(i, 0) = acc;
        }
        return out;
      }
      case Op::Softmax: return softmax_rows(in(0));
      case Op::SoftmaxCrossEntropy: {
        const Matrix& z = in(0);
        double total = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i) {
          auto row = z.row(i);
          const double mx = *std::max_element(row.begin(), row.end());
          double s = 0.0;
          for (double v : row) s += std::exp(v - mx);
          total += mx + std::log(s) - row[n.class_labels[i]];
        }
        return Matrix(1, 1, z.rows() == 0 ? 0.0 : total / static_cast<double>(z.rows()));
      }
      case Op::NegLogLikelihood: {
        const Matrix& p = in(0);
        double total = 0.0;
        for (std::size_t i = 0; i < p.rows(); ++i) {
          total -= std::log(std::max(p(i, n.class_labels[i]), kProbabilityFloor));
        }
        return Matrix(1, 1, p.rows() == 0 ? 0.0 : total / static_cast<double>(p.rows()));
      }
      case Op::SquaredL2Norm: {
        double acc = 0.0;
        for (double v : in(0).data()) acc += v * v;
        return Matrix(1, 1, acc);
      }
      case Op::Mean: {
        const Matrix& a = in(0);
        return Matrix(1, 1, a.size() == 0 ? 0.0 : sum(a) / static_cast<double>(a.size()));
      }
      case Op::RowNormalize: {
        Matrix out = in(0);
        for (std::size_t i = 0; i < out.rows(); ++i) {
          auto row = out.row(i);
          double sq = 0.0;
          for (double v : row) sq += v * v;
          const double norm = std::sqrt(sq);
          if (norm < kNormGuard) {
            const Node& src = tape_.node(n.inputs[0]);
            throw DomainError("row_normalize: row " + std::to_string(i) + " of " +
                                  tape_.describe(n.inputs[0]) + " has zero norm",
                              src.label, i);
          }
          for (double& v : row) v /= norm;
        }
        return out;
      }
      case Op::Elementwise: {
        Matrix out = in(0);
        for (double& v : out.data()) v = n.fn.value(v);
        return out;
      }
    }
    throw std::logic_error("unhandled op");
  }

  static void accumulate(std::vector<Matrix>& adj, std::size_t id, Matrix g) {
    if (adj[id].empty()) {
      adj[id] = std::move(g);
    } else {
      adj[id] += g;
    }
  }

  void propagate(std::size_t id, std::vector<Matrix>& adj) const {
    const Node& n = tape_.node(id);
    const Matrix& g = adj[id];
    const Matrix& y = *view_[id];
    auto in = [&](std::size_t k) -> const Matrix& { return *view_[n.inputs[k]]; };
    auto send = [&](std::size_t k, Matrix grad) { accumulate(adj, n.inputs[k], std::move(grad)); };
    auto wants = [&](std::size_t k) { return needs_grad_[n.inputs[k]] != 0; };

    switch (n.op) {
      case Op::Input:
      case Op::Parameter:
      case Op::Constant: return;
      case Op::MatMul:
        if (wants(0)) send(0, kgtn::matmul_nt(g, in(1)));
        if (wants(1)) send(1, matmul_tn(in(0), g));
        return;
      case Op::MatMulNT:
        if (wants(0)) send(0, kgtn::matmul(g, in(1)));
        if (wants(1)) send(1, matmul_tn(g, in(0)));
        return;
      case Op::Add:
        if (wants(0)) send(0, g);
        if (wants(1)) send(1, g);
        return;
      case Op::Sub:
        if (wants(0)) send(0, g);
        if (wants(1)) send(1, -1.0 * g);
        return;
      case Op::Mul:
        if (wants(0)) send(0, hadamard(g, in(1)));
        if (wants(1)) send(1, hadamard(g, in(0)));
        return;
      case Op::ScalarMul: {
        if (wants(0)) {
          double ds = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) ds += g.data()[i] * in(1).data()[i];
          send(0, Matrix(1, 1, ds));
        }
        if (wants(1)) send(1, in(0)(0, 0) * g);
        return;
      }
      case Op::Scale: send(0, n.factor * g); return;
      case Op::ConcatCols: {
        const std::size_t split = in(0).cols();
        if (wants(0)) send(0, slice_cols(g, 0, split));
        if (wants(1)) send(1, slice_cols(g, split, g.cols()));
        return;
      }
      case Op::Sigmoid: {
        Matrix d = g;
        for (std::size_t i = 0; i < d.size(); ++i) {
          const double s = y.data()[i];
          d.data()[i] *= s * (1.0 - s);
        }
        send(0, std::move(d));
        return;
      }
      case Op::Tanh: {
        Matrix d = g;
        for (std::size_t i = 0; i < d.size(); ++i) {
          const double t = y.data()[i];
          d.data()[i] *= 1.0 - t * t;
        }
        send(0, std::move(d));
        return;
      }
      case Op::RowSum: {
        const Matrix& a = in(0);
        Matrix d(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (double& v : d.row(i)) v = g(i, 0);
        send(0, std::move(d));
        return;
      }
      case Op::Softmax: {
        Matrix d(y.rows(), y.cols());
        for (std::size_t i = 0; i < y.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
          for (std::size_t j = 0; j < y.cols(); ++j) d(i, j) = y(i, j) * (g(i, j) - dot);
        }
        send(0, std::move(d));
        return;
      }
      case Op::SoftmaxCrossEntropy: {
        Matrix d = softmax_rows(in(0));
        const double w = g(0, 0) / static_cast<double>(std::max<std::size_t>(1, d.rows()));
        for (std::size_t i = 0; i < d.rows(); ++i) {
          d(i, n.class_labels[i]) -= 1.0;
          for (double& v : d.row(i)) v *= w;
        }
        send(0, std::move(d));
        return;
      }
      case Op::NegLogLikelihood: {
        const Matrix& p = in(0);
        Matrix d(p.rows(), p.cols());
        const double w = g(0, 0) / static_cast<double>(std::max<std::size_t>(1, p.rows()));
        for (std::size_t i = 0; i < p.rows(); ++i) {
          const double pi = p(i, n.class_labels[i]);
          if (pi > kProbabilityFloor) d(i, n.class_labels[i]) = -w / pi;
        }
        send(0, std::move(d));
        return;
      }
      case Op::SquaredL2Norm: send(0, (2.0 * g(0, 0)) * in(0)); return;
      case Op::Mean: {
        const Matrix& a = in(0);
        send(0, Matrix(a.rows(), a.cols(), g(0, 0) / static_cast<double>(std::max<std::size_t>(1, a.size()))));
        return;
      }
      case Op::RowNormalize: {
        const Matrix& a = in(0);
        Matrix d(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i) {
          double sq = 0.0;
          for (double v : a.row(i)) sq += v * v;
          const double norm = std::sqrt(sq);
          double dot = 0.0;
          for (std::size_t j = 0; j < a.cols(); ++j) dot += g(i, j) * y(i, j);
          for (std::size_t j = 0; j < a.cols(); ++j) d(i, j) = (g(i, j) - y(i, j) * dot) / norm;
        }
        send(0, std::move(d));
        return;
      }
      case Op::Elementwise: {
        Matrix d = g;
        const Matrix& a = in(0);
        for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] *= n.fn.derivative(a.data()[i]);
        send(0, std::move(d));
        return;
      }
    }
  }

  const Tape& tape_;
  std::size_t root_;
  const Bindings& bindings_;
  const ParamSet* params_;
  std::vector<char> reachable_;
  std::vector<char> needs_grad_;
  std::vector<Matrix> values_;
  std::vector<const Matrix*> view_;
};

void require_scalar(Expr root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw ShapeError("gradients: root " + root.tape().describe(root.id()) + " has shape " +
                     shape_string(root.rows(), root.cols()) + ", expected 1x1");
  }
}

}  // namespace

Matrix evaluate(Expr root, const Bindings& bindings, const ParamSet* params) {
  Evaluator ev(root.tape(), root.id(), bindings, params);
  ev.forward();
  return ev.value(root.id());
}

ValueAndGradients value_and_gradients(Expr root, const ParamSet& wrt, const Bindings& bindings) {
  require_scalar(root);
  const Tape& tape = root.tape();
  Evaluator ev(tape, root.id(), bindings, &wrt);
  ev.forward();
  const std::vector<Matrix> adj = ev.backward();

  ValueAndGradients out;
  out.value = ev.value(root.id())(0, 0);
  for (const std::string& name : wrt.names()) {
    const Matrix& v = wrt.value(name);
    out.gradients.emplace(name, Matrix(v.rows(), v.cols()));
  }
  for (std::size_t id = 0; id < adj.size(); ++id) {
    const Node& n = tape.node(id);
    if (n.op != Op::Parameter || adj[id].empty()) continue;
    auto it = out.gradients.find(n.label);
    if (it != out.gradients.end()) it->second += adj[id];
  }
  return out;
}

GradientMap gradients(Expr root, const ParamSet& wrt, const Bindings& bindings) {
  return value_and_gradients(root, wrt, bindings).gradients;
}

double finite_difference_check(Expr root, const ParamSet& params, const Bindings& bindings,
                               double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("finite_difference_check: epsilon must be positive");
  require_scalar(root);
  const GradientMap analytic = gradients(root, params, bindings);
  ParamSet probe = params;
  double worst = 0.0;
  for (const std::string& name : probe.names()) {
    Matrix& value = probe.value(name);
    const Matrix& grad = analytic.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double original = value.data()[i];
      value.data()[i] = original + epsilon;
      const double plus = evaluate(root, bindings, &probe)(0, 0);
      value.data()[i] = original - epsilon;
      const double minus = evaluate(root, bindings, &probe)(0, 0);
      value.data()[i] = original;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = grad.data()[i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace kgtn::ad
