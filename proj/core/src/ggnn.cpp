#include "kgtn/ggnn.hpp"

#include <cmath>
#include <stdexcept>

namespace kgtn::ggnn {

namespace {

Matrix identity_output(std::size_t d) {
  Matrix out(d, 2 * d);
  for (std::size_t i = 0; i < d; ++i) out(i, i) = 1.0;
  return out;
}

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string("GGNNParams: ") + name + " has shape " + shape_string(m) +
                     ", expected " + shape_string(rows, cols));
  }
}

struct Field {
  const char* name;
  Matrix GGNNParams::*member;
};

constexpr Field kFields[] = {
    {names::kWz, &GGNNParams::w_z},       {names::kUz, &GGNNParams::u_z},
    {names::kWr, &GGNNParams::w_r},       {names::kUr, &GGNNParams::u_r},
    {names::kW, &GGNNParams::w},          {names::kU, &GGNNParams::u},
    {names::kOutput, &GGNNParams::output}, {names::kOutputBias, &GGNNParams::output_bias},
};

}  // namespace

GGNNParams GGNNParams::identity(std::size_t d) {
  GGNNParams p;
  p.w_z = p.w_r = p.w = Matrix(d, 2 * d);
  p.u_z = p.u_r = p.u = Matrix(d, d);
  p.output = identity_output(d);
  p.output_bias = Matrix(1, d);
  return p;
}

GGNNParams GGNNParams::initialized(std::size_t d, std::mt19937_64& rng) {
  GGNNParams p = identity(d);
  const double bound = 1.0 / std::sqrt(2.0 * static_cast<double>(d));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Matrix* m : {&p.w_z, &p.u_z, &p.w_r, &p.u_r, &p.w, &p.u}) {
    for (double& v : m->data()) v = dist(rng);
  }
  return p;
}

void GGNNParams::validate() const {
  const std::size_t d = dim();
  expect_shape(w_z, d, 2 * d, names::kWz);
  expect_shape(w_r, d, 2 * d, names::kWr);
  expect_shape(w, d, 2 * d, names::kW);
  expect_shape(u_z, d, d, names::kUz);
  expect_shape(u_r, d, d, names::kUr);
  expect_shape(u, d, d, names::kU);
  expect_shape(output, d, 2 * d, names::kOutput);
  expect_shape(output_bias, 1, d, names::kOutputBias);
}

void GGNNParams::register_in(ad::ParamSet& params) const {
  validate();
  for (const Field& f : kFields) params.add(f.name, this->*f.member);
}

GGNNParams GGNNParams::from(const ad::ParamSet& params) {
  GGNNParams p;
  for (const Field& f : kFields) p.*f.member = params.value(f.name);
  p.validate();
  return p;
}

void GGNNParams::write_to(TensorMap& tensors) const {
  for (const Field& f : kFields) tensors[f.name] = this->*f.member;
}

GGNNParams GGNNParams::read_from(const TensorMap& tensors) {
  GGNNParams p;
  for (const Field& f : kFields) {
    auto it = tensors.find(f.name);
    if (it == tensors.end()) throw FormatError(std::string("checkpoint lacks tensor '") + f.name + "'");
    p.*f.member = it->second;
  }
  p.validate();
  return p;
}

Matrix random_initial_weights(std::size_t k, std::size_t d, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(k, d);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

ParamExprs declare_params(ad::Tape& tape, std::size_t d) {
  return {tape.parameter(names::kWz, d, 2 * d), tape.parameter(names::kUz, d, d),
          tape.parameter(names::kWr, d, 2 * d), tape.parameter(names::kUr, d, d),
          tape.parameter(names::kW, d, 2 * d),  tape.parameter(names::kU, d, d),
          tape.parameter(names::kOutput, d, 2 * d), tape.parameter(names::kOutputBias, 1, d)};
}

ad::Expr init_hidden(ad::Expr w_init) { return w_init; }

ad::Expr aggregate(ad::Expr adjacency, ad::Expr adjacency_t, ad::Expr hidden) {
  return ad::concat_cols(ad::matmul(adjacency, hidden), ad::matmul(adjacency_t, hidden));
}

ad::Expr gated_update(ad::Expr message, ad::Expr hidden, const ParamExprs& p) {
  using namespace ad;
  Expr z = sigmoid(add(matmul_nt(message, p.w_z), matmul_nt(hidden, p.u_z)));
  Expr r = sigmoid(add(matmul_nt(message, p.w_r), matmul_nt(hidden, p.u_r)));
  Expr candidate = ad::tanh(add(matmul_nt(message, p.w), matmul_nt(mul(r, hidden), p.u)));
  // (1 - z) * h + z * h~
  return add(sub(hidden, mul(z, hidden)), mul(z, candidate));
}

ad::Expr propagate(const CategoryGraph& graph, ad::Expr w_init, const ParamExprs& p,
                   std::size_t iterations) {
  ad::Tape& tape = w_init.tape();
  const std::size_t k = graph.size();
  if (w_init.rows() != k) {
    throw ShapeError("propagate: graph has " + std::to_string(k) + " nodes but W^init has " +
                     std::to_string(w_init.rows()) + " rows");
  }
  ad::Expr h0 = init_hidden(w_init);
  ad::Expr h = h0;
  if (iterations > 0) {
    ad::Expr a = tape.constant(graph.adjacency, "adjacency");
    ad::Expr a_t = tape.constant(transpose(graph.adjacency), "adjacency^T");
    for (std::size_t t = 0; t < iterations; ++t) h = gated_update(aggregate(a, a_t, h), h, p);
  }
  ad::Expr ones = tape.constant(Matrix(k, 1, 1.0), "ones");
  return ad::add(ad::matmul_nt(ad::concat_cols(h, h0), p.output), ad::matmul(ones, p.output_bias));
}

// ---------------------------------------------------------------------------

namespace {

ad::ParamSet param_set(const GGNNParams& params) {
  ad::ParamSet set;
  params.register_in(set);
  return set;
}

}  // namespace

WeightTable init_hidden(const WeightTable& w_init) {
  if (w_init.role != WeightRole::Initial) throw std::invalid_argument("init_hidden: expected an initial weight table");
  return {w_init.values, WeightRole::Hidden};
}

Matrix aggregate(const CategoryGraph& graph, const WeightTable& hidden) {
  if (graph.size() != hidden.values.rows()) {
    throw ShapeError("aggregate: graph has " + std::to_string(graph.size()) + " nodes, hidden state has " +
                     std::to_string(hidden.values.rows()) + " rows");
  }
  ad::Tape tape;
  ad::Expr h = tape.constant(hidden.values, "hidden");
  ad::Expr out = aggregate(tape.constant(graph.adjacency), tape.constant(transpose(graph.adjacency)), h);
  return ad::evaluate(out, {});
}

WeightTable gated_update(const Matrix& message, const WeightTable& hidden, const GGNNParams& params) {
  params.validate();
  const std::size_t d = params.dim();
  if (hidden.values.cols() != d || message.cols() != 2 * d || message.rows() != hidden.values.rows()) {
    throw ShapeError("gated_update: message " + shape_string(message) + " and hidden " +
                     shape_string(hidden.values) + " inconsistent with d=" + std::to_string(d));
  }
  ad::Tape tape;
  ad::Expr out = gated_update(tape.constant(message, "message"), tape.constant(hidden.values, "hidden"),
                              declare_params(tape, d));
  const ad::ParamSet set = param_set(params);
  return {ad::evaluate(out, {}, &set), WeightRole::Hidden};
}

WeightTable propagate(const CategoryGraph& graph, const WeightTable& w_init, const GGNNParams& params,
                      std::size_t iterations) {
  params.validate();
  const std::size_t d = params.dim();
  if (w_init.values.cols() != d) {
    throw ShapeError("propagate: W^init has " + std::to_string(w_init.values.cols()) +
                     " columns, parameters expect d=" + std::to_string(d));
  }
  ad::Tape tape;
  ad::Expr w = tape.input(names::kWInit, w_init.values.rows(), d);
  ad::Expr out = propagate(graph, w, declare_params(tape, d), iterations);
  const ad::ParamSet set = param_set(params);
  return {ad::evaluate(out, {{names::kWInit, w_init.values}}, &set), WeightRole::Refined};
}

}  // namespace kgtn::ggnn
