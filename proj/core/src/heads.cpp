#include "kgtn/heads.hpp"

#include <stdexcept>
#include <string>

namespace kgtn::heads {

std::string_view to_string(MetricKind metric) {
  switch (metric) {
    case MetricKind::InnerProduct: return "inner";
    case MetricKind::Cosine: return "cosine";
    case MetricKind::Pearson: return "pearson";
  }
  return "unknown";
}

MetricKind parse_metric(std::string_view text) {
  if (text == "inner" || text == "inner_product") return MetricKind::InnerProduct;
  if (text == "cosine") return MetricKind::Cosine;
  if (text == "pearson") return MetricKind::Pearson;
  throw std::invalid_argument("unknown metric '" + std::string(text) + "' (expected inner|cosine|pearson)");
}

namespace {

// x * (I - 11^T / d) subtracts each row's mean from every element.
ad::Expr center_rows(ad::Expr x) {
  const std::size_t d = x.cols();
  Matrix c(d, d, -1.0 / static_cast<double>(d));
  for (std::size_t i = 0; i < d; ++i) c(i, i) += 1.0;
  return ad::matmul(x, x.tape().constant(std::move(c), "centering"));
}

ad::Expr unit_rows(ad::Expr x, std::string label) {
  x.tape().label(x, std::move(label));
  return ad::row_normalize(x);
}

}  // namespace

ad::Expr score(ad::Expr features, ad::Expr weights, MetricKind metric, ad::Expr scale) {
  if (features.cols() != weights.cols()) {
    throw ShapeError("score: feature dimension " + std::to_string(features.cols()) +
                     " differs from weight dimension " + std::to_string(weights.cols()));
  }
  switch (metric) {
    case MetricKind::InnerProduct: return ad::matmul_nt(features, weights);
    case MetricKind::Cosine:
      return ad::scalar_mul(scale, ad::matmul_nt(unit_rows(features, "features"), unit_rows(weights, "weights")));
    case MetricKind::Pearson:
      return ad::scalar_mul(scale, ad::matmul_nt(unit_rows(center_rows(features), "centered features"),
                                                 unit_rows(center_rows(weights), "centered weights")));
  }
  throw std::logic_error("unhandled metric");
}

Matrix score(const Matrix& features, const Matrix& weights, MetricKind metric, double scale) {
  ad::Tape tape;
  ad::Expr x = tape.constant(features, "features");
  ad::Expr w = tape.constant(weights, "weights");
  ad::Expr s = tape.constant(Matrix(1, 1, scale), "scale");
  return ad::evaluate(score(x, w, metric, s), {});
}

Matrix predict_probs(const Matrix& scores) {
  ad::Tape tape;
  return ad::evaluate(ad::softmax(tape.constant(scores, "scores")), {});
}

}  // namespace kgtn::heads
