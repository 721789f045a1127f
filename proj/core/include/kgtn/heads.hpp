#pragma once

#include <string_view>

#include "kgtn/autodiff.hpp"
#include "kgtn/matrix.hpp"

namespace kgtn::heads {

enum class MetricKind { InnerProduct, Cosine, Pearson };

std::string_view to_string(MetricKind metric);
/// Accepts "inner" / "inner_product", "cosine", "pearson".
MetricKind parse_metric(std::string_view text);

/// Cosine and Pearson scores are multiplied by a learnable scale; the inner product is not.
constexpr bool uses_scale(MetricKind metric) { return metric != MetricKind::InnerProduct; }

inline constexpr double kDefaultScale = 10.0;
inline constexpr const char* kScaleName = "head.scale";

/// N x K similarity scores between feature rows and weight rows. `scale` is a
/// 1x1 expression and is ignored for the inner product.
ad::Expr score(ad::Expr features, ad::Expr weights, MetricKind metric, ad::Expr scale);

Matrix score(const Matrix& features, const Matrix& weights, MetricKind metric, double scale);

/// Row-wise softmax, stabilized by subtracting each row's maximum.
Matrix predict_probs(const Matrix& scores);

}  // namespace kgtn::heads
