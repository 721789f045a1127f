#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kgtn/autodiff.hpp"
#include "kgtn/checkpoint.hpp"
#include "kgtn/data.hpp"
#include "kgtn/ggnn.hpp"
#include "kgtn/graph.hpp"
#include "kgtn/heads.hpp"

namespace kgtn::training {

/// Feature-extractor training on base categories.
struct Stage1Config {
  double loss_balance_lambda = 0.005;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t batch = 64;
  std::size_t lr_step_epochs = 30;  // lr divided by 10 every this many epochs
  std::size_t epochs = 30;

  void validate() const;
};

/// Graph-propagation training on base plus k-shot novel samples.
struct Stage2Config {
  double eta = 0.001;  // weight regularizer, inner-product head only
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  std::size_t batch = 64;
  std::size_t epochs = 30;
  std::size_t iterations = 2;    // propagation rounds T
  bool train_ggnn = true;        // false freezes the gating and output parameters
  bool base_from_stage1 = false;  // seed W^init base rows with the stage-1 head
  double init_stddev = 0.01;
  double scale_init = heads::kDefaultScale;

  void validate() const;
};

struct ExtractorConfig {
  std::size_t blocks = 1;
  std::size_t hidden = 64;
};

/// Residual MLP: each block maps x -> x + tanh(x W1^T + b1) W2^T. Output
/// dimension equals input dimension.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(std::size_t dim, const ExtractorConfig& cfg, std::mt19937_64& rng);

  std::size_t dim() const { return dim_; }
  std::size_t blocks() const { return blocks_; }

  /// Declares the extractor's parameter leaves on `x`'s tape.
  ad::Expr forward(ad::Expr x) const;
  Matrix extract(const Matrix& x) const;

  const ad::ParamSet& params() const { return params_; }
  ad::ParamSet& params() { return params_; }

  /// FNV-1a over the raw bytes of every parameter, in name order.
  std::uint64_t checksum() const;

  void write_to(TensorMap& tensors) const;
  static FeatureExtractor read_from(const TensorMap& tensors);

 private:
  std::size_t dim_ = 0;
  std::size_t blocks_ = 0;
  ad::ParamSet params_;
};

struct Stage1LossTerms {
  ad::Expr cross_entropy;
  ad::Expr gradient_magnitude;
  ad::Expr total;
};

/// Lc = mean_i -log p_i[y_i];  Ls = mean_i sum_k (p_i[k] - 1[k = y_i])^2 ||x_i||^2;  total = Lc + lambda Ls.
Stage1LossTerms stage1_loss_terms(ad::Expr probs, const std::vector<std::size_t>& labels, ad::Expr features,
                                  double lambda);
ad::Expr stage1_loss(ad::Expr probs, const std::vector<std::size_t>& labels, ad::Expr features, double lambda);

/// Cross-entropy over all categories, plus eta * sum_k ||w*_k||^2 for the inner-product head.
ad::Expr stage2_loss(ad::Expr probs, const std::vector<std::size_t>& labels, ad::Expr refined_weights,
                     double eta, heads::MetricKind metric);

struct SgdSettings {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// v <- momentum * v + g + weight_decay * p;  p <- p - lr * v.
/// Tensors named in `no_decay` skip the weight-decay term.
void sgd_step(ad::ParamSet& params, const ad::GradientMap& grads, const SgdSettings& settings,
              const std::set<std::string, std::less<>>& no_decay = {});

struct Batch {
  std::vector<std::size_t> rows;    // rows of the training feature matrix
  std::vector<std::size_t> labels;  // category indices
  std::size_t n_base = 0;
  std::size_t n_novel = 0;
};

/// Half of every batch walks a reshuffled pass over the base rows, the other
/// half is drawn from the novel rows with replacement.
class BalancedSampler {
 public:
  BalancedSampler(std::vector<std::size_t> base_rows, std::vector<std::size_t> novel_rows,
                  std::vector<std::uint32_t> row_labels, std::size_t batch_size);

  Batch next(std::mt19937_64& rng);
  /// Batches needed to visit every base row once.
  std::size_t batches_per_epoch() const;

 private:
  std::vector<std::size_t> base_;
  std::vector<std::size_t> novel_;
  std::vector<std::uint32_t> labels_;
  std::size_t half_;
  std::size_t cursor_;
};

Batch sample_balanced_batch(const data::FewShotDataset& dataset, const data::FewShotSplit& split,
                            std::size_t batch_size, std::mt19937_64& rng);

struct Stage1Result {
  Matrix head;  // K_base x d inner-product classifier
  std::vector<std::size_t> base_categories;
  std::vector<double> epoch_loss;
};

/// Trains `extractor` and a base-only inner-product head on the base training samples.
Stage1Result train_stage1(FeatureExtractor& extractor, const data::FewShotDataset& dataset,
                          const Stage1Config& cfg, std::mt19937_64& rng);

struct Stage2Model {
  ggnn::GGNNParams ggnn;
  Matrix w_init;
  double scale = heads::kDefaultScale;
  heads::MetricKind metric = heads::MetricKind::InnerProduct;
  std::size_t iterations = 0;

  Matrix refined_weights(const CategoryGraph& graph) const;
  Matrix scores(const CategoryGraph& graph, const Matrix& features) const;

  void write_to(TensorMap& tensors) const;
  static Stage2Model read_from(const TensorMap& tensors);
};

struct Stage2Result {
  Stage2Model model;
  std::vector<double> epoch_loss;
};

/// Trains W^init, the GGNN parameters and the head scale on precomputed
/// features. `features` rows align with `dataset.train()`.
Stage2Result train_stage2_on_features(const Matrix& features, const data::FewShotDataset& dataset,
                                      const data::FewShotSplit& split, const CategoryGraph& graph,
                                      heads::MetricKind metric, const Stage2Config& cfg, std::mt19937_64& rng,
                                      const Stage1Result* stage1 = nullptr);

/// Extracts features with the frozen extractor, then trains as above.
Stage2Result train_stage2(const FeatureExtractor& extractor, const data::FewShotDataset& dataset,
                          const data::FewShotSplit& split, const CategoryGraph& graph, heads::MetricKind metric,
                          const Stage2Config& cfg, std::mt19937_64& rng, const Stage1Result* stage1 = nullptr);

/// The full second-stage objective on a fixed batch, for gradient checking.
/// Declares parameters "w_init", the GGNN tensors and (for scaled metrics) "head.scale".
struct Stage2Objective {
  ad::Expr loss;
  ad::ParamSet params;
  ad::Bindings bindings;
};

Stage2Objective build_stage2_objective(ad::Tape& tape, const Matrix& features, const std::vector<std::size_t>& labels,
                                       const CategoryGraph& graph, const Stage2Model& model, double eta);

}  // namespace kgtn::training
