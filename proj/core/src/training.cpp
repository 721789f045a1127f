#include "kgtn/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "kgtn/log.hpp"

namespace kgtn::training {

void Stage1Config::validate() const {
  if (!(lr > 0 && momentum >= 0 && weight_decay >= 0 && loss_balance_lambda >= 0)) {
    throw std::invalid_argument("stage1: lr must be positive; momentum, weight decay and lambda non-negative");
  }
  if (batch == 0 || lr_step_epochs == 0) throw std::invalid_argument("stage1: batch and lr step must be positive");
}

void Stage2Config::validate() const {
  if (!(lr > 0 && momentum >= 0 && weight_decay >= 0 && eta >= 0 && init_stddev > 0)) {
    throw std::invalid_argument("stage2: lr and init stddev must be positive; momentum, weight decay and eta non-negative");
  }
  if (batch < 2 || batch % 2 != 0) throw std::invalid_argument("stage2: batch size must be even and at least 2");
  if (!std::isfinite(scale_init)) throw std::invalid_argument("stage2: scale init must be finite");
}

// ---------------------------------------------------------------------------
// Feature extractor

namespace {

std::string block_name(std::size_t b, const char* tensor) {
  return "extractor.block" + std::to_string(b) + "." + tensor;
}

}  // namespace

FeatureExtractor::FeatureExtractor(std::size_t dim, const ExtractorConfig& cfg, std::mt19937_64& rng)
    : dim_(dim), blocks_(cfg.blocks) {
  if (dim == 0 || cfg.hidden == 0) throw std::invalid_argument("FeatureExtractor: dimensions must be positive");
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(dim));
  const double out_bound = 0.1 / std::sqrt(static_cast<double>(cfg.hidden));
  std::uniform_real_distribution<double> in_dist(-in_bound, in_bound);
  std::uniform_real_distribution<double> out_dist(-out_bound, out_bound);
  for (std::size_t b = 0; b < blocks_; ++b) {
    Matrix w1(cfg.hidden, dim);
    for (double& v : w1.data()) v = in_dist(rng);
    Matrix w2(dim, cfg.hidden);
    for (double& v : w2.data()) v = out_dist(rng);
    params_.add(block_name(b, "W1"), std::move(w1));
    params_.add(block_name(b, "b1"), Matrix(1, cfg.hidden));
    params_.add(block_name(b, "W2"), std::move(w2));
  }
}

ad::Expr FeatureExtractor::forward(ad::Expr x) const {
  ad::Tape& tape = x.tape();
  if (x.cols() != dim_) throw ShapeError("FeatureExtractor: input has " + std::to_string(x.cols()) + " columns");
  ad::Expr ones = tape.constant(Matrix(x.rows(), 1, 1.0), "ones");
  for (std::size_t b = 0; b < blocks_; ++b) {
    const Matrix& w1 = params_.value(block_name(b, "W1"));
    ad::Expr p1 = tape.parameter(block_name(b, "W1"), w1.rows(), w1.cols());
    ad::Expr b1 = tape.parameter(block_name(b, "b1"), 1, w1.rows());
    ad::Expr p2 = tape.parameter(block_name(b, "W2"), dim_, w1.rows());
    ad::Expr hidden = ad::tanh(ad::add(ad::matmul_nt(x, p1), ad::matmul(ones, b1)));
    x = ad::add(x, ad::matmul_nt(hidden, p2));
  }
  return x;
}

Matrix FeatureExtractor::extract(const Matrix& x) const {
  ad::Tape tape;
  ad::Expr out = forward(tape.input("raw", x.rows(), x.cols()));
  return ad::evaluate(out, {{"raw", x}}, &params_);
}

std::uint64_t FeatureExtractor::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::string& name : params_.names()) {
    for (double v : params_.value(name).data()) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xFFu;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

void FeatureExtractor::write_to(TensorMap& tensors) const {
  for (const std::string& name : params_.names()) tensors[name] = params_.value(name);
  tensors["extractor.meta"] = Matrix(1, 2, {static_cast<double>(dim_), static_cast<double>(blocks_)});
}

FeatureExtractor FeatureExtractor::read_from(const TensorMap& tensors) {
  auto meta = tensors.find("extractor.meta");
  if (meta == tensors.end() || meta->second.size() != 2) throw FormatError("checkpoint lacks extractor metadata");
  FeatureExtractor fx;
  fx.dim_ = static_cast<std::size_t>(meta->second(0, 0));
  fx.blocks_ = static_cast<std::size_t>(meta->second(0, 1));
  for (std::size_t b = 0; b < fx.blocks_; ++b) {
    for (const char* t : {"W1", "b1", "W2"}) {
      auto it = tensors.find(block_name(b, t));
      if (it == tensors.end()) throw FormatError("checkpoint lacks tensor '" + block_name(b, t) + "'");
      fx.params_.add(it->first, it->second);
    }
  }
  return fx;
}

// ---------------------------------------------------------------------------
// Losses

namespace {

Matrix one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
  Matrix m(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) m(i, labels.at(i)) = 1.0;
  return m;
}

}  // namespace

Stage1LossTerms stage1_loss_terms(ad::Expr probs, const std::vector<std::size_t>& labels, ad::Expr features,
                                  double lambda) {
  if (features.rows() != probs.rows()) throw ShapeError("stage1_loss: features and probabilities disagree on N");
  ad::Tape& tape = probs.tape();
  ad::Expr ce = ad::negative_log_likelihood(probs, labels);
  ad::Expr residual = ad::sub(probs, tape.constant(one_hot(labels, probs.cols()), "one_hot"));
  ad::Expr per_sample = ad::mul(ad::row_sum(ad::mul(residual, residual)), ad::row_sum(ad::mul(features, features)));
  ad::Expr sgm = ad::mean(per_sample);
  return {ce, sgm, ad::add(ce, ad::scale(sgm, lambda))};
}

ad::Expr stage1_loss(ad::Expr probs, const std::vector<std::size_t>& labels, ad::Expr features, double lambda) {
  return stage1_loss_terms(probs, labels, features, lambda).total;
}

ad::Expr stage2_loss(ad::Expr probs, const std::vector<std::size_t>& labels, ad::Expr refined_weights, double eta,
                     heads::MetricKind metric) {
  ad::Expr ce = ad::negative_log_likelihood(probs, labels);
  if (metric != heads::MetricKind::InnerProduct) return ce;
  return ad::add(ce, ad::scale(ad::squared_l2_norm(refined_weights), eta));
}

// ---------------------------------------------------------------------------
// Optimizer

void sgd_step(ad::ParamSet& params, const ad::GradientMap& grads, const SgdSettings& settings,
              const std::set<std::string, std::less<>>& no_decay) {
  for (const std::string& name : params.names()) {
    auto it = grads.find(name);
    if (it == grads.end()) throw std::invalid_argument("sgd_step: no gradient for parameter '" + name + "'");
    Matrix& p = params.value(name);
    Matrix& v = params.momentum(name);
    const Matrix& g = it->second;
    if (!g.same_shape(p)) throw ShapeError("sgd_step: gradient for '" + name + "' has shape " + shape_string(g));
    const double wd = no_decay.contains(name) ? 0.0 : settings.weight_decay;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double& vi = v.data()[i];
      double& pi = p.data()[i];
      vi = settings.momentum * vi + g.data()[i] + wd * pi;
      pi -= settings.lr * vi;
    }
  }
}

// ---------------------------------------------------------------------------
// Sampling

BalancedSampler::BalancedSampler(std::vector<std::size_t> base_rows, std::vector<std::size_t> novel_rows,
                                 std::vector<std::uint32_t> row_labels, std::size_t batch_size)
    : base_(std::move(base_rows)), novel_(std::move(novel_rows)), labels_(std::move(row_labels)),
      half_(batch_size / 2), cursor_(0) {
  if (batch_size < 2 || batch_size % 2 != 0) throw std::invalid_argument("BalancedSampler: batch size must be even");
  if (base_.empty()) throw std::invalid_argument("BalancedSampler: no base samples");
  if (novel_.empty()) throw std::invalid_argument("BalancedSampler: no novel samples");
  cursor_ = base_.size();  // forces a shuffle on first use
}

Batch BalancedSampler::next(std::mt19937_64& rng) {
  Batch batch;
  batch.rows.reserve(2 * half_);
  for (std::size_t i = 0; i < half_; ++i) {
    if (cursor_ == base_.size()) {
      std::shuffle(base_.begin(), base_.end(), rng);
      cursor_ = 0;
    }
    batch.rows.push_back(base_[cursor_++]);
  }
  std::uniform_int_distribution<std::size_t> pick(0, novel_.size() - 1);
  for (std::size_t i = 0; i < half_; ++i) batch.rows.push_back(novel_[pick(rng)]);
  batch.labels.reserve(batch.rows.size());
  for (std::size_t r : batch.rows) batch.labels.push_back(labels_.at(r));
  batch.n_base = half_;
  batch.n_novel = half_;
  return batch;
}

std::size_t BalancedSampler::batches_per_epoch() const { return (base_.size() + half_ - 1) / half_; }

Batch sample_balanced_batch(const data::FewShotDataset& dataset, const data::FewShotSplit& split,
                            std::size_t batch_size, std::mt19937_64& rng) {
  BalancedSampler sampler(data::base_train_rows(dataset), data::split_novel_rows(split), dataset.train().labels,
                          batch_size);
  return sampler.next(rng);
}

// ---------------------------------------------------------------------------
// Stage 1

Stage1Result train_stage1(FeatureExtractor& extractor, const data::FewShotDataset& dataset, const Stage1Config& cfg,
                          std::mt19937_64& rng) {
  cfg.validate();
  Stage1Result result;
  result.base_categories = dataset.base_categories();
  const std::size_t k_base = result.base_categories.size();
  if (k_base == 0) throw std::invalid_argument("train_stage1: dataset has no base categories");
  std::vector<std::size_t> base_index(dataset.num_categories(), 0);
  for (std::size_t i = 0; i < k_base; ++i) base_index[result.base_categories[i]] = i;

  const std::size_t d = extractor.dim();
  const std::string head_name = "stage1.head";
  ad::ParamSet params = extractor.params();
  {
    std::normal_distribution<double> dist(0.0, 0.01);
    Matrix head(k_base, d);
    for (double& v : head.data()) v = dist(rng);
    params.add(head_name, std::move(head));
  }

  std::vector<std::size_t> rows = data::base_train_rows(dataset);
  const Matrix& raw = dataset.train().features;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const SgdSettings sgd{cfg.lr * std::pow(0.1, static_cast<double>(epoch / cfg.lr_step_epochs)), cfg.momentum,
                          cfg.weight_decay};
    std::shuffle(rows.begin(), rows.end(), rng);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < rows.size(); start += cfg.batch) {
      const std::size_t end = std::min(rows.size(), start + cfg.batch);
      std::span<const std::size_t> chunk(rows.data() + start, end - start);
      std::vector<std::size_t> labels;
      labels.reserve(chunk.size());
      for (std::size_t r : chunk) labels.push_back(base_index[dataset.train().labels[r]]);

      ad::Tape tape;
      ad::Expr x = tape.input("raw", chunk.size(), d);
      ad::Expr features = extractor.forward(x);
      ad::Expr head = tape.parameter(head_name, k_base, d);
      ad::Expr probs = ad::softmax(ad::matmul_nt(features, head));
      ad::Expr loss = stage1_loss(probs, labels, features, cfg.loss_balance_lambda);
      ad::ValueAndGradients vg;
      try {
        vg = ad::value_and_gradients(loss, params, {{"raw", raw.gather_rows(chunk)}});
      } catch (const ad::NumericalError& e) {
        throw ad::NumericalError("stage 1 diverged at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(steps) + " (lr " + std::to_string(sgd.lr) + "): " + e.what());
      }
      sgd_step(params, vg.gradients, sgd);
      loss_sum += vg.value;
      ++steps;
    }
    result.epoch_loss.push_back(steps == 0 ? 0.0 : loss_sum / static_cast<double>(steps));
  }

  for (const std::string& name : extractor.params().names()) extractor.params().value(name) = params.value(name);
  result.head = params.value(head_name);
  return result;
}

// ---------------------------------------------------------------------------
// Stage 2

Matrix Stage2Model::refined_weights(const CategoryGraph& graph) const {
  return ggnn::propagate(graph, {w_init, ggnn::WeightRole::Initial}, ggnn, iterations).values;
}

Matrix Stage2Model::scores(const CategoryGraph& graph, const Matrix& features) const {
  return heads::score(features, refined_weights(graph), metric, scale);
}

void Stage2Model::write_to(TensorMap& tensors) const {
  ggnn.write_to(tensors);
  tensors[ggnn::names::kWInit] = w_init;
  tensors[heads::kScaleName] = Matrix(1, 1, scale);
  tensors["meta.metric"] = Matrix(1, 1, static_cast<double>(metric));
  tensors["meta.iterations"] = Matrix(1, 1, static_cast<double>(iterations));
}

Stage2Model Stage2Model::read_from(const TensorMap& tensors) {
  auto get = [&](const char* name) -> const Matrix& {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError(std::string("checkpoint lacks tensor '") + name + "'");
    return it->second;
  };
  Stage2Model m;
  m.ggnn = ggnn::GGNNParams::read_from(tensors);
  m.w_init = get(ggnn::names::kWInit);
  m.scale = get(heads::kScaleName)(0, 0);
  const double metric = get("meta.metric")(0, 0);
  if (metric < 0 || metric > 2) throw FormatError("checkpoint has an invalid metric tag");
  m.metric = static_cast<heads::MetricKind>(static_cast<int>(metric));
  m.iterations = static_cast<std::size_t>(get("meta.iterations")(0, 0));
  return m;
}

namespace {

struct Stage2Graph {
  ad::Expr loss;
  ad::Expr refined;
};

Stage2Graph stage2_graph(ad::Tape& tape, std::size_t batch, std::size_t d, const std::vector<std::size_t>& labels,
                         const CategoryGraph& graph, heads::MetricKind metric, std::size_t iterations, double eta) {
  ad::Expr x = tape.input("features", batch, d);
  ad::Expr w_init = tape.parameter(ggnn::names::kWInit, graph.size(), d);
  ad::Expr refined = ggnn::propagate(graph, w_init, ggnn::declare_params(tape, d), iterations);
  ad::Expr scale = heads::uses_scale(metric) ? tape.parameter(heads::kScaleName, 1, 1) : ad::Expr();
  ad::Expr probs = ad::softmax(heads::score(x, refined, metric, scale));
  return {stage2_loss(probs, labels, refined, eta, metric), refined};
}

}  // namespace

Stage2Objective build_stage2_objective(ad::Tape& tape, const Matrix& features, const std::vector<std::size_t>& labels,
                                       const CategoryGraph& graph, const Stage2Model& model, double eta) {
  Stage2Objective obj;
  obj.loss = stage2_graph(tape, features.rows(), features.cols(), labels, graph, model.metric, model.iterations, eta)
                 .loss;
  model.ggnn.register_in(obj.params);
  obj.params.add(ggnn::names::kWInit, model.w_init);
  if (heads::uses_scale(model.metric)) obj.params.add(heads::kScaleName, Matrix(1, 1, model.scale));
  obj.bindings.emplace("features", features);
  return obj;
}

Stage2Result train_stage2_on_features(const Matrix& features, const data::FewShotDataset& dataset,
                                      const data::FewShotSplit& split, const CategoryGraph& graph,
                                      heads::MetricKind metric, const Stage2Config& cfg, std::mt19937_64& rng,
                                      const Stage1Result* stage1) {
  cfg.validate();
  const std::size_t k = dataset.num_categories();
  const std::size_t d = features.cols();
  if (graph.size() != k) {
    throw ShapeError("train_stage2: graph has " + std::to_string(graph.size()) + " nodes for " + std::to_string(k) +
                     " categories");
  }
  if (features.rows() != dataset.train().size()) throw ShapeError("train_stage2: feature rows do not match dataset");

  Stage2Result result;
  Stage2Model& model = result.model;
  model.metric = metric;
  model.iterations = cfg.iterations;
  model.scale = cfg.scale_init;
  model.ggnn = cfg.train_ggnn ? ggnn::GGNNParams::initialized(d, rng) : ggnn::GGNNParams::identity(d);
  model.w_init = ggnn::random_initial_weights(k, d, cfg.init_stddev, rng);
  if (cfg.base_from_stage1) {
    if (stage1 == nullptr) throw std::invalid_argument("train_stage2: base_from_stage1 requires a stage-1 result");
    if (stage1->head.cols() != d) throw ShapeError("train_stage2: stage-1 head dimension differs from features");
    for (std::size_t i = 0; i < stage1->base_categories.size(); ++i) {
      auto src = stage1->head.row(i);
      std::copy(src.begin(), src.end(), model.w_init.row(stage1->base_categories[i]).begin());
    }
  }

  ad::ParamSet params;
  ad::Bindings frozen;
  params.add(ggnn::names::kWInit, model.w_init);
  if (cfg.train_ggnn) {
    model.ggnn.register_in(params);
  } else {
    ad::ParamSet tmp;
    model.ggnn.register_in(tmp);
    for (const std::string& name : tmp.names()) frozen.emplace(name, tmp.value(name));
  }
  if (heads::uses_scale(metric)) params.add(heads::kScaleName, Matrix(1, 1, model.scale));
  const std::set<std::string, std::less<>> no_decay{heads::kScaleName};
  const SgdSettings sgd{cfg.lr, cfg.momentum, cfg.weight_decay};

  BalancedSampler sampler(data::base_train_rows(dataset), data::split_novel_rows(split), dataset.train().labels,
                          cfg.batch);
  const std::size_t steps_per_epoch = sampler.batches_per_epoch();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const Batch batch = sampler.next(rng);
      ad::Tape tape;
      ad::Expr loss = stage2_graph(tape, batch.rows.size(), d, batch.labels, graph, metric, cfg.iterations, cfg.eta).loss;
      ad::Bindings bindings = frozen;
      bindings.emplace("features", features.gather_rows(batch.rows));
      ad::ValueAndGradients vg;
      try {
        vg = ad::value_and_gradients(loss, params, bindings);
      } catch (const ad::NumericalError& e) {
        throw ad::NumericalError("stage 2 diverged at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(step) + ": " + e.what());
      }
      sgd_step(params, vg.gradients, sgd, no_decay);
      loss_sum += vg.value;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(steps_per_epoch));
  }

  model.w_init = params.value(ggnn::names::kWInit);
  if (cfg.train_ggnn) model.ggnn = ggnn::GGNNParams::from(params);
  if (heads::uses_scale(metric)) model.scale = params.value(heads::kScaleName)(0, 0);
  return result;
}

Stage2Result train_stage2(const FeatureExtractor& extractor, const data::FewShotDataset& dataset,
                          const data::FewShotSplit& split, const CategoryGraph& graph, heads::MetricKind metric,
                          const Stage2Config& cfg, std::mt19937_64& rng, const Stage1Result* stage1) {
  return train_stage2_on_features(extractor.extract(dataset.train().features), dataset, split, graph, metric, cfg, rng,
                                  stage1);
}

}  // namespace kgtn::training
