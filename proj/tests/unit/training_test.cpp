#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "kgtn/data.hpp"
#include "kgtn/ggnn.hpp"
#include "kgtn/graph.hpp"
#include "kgtn/training.hpp"
#include "oracles.hpp"

namespace ad = kgtn::ad;
namespace data = kgtn::data;
namespace training = kgtn::training;
namespace oracle = kgtn::oracle;
using kgtn::Matrix;
using kgtn::heads::MetricKind;

namespace {

double scalar(ad::Expr e) { return ad::evaluate(e, {})(0, 0); }

data::SyntheticTaxonomyConfig tiny_taxonomy(std::uint64_t seed) {
  data::SyntheticTaxonomyConfig cfg;
  cfg.n_super = 2;
  cfg.leaves_per_super = 4;
  cfg.dim = 8;
  cfg.train_per_base = 20;
  cfg.novel_pool = 5;
  cfg.test_per_class = 5;
  cfg.seed = seed;
  return cfg;
}

training::Stage2Config quick_stage2(std::size_t epochs) {
  training::Stage2Config cfg;
  cfg.epochs = epochs;
  cfg.batch = 16;
  return cfg;
}

// Three well separated base clusters and one novel category.
data::FewShotDataset separable_toy(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  const Matrix centers = Matrix::from_rows({{3, 0, 0, 0}, {0, 3, 0, 0}, {0, 0, 3, 0}, {0, 0, 0, 3}});
  auto make = [&](std::size_t per_class) {
    data::FeatureSet set;
    set.categories = {{0, false}, {1, false}, {2, false}, {3, true}};
    set.features = Matrix(4 * per_class, 4);
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t n = 0; n < per_class; ++n) {
        const std::size_t row = c * per_class + n;
        for (std::size_t j = 0; j < 4; ++j) set.features(row, j) = centers(c, j) + noise(rng);
        set.labels.push_back(static_cast<std::uint32_t>(c));
      }
    }
    return set;
  };
  return data::FewShotDataset(make(40), make(10), seed);
}

training::Stage2Model random_model(std::size_t k, std::size_t d, MetricKind metric, std::mt19937_64& rng) {
  training::Stage2Model m;
  m.ggnn = oracle::random_ggnn(d, rng, 0.4);
  m.w_init = oracle::random_matrix(k, d, rng);
  m.metric = metric;
  m.iterations = 2;
  m.scale = 10.0;
  return m;
}

}  // namespace

TEST(Stage1Loss, PerfectPredictionsGiveZero) {
  ad::Tape t;
  ad::Expr probs = t.constant(Matrix::from_rows({{1, 0, 0}, {0, 0, 1}}));
  ad::Expr x = t.constant(Matrix::from_rows({{1, 2}, {3, 4}}));
  const auto terms = training::stage1_loss_terms(probs, {0, 2}, x, 0.005);
  EXPECT_EQ(scalar(terms.cross_entropy), 0.0);
  EXPECT_EQ(scalar(terms.gradient_magnitude), 0.0);
  EXPECT_EQ(scalar(terms.total), 0.0);
}

TEST(Stage1Loss, HandComputedExample) {
  ad::Tape t;
  ad::Expr probs = t.constant(Matrix::from_rows({{0.5, 0.5}}));
  ad::Expr x = t.constant(Matrix::from_rows({{2, 0}}));  // squared norm 4
  const auto terms = training::stage1_loss_terms(probs, {0}, x, 1.0);
  EXPECT_NEAR(scalar(terms.cross_entropy), std::log(2.0), 1e-15);
  EXPECT_EQ(scalar(terms.gradient_magnitude), 2.0);
  EXPECT_NEAR(scalar(terms.total), std::log(2.0) + 2.0, 1e-15);
}

TEST(Stage1Loss, ZeroLambdaIsPlainCrossEntropy) {
  std::mt19937_64 rng(1);
  ad::Tape t;
  ad::Expr probs = ad::softmax(t.constant(oracle::random_matrix(4, 3, rng)));
  ad::Expr x = t.constant(oracle::random_matrix(4, 5, rng));
  const std::vector<std::size_t> labels = {0, 1, 2, 1};
  EXPECT_EQ(scalar(training::stage1_loss(probs, labels, x, 0.0)), scalar(ad::negative_log_likelihood(probs, labels)));
}

TEST(Stage2Loss, ZeroWeightsAddNothing) {
  ad::Tape t;
  ad::Expr probs = t.constant(Matrix::from_rows({{0.25, 0.75}}));
  ad::Expr w = t.constant(Matrix(2, 3));
  EXPECT_EQ(scalar(training::stage2_loss(probs, {0}, w, 0.001, MetricKind::InnerProduct)), std::log(4.0));
}

TEST(Stage2Loss, CrossEntropyExample) {
  ad::Tape t;
  ad::Expr probs = t.constant(Matrix::from_rows({{0.25, 0.75}}));
  ad::Expr w = t.constant(Matrix(2, 3, 1.0));
  EXPECT_NEAR(scalar(training::stage2_loss(probs, {0}, w, 0.0, MetricKind::InnerProduct)), 1.3862943611198906, 1e-15);
}

TEST(Stage2Loss, WeightPenaltyOnlyForInnerProduct) {
  std::mt19937_64 rng(2);
  ad::Tape t;
  ad::Expr probs = ad::softmax(t.constant(oracle::random_matrix(3, 4, rng)));
  const Matrix wv = oracle::random_matrix(4, 5, rng);
  ad::Expr w = t.constant(wv);
  const std::vector<std::size_t> labels = {1, 3, 0};
  for (MetricKind m : {MetricKind::Cosine, MetricKind::Pearson}) {
    EXPECT_EQ(scalar(training::stage2_loss(probs, labels, w, 0.001, m)),
              scalar(training::stage2_loss(probs, labels, w, 0.0, m)));
  }
  double norm = 0.0;
  for (double v : wv.data()) norm += v * v;
  const double with = scalar(training::stage2_loss(probs, labels, w, 0.001, MetricKind::InnerProduct));
  const double without = scalar(training::stage2_loss(probs, labels, w, 0.0, MetricKind::InnerProduct));
  EXPECT_NEAR(with - without, 0.001 * norm, 1e-15);
}

TEST(Sgd, PlainGradientStep) {
  ad::ParamSet ps;
  ps.add("p", Matrix(1, 1, 5.0));
  training::sgd_step(ps, {{"p", Matrix(1, 1, 2.0)}}, {1.0, 0.0, 0.0});
  EXPECT_EQ(ps.value("p")(0, 0), 3.0);
}

TEST(Sgd, MomentumUnrolls) {
  ad::ParamSet ps;
  ps.add("p", Matrix(1, 1, 10.0));
  const training::SgdSettings s{1.0, 0.9, 0.0};
  training::sgd_step(ps, {{"p", Matrix(1, 1, 1.0)}}, s);
  EXPECT_EQ(ps.value("p")(0, 0), 9.0);
  training::sgd_step(ps, {{"p", Matrix(1, 1, 1.0)}}, s);
  EXPECT_NEAR(ps.value("p")(0, 0), 7.1, 1e-15);
}

TEST(Sgd, PureDecayStep) {
  ad::ParamSet ps;
  ps.add("p", Matrix(1, 1, 10.0));
  training::sgd_step(ps, {{"p", Matrix(1, 1, 0.0)}}, {1.0, 0.0, 0.1});
  EXPECT_EQ(ps.value("p")(0, 0), 9.0);
}

TEST(Sgd, ExcludedTensorsSkipDecayAndMissingGradientsRaise) {
  ad::ParamSet ps;
  ps.add("s", Matrix(1, 1, 10.0));
  ps.add("w", Matrix(1, 1, 10.0));
  training::sgd_step(ps, {{"s", Matrix(1, 1)}, {"w", Matrix(1, 1)}}, {1.0, 0.0, 0.1}, {"s"});
  EXPECT_EQ(ps.value("s")(0, 0), 10.0);
  EXPECT_EQ(ps.value("w")(0, 0), 9.0);
  EXPECT_THROW(training::sgd_step(ps, {{"s", Matrix(1, 1)}}, {1.0, 0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(training::sgd_step(ps, {{"s", Matrix(2, 1)}, {"w", Matrix(1, 1)}}, {1.0, 0.0, 0.0}), kgtn::ShapeError);
}

TEST(BalancedBatch, HalfBaseHalfNovel) {
  const auto tax = data::generate_synthetic(tiny_taxonomy(1));
  const auto split = data::make_kshot_split(tax.dataset, 1, 0);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto batch = training::sample_balanced_batch(tax.dataset, split, 64, rng);
    EXPECT_EQ(batch.n_base, 32u);
    EXPECT_EQ(batch.n_novel, 32u);
    ASSERT_EQ(batch.rows.size(), 64u);
    for (std::size_t j = 0; j < 64; ++j) {
      const bool novel = tax.dataset.categories()[batch.labels[j]].is_novel;
      EXPECT_EQ(novel, j >= 32);
      EXPECT_EQ(batch.labels[j], tax.dataset.train().labels[batch.rows[j]]);
    }
  }
}

TEST(BalancedBatch, OneShotNovelHalfRepeats) {
  data::SyntheticTaxonomyConfig cfg = tiny_taxonomy(2);
  cfg.n_super = 5;
  cfg.leaves_per_super = 2;  // one novel leaf per superclass: five novel categories
  const auto tax = data::generate_synthetic(cfg);
  ASSERT_EQ(tax.dataset.novel_categories().size(), 5u);
  const auto split = data::make_kshot_split(tax.dataset, 1, 0);
  std::mt19937_64 rng(4);
  const auto batch = training::sample_balanced_batch(tax.dataset, split, 64, rng);
  const std::set<std::size_t> novel_rows(batch.rows.begin() + 32, batch.rows.end());
  EXPECT_LE(novel_rows.size(), 5u);
}

TEST(BalancedBatch, SameSeedSameBatch) {
  const auto tax = data::generate_synthetic(tiny_taxonomy(3));
  const auto split = data::make_kshot_split(tax.dataset, 2, 1);
  std::mt19937_64 a(9), b(9);
  const auto x = training::sample_balanced_batch(tax.dataset, split, 32, a);
  const auto y = training::sample_balanced_batch(tax.dataset, split, 32, b);
  EXPECT_EQ(x.rows, y.rows);
  EXPECT_EQ(x.labels, y.labels);
  EXPECT_THROW(training::sample_balanced_batch(tax.dataset, split, 31, a), std::invalid_argument);
}

TEST(BalancedSampler, EpochVisitsEveryBaseRowOnce) {
  const auto tax = data::generate_synthetic(tiny_taxonomy(4));
  const auto split = data::make_kshot_split(tax.dataset, 1, 0);
  const auto base = data::base_train_rows(tax.dataset);
  training::BalancedSampler sampler(base, data::split_novel_rows(split), tax.dataset.train().labels, 16);
  ASSERT_EQ(sampler.batches_per_epoch(), (base.size() + 7) / 8);
  std::mt19937_64 rng(5);
  std::multiset<std::size_t> seen;
  for (std::size_t i = 0; i < sampler.batches_per_epoch(); ++i) {
    const auto batch = sampler.next(rng);
    seen.insert(batch.rows.begin(), batch.rows.begin() + static_cast<std::ptrdiff_t>(batch.n_base));
  }
  for (std::size_t r : base) EXPECT_GE(seen.count(r), 1u);
}

TEST(Stage1, SeparableToyReachesHighTrainingAccuracy) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ds = separable_toy(seed);
    std::mt19937_64 rng(seed);
    training::FeatureExtractor ex(4, {1, 16}, rng);
    training::Stage1Config cfg;
    cfg.epochs = 15;
    cfg.batch = 16;
    const auto result = training::train_stage1(ex, ds, cfg, rng);
    const auto rows = data::base_train_rows(ds);
    const Matrix feats = ex.extract(ds.train().features.gather_rows(rows));
    const Matrix scores = kgtn::matmul_nt(feats, result.head);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto row = scores.row(i);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (result.base_categories[best] == ds.train().labels[rows[i]]) ++correct;
    }
    EXPECT_GT(static_cast<double>(correct) / static_cast<double>(rows.size()), 0.95) << "seed " << seed;
  }
}

TEST(Stage1, ConvergesWithAndWithoutGradientPenalty) {
  const auto ds = data::generate_synthetic(tiny_taxonomy(5)).dataset;
  for (double lambda : {0.0, 0.005}) {
    std::mt19937_64 rng(6);
    training::FeatureExtractor ex(ds.dim(), {1, 16}, rng);
    training::Stage1Config cfg;
    cfg.epochs = 12;
    cfg.batch = 80;  // one full-batch step per epoch keeps the curve smooth
    cfg.lr = 0.05;
    cfg.loss_balance_lambda = lambda;
    const auto result = training::train_stage1(ex, ds, cfg, rng);
    ASSERT_EQ(result.epoch_loss.size(), 12u);
    for (std::size_t e = 3; e < result.epoch_loss.size(); ++e)
      EXPECT_LT(result.epoch_loss[e], result.epoch_loss[e - 1]) << "lambda " << lambda << " epoch " << e;
  }
}

TEST(Stage1, ZeroEpochsLeaveExtractorUntouched) {
  const auto ds = data::generate_synthetic(tiny_taxonomy(6)).dataset;
  std::mt19937_64 rng(7);
  training::FeatureExtractor ex(ds.dim(), {2, 8}, rng);
  const auto before = ex.checksum();
  training::Stage1Config cfg;
  cfg.epochs = 0;
  training::train_stage1(ex, ds, cfg, rng);
  EXPECT_EQ(ex.checksum(), before);
}

TEST(Stage2, LeavesExtractorBitwiseUnchanged) {
  const auto ds = data::generate_synthetic(tiny_taxonomy(7)).dataset;
  std::mt19937_64 rng(8);
  const training::FeatureExtractor ex(ds.dim(), {1, 8}, rng);
  const auto before = ex.checksum();
  const auto split = data::make_kshot_split(ds, 1, 0);
  training::train_stage2(ex, ds, split, kgtn::build_uniform_graph(ds.num_categories()), MetricKind::Cosine,
                         quick_stage2(2), rng);
  EXPECT_EQ(ex.checksum(), before);
}

TEST(Stage2, LossDecreasesOverTenEpochs) {
  double first = 0.0, tenth = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto tax = data::generate_synthetic(tiny_taxonomy(10 + seed));
    const auto split = data::make_kshot_split(tax.dataset, 1, 0);
    const auto graph = kgtn::build_semantic_graph(tax.embeddings, 0.4);
    std::mt19937_64 rng(seed);
    const auto r = training::train_stage2_on_features(tax.dataset.train().features, tax.dataset, split, graph,
                                                      MetricKind::InnerProduct, quick_stage2(11), rng);
    first += r.epoch_loss.front();
    tenth += r.epoch_loss.at(10);
  }
  EXPECT_LT(tenth, first);
}

TEST(Stage2, FrozenIdentityWithoutIterationsIsPlainPrototypeLearning) {
  const auto tax = data::generate_synthetic(tiny_taxonomy(20));
  const auto split = data::make_kshot_split(tax.dataset, 1, 0);
  auto cfg = quick_stage2(3);
  cfg.iterations = 0;
  cfg.train_ggnn = false;
  std::mt19937_64 rng(1);
  const auto graph = kgtn::build_semantic_graph(tax.embeddings, 0.4);
  const auto r = training::train_stage2_on_features(tax.dataset.train().features, tax.dataset, split, graph,
                                                    MetricKind::InnerProduct, cfg, rng);
  const auto identity = kgtn::ggnn::GGNNParams::identity(tax.dataset.dim());
  EXPECT_EQ(r.model.ggnn.output, identity.output);
  EXPECT_EQ(r.model.ggnn.w_z, identity.w_z);
  EXPECT_EQ(r.model.refined_weights(graph), r.model.w_init);
  // The graph is irrelevant without propagation rounds.
  std::mt19937_64 rng2(1);
  const auto r2 = training::train_stage2_on_features(tax.dataset.train().features, tax.dataset, split,
                                                     kgtn::build_random_graph(tax.dataset.num_categories(), 5),
                                                     MetricKind::InnerProduct, cfg, rng2);
  EXPECT_EQ(r2.model.w_init, r.model.w_init);
}

TEST(Stage2, DeterministicForFixedSeed) {
  const auto tax = data::generate_synthetic(tiny_taxonomy(21));
  const auto split = data::make_kshot_split(tax.dataset, 2, 3);
  const auto graph = kgtn::build_semantic_graph(tax.embeddings, 0.4);
  auto run = [&] {
    std::mt19937_64 rng(77);
    return training::train_stage2_on_features(tax.dataset.train().features, tax.dataset, split, graph,
                                              MetricKind::Pearson, quick_stage2(2), rng);
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.model.w_init, b.model.w_init);
  EXPECT_EQ(a.model.ggnn.u, b.model.ggnn.u);
  EXPECT_EQ(a.model.scale, b.model.scale);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST(Stage2, PretrainedInitCopiesStageOneHead) {
  const auto tax = data::generate_synthetic(tiny_taxonomy(22));
  const auto split = data::make_kshot_split(tax.dataset, 1, 0);
  training::Stage1Result s1;
  s1.base_categories = tax.dataset.base_categories();
  s1.head = Matrix(s1.base_categories.size(), tax.dataset.dim(), 0.5);
  auto cfg = quick_stage2(0);
  cfg.base_from_stage1 = true;
  std::mt19937_64 rng(2);
  const auto r = training::train_stage2_on_features(tax.dataset.train().features, tax.dataset, split,
                                                    kgtn::build_uniform_graph(tax.dataset.num_categories()),
                                                    MetricKind::InnerProduct, cfg, rng, &s1);
  for (std::size_t c : s1.base_categories)
    for (double v : r.model.w_init.row(c)) EXPECT_EQ(v, 0.5);
  for (std::size_t c : tax.dataset.novel_categories())
    for (double v : r.model.w_init.row(c)) EXPECT_LT(std::abs(v), 0.1);
  std::mt19937_64 rng2(2);
  EXPECT_THROW(training::train_stage2_on_features(tax.dataset.train().features, tax.dataset, split,
                                                  kgtn::build_uniform_graph(tax.dataset.num_categories()),
                                                  MetricKind::InnerProduct, cfg, rng2),
               std::invalid_argument);
}

TEST(Stage2Objective, GradientsPassFiniteDifferenceCheckForEveryMetric) {
  for (MetricKind metric : {MetricKind::InnerProduct, MetricKind::Cosine, MetricKind::Pearson}) {
    std::mt19937_64 rng(31);
    const std::size_t k = 5, d = 8, n = 6;
    const auto model = random_model(k, d, metric, rng);
    const kgtn::CategoryGraph graph{oracle::random_matrix(k, k, rng, 0, 1), kgtn::GraphKind::Random};
    const Matrix feats = oracle::random_matrix(n, d, rng);
    ad::Tape tape;
    const auto obj = training::build_stage2_objective(tape, feats, {0, 1, 2, 3, 4, 2}, graph, model, 0.001);
    EXPECT_EQ(obj.params.contains(kgtn::heads::kScaleName), kgtn::heads::uses_scale(metric));
    EXPECT_LT(ad::finite_difference_check(obj.loss, obj.params, obj.bindings, 1e-5), 1e-4)
        << kgtn::heads::to_string(metric);
  }
}

TEST(Stage2Model, TensorRoundTrip) {
  std::mt19937_64 rng(40);
  const auto m = random_model(4, 3, MetricKind::Cosine, rng);
  kgtn::TensorMap t;
  m.write_to(t);
  const auto back = training::Stage2Model::read_from(t);
  EXPECT_EQ(back.w_init, m.w_init);
  EXPECT_EQ(back.ggnn.w, m.ggnn.w);
  EXPECT_EQ(back.scale, m.scale);
  EXPECT_EQ(back.metric, m.metric);
  EXPECT_EQ(back.iterations, m.iterations);
}

TEST(FeatureExtractor, TensorRoundTripPreservesOutputs) {
  std::mt19937_64 rng(41);
  const training::FeatureExtractor ex(6, {2, 5}, rng);
  kgtn::TensorMap t;
  ex.write_to(t);
  const auto back = training::FeatureExtractor::read_from(t);
  EXPECT_EQ(back.checksum(), ex.checksum());
  const Matrix x = oracle::random_matrix(3, 6, rng);
  EXPECT_EQ(back.extract(x), ex.extract(x));
  EXPECT_THROW(ex.extract(Matrix(2, 5)), kgtn::ShapeError);
}

TEST(StageConfigs, ValidationRejectsBadValues) {
  training::Stage2Config s2;
  s2.batch = 7;
  EXPECT_THROW(s2.validate(), std::invalid_argument);
  s2 = {};
  s2.lr = 0.0;
  EXPECT_THROW(s2.validate(), std::invalid_argument);
  training::Stage1Config s1;
  s1.lr_step_epochs = 0;
  EXPECT_THROW(s1.validate(), std::invalid_argument);
}
