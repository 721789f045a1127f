#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "kgtn/checkpoint.hpp"
#include "kgtn/data.hpp"
#include "kgtn/graph.hpp"

namespace data = kgtn::data;
namespace fs = std::filesystem;
using kgtn::Matrix;

namespace {

fs::path scratch(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  fs::path dir = fs::temp_directory_path() / "kgtn_data_test" / info->name();
  fs::create_directories(dir);
  return dir / name;
}

data::SyntheticTaxonomyConfig small(std::uint64_t seed) {
  data::SyntheticTaxonomyConfig cfg;
  cfg.n_super = 3;
  cfg.leaves_per_super = 4;
  cfg.dim = 6;
  cfg.train_per_base = 10;
  cfg.novel_pool = 8;
  cfg.test_per_class = 4;
  cfg.seed = seed;
  return cfg;
}

data::FeatureSet tiny_set() {
  data::FeatureSet s;
  s.features = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  s.labels = {0, 1, 1};
  s.categories = {{7, false}, {9, true}};
  return s;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t nearest_row(const Matrix& centers, std::span<const double> x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    double dist = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) dist += (centers(c, j) - x[j]) * (centers(c, j) - x[j]);
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  return best;
}

}  // namespace

TEST(Synthetic, CountsAndDisjointCategories) {
  const auto tax = data::generate_synthetic(small(1));
  const auto& ds = tax.dataset;
  ASSERT_EQ(ds.num_categories(), 12u);
  EXPECT_EQ(ds.base_categories().size(), 6u);
  EXPECT_EQ(ds.novel_categories().size(), 6u);
  EXPECT_EQ(ds.dim(), 6u);
  for (std::size_t c = 0; c < 12; ++c) {
    EXPECT_EQ(ds.train_indices(c).size(), ds.categories()[c].is_novel ? 8u : 10u);
    EXPECT_EQ(ds.test_indices(c).size(), 4u);
  }
  const auto base_list = ds.base_categories();
  const std::set<std::size_t> base(base_list.begin(), base_list.end());
  for (std::size_t c : ds.novel_categories()) EXPECT_EQ(base.count(c), 0u);
}

TEST(Synthetic, EverySuperclassKeepsABaseLeaf) {
  auto cfg = small(2);
  cfg.leaves_per_super = 2;
  cfg.novel_fraction = 0.9;
  const auto tax = data::generate_synthetic(cfg);
  std::vector<int> base_per_super(cfg.n_super, 0), novel_per_super(cfg.n_super, 0);
  for (std::size_t c = 0; c < tax.dataset.num_categories(); ++c) {
    (tax.dataset.categories()[c].is_novel ? novel_per_super : base_per_super)[tax.superclass_of[c]]++;
  }
  for (std::size_t s = 0; s < cfg.n_super; ++s) {
    EXPECT_GE(base_per_super[s], 1);
    EXPECT_GE(novel_per_super[s], 1);
  }
}

TEST(Synthetic, DeterministicPerSeed) {
  EXPECT_EQ(data::generate_synthetic(small(3)).dataset, data::generate_synthetic(small(3)).dataset);
  EXPECT_FALSE(data::generate_synthetic(small(3)).dataset == data::generate_synthetic(small(4)).dataset);
}

TEST(Synthetic, VanishingNoiseMakesNearestCenterExact) {
  auto cfg = small(5);
  cfg.noise_sigma = 1e-9;
  const auto tax = data::generate_synthetic(cfg);
  const Matrix& centers = tax.embeddings.vectors();
  const auto& test = tax.dataset.test();
  for (std::size_t i = 0; i < test.size(); ++i) EXPECT_EQ(nearest_row(centers, test.features.row(i)), test.labels[i]);
}

TEST(Synthetic, EmbeddingsAndHierarchyDescribeTheTaxonomy) {
  const auto tax = data::generate_synthetic(small(6));
  EXPECT_EQ(tax.embeddings.ids(), tax.dataset.category_names());
  EXPECT_EQ(tax.hierarchy.edges.size(), 3u + 12u);
  const auto graph = kgtn::build_hierarchy_graph(tax.hierarchy, tax.dataset.category_names(), 0.4);
  for (std::size_t a = 0; a < 12; ++a)
    for (std::size_t b = 0; b < 12; ++b) {
      if (a == b) continue;
      EXPECT_NEAR(graph.adjacency(a, b), tax.superclass_of[a] == tax.superclass_of[b] ? 1.0 : std::pow(0.4, 2.0),
                  1e-15);
    }
}

TEST(Synthetic, SiblingsAreSemanticallyCloserThanStrangers) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto cfg = small(seed);
    cfg.within_super_spread = 5.0;
    cfg.cluster_spread = 1.0;
    const auto tax = data::generate_synthetic(cfg);
    const auto graph = kgtn::build_semantic_graph(tax.embeddings, 0.4);
    double sib = 0.0, cross = 0.0;
    int n_sib = 0, n_cross = 0;
    for (std::size_t a = 0; a < 12; ++a)
      for (std::size_t b = 0; b < 12; ++b) {
        if (a == b) continue;
        if (tax.superclass_of[a] == tax.superclass_of[b]) {
          sib += graph.adjacency(a, b);
          ++n_sib;
        } else {
          cross += graph.adjacency(a, b);
          ++n_cross;
        }
      }
    EXPECT_GT(sib / n_sib, cross / n_cross) << "seed " << seed;
  }
}

TEST(Synthetic, RejectsDegenerateConfigs) {
  auto cfg = small(1);
  cfg.noise_sigma = 0.0;
  EXPECT_THROW(data::generate_synthetic(cfg), std::invalid_argument);
  cfg = small(1);
  cfg.novel_fraction = 1.0;
  EXPECT_THROW(data::generate_synthetic(cfg), std::invalid_argument);
  cfg = small(1);
  cfg.n_super = 1;
  cfg.leaves_per_super = 2;  // one base and one novel leaf
  EXPECT_THROW(data::generate_synthetic(cfg), std::invalid_argument);
}

TEST(KShotSplit, PicksKRowsFromEachNovelPool) {
  const auto ds = data::generate_synthetic(small(7)).dataset;
  for (std::size_t k : {1u, 2u, 5u, 8u}) {
    const auto split = data::make_kshot_split(ds, k, 0);
    EXPECT_EQ(split.k, k);
    for (std::size_t c = 0; c < ds.num_categories(); ++c) {
      const auto& picks = split.novel_rows[c];
      if (!ds.categories()[c].is_novel) {
        EXPECT_TRUE(picks.empty());
        continue;
      }
      ASSERT_EQ(picks.size(), k);
      EXPECT_EQ(std::set<std::size_t>(picks.begin(), picks.end()).size(), k);
      for (std::size_t r : picks) EXPECT_EQ(ds.train().labels[r], c);
    }
    EXPECT_EQ(data::split_novel_rows(split).size(), k * 6);
  }
}

TEST(KShotSplit, TwoShotExampleOnTenSamplePool) {
  auto cfg = small(8);
  cfg.novel_pool = 10;
  const auto ds = data::generate_synthetic(cfg).dataset;
  const auto split = data::make_kshot_split(ds, 2, 4);
  for (std::size_t c : ds.novel_categories()) {
    const auto& pool = ds.train_indices(c);
    ASSERT_EQ(split.novel_rows[c].size(), 2u);
    for (std::size_t r : split.novel_rows[c]) EXPECT_NE(std::find(pool.begin(), pool.end(), r), pool.end());
  }
}

TEST(KShotSplit, ReproducibleAndTrialDependent) {
  const auto ds = data::generate_synthetic(small(9)).dataset;
  EXPECT_EQ(data::make_kshot_split(ds, 2, 1).novel_rows, data::make_kshot_split(ds, 2, 1).novel_rows);
  EXPECT_NE(data::make_kshot_split(ds, 2, 1).novel_rows, data::make_kshot_split(ds, 2, 2).novel_rows);
}

TEST(KShotSplit, RejectsBadArguments) {
  const auto ds = data::generate_synthetic(small(10)).dataset;
  EXPECT_THROW(data::make_kshot_split(ds, 0, 0), std::invalid_argument);
  EXPECT_THROW(data::make_kshot_split(ds, 9, 0), std::invalid_argument);
  EXPECT_THROW(data::make_kshot_split(ds, 1, data::kMaxTrials), std::invalid_argument);
}

TEST(TrainRows, BaseRowsCoverEveryBaseSample) {
  const auto ds = data::generate_synthetic(small(11)).dataset;
  const auto rows = data::base_train_rows(ds);
  EXPECT_EQ(rows.size(), 60u);
  for (std::size_t r : rows) EXPECT_FALSE(ds.categories()[ds.train().labels[r]].is_novel);
}

TEST(FeatureFile, RoundTripIsExact) {
  const auto p = scratch("set.kgfs");
  const auto set = data::generate_synthetic(small(12)).dataset.train();
  data::save_features(p, set);
  EXPECT_EQ(data::load_features(p), set);
}

TEST(FeatureFile, HeaderLayout) {
  const auto p = scratch("tiny.kgfs");
  data::save_features(p, tiny_set());
  const auto bytes = read_bytes(p);
  ASSERT_GE(bytes.size(), 17u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "KGFS");
  EXPECT_EQ(bytes[4], data::kFeatureVersion);
  EXPECT_EQ(bytes[5], 3);  // N, little-endian
  EXPECT_EQ(bytes[9], 2);  // K
  EXPECT_EQ(bytes[13], 2);  // d
  // header + N * (label + d doubles) + K + K * (id + flag)
  EXPECT_EQ(bytes.size(), 17u + 3 * (4 + 16) + 4 + 2 * 5);
}

TEST(FeatureFile, EmptySetRoundTrips) {
  const auto p = scratch("empty.kgfs");
  data::FeatureSet empty;
  empty.features = Matrix(0, 4);
  data::save_features(p, empty);
  const auto back = data::load_features(p);
  EXPECT_EQ(back.size(), 0u);
  EXPECT_TRUE(back.categories.empty());
}

TEST(FeatureFile, CorruptionIsDetected) {
  const auto good = scratch("good.kgfs");
  data::save_features(good, tiny_set());
  const auto bytes = read_bytes(good);
  const auto bad = scratch("bad.kgfs");

  auto expect_format_error = [&](std::vector<unsigned char> b) {
    write_bytes(bad, b);
    EXPECT_THROW(data::load_features(bad), kgtn::FormatError);
  };
  auto b = bytes;
  b[0] = 'X';
  expect_format_error(b);
  b = bytes;
  b[4] = 9;
  expect_format_error(b);
  b = bytes;
  b[17] = 5;  // first label outside the category table
  expect_format_error(b);
  b = bytes;
  b.back() = 2;  // novel flag
  expect_format_error(b);
  b = bytes;
  b.push_back(0);
  expect_format_error(b);
  expect_format_error({bytes.begin(), bytes.begin() + 30});
  // Zero samples with a non-empty table.
  expect_format_error({'K', 'G', 'F', 'S', 1, 0, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 7, 0, 0, 0, 0});
}

TEST(FeatureFile, MismatchedLabelsRejectedOnSave) {
  auto set = tiny_set();
  set.labels.pop_back();
  EXPECT_THROW(data::save_features(scratch("x.kgfs"), set), std::invalid_argument);
}

TEST(FeatureFile, TextExportHasOneLinePerSample) {
  const auto p = scratch("tiny.txt");
  data::export_features_text(p, tiny_set());
  std::ifstream in(p);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[1].substr(0, 2), "0 ");
}

TEST(DatasetDirectory, RoundTrip) {
  const auto dir = scratch("ds");
  const auto ds = data::generate_synthetic(small(13)).dataset;
  data::save_dataset(dir, ds);
  EXPECT_TRUE(fs::exists(dir / "train.kgfs"));
  EXPECT_TRUE(fs::exists(dir / "test.kgfs"));
  const auto back = data::load_dataset(dir);
  EXPECT_EQ(back, ds);
  EXPECT_EQ(back.seed(), 13u);
}

TEST(Dataset, MismatchedTablesRejected) {
  auto train = tiny_set();
  auto test = tiny_set();
  test.categories[1].is_novel = false;
  EXPECT_THROW(data::FewShotDataset(train, test, 1), std::invalid_argument);
  test = tiny_set();
  test.features = Matrix(3, 3);
  EXPECT_THROW(data::FewShotDataset(train, test, 1), kgtn::ShapeError);
}

TEST(Dataset, WithFeaturesKeepsLabels) {
  const auto ds = data::generate_synthetic(small(14)).dataset;
  const auto swapped = ds.with_features(Matrix(ds.train().size(), 2, 1.0), Matrix(ds.test().size(), 2, 2.0));
  EXPECT_EQ(swapped.dim(), 2u);
  EXPECT_EQ(swapped.train().labels, ds.train().labels);
  EXPECT_EQ(swapped.categories(), ds.categories());
  EXPECT_THROW(ds.with_features(Matrix(1, 2), Matrix(ds.test().size(), 2)), kgtn::ShapeError);
}
