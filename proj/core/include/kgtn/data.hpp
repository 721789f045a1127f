#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kgtn/graph.hpp"
#include "kgtn/matrix.hpp"

namespace kgtn::data {

struct Category {
  std::uint32_t id = 0;
  bool is_novel = false;

  friend bool operator==(const Category&, const Category&) = default;
};

/// Labeled samples; labels index into `categories`.
struct FeatureSet {
  Matrix features;
  std::vector<std::uint32_t> labels;
  std::vector<Category> categories;

  std::size_t size() const { return labels.size(); }
  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

/// Base and novel categories with their training pools and held-out test samples.
/// For a novel category the training pool is what k-shot splits draw from.
class FewShotDataset {
 public:
  FewShotDataset() = default;
  /// Validates that both sets share one category table and builds per-category indices.
  FewShotDataset(FeatureSet train, FeatureSet test, std::uint64_t seed);

  const FeatureSet& train() const { return train_; }
  const FeatureSet& test() const { return test_; }
  std::uint64_t seed() const { return seed_; }

  const std::vector<Category>& categories() const { return train_.categories; }
  std::size_t num_categories() const { return train_.categories.size(); }
  std::size_t dim() const { return train_.features.cols(); }
  const std::vector<std::size_t>& train_indices(std::size_t category) const { return train_by_cat_.at(category); }
  const std::vector<std::size_t>& test_indices(std::size_t category) const { return test_by_cat_.at(category); }
  std::vector<std::size_t> base_categories() const;
  std::vector<std::size_t> novel_categories() const;
  /// String ids in category-index order, as used by embedding and hierarchy files.
  std::vector<std::string> category_names() const;

  /// Same labels and categories, features replaced (e.g. after feature extraction).
  FewShotDataset with_features(Matrix train_features, Matrix test_features) const;

  friend bool operator==(const FewShotDataset& a, const FewShotDataset& b) {
    return a.train_ == b.train_ && a.test_ == b.test_ && a.seed_ == b.seed_;
  }

 private:
  FeatureSet train_;
  FeatureSet test_;
  std::uint64_t seed_ = 0;
  std::vector<std::vector<std::size_t>> train_by_cat_;
  std::vector<std::vector<std::size_t>> test_by_cat_;
};

/// Spreads are per-coordinate standard deviations.
struct SyntheticTaxonomyConfig {
  std::size_t n_super = 8;
  std::size_t leaves_per_super = 8;
  std::size_t dim = 32;
  double within_super_spread = 1.5;
  double cluster_spread = 0.8;
  double noise_sigma = 2.0;
  std::size_t train_per_base = 100;
  std::size_t novel_pool = 20;
  std::size_t test_per_class = 50;
  double novel_fraction = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticTaxonomy {
  FewShotDataset dataset;
  EmbeddingTable embeddings;
  HierarchyEdges hierarchy;
  std::vector<std::size_t> superclass_of;
};

/// Superclass centers ~ N(0, within_super_spread^2 I); leaf centers ~ N(super, cluster_spread^2 I);
/// samples ~ N(leaf, noise_sigma^2 I). Embeddings are the true leaf centers and the
/// hierarchy is root -> superclass -> leaf.
SyntheticTaxonomy generate_synthetic(const SyntheticTaxonomyConfig& cfg);

struct FewShotSplit {
  std::size_t k = 0;
  std::size_t trial = 0;
  /// Per category index: chosen training rows (empty for base categories).
  std::vector<std::vector<std::size_t>> novel_rows;
};

inline constexpr std::size_t kMaxTrials = 5;

FewShotSplit make_kshot_split(const FewShotDataset& dataset, std::size_t k, std::size_t trial);

/// Training rows for the second stage: every base training sample followed by the split's novel picks.
std::vector<std::size_t> base_train_rows(const FewShotDataset& dataset);
std::vector<std::size_t> split_novel_rows(const FewShotSplit& split);

inline constexpr char kFeatureMagic[4] = {'K', 'G', 'F', 'S'};
inline constexpr std::uint8_t kFeatureVersion = 1;

void save_features(const std::filesystem::path& path, const FeatureSet& set);
FeatureSet load_features(const std::filesystem::path& path);
/// Debug dump: header line, then "<label> <v1> ... <vd>" per sample.
void export_features_text(const std::filesystem::path& path, const FeatureSet& set);

/// Directory layout: train.kgfs, test.kgfs, meta.txt ("seed=<n>").
void save_dataset(const std::filesystem::path& dir, const FewShotDataset& dataset);
FewShotDataset load_dataset(const std::filesystem::path& dir);

}  // namespace kgtn::data
