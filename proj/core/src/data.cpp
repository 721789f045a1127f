#include "kgtn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "binary_io.hpp"
#include "kgtn/checkpoint.hpp"
#include "kgtn/seeding.hpp"
#include "text_io.hpp"

namespace kgtn::data {

FewShotDataset::FewShotDataset(FeatureSet train, FeatureSet test, std::uint64_t seed)
    : train_(std::move(train)), test_(std::move(test)), seed_(seed) {
  if (train_.categories != test_.categories) {
    throw std::invalid_argument("FewShotDataset: train and test category tables differ");
  }
  if (train_.features.cols() != test_.features.cols() && train_.size() > 0 && test_.size() > 0) {
    throw ShapeError("FewShotDataset: train and test feature dimensions differ");
  }
  const std::size_t k = train_.categories.size();
  train_by_cat_.assign(k, {});
  test_by_cat_.assign(k, {});
  for (std::size_t i = 0; i < train_.labels.size(); ++i) train_by_cat_.at(train_.labels[i]).push_back(i);
  for (std::size_t i = 0; i < test_.labels.size(); ++i) test_by_cat_.at(test_.labels[i]).push_back(i);
}

std::vector<std::size_t> FewShotDataset::base_categories() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < num_categories(); ++c)
    if (!categories()[c].is_novel) out.push_back(c);
  return out;
}

std::vector<std::size_t> FewShotDataset::novel_categories() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < num_categories(); ++c)
    if (categories()[c].is_novel) out.push_back(c);
  return out;
}

std::vector<std::string> FewShotDataset::category_names() const {
  std::vector<std::string> out;
  out.reserve(num_categories());
  for (const Category& c : categories()) out.push_back(std::to_string(c.id));
  return out;
}

FewShotDataset FewShotDataset::with_features(Matrix train_features, Matrix test_features) const {
  if (train_features.rows() != train_.size() || test_features.rows() != test_.size()) {
    throw ShapeError("with_features: row counts do not match the dataset");
  }
  FeatureSet tr = train_;
  FeatureSet te = test_;
  tr.features = std::move(train_features);
  te.features = std::move(test_features);
  return FewShotDataset(std::move(tr), std::move(te), seed_);
}

// ---------------------------------------------------------------------------
// Synthetic taxonomy

void SyntheticTaxonomyConfig::validate() const {
  if (n_super < 1 || leaves_per_super < 1 || dim < 1 || train_per_base < 1 || novel_pool < 1 ||
      test_per_class < 1) {
    throw std::invalid_argument("synthetic config: all counts must be at least 1");
  }
  if (!(within_super_spread > 0 && cluster_spread > 0 && noise_sigma > 0)) {
    throw std::invalid_argument("synthetic config: spreads must be positive");
  }
  if (!(novel_fraction > 0 && novel_fraction < 1)) {
    throw std::invalid_argument("synthetic config: novel_fraction must lie in (0, 1)");
  }
}

SyntheticTaxonomy generate_synthetic(const SyntheticTaxonomyConfig& cfg) {
  cfg.validate();
  // Every superclass keeps at least one base leaf.
  const std::size_t novel_per_super =
      std::min(cfg.leaves_per_super - 1,
               static_cast<std::size_t>(std::lround(cfg.novel_fraction * static_cast<double>(cfg.leaves_per_super))));
  const std::size_t n_novel = novel_per_super * cfg.n_super;
  const std::size_t n_base = cfg.n_super * cfg.leaves_per_super - n_novel;
  if (n_novel < 2 || n_base < 2) {
    throw std::invalid_argument("synthetic config yields " + std::to_string(n_base) + " base and " +
                                std::to_string(n_novel) + " novel categories; need at least 2 of each");
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const std::size_t d = cfg.dim;
  const std::size_t k = cfg.n_super * cfg.leaves_per_super;

  Matrix super_centers(cfg.n_super, d);
  for (double& v : super_centers.data()) v = cfg.within_super_spread * unit(rng);

  Matrix leaf_centers(k, d);
  std::vector<std::size_t> superclass_of(k);
  std::vector<Category> categories(k);
  for (std::size_t s = 0; s < cfg.n_super; ++s) {
    std::vector<std::size_t> order(cfg.leaves_per_super);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t l = 0; l < cfg.leaves_per_super; ++l) {
      const std::size_t c = s * cfg.leaves_per_super + l;
      superclass_of[c] = s;
      categories[c] = {static_cast<std::uint32_t>(c), false};
      for (std::size_t j = 0; j < d; ++j) leaf_centers(c, j) = super_centers(s, j) + cfg.cluster_spread * unit(rng);
    }
    for (std::size_t n = 0; n < novel_per_super; ++n) {
      categories[s * cfg.leaves_per_super + order[n]].is_novel = true;
    }
  }

  auto draw = [&](auto per_category) {
    FeatureSet set;
    set.categories = categories;
    std::size_t total = 0;
    for (std::size_t c = 0; c < k; ++c) total += per_category(c);
    set.features = Matrix(total, d);
    set.labels.reserve(total);
    std::size_t row = 0;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t n = 0; n < per_category(c); ++n, ++row) {
        for (std::size_t j = 0; j < d; ++j) set.features(row, j) = leaf_centers(c, j) + cfg.noise_sigma * unit(rng);
        set.labels.push_back(static_cast<std::uint32_t>(c));
      }
    }
    return set;
  };

  FeatureSet train = draw([&](std::size_t c) { return categories[c].is_novel ? cfg.novel_pool : cfg.train_per_base; });
  FeatureSet test = draw([&](std::size_t) { return cfg.test_per_class; });

  SyntheticTaxonomy out;
  out.dataset = FewShotDataset(std::move(train), std::move(test), cfg.seed);
  out.embeddings = EmbeddingTable(out.dataset.category_names(), leaf_centers);
  for (std::size_t s = 0; s < cfg.n_super; ++s) out.hierarchy.edges.emplace_back("root", "super" + std::to_string(s));
  for (std::size_t c = 0; c < k; ++c) {
    out.hierarchy.edges.emplace_back("super" + std::to_string(superclass_of[c]), std::to_string(c));
  }
  out.superclass_of = std::move(superclass_of);
  return out;
}

// ---------------------------------------------------------------------------
// k-shot splits

FewShotSplit make_kshot_split(const FewShotDataset& dataset, std::size_t k, std::size_t trial) {
  if (trial >= kMaxTrials) {
    throw std::invalid_argument("make_kshot_split: trial index " + std::to_string(trial) + " outside [0, " +
                                std::to_string(kMaxTrials) + ")");
  }
  if (k == 0) throw std::invalid_argument("make_kshot_split: k must be at least 1");
  FewShotSplit split{k, trial, std::vector<std::vector<std::size_t>>(dataset.num_categories())};
  std::mt19937_64 rng(mix_seed(dataset.seed(), 0x6b73686f74ULL, k, trial));
  for (std::size_t c : dataset.novel_categories()) {
    std::vector<std::size_t> pool = dataset.train_indices(c);
    if (k > pool.size()) {
      throw std::invalid_argument("make_kshot_split: k=" + std::to_string(k) + " exceeds the pool of " +
                                  std::to_string(pool.size()) + " samples for category " +
                                  std::to_string(dataset.categories()[c].id));
    }
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    split.novel_rows[c] = std::move(pool);
  }
  return split;
}

std::vector<std::size_t> base_train_rows(const FewShotDataset& dataset) {
  std::vector<std::size_t> rows;
  for (std::size_t c : dataset.base_categories()) {
    const auto& idx = dataset.train_indices(c);
    rows.insert(rows.end(), idx.begin(), idx.end());
  }
  return rows;
}

std::vector<std::size_t> split_novel_rows(const FewShotSplit& split) {
  std::vector<std::size_t> rows;
  for (const auto& picks : split.novel_rows) rows.insert(rows.end(), picks.begin(), picks.end());
  return rows;
}

// ---------------------------------------------------------------------------
// Feature files

void save_features(const std::filesystem::path& path, const FeatureSet& set) {
  if (set.features.rows() != set.labels.size()) {
    throw std::invalid_argument("save_features: feature rows and labels disagree");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write feature file " + path.string());
  out.write(kFeatureMagic, sizeof(kFeatureMagic));
  detail::write_u8(out, kFeatureVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(set.labels.size()));
  detail::write_u32(out, static_cast<std::uint32_t>(set.categories.size()));
  detail::write_u32(out, static_cast<std::uint32_t>(set.features.cols()));
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    detail::write_u32(out, set.labels[i]);
    for (double v : set.features.row(i)) detail::write_f64(out, v);
  }
  detail::write_u32(out, static_cast<std::uint32_t>(set.categories.size()));
  for (const Category& c : set.categories) {
    detail::write_u32(out, c.id);
    detail::write_u8(out, c.is_novel ? 1 : 0);
  }
  if (!out) throw std::runtime_error("failed writing feature file " + path.string());
}

FeatureSet load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature file " + path.string());
  const std::string where = path.string();
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || !std::equal(magic, magic + 4, kFeatureMagic)) {
    throw FormatError(where + ": not a KGFS feature file (bad magic)");
  }
  const std::uint8_t version = detail::read_u8(in, "version");
  if (version != kFeatureVersion) {
    throw FormatError(where + ": unsupported feature file version " + std::to_string(version));
  }
  const std::uint32_t n = detail::read_u32(in, "sample count");
  const std::uint32_t k = detail::read_u32(in, "category count");
  const std::uint32_t d = detail::read_u32(in, "dimension");

  FeatureSet set;
  set.features = Matrix(n, d);
  set.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    set.labels[i] = detail::read_u32(in, "label of sample " + std::to_string(i));
    if (set.labels[i] >= k) {
      throw FormatError(where + ": sample " + std::to_string(i) + " has label " + std::to_string(set.labels[i]) +
                        " outside [0, " + std::to_string(k) + ")");
    }
    for (double& v : set.features.row(i)) v = detail::read_f64(in, "features of sample " + std::to_string(i));
  }
  const std::uint32_t count = detail::read_u32(in, "category table size");
  if (count != k) {
    throw FormatError(where + ": header declares " + std::to_string(k) + " categories, table has " +
                      std::to_string(count));
  }
  set.categories.resize(count);
  for (Category& c : set.categories) {
    c.id = detail::read_u32(in, "category id");
    const std::uint8_t flag = detail::read_u8(in, "category novel flag");
    if (flag > 1) throw FormatError(where + ": invalid novel flag " + std::to_string(flag));
    c.is_novel = flag == 1;
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(where + ": trailing bytes after category table");
  if (n == 0 && k != 0) throw FormatError(where + ": no samples but a non-empty category table");
  return set;
}

void export_features_text(const std::filesystem::path& path, const FeatureSet& set) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "N=" << set.size() << " K=" << set.categories.size() << " d=" << set.features.cols() << '\n';
  for (std::size_t i = 0; i < set.size(); ++i) {
    out << set.labels[i];
    for (double v : set.features.row(i)) out << ' ' << detail::format_double(v);
    out << '\n';
  }
}

void save_dataset(const std::filesystem::path& dir, const FewShotDataset& dataset) {
  std::filesystem::create_directories(dir);
  save_features(dir / "train.kgfs", dataset.train());
  save_features(dir / "test.kgfs", dataset.test());
  std::ofstream meta(dir / "meta.txt");
  meta << "seed=" << dataset.seed() << '\n';
  if (!meta) throw std::runtime_error("cannot write " + (dir / "meta.txt").string());
}

FewShotDataset load_dataset(const std::filesystem::path& dir) {
  std::uint64_t seed = 0;
  std::ifstream meta(dir / "meta.txt");
  if (!meta) throw std::runtime_error("cannot open " + (dir / "meta.txt").string());
  std::string line;
  while (std::getline(meta, line)) {
    const auto t = detail::trim(line);
    if (t.starts_with("seed=")) seed = detail::parse_unsigned(t.substr(5), (dir / "meta.txt").string());
  }
  return FewShotDataset(load_features(dir / "train.kgfs"), load_features(dir / "test.kgfs"), seed);
}

}  // namespace kgtn::data
