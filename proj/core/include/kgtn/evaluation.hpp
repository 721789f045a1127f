#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kgtn/config.hpp"
#include "kgtn/data.hpp"
#include "kgtn/graph.hpp"
#include "kgtn/matrix.hpp"
#include "kgtn/training.hpp"

namespace kgtn::eval {

/// Which test samples count, selected by their true category.
struct CategoryFilter {
  std::vector<char> include;

  static CategoryFilter all(std::size_t k) { return {std::vector<char>(k, 1)}; }
  static CategoryFilter novel(const data::FewShotDataset& dataset);
  static CategoryFilter base(const data::FewShotDataset& dataset);
};

/// Rank of `label` in a score row: categories scoring strictly higher, plus
/// equal-scoring categories with a lower index.
std::size_t label_rank(std::span<const double> scores, std::size_t label);

/// Fraction of filtered samples whose label ranks within the top `k_top`.
double topk_accuracy(const Matrix& scores, std::span<const std::uint32_t> labels, std::size_t k_top,
                     const CategoryFilter& filter);

struct TrialResult {
  std::size_t k = 0;
  std::size_t trial = 0;
  double novel = 0.0;
  double all = 0.0;
};

struct ShotSummary {
  std::size_t k = 0;
  std::vector<double> novel;
  std::vector<double> all;
  double novel_mean = 0.0;
  double novel_std = 0.0;
  double all_mean = 0.0;
  double all_std = 0.0;
};

/// Arithmetic mean and population standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

struct EvalReport {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::size_t top = 5;
  std::vector<ShotSummary> shots;

  const ShotSummary& at_k(std::size_t k) const;
  std::string to_text() const;
  void save(const std::filesystem::path& path) const;
};

EvalReport summarize(std::vector<TrialResult> trials, std::size_t top,
                     std::vector<std::pair<std::string, std::string>> metadata);

/// Stage-1 outputs shared by every trial: extracted features and the base head.
struct PreparedFeatures {
  data::FewShotDataset dataset;  // features already passed through the frozen extractor
  training::Stage1Result stage1;
};

/// Runs stage 1 on the raw dataset and extracts features for train and test.
PreparedFeatures prepare_features(const data::FewShotDataset& raw, const ExperimentConfig& cfg,
                                  training::FeatureExtractor* extractor_out = nullptr);
PreparedFeatures extract_features(const data::FewShotDataset& raw, const training::FeatureExtractor& extractor,
                                  training::Stage1Result stage1);

/// One trial: fresh k-shot split, fresh stage-2 training, both accuracies.
TrialResult run_trial(const PreparedFeatures& prepared, const CategoryGraph& graph, const ExperimentConfig& cfg,
                      std::size_t k, std::size_t trial);

/// Every (k, trial) pair, parallelized over `threads` workers; output order is
/// deterministic regardless of thread count.
EvalReport run_trials(const PreparedFeatures& prepared, const CategoryGraph& graph, const ExperimentConfig& cfg,
                      const std::vector<std::size_t>& k_list, std::size_t n_trials, std::size_t threads = 1);

/// Parallelism cap from KGTN_THREADS (default 1).
std::size_t threads_from_env();

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers. The first exception is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace kgtn::eval
