#include "kgtn/evaluation.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "kgtn/seeding.hpp"
#include "text_io.hpp"

namespace kgtn::eval {

CategoryFilter CategoryFilter::novel(const data::FewShotDataset& dataset) {
  CategoryFilter f{std::vector<char>(dataset.num_categories(), 0)};
  for (std::size_t c : dataset.novel_categories()) f.include[c] = 1;
  return f;
}

CategoryFilter CategoryFilter::base(const data::FewShotDataset& dataset) {
  CategoryFilter f{std::vector<char>(dataset.num_categories(), 0)};
  for (std::size_t c : dataset.base_categories()) f.include[c] = 1;
  return f;
}

std::size_t label_rank(std::span<const double> scores, std::size_t label) {
  const double target = scores[label];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > target || (scores[j] == target && j < label)) ++rank;
  }
  return rank;
}

double topk_accuracy(const Matrix& scores, std::span<const std::uint32_t> labels, std::size_t k_top,
                     const CategoryFilter& filter) {
  if (scores.rows() != labels.size()) throw ShapeError("topk_accuracy: score rows and labels disagree");
  if (k_top == 0 || k_top > scores.cols()) {
    throw std::invalid_argument("topk_accuracy: k_top=" + std::to_string(k_top) + " outside [1, " +
                                std::to_string(scores.cols()) + "]");
  }
  if (filter.include.size() != scores.cols()) throw ShapeError("topk_accuracy: filter size differs from K");
  std::size_t counted = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= scores.cols()) throw std::out_of_range("topk_accuracy: label out of range");
    if (!filter.include[labels[i]]) continue;
    ++counted;
    if (label_rank(scores.row(i), labels[i]) < k_top) ++hits;
  }
  if (counted == 0) throw std::invalid_argument("topk_accuracy: the filter selects no samples");
  return static_cast<double>(hits) / static_cast<double>(counted);
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double total = 0.0;
  for (double v : values) total += v;
  const double mean = total / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

const ShotSummary& EvalReport::at_k(std::size_t k) const {
  for (const ShotSummary& s : shots)
    if (s.k == k) return s;
  throw std::out_of_range("report has no entry for k=" + std::to_string(k));
}

std::string EvalReport::to_text() const {
  auto fixed = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
  };
  std::string out = "# kgtn evaluation report\n";
  for (const auto& [key, value] : metadata) out += "# " + key + ": " + value + "\n";
  out += "k\tnovel_top" + std::to_string(top) + "_mean\tnovel_std\tall_top" + std::to_string(top) +
         "_mean\tall_std\ttrials\n";
  for (const ShotSummary& s : shots) {
    out += std::to_string(s.k) + "\t" + fixed(s.novel_mean) + "\t" + fixed(s.novel_std) + "\t" +
           fixed(s.all_mean) + "\t" + fixed(s.all_std) + "\t" + std::to_string(s.novel.size()) + "\n";
  }
  out += "[records]\n";
  for (const auto& [key, value] : metadata) out += "meta " + key + "=" + value + "\n";
  for (const ShotSummary& s : shots) {
    for (std::size_t t = 0; t < s.novel.size(); ++t) {
      out += "trial k=" + std::to_string(s.k) + " index=" + std::to_string(t) +
             " novel=" + detail::format_double(s.novel[t]) + " all=" + detail::format_double(s.all[t]) + "\n";
    }
    out += "summary k=" + std::to_string(s.k) + " novel_mean=" + detail::format_double(s.novel_mean) +
           " novel_std=" + detail::format_double(s.novel_std) + " all_mean=" + detail::format_double(s.all_mean) +
           " all_std=" + detail::format_double(s.all_std) + "\n";
  }
  out += "[end]\n";
  return out;
}

void EvalReport::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report " + path.string());
  out << to_text();
}

EvalReport summarize(std::vector<TrialResult> trials, std::size_t top,
                     std::vector<std::pair<std::string, std::string>> metadata) {
  EvalReport report;
  report.top = top;
  report.metadata = std::move(metadata);
  for (const TrialResult& t : trials) {
    auto it = std::find_if(report.shots.begin(), report.shots.end(), [&](const ShotSummary& s) { return s.k == t.k; });
    if (it == report.shots.end()) {
      report.shots.push_back({});
      it = std::prev(report.shots.end());
      it->k = t.k;
    }
    it->novel.push_back(t.novel);
    it->all.push_back(t.all);
  }
  for (ShotSummary& s : report.shots) {
    std::tie(s.novel_mean, s.novel_std) = mean_std(s.novel);
    std::tie(s.all_mean, s.all_std) = mean_std(s.all);
  }
  return report;
}

PreparedFeatures extract_features(const data::FewShotDataset& raw, const training::FeatureExtractor& extractor,
                                  training::Stage1Result stage1) {
  return {raw.with_features(extractor.extract(raw.train().features), extractor.extract(raw.test().features)),
          std::move(stage1)};
}

PreparedFeatures prepare_features(const data::FewShotDataset& raw, const ExperimentConfig& cfg,
                                  training::FeatureExtractor* extractor_out) {
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x737461676531ULL));
  training::FeatureExtractor extractor(raw.dim(), cfg.extractor, rng);
  training::Stage1Result stage1 = training::train_stage1(extractor, raw, cfg.stage1, rng);
  PreparedFeatures out = extract_features(raw, extractor, std::move(stage1));
  if (extractor_out != nullptr) *extractor_out = std::move(extractor);
  return out;
}

TrialResult run_trial(const PreparedFeatures& prepared, const CategoryGraph& graph, const ExperimentConfig& cfg,
                      std::size_t k, std::size_t trial) {
  const data::FewShotDataset& ds = prepared.dataset;
  const data::FewShotSplit split = data::make_kshot_split(ds, k, trial);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x737461676532ULL, k, trial));
  const training::Stage2Result trained = training::train_stage2_on_features(
      ds.train().features, ds, split, graph, cfg.metric, cfg.stage2, rng, &prepared.stage1);
  const Matrix scores = trained.model.scores(graph, ds.test().features);
  const std::size_t top = std::min(cfg.top, ds.num_categories());
  return {k, trial, topk_accuracy(scores, ds.test().labels, top, CategoryFilter::novel(ds)),
          topk_accuracy(scores, ds.test().labels, top, CategoryFilter::all(ds.num_categories()))};
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

EvalReport run_trials(const PreparedFeatures& prepared, const CategoryGraph& graph, const ExperimentConfig& cfg,
                      const std::vector<std::size_t>& k_list, std::size_t n_trials, std::size_t threads) {
  if (n_trials == 0) throw std::invalid_argument("run_trials: need at least one trial");
  std::vector<TrialResult> results(k_list.size() * n_trials);
  parallel_for(results.size(), threads, [&](std::size_t i) {
    const std::size_t k = k_list[i / n_trials];
    const std::size_t trial = i % n_trials;
    try {
      results[i] = run_trial(prepared, graph, cfg, k, trial);
    } catch (const std::exception& e) {
      throw std::runtime_error("trial k=" + std::to_string(k) + " index=" + std::to_string(trial) +
                               " failed: " + e.what());
    }
  });
  return summarize(std::move(results), cfg.top,
                   {{"graph", std::string(to_string(graph.provenance))},
                    {"metric", std::string(heads::to_string(cfg.metric))},
                    {"iterations", std::to_string(cfg.stage2.iterations)},
                    {"seed", std::to_string(cfg.seed)},
                    {"dataset_seed", std::to_string(prepared.dataset.seed())},
                    {"trials", std::to_string(n_trials)}});
}

std::size_t threads_from_env() {
  const char* env = std::getenv("KGTN_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  try {
    const auto n = static_cast<std::size_t>(detail::parse_unsigned(env, "KGTN_THREADS"));
    return std::max<std::size_t>(1, n);
  } catch (const std::exception&) {
    return 1;
  }
}

}  // namespace kgtn::eval
