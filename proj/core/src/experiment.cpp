#include "kgtn/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "kgtn/seeding.hpp"
#include "text_io.hpp"

namespace kgtn {

CategoryGraph build_graph(GraphKind kind, const data::FewShotDataset& dataset, const EmbeddingTable* embeddings,
                          const HierarchyEdges* hierarchy, double decay_lambda, std::uint64_t seed) {
  const std::vector<std::string> names = dataset.category_names();
  switch (kind) {
    case GraphKind::Semantic:
      if (embeddings == nullptr) throw std::invalid_argument("semantic graph requires an embedding table");
      return build_semantic_graph(embeddings->aligned_to(names), decay_lambda);
    case GraphKind::Hierarchy:
      if (hierarchy == nullptr) throw std::invalid_argument("hierarchy graph requires hierarchy edges");
      return build_hierarchy_graph(*hierarchy, names, decay_lambda);
    case GraphKind::Uniform: return build_uniform_graph(dataset.num_categories());
    case GraphKind::Random: return build_random_graph(dataset.num_categories(), mix_seed(seed, 0x7267726170ULL));
  }
  throw std::logic_error("unhandled graph kind");
}

std::vector<AblationVariant> default_ablation_variants(const std::vector<std::size_t>& k_list) {
  return {
      {"u-graph", GraphKind::Uniform, false, k_list},   {"r-graph", GraphKind::Random, false, k_list},
      {"c-graph", GraphKind::Hierarchy, false, k_list}, {"s-graph", GraphKind::Semantic, false, k_list},
      {"no-graph", std::nullopt, false, k_list},        {"s-graph/pretrained", GraphKind::Semantic, true, k_list},
  };
}

ExperimentConfig variant_config(const ExperimentConfig& base, const AblationVariant& variant) {
  ExperimentConfig cfg = base;
  cfg.stage2.base_from_stage1 = variant.pretrained_init;
  if (variant.graph) {
    cfg.graph = *variant.graph;
  } else {
    cfg.graph = GraphKind::Uniform;  // unused: no propagation rounds
    cfg.stage2.iterations = 0;
    cfg.stage2.train_ggnn = false;
  }
  return cfg;
}

const AblationEntry& AblationReport::at(const std::string& variant, std::size_t k) const {
  for (const AblationEntry& e : entries)
    if (e.variant == variant && e.k == k) return e;
  throw std::out_of_range("ablation report has no entry " + variant + " k=" + std::to_string(k));
}

std::string AblationReport::to_text() const {
  std::string out = "# kgtn ablation: mean top-5 accuracy over " + std::to_string(dataset_seeds.size()) +
                    " dataset seed(s) x " + std::to_string(trials) + " trial(s)\n";
  out += "variant\tk\tnovel\tall\n";
  char buf[128];
  for (const AblationEntry& e : entries) {
    std::snprintf(buf, sizeof(buf), "%s\t%zu\t%.4f\t%.4f\n", e.variant.c_str(), e.k, e.novel_mean, e.all_mean);
    out += buf;
  }
  out += "[records]\n";
  for (const AblationEntry& e : entries) {
    for (std::size_t i = 0; i < e.novel.size(); ++i) {
      out += "seed variant=" + e.variant + " k=" + std::to_string(e.k) + " dataset_seed=" +
             std::to_string(dataset_seeds[i]) + " novel=" + detail::format_double(e.novel[i]) +
             " all=" + detail::format_double(e.all[i]) + "\n";
    }
  }
  out += "[end]\n";
  return out;
}

AblationReport run_ablation(const ExperimentConfig& base, std::span<const std::uint64_t> dataset_seeds,
                            const std::vector<AblationVariant>& variants, std::size_t threads) {
  AblationReport report;
  report.dataset_seeds.assign(dataset_seeds.begin(), dataset_seeds.end());
  report.trials = base.trials;
  for (const AblationVariant& v : variants)
    for (std::size_t k : v.k_list) report.entries.push_back({v.name, k, {}, {}, 0.0, 0.0});

  for (std::uint64_t seed : dataset_seeds) {
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    cfg.data.seed = seed;
    const data::SyntheticTaxonomy taxonomy = data::generate_synthetic(cfg.data);
    const eval::PreparedFeatures prepared = eval::prepare_features(taxonomy.dataset, cfg);

    for (const AblationVariant& v : variants) {
      const ExperimentConfig vcfg = variant_config(cfg, v);
      const CategoryGraph graph = build_graph(vcfg.graph, taxonomy.dataset, &taxonomy.embeddings,
                                              &taxonomy.hierarchy, vcfg.decay_lambda, seed);
      const eval::EvalReport r = eval::run_trials(prepared, graph, vcfg, v.k_list, vcfg.trials, threads);
      for (const eval::ShotSummary& s : r.shots) {
        auto it = std::find_if(report.entries.begin(), report.entries.end(),
                               [&](const AblationEntry& e) { return e.variant == v.name && e.k == s.k; });
        it->novel.push_back(s.novel_mean);
        it->all.push_back(s.all_mean);
      }
    }
  }
  for (AblationEntry& e : report.entries) {
    e.novel_mean = eval::mean_std(e.novel).first;
    e.all_mean = eval::mean_std(e.all).first;
  }
  return report;
}

}  // namespace kgtn
