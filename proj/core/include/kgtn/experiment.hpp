#pragma once

// End-to-end runs: graph selection per variant and the graph / initialization
// ablation over several synthetic datasets.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgtn/config.hpp"
#include "kgtn/data.hpp"
#include "kgtn/evaluation.hpp"
#include "kgtn/graph.hpp"

namespace kgtn {

/// Builds the requested graph over the dataset's categories. Semantic graphs
/// need `embeddings`, hierarchy graphs need `hierarchy`.
CategoryGraph build_graph(GraphKind kind, const data::FewShotDataset& dataset, const EmbeddingTable* embeddings,
                          const HierarchyEdges* hierarchy, double decay_lambda, std::uint64_t seed);

struct AblationVariant {
  std::string name;
  std::optional<GraphKind> graph;  // nullopt: no propagation, frozen identity output map
  bool pretrained_init = false;
  std::vector<std::size_t> k_list;
};

/// u-graph, r-graph, c-graph, s-graph, no-graph and s-graph with stage-1 base rows, all at `k_list`.
std::vector<AblationVariant> default_ablation_variants(const std::vector<std::size_t>& k_list);

/// The config a variant runs with: graph kind, T and GGNN training adjusted.
ExperimentConfig variant_config(const ExperimentConfig& base, const AblationVariant& variant);

struct AblationEntry {
  std::string variant;
  std::size_t k = 0;
  std::vector<double> novel;  // per dataset seed, mean over trials
  std::vector<double> all;
  double novel_mean = 0.0;
  double all_mean = 0.0;
};

struct AblationReport {
  std::vector<std::uint64_t> dataset_seeds;
  std::size_t trials = 0;
  std::vector<AblationEntry> entries;

  const AblationEntry& at(const std::string& variant, std::size_t k) const;
  std::string to_text() const;
};

/// For each dataset seed: generate the synthetic taxonomy, run stage 1 once,
/// then every variant's trials on the shared features.
AblationReport run_ablation(const ExperimentConfig& base, std::span<const std::uint64_t> dataset_seeds,
                            const std::vector<AblationVariant>& variants, std::size_t threads = 1);

}  // namespace kgtn
