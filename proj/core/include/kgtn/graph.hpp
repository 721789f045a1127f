#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kgtn/matrix.hpp"

namespace kgtn {

enum class GraphKind { Semantic, Hierarchy, Uniform, Random };

std::string_view to_string(GraphKind kind);
GraphKind parse_graph_kind(std::string_view text);

/// K x K category correlation matrix. Entry (i, j) weights the message node i
/// receives from node j.
struct CategoryGraph {
  Matrix adjacency;
  GraphKind provenance = GraphKind::Uniform;

  std::size_t size() const { return adjacency.rows(); }
};

/// Word vectors, one row per category.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::vector<std::string> ids, Matrix vectors);

  const Matrix& vectors() const { return vectors_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  std::size_t index_of(std::string_view id) const;

  /// Rows reordered to follow `ids`; every id must be present.
  EmbeddingTable aligned_to(std::span<const std::string> ids) const;

 private:
  std::vector<std::string> ids_;
  Matrix vectors_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Undirected, unweighted edges of a category taxonomy.
struct HierarchyEdges {
  std::vector<std::pair<std::string, std::string>> edges;
};

CategoryGraph build_semantic_graph(const EmbeddingTable& embeddings, double decay_lambda);

/// Edge-count shortest paths between the given leaves (K x K).
Matrix hierarchy_distances(const HierarchyEdges& hierarchy, std::span<const std::string> leaf_ids);

CategoryGraph build_hierarchy_graph(const HierarchyEdges& hierarchy,
                                    std::span<const std::string> leaf_ids, double decay_lambda);

CategoryGraph build_uniform_graph(std::size_t k);
CategoryGraph build_random_graph(std::size_t k, std::uint64_t seed);

/// Applies a_ij = decay^(d_ij - min_{k != i} d_ik) with a_ii = 1, row by row.
Matrix decay_correlations(const Matrix& distances, double decay_lambda);

EmbeddingTable load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);
HierarchyEdges load_hierarchy(const std::filesystem::path& path);
void save_hierarchy(const std::filesystem::path& path, const HierarchyEdges& hierarchy);
void save_graph(const std::filesystem::path& path, const CategoryGraph& graph);
CategoryGraph load_graph(const std::filesystem::path& path);

}  // namespace kgtn
