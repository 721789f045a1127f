#include "kgtn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "kgtn/log.hpp"
#include "text_io.hpp"

namespace kgtn {

std::string_view to_string(GraphKind kind) {
  switch (kind) {
    case GraphKind::Semantic: return "semantic";
    case GraphKind::Hierarchy: return "hierarchy";
    case GraphKind::Uniform: return "uniform";
    case GraphKind::Random: return "random";
  }
  return "unknown";
}

GraphKind parse_graph_kind(std::string_view text) {
  if (text == "semantic") return GraphKind::Semantic;
  if (text == "hierarchy") return GraphKind::Hierarchy;
  if (text == "uniform") return GraphKind::Uniform;
  if (text == "random") return GraphKind::Random;
  throw std::invalid_argument("unknown graph kind '" + std::string(text) +
                              "' (expected semantic|hierarchy|uniform|random)");
}

EmbeddingTable::EmbeddingTable(std::vector<std::string> ids, Matrix vectors)
    : ids_(std::move(ids)), vectors_(std::move(vectors)) {
  if (ids_.size() != vectors_.rows()) {
    throw std::invalid_argument("EmbeddingTable: " + std::to_string(ids_.size()) + " ids for " +
                                std::to_string(vectors_.rows()) + " rows");
  }
  if (!ids_.empty() && vectors_.cols() == 0) {
    throw std::invalid_argument("EmbeddingTable: embedding dimension must be positive");
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw std::invalid_argument("EmbeddingTable: duplicate category id '" + ids_[i] + "'");
    }
  }
}

std::size_t EmbeddingTable::index_of(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("no embedding for category '" + std::string(id) + "'");
  return it->second;
}

EmbeddingTable EmbeddingTable::aligned_to(std::span<const std::string> ids) const {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) rows.push_back(index_of(id));
  return EmbeddingTable(std::vector<std::string>(ids.begin(), ids.end()), vectors_.gather_rows(rows));
}

Matrix decay_correlations(const Matrix& distances, double decay_lambda) {
  const std::size_t k = distances.rows();
  Matrix a(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    double row_min = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) row_min = std::min(row_min, distances(i, j));
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) {
        a(i, j) = 1.0;
      } else {
        a(i, j) = std::min(1.0, std::pow(decay_lambda, distances(i, j) - row_min));
      }
    }
  }
  return a;
}

CategoryGraph build_semantic_graph(const EmbeddingTable& embeddings, double decay_lambda) {
  if (!(decay_lambda > 0.0 && decay_lambda < 1.0)) {
    throw std::invalid_argument("build_semantic_graph: decay_lambda must lie in (0, 1)");
  }
  const std::size_t k = embeddings.size();
  if (k < 2) throw std::invalid_argument("build_semantic_graph: need at least 2 categories");

  const Matrix& v = embeddings.vectors();
  Matrix dist(k, k);
  std::size_t duplicates = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < v.cols(); ++c) {
        const double diff = v(i, c) - v(j, c);
        sq += diff * diff;
      }
      dist(i, j) = dist(j, i) = std::sqrt(sq);
      if (sq == 0.0) ++duplicates;
    }
  }
  if (duplicates > 0) {
    log_warning("build_semantic_graph: " + std::to_string(duplicates) +
                " pair(s) of categories share identical embeddings; their correlations are clamped to 1");
  }
  return {decay_correlations(dist, decay_lambda), GraphKind::Semantic};
}

Matrix hierarchy_distances(const HierarchyEdges& hierarchy, std::span<const std::string> leaf_ids) {
  std::unordered_map<std::string, std::size_t> node_index;
  auto intern = [&](const std::string& id) {
    auto [it, inserted] = node_index.emplace(id, node_index.size());
    return it->second;
  };
  std::vector<std::vector<std::size_t>> neighbors;
  for (const auto& [a, b] : hierarchy.edges) {
    const std::size_t ia = intern(a);
    const std::size_t ib = intern(b);
    neighbors.resize(node_index.size());
    neighbors[ia].push_back(ib);
    neighbors[ib].push_back(ia);
  }

  const std::size_t k = leaf_ids.size();
  std::vector<std::size_t> leaf_nodes(k);
  for (std::size_t i = 0; i < k; ++i) {
    auto it = node_index.find(leaf_ids[i]);
    if (it == node_index.end()) {
      throw std::runtime_error("hierarchy: category '" + leaf_ids[i] + "' does not appear in any edge");
    }
    leaf_nodes[i] = it->second;
  }

  constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();
  Matrix dist(k, k);
  std::vector<std::size_t> depth(neighbors.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::fill(depth.begin(), depth.end(), kUnreached);
    std::deque<std::size_t> queue{leaf_nodes[i]};
    depth[leaf_nodes[i]] = 0;
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      for (std::size_t w : neighbors[u]) {
        if (depth[w] == kUnreached) {
          depth[w] = depth[u] + 1;
          queue.push_back(w);
        }
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (depth[leaf_nodes[j]] == kUnreached) {
        throw std::runtime_error("hierarchy: category '" + leaf_ids[j] +
                                 "' is disconnected from category '" + leaf_ids[i] + "'");
      }
      dist(i, j) = static_cast<double>(depth[leaf_nodes[j]]);
    }
  }
  return dist;
}

CategoryGraph build_hierarchy_graph(const HierarchyEdges& hierarchy,
                                    std::span<const std::string> leaf_ids, double decay_lambda) {
  if (!(decay_lambda > 0.0 && decay_lambda < 1.0)) {
    throw std::invalid_argument("build_hierarchy_graph: decay_lambda must lie in (0, 1)");
  }
  if (leaf_ids.size() < 2) throw std::invalid_argument("build_hierarchy_graph: need at least 2 categories");
  return {decay_correlations(hierarchy_distances(hierarchy, leaf_ids), decay_lambda),
          GraphKind::Hierarchy};
}

CategoryGraph build_uniform_graph(std::size_t k) {
  if (k == 0) throw std::invalid_argument("build_uniform_graph: K must be at least 1");
  return {Matrix(k, k, 1.0 / static_cast<double>(k)), GraphKind::Uniform};
}

CategoryGraph build_random_graph(std::size_t k, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("build_random_graph: K must be at least 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix a(k, k);
  for (double& v : a.data()) v = unit(rng);
  return {std::move(a), GraphKind::Random};
}

// ---------------------------------------------------------------------------
// Text formats

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file " + path.string());
  std::vector<std::string> ids;
  std::vector<double> values;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = detail::split_whitespace(line);
    if (tokens.empty()) continue;
    if (tokens.size() < 2) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": no vector values");
    }
    if (dim == 0) dim = tokens.size() - 1;
    if (tokens.size() - 1 != dim) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(dim) + " values, found " +
                               std::to_string(tokens.size() - 1));
    }
    ids.emplace_back(tokens[0]);
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      values.push_back(detail::parse_double(tokens[t], path.string() + ":" + std::to_string(line_no)));
    }
  }
  const std::size_t k = ids.size();
  return EmbeddingTable(std::move(ids), Matrix(k, dim, std::move(values)));
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.ids()[i];
    for (double v : table.vectors().row(i)) out << ' ' << detail::format_double(v);
    out << '\n';
  }
}

HierarchyEdges load_hierarchy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open hierarchy file " + path.string());
  HierarchyEdges h;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = detail::split_whitespace(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 2) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected '<node-id> <node-id>'");
    }
    h.edges.emplace_back(std::string(tokens[0]), std::string(tokens[1]));
  }
  return h;
}

void save_hierarchy(const std::filesystem::path& path, const HierarchyEdges& hierarchy) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [a, b] : hierarchy.edges) out << a << ' ' << b << '\n';
}

void save_graph(const std::filesystem::path& path, const CategoryGraph& graph) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "K=" << graph.size() << " provenance=" << to_string(graph.provenance) << '\n';
  for (std::size_t i = 0; i < graph.size(); ++i) {
    for (std::size_t j = 0; j < graph.size(); ++j) {
      if (j > 0) out << ' ';
      out << detail::format_double(graph.adjacency(i, j));
    }
    out << '\n';
  }
}

CategoryGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file " + path.string());
  std::string header;
  std::getline(in, header);
  auto tokens = detail::split_whitespace(header);
  if (tokens.size() != 2 || !tokens[0].starts_with("K=") || !tokens[1].starts_with("provenance=")) {
    throw std::runtime_error(path.string() + ": malformed graph header");
  }
  const auto k = static_cast<std::size_t>(
      detail::parse_unsigned(tokens[0].substr(2), path.string() + ": K"));
  CategoryGraph g;
  g.provenance = parse_graph_kind(tokens[1].substr(11));
  g.adjacency = Matrix(k, k);
  std::string line;
  for (std::size_t i = 0; i < k; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": truncated graph");
    auto row = detail::split_whitespace(line);
    if (row.size() != k) throw std::runtime_error(path.string() + ": row " + std::to_string(i) + " has wrong width");
    for (std::size_t j = 0; j < k; ++j) g.adjacency(i, j) = detail::parse_double(row[j], path.string());
  }
  return g;
}

}  // namespace kgtn
