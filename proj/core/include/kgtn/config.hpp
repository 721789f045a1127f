#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kgtn/data.hpp"
#include "kgtn/graph.hpp"
#include "kgtn/heads.hpp"
#include "kgtn/training.hpp"

namespace kgtn {

/// Every tunable of a run. Serialized as flat `key = value` lines; `#` starts a comment.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  data::SyntheticTaxonomyConfig data;
  training::ExtractorConfig extractor;
  training::Stage1Config stage1;
  training::Stage2Config stage2;
  GraphKind graph = GraphKind::Semantic;
  double decay_lambda = 0.4;
  heads::MetricKind metric = heads::MetricKind::InnerProduct;
  std::vector<std::size_t> k_list = {1, 2, 5, 10};
  std::size_t trials = 5;
  std::size_t top = 5;

  /// Throws std::invalid_argument naming the key on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  void validate() const;

  /// All keys with current values, one per line, in a fixed order.
  std::string to_text() const;
  static std::vector<std::string> keys();

  static ExperimentConfig parse(std::string_view text, const std::string& source = "<config>");
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Applies `key = value` lines from `text` on top of this config.
  void merge(std::string_view text, const std::string& source = "<config>");
};

std::vector<std::size_t> parse_size_list(std::string_view text);

}  // namespace kgtn
