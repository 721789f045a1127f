#include "kgtn/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "text_io.hpp"

namespace kgtn {

namespace {

struct Key {
  const char* name;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

double to_double(std::string_view v, std::string_view key) {
  return detail::parse_double(v, std::string(key));
}

std::size_t to_size(std::string_view v, std::string_view key) {
  return static_cast<std::size_t>(detail::parse_unsigned(v, std::string(key)));
}

bool to_bool(std::string_view v, std::string_view key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument(std::string(key) + ": expected true|false, got '" + std::string(v) + "'");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

#define KGTN_DOUBLE(key, field) \
  Key{key, [](ExperimentConfig& c, std::string_view v) { c.field = to_double(v, key); }, \
      [](const ExperimentConfig& c) { return detail::format_double(c.field); }}
#define KGTN_SIZE(key, field) \
  Key{key, [](ExperimentConfig& c, std::string_view v) { c.field = to_size(v, key); }, \
      [](const ExperimentConfig& c) { return std::to_string(c.field); }}
#define KGTN_BOOL(key, field) \
  Key{key, [](ExperimentConfig& c, std::string_view v) { c.field = to_bool(v, key); }, \
      [](const ExperimentConfig& c) { return from_bool(c.field); }}

const std::vector<Key>& key_table() {
  static const std::vector<Key> table = {
      Key{"seed", [](ExperimentConfig& c, std::string_view v) { c.seed = detail::parse_unsigned(v, "seed"); },
          [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      KGTN_SIZE("data.n_super", data.n_super),
      KGTN_SIZE("data.leaves_per_super", data.leaves_per_super),
      KGTN_SIZE("data.dim", data.dim),
      KGTN_DOUBLE("data.within_super_spread", data.within_super_spread),
      KGTN_DOUBLE("data.cluster_spread", data.cluster_spread),
      KGTN_DOUBLE("data.noise_sigma", data.noise_sigma),
      KGTN_SIZE("data.train_per_base", data.train_per_base),
      KGTN_SIZE("data.novel_pool", data.novel_pool),
      KGTN_SIZE("data.test_per_class", data.test_per_class),
      KGTN_DOUBLE("data.novel_fraction", data.novel_fraction),
      KGTN_SIZE("extractor.blocks", extractor.blocks),
      KGTN_SIZE("extractor.hidden", extractor.hidden),
      KGTN_DOUBLE("stage1.lambda", stage1.loss_balance_lambda),
      KGTN_DOUBLE("stage1.lr", stage1.lr),
      KGTN_DOUBLE("stage1.momentum", stage1.momentum),
      KGTN_DOUBLE("stage1.weight_decay", stage1.weight_decay),
      KGTN_SIZE("stage1.batch", stage1.batch),
      KGTN_SIZE("stage1.lr_step_epochs", stage1.lr_step_epochs),
      KGTN_SIZE("stage1.epochs", stage1.epochs),
      KGTN_DOUBLE("stage2.eta", stage2.eta),
      KGTN_DOUBLE("stage2.lr", stage2.lr),
      KGTN_DOUBLE("stage2.momentum", stage2.momentum),
      KGTN_DOUBLE("stage2.weight_decay", stage2.weight_decay),
      KGTN_SIZE("stage2.batch", stage2.batch),
      KGTN_SIZE("stage2.epochs", stage2.epochs),
      KGTN_SIZE("ggnn.iterations", stage2.iterations),
      KGTN_BOOL("ggnn.train", stage2.train_ggnn),
      KGTN_BOOL("init.base_from_stage1", stage2.base_from_stage1),
      KGTN_DOUBLE("init.stddev", stage2.init_stddev),
      KGTN_DOUBLE("head.scale_init", stage2.scale_init),
      Key{"head.metric", [](ExperimentConfig& c, std::string_view v) { c.metric = heads::parse_metric(v); },
          [](const ExperimentConfig& c) { return std::string(heads::to_string(c.metric)); }},
      Key{"graph.kind", [](ExperimentConfig& c, std::string_view v) { c.graph = parse_graph_kind(v); },
          [](const ExperimentConfig& c) { return std::string(to_string(c.graph)); }},
      KGTN_DOUBLE("graph.decay_lambda", decay_lambda),
      Key{"eval.k", [](ExperimentConfig& c, std::string_view v) { c.k_list = parse_size_list(v); },
          [](const ExperimentConfig& c) { return join(c.k_list); }},
      KGTN_SIZE("eval.trials", trials),
      KGTN_SIZE("eval.top", top),
  };
  return table;
}

#undef KGTN_DOUBLE
#undef KGTN_SIZE
#undef KGTN_BOOL

}  // namespace

std::vector<std::size_t> parse_size_list(std::string_view text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string_view item = detail::trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
    if (item.empty()) throw std::invalid_argument("empty item in list '" + std::string(text) + "'");
    out.push_back(static_cast<std::size_t>(detail::parse_unsigned(item, "list")));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  for (const Key& k : key_table()) {
    if (key == k.name) {
      try {
        k.set(*this, detail::trim(value));
      } catch (const std::exception& e) {
        throw std::invalid_argument("config key '" + std::string(key) + "': " + e.what());
      }
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

void ExperimentConfig::validate() const {
  data.validate();
  stage1.validate();
  stage2.validate();
  if (!(decay_lambda > 0 && decay_lambda < 1)) throw std::invalid_argument("graph.decay_lambda must lie in (0, 1)");
  if (k_list.empty()) throw std::invalid_argument("eval.k must list at least one shot count");
  for (std::size_t k : k_list)
    if (k == 0) throw std::invalid_argument("eval.k entries must be positive");
  if (trials == 0 || trials > data::kMaxTrials) {
    throw std::invalid_argument("eval.trials must lie in [1, " + std::to_string(data::kMaxTrials) + "]");
  }
  if (top == 0) throw std::invalid_argument("eval.top must be positive");
  if (extractor.hidden == 0) throw std::invalid_argument("extractor.hidden must be positive");
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const Key& k : key_table()) out += std::string(k.name) + " = " + k.get(*this) + "\n";
  return out;
}

std::vector<std::string> ExperimentConfig::keys() {
  std::vector<std::string> out;
  for (const Key& k : key_table()) out.emplace_back(k.name);
  return out;
}

void ExperimentConfig::merge(std::string_view text, const std::string& source) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

ExperimentConfig ExperimentConfig::parse(std::string_view text, const std::string& source) {
  ExperimentConfig cfg;
  cfg.merge(text, source);
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

}  // namespace kgtn
