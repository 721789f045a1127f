// kgtn: the few-shot pipeline as subcommands. Stages exchange files, so each
// one can be re-run on its own from (config, seed).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kgtn/autodiff.hpp"
#include "kgtn/checkpoint.hpp"
#include "kgtn/config.hpp"
#include "kgtn/data.hpp"
#include "kgtn/evaluation.hpp"
#include "kgtn/experiment.hpp"
#include "kgtn/ggnn.hpp"
#include "kgtn/graph.hpp"
#include "kgtn/training.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

constexpr const char* kHeadTensor = "stage1.head";
constexpr const char* kEmbeddingsFile = "embeddings.txt";
constexpr const char* kHierarchyFile = "hierarchy.txt";

/// A bad flag value or config entry, reported with exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::uint64_t seed = 1;
  std::string metric = "inner";
  std::string graph = "semantic";
  std::size_t iterations = 2;
  std::string k = "1,2,5,10";
  std::size_t trials = 5;
  std::string out;
  std::string report;
  std::string data;
  std::string stage1;
  std::string graph_file;
  std::size_t shots = 1;
  std::size_t trial = 0;
  std::string dataset_seeds = "1,2,3,4,5";
};

/// The flags a subcommand accepts, remembered so overrides apply only when given.
struct Flags {
  CLI::Option* config = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* metric = nullptr;
  CLI::Option* graph = nullptr;
  CLI::Option* iterations = nullptr;
  CLI::Option* k = nullptr;
  CLI::Option* trials = nullptr;
};

bool given(const CLI::Option* opt) { return opt != nullptr && opt->count() > 0; }

kgtn::ExperimentConfig resolve_config(const Options& o, const Flags& f) {
  kgtn::ExperimentConfig cfg;
  try {
    if (given(f.config)) cfg = kgtn::ExperimentConfig::load(o.config);
    if (given(f.seed)) cfg.seed = o.seed;
    if (given(f.metric)) cfg.metric = kgtn::heads::parse_metric(o.metric);
    if (given(f.graph)) cfg.graph = kgtn::parse_graph_kind(o.graph);
    if (given(f.iterations)) cfg.stage2.iterations = o.iterations;
    if (given(f.k)) cfg.k_list = kgtn::parse_size_list(o.k);
    if (given(f.trials)) cfg.trials = o.trials;
    cfg.data.seed = cfg.seed;
    cfg.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

struct DataDir {
  kgtn::data::FewShotDataset dataset;
  kgtn::EmbeddingTable embeddings;
  kgtn::HierarchyEdges hierarchy;
};

DataDir load_data_dir(const fs::path& dir) {
  DataDir d;
  d.dataset = kgtn::data::load_dataset(dir);
  if (fs::exists(dir / kEmbeddingsFile)) d.embeddings = kgtn::load_embeddings(dir / kEmbeddingsFile);
  if (fs::exists(dir / kHierarchyFile)) d.hierarchy = kgtn::load_hierarchy(dir / kHierarchyFile);
  return d;
}

kgtn::CategoryGraph graph_for(const kgtn::ExperimentConfig& cfg, const Options& o, const DataDir& d) {
  if (!o.graph_file.empty()) {
    kgtn::CategoryGraph g = kgtn::load_graph(o.graph_file);
    if (g.size() != d.dataset.num_categories()) {
      throw std::runtime_error("graph file has " + std::to_string(g.size()) + " nodes for " +
                               std::to_string(d.dataset.num_categories()) + " categories");
    }
    return g;
  }
  const auto* emb = d.embeddings.size() > 0 ? &d.embeddings : nullptr;
  const auto* hier = d.hierarchy.edges.empty() ? nullptr : &d.hierarchy;
  return kgtn::build_graph(cfg.graph, d.dataset, emb, hier, cfg.decay_lambda, cfg.seed);
}

/// Stage-1 checkpoint: extractor tensors plus the base head.
void save_stage1(const fs::path& path, const kgtn::training::FeatureExtractor& extractor, const kgtn::Matrix& head) {
  kgtn::TensorMap t;
  extractor.write_to(t);
  t[kHeadTensor] = head;
  kgtn::save_checkpoint(path, t);
}

kgtn::eval::PreparedFeatures load_stage1(const fs::path& path, const kgtn::data::FewShotDataset& raw) {
  const kgtn::TensorMap t = kgtn::load_checkpoint(path);
  auto extractor = kgtn::training::FeatureExtractor::read_from(t);
  const auto head = t.find(kHeadTensor);
  if (head == t.end()) throw kgtn::FormatError(path.string() + ": no '" + kHeadTensor + "' tensor");
  kgtn::training::Stage1Result s1;
  s1.head = head->second;
  s1.base_categories = raw.base_categories();
  if (s1.head.rows() != s1.base_categories.size()) {
    throw std::runtime_error("stage-1 head has " + std::to_string(s1.head.rows()) + " rows for " +
                             std::to_string(s1.base_categories.size()) + " base categories");
  }
  return kgtn::eval::extract_features(raw, extractor, std::move(s1));
}

// ---------------------------------------------------------------------------
// Subcommands

int gen_data(const kgtn::ExperimentConfig& cfg, const Options& o) {
  const auto tax = kgtn::data::generate_synthetic(cfg.data);
  const fs::path dir = o.out;
  kgtn::data::save_dataset(dir, tax.dataset);
  kgtn::save_embeddings(dir / kEmbeddingsFile, tax.embeddings);
  kgtn::save_hierarchy(dir / kHierarchyFile, tax.hierarchy);
  std::printf("wrote %zu categories (%zu novel), %zu train and %zu test samples to %s\n",
              tax.dataset.num_categories(), tax.dataset.novel_categories().size(), tax.dataset.train().size(),
              tax.dataset.test().size(), dir.string().c_str());
  return 0;
}

int build_graph_cmd(const kgtn::ExperimentConfig& cfg, const Options& o) {
  const DataDir d = load_data_dir(o.data);
  const auto g = graph_for(cfg, o, d);
  kgtn::save_graph(o.out, g);
  std::printf("wrote %s graph over %zu categories to %s\n", std::string(kgtn::to_string(g.provenance)).c_str(),
              g.size(), o.out.c_str());
  return 0;
}

int train_stage1_cmd(const kgtn::ExperimentConfig& cfg, const Options& o) {
  const DataDir d = load_data_dir(o.data);
  kgtn::training::FeatureExtractor extractor;
  const auto prepared = kgtn::eval::prepare_features(d.dataset, cfg, &extractor);
  save_stage1(o.out, extractor, prepared.stage1.head);
  const auto& losses = prepared.stage1.epoch_loss;
  std::printf("stage 1: %zu epochs, final loss %.6f, checkpoint %s\n", losses.size(),
              losses.empty() ? 0.0 : losses.back(), o.out.c_str());
  return 0;
}

int train_stage2_cmd(const kgtn::ExperimentConfig& cfg, const Options& o) {
  const DataDir d = load_data_dir(o.data);
  const auto prepared = load_stage1(o.stage1, d.dataset);
  const auto graph = graph_for(cfg, o, d);
  const auto split = kgtn::data::make_kshot_split(prepared.dataset, o.shots, o.trial);
  std::mt19937_64 rng(cfg.seed);
  const auto trained = kgtn::training::train_stage2_on_features(prepared.dataset.train().features, prepared.dataset,
                                                                split, graph, cfg.metric, cfg.stage2, rng,
                                                                &prepared.stage1);
  kgtn::TensorMap t;
  trained.model.write_to(t);
  kgtn::save_checkpoint(o.out, t);
  std::printf("stage 2: k=%zu trial=%zu, final loss %.6f, checkpoint %s\n", split.k, split.trial,
              trained.epoch_loss.empty() ? 0.0 : trained.epoch_loss.back(), o.out.c_str());
  return 0;
}

int evaluate_cmd(const kgtn::ExperimentConfig& cfg, const Options& o) {
  const DataDir d = load_data_dir(o.data);
  const auto prepared = load_stage1(o.stage1, d.dataset);
  const auto graph = graph_for(cfg, o, d);
  const auto report = kgtn::eval::run_trials(prepared, graph, cfg, cfg.k_list, cfg.trials, kgtn::eval::threads_from_env());
  if (!o.report.empty()) report.save(o.report);
  std::cout << report.to_text();
  return 0;
}

int grad_check_cmd(const kgtn::ExperimentConfig& cfg, const Flags& f) {
  std::vector<kgtn::heads::MetricKind> metrics = {kgtn::heads::MetricKind::InnerProduct,
                                                  kgtn::heads::MetricKind::Cosine, kgtn::heads::MetricKind::Pearson};
  if (given(f.metric)) metrics = {cfg.metric};
  const std::size_t k = 5, d = 8, n = 10;
  double worst = 0.0;
  for (auto metric : metrics) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    auto random = [&](std::size_t r, std::size_t c) {
      kgtn::Matrix m(r, c);
      for (double& v : m.data()) v = unit(rng);
      return m;
    };
    kgtn::training::Stage2Model model;
    model.ggnn = kgtn::ggnn::GGNNParams::initialized(d, rng);
    model.ggnn.output = model.ggnn.output + 0.3 * random(d, 2 * d);
    model.ggnn.output_bias = 0.3 * random(1, d);
    model.w_init = random(k, d);
    model.metric = metric;
    model.iterations = cfg.stage2.iterations;
    model.scale = cfg.stage2.scale_init;
    const kgtn::EmbeddingTable emb({"0", "1", "2", "3", "4"}, random(k, 6));
    const auto graph = kgtn::build_semantic_graph(emb, cfg.decay_lambda);
    const kgtn::Matrix features = random(n, d);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i % k;
    kgtn::ad::Tape tape;
    const auto obj = kgtn::training::build_stage2_objective(tape, features, labels, graph, model, cfg.stage2.eta);
    const double err = kgtn::ad::finite_difference_check(obj.loss, obj.params, obj.bindings, 1e-5);
    std::printf("%-8s max relative error %.3e\n", std::string(kgtn::heads::to_string(metric)).c_str(), err);
    worst = std::max(worst, err);
  }
  const bool ok = worst < 1e-4;
  std::printf("%s: max relative error %.3e (threshold 1e-4)\n", ok ? "ok" : "FAILED", worst);
  return ok ? 0 : kRuntimeError;
}

int ablate_cmd(const kgtn::ExperimentConfig& cfg, const Options& o) {
  std::vector<std::uint64_t> seeds;
  try {
    for (std::size_t s : kgtn::parse_size_list(o.dataset_seeds)) seeds.push_back(s);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--dataset-seeds: ") + e.what());
  }
  const auto report = kgtn::run_ablation(cfg, seeds, kgtn::default_ablation_variants(cfg.k_list),
                                         kgtn::eval::threads_from_env());
  const std::string text = report.to_text();
  if (!o.report.empty()) {
    std::FILE* f = std::fopen(o.report.c_str(), "wb");
    if (f == nullptr) throw std::runtime_error("cannot write report " + o.report);
    std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
  }
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph transfer for few-shot classification on synthetic taxonomies"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.footer("Environment: KGTN_THREADS caps the number of parallel trials (default 1).");

  Options o;
  struct Command {
    CLI::App* app;
    Flags flags;
  };
  std::vector<Command> commands;

  auto add = [&](const char* name, const char* help, bool config_required) -> Command& {
    Command c{app.add_subcommand(name, help), {}};
    c.flags.config = c.app->add_option("--config", o.config, "Config file of key = value lines")
                         ->check(CLI::ExistingFile);
    if (config_required) c.flags.config->required();
    c.flags.seed = c.app->add_option("--seed", o.seed, "Seed for every random choice (overrides the config)");
    commands.push_back(c);
    return commands.back();
  };
  auto add_metric = [&](Command& c) {
    c.flags.metric = c.app->add_option("--metric", o.metric, "Classifier head")
                         ->check(CLI::IsMember({"inner", "inner_product", "cosine", "pearson"}));
  };
  auto add_graph = [&](Command& c) {
    c.flags.graph = c.app->add_option("--graph", o.graph, "Graph kind built from the data directory")
                        ->check(CLI::IsMember({"semantic", "hierarchy", "uniform", "random"}));
  };
  auto add_iterations = [&](Command& c) {
    c.flags.iterations = c.app->add_option("--iterations", o.iterations, "Propagation rounds T");
  };
  auto add_data = [&](Command& c) {
    c.app->add_option("--data", o.data, "Dataset directory written by gen-data")->required()->check(CLI::ExistingDirectory);
  };
  auto add_stage1 = [&](Command& c) {
    c.app->add_option("--stage1", o.stage1, "Stage-1 checkpoint")->required()->check(CLI::ExistingFile);
  };
  auto add_graph_file = [&](Command& c) {
    c.app->add_option("--graph-file", o.graph_file, "Precomputed graph file (takes precedence over --graph)")
        ->check(CLI::ExistingFile);
  };

  Command& gen = add("gen-data", "Generate a synthetic taxonomy dataset directory", false);
  gen.app->add_option("--out", o.out, "Output directory")->required();

  Command& graph = add("build-graph", "Build a category graph from a dataset directory", true);
  add_data(graph);
  add_graph(graph);
  graph.app->add_option("--out", o.out, "Output graph file")->required();

  Command& s1 = add("train-stage1", "Train the feature extractor and base head", true);
  add_data(s1);
  s1.app->add_option("--out", o.out, "Output checkpoint")->required();

  Command& s2 = add("train-stage2", "Train the graph transfer model for one k-shot split", true);
  add_data(s2);
  add_stage1(s2);
  add_graph(s2);
  add_graph_file(s2);
  add_metric(s2);
  add_iterations(s2);
  s2.app->add_option("--k", o.shots, "Shots per novel category")->check(CLI::PositiveNumber);
  s2.app->add_option("--trial", o.trial, "Split index")->check(CLI::Range(std::size_t{0}, kgtn::data::kMaxTrials - 1));
  s2.app->add_option("--out", o.out, "Output checkpoint")->required();

  Command& ev = add("evaluate", "Run k-shot trials and report top-5 accuracy", true);
  add_data(ev);
  add_stage1(ev);
  add_graph(ev);
  add_graph_file(ev);
  add_metric(ev);
  add_iterations(ev);
  ev.flags.k = ev.app->add_option("--k", o.k, "Comma-separated shot counts");
  ev.flags.trials = ev.app->add_option("--trials", o.trials, "Trials per shot count");
  ev.app->add_option("--report", o.report, "Report output file");

  Command& gc = add("grad-check", "Finite-difference check of the stage-2 gradients", false);
  add_metric(gc);
  add_iterations(gc);

  Command& ab = add("ablate", "Graph and initialization ablation over several datasets", true);
  add_metric(ab);
  add_iterations(ab);
  ab.flags.k = ab.app->add_option("--k", o.k, "Comma-separated shot counts");
  ab.flags.trials = ab.app->add_option("--trials", o.trials, "Trials per shot count and dataset");
  ab.app->add_option("--dataset-seeds", o.dataset_seeds, "Comma-separated dataset seeds");
  ab.app->add_option("--report", o.report, "Report output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    // Usage text of the subcommand that failed, or of the whole tool.
    const CLI::App* failed = &app;
    for (const Command& c : commands)
      if (c.app->parsed()) failed = c.app;
    std::cerr << "kgtn: " << e.what() << "\n\n" << failed->help();
    return kUsageError;
  }

  for (const Command& c : commands) {
    if (!c.app->parsed()) continue;
    const std::string name = c.app->get_name();
    try {
      const kgtn::ExperimentConfig cfg = resolve_config(o, c.flags);
      if (name == "gen-data") return gen_data(cfg, o);
      if (name == "build-graph") return build_graph_cmd(cfg, o);
      if (name == "train-stage1") return train_stage1_cmd(cfg, o);
      if (name == "train-stage2") return train_stage2_cmd(cfg, o);
      if (name == "evaluate") return evaluate_cmd(cfg, o);
      if (name == "grad-check") return grad_check_cmd(cfg, c.flags);
      if (name == "ablate") return ablate_cmd(cfg, o);
    } catch (const UsageError& e) {
      std::cerr << "kgtn " << name << ": " << e.what() << "\n\n" << c.app->help();
      return kUsageError;
    } catch (const std::exception& e) {
      std::cerr << "kgtn " << name << ": " << e.what() << "\n";
      return kRuntimeError;
    }
  }
  return kUsageError;
}
