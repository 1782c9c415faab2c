#include <fstream>
#include <sstream>

#include "nids/error.hpp"
#include "nids/pipeline.hpp"
#include "toml.hpp"

namespace nids::pipeline {

using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& problem) {
  fail(ErrorKind::Config, path + ": " + problem);
}

std::size_t as_size(const toml::node& n, const std::string& path) {
  auto v = n.value_exact<std::int64_t>();
  if (!v) bad(path, "expected an integer");
  if (*v < 0) bad(path, "must be >= 0");
  return static_cast<std::size_t>(*v);
}

double as_real(const toml::node& n, const std::string& path) {
  if (auto i = n.value_exact<std::int64_t>()) return static_cast<double>(*i);
  auto v = n.value_exact<double>();
  if (!v) bad(path, "expected a number");
  return *v;
}

bool as_bool(const toml::node& n, const std::string& path) {
  auto v = n.value_exact<bool>();
  if (!v) bad(path, "expected true or false");
  return *v;
}

std::string as_string(const toml::node& n, const std::string& path) {
  auto v = n.value_exact<std::string>();
  if (!v) bad(path, "expected a string");
  return *v;
}

std::vector<std::size_t> as_sizes(const toml::node& n, const std::string& path) {
  const auto* arr = n.as_array();
  if (!arr) bad(path, "expected an array of integers");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < arr->size(); ++i) out.push_back(as_size(*arr->get(i), path + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<std::string> as_strings(const toml::node& n, const std::string& path) {
  const auto* arr = n.as_array();
  if (!arr) bad(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < arr->size(); ++i) out.push_back(as_string(*arr->get(i), path + "[" + std::to_string(i) + "]"));
  return out;
}

// Walks one TOML table, dispatching known keys and rejecting the rest.
class Section {
 public:
  Section(const toml::table* table, std::string prefix, std::set<std::string>& explicit_keys)
      : table_(table), prefix_(std::move(prefix)), explicit_(explicit_keys) {}

  template <typename F>
  Section& on(const std::string& key, F&& handle) {
    known_.insert(key);
    if (!table_) return *this;
    if (const toml::node* n = table_->get(key)) {
      const auto path = prefix_.empty() ? key : prefix_ + "." + key;
      explicit_.insert(path);
      handle(*n, path);
    }
    return *this;
  }

  const toml::table* subtable(const std::string& key) {
    known_.insert(key);
    if (!table_) return nullptr;
    const toml::node* n = table_->get(key);
    if (!n) return nullptr;
    if (!n->is_table()) bad(path(key), "expected a table");
    return n->as_table();
  }

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  void finish() const {
    if (!table_) return;
    for (auto&& [k, v] : *table_) {
      const std::string key(k.str());
      if (!known_.contains(key)) bad(path(key), "unknown key");
    }
  }

 private:
  const toml::table* table_;
  std::string prefix_;
  std::set<std::string>& explicit_;
  std::set<std::string> known_;
};

void read_dt(Section& s, learners::DTConfig& c) {
  s.on("max_depth", [&](auto& n, auto& p) {
     const auto v = as_size(n, p);
     if (v == 0) {
       c.max_depth.reset();  // 0 means unbounded
     } else {
       c.max_depth = v;
     }
   }).on("min_samples_split", [&](auto& n, auto& p) { c.min_samples_split = as_size(n, p); });
}

void read_mlp(Section& s, learners::MLPConfig& c) {
  s.on("hidden_layers", [&](auto& n, auto& p) { c.hidden_layers = as_sizes(n, p); })
      .on("epochs", [&](auto& n, auto& p) { c.epochs = as_size(n, p); })
      .on("batch_size", [&](auto& n, auto& p) { c.batch_size = as_size(n, p); })
      .on("learning_rate", [&](auto& n, auto& p) { c.learning_rate = as_real(n, p); })
      .on("momentum", [&](auto& n, auto& p) { c.momentum = as_real(n, p); })
      .on("seed", [&](auto& n, auto& p) { c.seed = as_size(n, p); });
}

void read_boost(Section& s, boost::GBConfig& c) {
  s.on("n_rounds", [&](auto& n, auto& p) { c.n_rounds = as_size(n, p); })
      .on("max_depth", [&](auto& n, auto& p) { c.max_depth = as_size(n, p); })
      .on("eta", [&](auto& n, auto& p) { c.eta = as_real(n, p); })
      .on("lambda", [&](auto& n, auto& p) { c.lambda = as_real(n, p); })
      .on("gamma", [&](auto& n, auto& p) { c.gamma = as_real(n, p); })
      .on("min_child_weight", [&](auto& n, auto& p) { c.min_child_weight = as_real(n, p); })
      .on("max_bins", [&](auto& n, auto& p) { c.max_bins = as_size(n, p); })
      .on("split", [&](auto& n, auto& p) {
        const auto v = as_string(n, p);
        if (v == "exact") {
          c.split_mode = boost::SplitMode::Exact;
        } else if (v == "quantile") {
          c.split_mode = boost::SplitMode::Quantile;
        } else {
          bad(p, "expected \"exact\" or \"quantile\"");
        }
      });
}

template <typename F>
auto wrap(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config && std::string(e.what()).starts_with(path)) throw;
    bad(path, e.what());
  }
}

}  // namespace

PipelineConfig default_config() {
  PipelineConfig cfg;
  cfg.learners = learners::default_learners(cfg.seed);
  return cfg;
}

learners::LearnerSpec PipelineConfig::learner(const std::string& name) const {
  for (const auto& spec : learners) {
    if (spec.name == name) return spec;
  }
  return learners::default_learner(name, seed);
}

void PipelineConfig::apply_seed_defaults() {
  if (!explicit_keys.contains("smote.seed")) smote.seed = seed;
  if (!explicit_keys.contains("eval.seed")) folds.seed = seed;
  for (auto& spec : learners) {
    const auto key = "learners." + spec.name + ".seed";
    if (explicit_keys.contains(key)) continue;
    if (auto* rf = std::get_if<learners::RFConfig>(&spec.config)) rf->seed = seed;
    if (auto* mlp = std::get_if<learners::MLPConfig>(&spec.config)) mlp->seed = seed;
  }
}

void PipelineConfig::validate() const {
  if (dataset.path.empty()) bad("dataset.path", "required");
  if (task == ingest::Task::Multilabel && dataset.kind == ingest::Schema::MalMem) {
    bad("task", "multilabel is not available for the malmem dataset (binary only)");
  }
  if (smote.k_neighbors < 1) bad("smote.k_neighbors", "must be >= 1");
  wrap("boost", [&] { boost.validate(); });
  if (!(select.threshold > 0.0 && select.threshold <= 1.0)) bad("select.threshold", "must be in (0, 1]");
  if (select.step < 1) bad("select.step", "must be >= 1");
  if (select.learners.empty()) bad("select.learners", "must name at least one learner");
  for (const auto& name : select.learners) wrap("select.learners", [&] { return learner(name); });
  if (folds.n_folds < 2) bad("eval.folds", "must be >= 2");
  if (learners.empty()) bad("learners.names", "must name at least one learner");
  std::set<std::string> seen;
  for (const auto& spec : learners) {
    const auto p = "learners." + spec.name;
    if (!seen.insert(spec.name).second) bad("learners.names", "duplicate learner " + spec.name);
    std::visit(
        [&](const auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, learners::DTConfig>) {
            if (c.min_samples_split < 2) bad(p + ".min_samples_split", "must be >= 2");
          } else if constexpr (std::is_same_v<T, learners::RFConfig>) {
            if (c.n_trees < 1) bad(p + ".n_trees", "must be >= 1");
            if (c.tree.min_samples_split < 2) bad(p + ".min_samples_split", "must be >= 2");
          } else if constexpr (std::is_same_v<T, learners::KNNConfig>) {
            if (c.k < 1) bad(p + ".k", "must be >= 1");
          } else if constexpr (std::is_same_v<T, learners::MLPConfig>) {
            for (auto w : c.hidden_layers) {
              if (w < 1) bad(p + ".hidden_layers", "every width must be >= 1");
            }
            if (c.epochs < 1) bad(p + ".epochs", "must be >= 1");
            if (c.batch_size < 1) bad(p + ".batch_size", "must be >= 1");
            if (!(c.learning_rate > 0.0)) bad(p + ".learning_rate", "must be > 0");
            if (c.momentum < 0.0 || c.momentum >= 1.0) bad(p + ".momentum", "must be in [0, 1)");
          } else {
            wrap(p, [&] { c.validate(); });
          }
        },
        spec.config);
  }
  if (scalability.enabled) {
    if (scalability.epochs.empty()) bad("scalability.epochs", "must list at least one epoch count");
    if (scalability.tolerance_pp < 0.0) bad("scalability.tolerance_pp", "must be >= 0");
    if (learner(scalability.learner).kind() != learners::LearnerKind::MLP) {
      bad("scalability.learner", "must name an MLP learner");
    }
  }
}

PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    fail(ErrorKind::Config, std::string(source) + ":" + std::to_string(e.source().begin.line) + ": " +
                                std::string(e.description()));
  }

  PipelineConfig cfg = default_config();
  auto& keys = cfg.explicit_keys;
  Section top(&root, "", keys);
  top.on("seed", [&](auto& n, auto& p) { cfg.seed = as_size(n, p); })
      .on("threads", [&](auto& n, auto& p) { cfg.threads = as_size(n, p); })
      .on("sample_rows", [&](auto& n, auto& p) { cfg.sample_rows = as_size(n, p); })
      .on("output", [&](auto& n, auto& p) { cfg.output = as_string(n, p); })
      .on("task", [&](auto& n, auto& p) { cfg.task = wrap(p, [&] { return ingest::parse_task(as_string(n, p)); }); });

  Section ds(top.subtable("dataset"), "dataset", keys);
  ds.on("kind", [&](auto& n, auto& p) { cfg.dataset.kind = wrap(p, [&] { return ingest::parse_schema(as_string(n, p)); }); })
      .on("path", [&](auto& n, auto& p) {
        std::filesystem::path path = as_string(n, p);
        cfg.dataset.path = path.is_relative() && !base_dir.empty() ? base_dir / path : path;
      });
  ds.finish();

  Section sm(top.subtable("smote"), "smote", keys);
  sm.on("k_neighbors", [&](auto& n, auto& p) { cfg.smote.k_neighbors = as_size(n, p); })
      .on("seed", [&](auto& n, auto& p) { cfg.smote.seed = as_size(n, p); });
  sm.finish();

  Section bo(top.subtable("boost"), "boost", keys);
  read_boost(bo, cfg.boost);
  bo.finish();

  Section se(top.subtable("select"), "select", keys);
  se.on("threshold", [&](auto& n, auto& p) { cfg.select.threshold = as_real(n, p); })
      .on("step", [&](auto& n, auto& p) { cfg.select.step = as_size(n, p); })
      .on("early_exit", [&](auto& n, auto& p) { cfg.select.early_exit = as_bool(n, p); })
      .on("reduced_cv", [&](auto& n, auto& p) { cfg.select.reduced_cv = as_bool(n, p); })
      .on("learners", [&](auto& n, auto& p) { cfg.select.learners = as_strings(n, p); })
      .on("top_k", [&](auto& n, auto& p) { cfg.select.top_k = as_size(n, p); });
  se.finish();

  Section ev(top.subtable("eval"), "eval", keys);
  ev.on("folds", [&](auto& n, auto& p) { cfg.folds.n_folds = as_size(n, p); })
      .on("stratified", [&](auto& n, auto& p) { cfg.folds.stratified = as_bool(n, p); })
      .on("seed", [&](auto& n, auto& p) { cfg.folds.seed = as_size(n, p); })
      .on("knn_sample", [&](auto& n, auto& p) { cfg.knn_sample = as_size(n, p); })
      .on("scope", [&](auto& n, auto& p) { cfg.folds.scope = wrap(p, [&] { return eval::parse_scope(as_string(n, p)); }); });
  ev.finish();

  Section sc(top.subtable("scalability"), "scalability", keys);
  sc.on("enabled", [&](auto& n, auto& p) { cfg.scalability.enabled = as_bool(n, p); })
      .on("epochs", [&](auto& n, auto& p) { cfg.scalability.epochs = as_sizes(n, p); })
      .on("tolerance_pp", [&](auto& n, auto& p) { cfg.scalability.tolerance_pp = as_real(n, p); })
      .on("learner", [&](auto& n, auto& p) { cfg.scalability.learner = as_string(n, p); });
  sc.finish();

  Section le(top.subtable("learners"), "learners", keys);
  std::vector<std::string> names;
  for (const auto& spec : cfg.learners) names.push_back(spec.name);
  le.on("names", [&](auto& n, auto& p) { names = as_strings(n, p); });
  cfg.learners.clear();
  for (const auto& name : names) {
    auto spec = wrap("learners.names", [&] { return learners::default_learner(name, cfg.seed); });
    Section ls(le.subtable(name), "learners." + name, keys);
    std::visit(
        [&](auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, learners::DTConfig>) {
            read_dt(ls, c);
          } else if constexpr (std::is_same_v<T, learners::RFConfig>) {
            ls.on("n_trees", [&](auto& n, auto& p) { c.n_trees = as_size(n, p); })
                .on("features_per_split", [&](auto& n, auto& p) { c.features_per_split = as_size(n, p); })
                .on("bootstrap", [&](auto& n, auto& p) { c.bootstrap = as_bool(n, p); })
                .on("seed", [&](auto& n, auto& p) { c.seed = as_size(n, p); });
            read_dt(ls, c.tree);
          } else if constexpr (std::is_same_v<T, learners::KNNConfig>) {
            ls.on("k", [&](auto& n, auto& p) { c.k = as_size(n, p); });
          } else if constexpr (std::is_same_v<T, learners::MLPConfig>) {
            read_mlp(ls, c);
          } else {
            read_boost(ls, c);
          }
        },
        spec.config);
    ls.finish();
    cfg.learners.push_back(std::move(spec));
  }
  // Tables for learners that are not in `names` may still tune selection learners.
  for (const auto& name : cfg.select.learners) {
    if (std::find(names.begin(), names.end(), name) != names.end()) continue;
    if (le.subtable(name)) bad("learners." + name, "configure selection learners by also listing them in learners.names");
  }
  le.finish();
  top.finish();

  cfg.apply_seed_defaults();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path(), path.string());
}

json config_to_json(const PipelineConfig& cfg) {
  json learner_specs = json::array();
  for (const auto& spec : cfg.learners) learner_specs.push_back(learners::spec_to_json(spec));
  return json{
      {"dataset", {{"kind", ingest::to_string(cfg.dataset.kind)}, {"path", cfg.dataset.path.filename().string()}}},
      {"task", ingest::to_string(cfg.task)},
      {"seed", cfg.seed},
      {"sample_rows", cfg.sample_rows},
      {"smote", {{"k_neighbors", cfg.smote.k_neighbors}, {"seed", cfg.smote.seed}}},
      {"boost", boost::config_to_json(cfg.boost)},
      {"select",
       {{"threshold", cfg.select.threshold},
        {"step", cfg.select.step},
        {"early_exit", cfg.select.early_exit},
        {"reduced_cv", cfg.select.reduced_cv},
        {"learners", cfg.select.learners},
        {"top_k", cfg.select.top_k}}},
      {"eval",
       {{"folds", cfg.folds.n_folds},
        {"stratified", cfg.folds.stratified},
        {"seed", cfg.folds.seed},
        {"scope", eval::to_string(cfg.folds.scope)},
        {"knn_sample", cfg.knn_sample}}},
      {"learners", learner_specs},
      {"scalability",
       {{"enabled", cfg.scalability.enabled},
        {"epochs", cfg.scalability.epochs},
        {"tolerance_pp", cfg.scalability.tolerance_pp},
        {"learner", cfg.scalability.learner}}}};
}

}  // namespace nids::pipeline
