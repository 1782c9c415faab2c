#include <algorithm>

#include "nids/digest.hpp"
#include "nids/error.hpp"
#include "nids/learners.hpp"
#include "nids/parallel.hpp"

namespace nids::learners {

using json = nlohmann::ordered_json;

const char* to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::DT: return "dt";
    case LearnerKind::RF: return "rf";
    case LearnerKind::KNN: return "knn";
    case LearnerKind::MLP: return "mlp";
    case LearnerKind::XGB: return "xgb";
  }
  return "?";
}

std::vector<LearnerSpec> default_learners(std::uint64_t seed) {
  std::vector<LearnerSpec> out;
  for (const char* name : {"RF", "DT", "KNN", "MLP", "ANN"}) out.push_back(default_learner(name, seed));
  return out;
}

LearnerSpec default_learner(std::string_view name, std::uint64_t seed) {
  if (name == "DT") return {"DT", DTConfig{}};
  if (name == "RF") {
    RFConfig c;
    c.seed = seed;
    return {"RF", c};
  }
  if (name == "KNN") return {"KNN", KNNConfig{}};
  if (name == "MLP" || name == "ANN") {
    MLPConfig c;
    c.seed = seed;
    if (name == "ANN") c.hidden_layers = {64};
    return {std::string(name), c};
  }
  if (name == "XGB") return {"XGB", boost::GBConfig{}};
  fail(ErrorKind::Config, "unknown learner '" + std::string(name) + "' (expected RF, DT, KNN, MLP, ANN or XGB)");
}

LearnerModel::LearnerModel(std::string name, std::size_t n_classes, std::vector<std::size_t> features,
                           ModelVariant model)
    : name_(std::move(name)), n_classes_(n_classes), features_(std::move(features)), model_(std::move(model)) {}

void LearnerModel::check_width(std::size_t width) const {
  if (width != features_.size()) {
    fail(ErrorKind::Shape, name_ + " expects " + std::to_string(features_.size()) + " features, got " +
                               std::to_string(width));
  }
}

int LearnerModel::predict(std::span<const double> row) const {
  check_width(row.size());
  return std::visit(
      [&](const auto& m) -> int {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, boost::BoostedForest>) {
          return m.predict_class(row);
        } else {
          return m.predict(row);
        }
      },
      model_);
}

std::vector<double> LearnerModel::predict_proba(std::span<const double> row) const {
  check_width(row.size());
  return std::visit(
      [&](const auto& m) -> std::vector<double> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, boost::BoostedForest>) {
          return m.predict_proba(row);
        } else {
          return m.proba(row);
        }
      },
      model_);
}

std::vector<int> LearnerModel::predict(const Matrix& x) const {
  check_width(x.cols());
  std::vector<int> out(x.rows());
  if (const auto* mlp = std::get_if<Mlp>(&model_)) {
    const Matrix p = mlp->proba(x);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto row = p.row(r);
      out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
  }
  constexpr std::size_t chunk = 256;
  parallel_for((x.rows() + chunk - 1) / chunk, [&](std::size_t c) {
    const std::size_t stop = std::min(x.rows(), (c + 1) * chunk);
    for (std::size_t r = c * chunk; r < stop; ++r) out[r] = predict(x.row(r));
  });
  return out;
}

Matrix LearnerModel::predict_proba(const Matrix& x) const {
  check_width(x.cols());
  if (const auto* mlp = std::get_if<Mlp>(&model_)) return mlp->proba(x);
  Matrix out(x.rows(), n_classes_);
  constexpr std::size_t chunk = 256;
  parallel_for((x.rows() + chunk - 1) / chunk, [&](std::size_t c) {
    const std::size_t stop = std::min(x.rows(), (c + 1) * chunk);
    for (std::size_t r = c * chunk; r < stop; ++r) {
      const auto p = predict_proba(x.row(r));
      std::copy(p.begin(), p.end(), out.row(r).begin());
    }
  });
  return out;
}

LearnerModel fit(const LearnerSpec& spec, const Matrix& x, std::span<const int> y, std::size_t n_classes,
                 std::vector<std::size_t> features) {
  if (features.empty()) {
    features.resize(x.cols());
    for (std::size_t i = 0; i < x.cols(); ++i) features[i] = i;
  }
  if (features.size() != x.cols()) fail(ErrorKind::Shape, "feature list does not match matrix width");
  ModelVariant model = std::visit(
      [&](const auto& cfg) -> ModelVariant {
        using T = std::decay_t<decltype(cfg)>;
        if constexpr (std::is_same_v<T, DTConfig>) {
          return train_dt(x, y, n_classes, cfg);
        } else if constexpr (std::is_same_v<T, RFConfig>) {
          return train_rf(x, y, n_classes, cfg);
        } else if constexpr (std::is_same_v<T, KNNConfig>) {
          return train_knn(x, y, n_classes, cfg);
        } else if constexpr (std::is_same_v<T, MLPConfig>) {
          return train_mlp(x, y, n_classes, cfg);
        } else {
          boost::GBConfig c = cfg;
          c.n_classes = n_classes;
          c.objective = n_classes == 2 ? boost::Objective::BinaryLogistic : boost::Objective::Softmax;
          return boost::train_boosted(x, y, c);
        }
      },
      spec.config);
  return LearnerModel(spec.name, n_classes, std::move(features), std::move(model));
}

// ---------------------------------------------------------------------------
// serialization

namespace {

json dt_config_json(const DTConfig& c) {
  return json{{"max_depth", c.max_depth ? json(*c.max_depth) : json(nullptr)},
              {"min_samples_split", c.min_samples_split}};
}

json tree_json(const DecisionTree& t) {
  json feature = json::array(), threshold = json::array(), left = json::array(), right = json::array(),
       label = json::array();
  std::vector<double> dist;
  for (const auto& n : t.nodes()) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    label.push_back(n.label);
    dist.insert(dist.end(), n.distribution.begin(), n.distribution.end());
  }
  return json{{"n_features", t.n_features()},
              {"n_classes", t.n_classes()},
              {"feature", feature},
              {"threshold", threshold},
              {"left", left},
              {"right", right},
              {"label", label},
              {"distribution", encode_doubles(dist)}};
}

DecisionTree tree_from_json(const json& j) {
  const auto k = j.at("n_classes").get<std::size_t>();
  const auto dist = decode_doubles(j.at("distribution").get<std::string>());
  const auto& feature = j.at("feature");
  if (dist.size() != feature.size() * k) fail(ErrorKind::Parse, "tree distribution size mismatch");
  std::vector<DTNode> nodes(feature.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto& n = nodes[i];
    n.feature = feature[i].get<int>();
    n.threshold = j.at("threshold")[i].get<double>();
    n.left = j.at("left")[i].get<int>();
    n.right = j.at("right")[i].get<int>();
    n.label = j.at("label")[i].get<int>();
    n.distribution.assign(dist.begin() + static_cast<std::ptrdiff_t>(i * k),
                          dist.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
  }
  return DecisionTree(j.at("n_features").get<std::size_t>(), k, std::move(nodes));
}

}  // namespace

json spec_to_json(const LearnerSpec& spec) {
  json config = std::visit(
      [](const auto& c) -> json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, DTConfig>) {
          return dt_config_json(c);
        } else if constexpr (std::is_same_v<T, RFConfig>) {
          return json{{"n_trees", c.n_trees},
                      {"features_per_split", c.features_per_split},
                      {"bootstrap", c.bootstrap},
                      {"seed", c.seed},
                      {"tree", dt_config_json(c.tree)}};
        } else if constexpr (std::is_same_v<T, KNNConfig>) {
          return json{{"k", c.k}};
        } else if constexpr (std::is_same_v<T, MLPConfig>) {
          return json{{"hidden_layers", c.hidden_layers},
                      {"epochs", c.epochs},
                      {"batch_size", c.batch_size},
                      {"learning_rate", c.learning_rate},
                      {"momentum", c.momentum},
                      {"seed", c.seed}};
        } else {
          return boost::config_to_json(c);
        }
      },
      spec.config);
  return json{{"name", spec.name}, {"kind", to_string(spec.kind())}, {"config", config}};
}

json LearnerModel::to_json() const {
  json payload = std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, DecisionTree>) {
          return tree_json(m);
        } else if constexpr (std::is_same_v<T, RandomForest>) {
          json trees = json::array();
          for (const auto& t : m.trees()) trees.push_back(tree_json(t));
          return json{{"trees", trees}};
        } else if constexpr (std::is_same_v<T, KnnModel>) {
          return json{{"k", m.k()},
                      {"n_classes", m.n_classes()},
                      {"rows", m.x().rows()},
                      {"cols", m.x().cols()},
                      {"x", encode_doubles(m.x().data())},
                      {"y", m.y()}};
        } else if constexpr (std::is_same_v<T, Mlp>) {
          json layers = json::array();
          for (const auto& l : m.layers()) {
            layers.push_back(
                {{"in", l.in}, {"out", l.out}, {"weights", encode_doubles(l.weights)}, {"bias", encode_doubles(l.bias)}});
          }
          return json{{"layers", layers}};
        } else {
          return m.to_json();
        }
      },
      model_);
  return json{{"format", "nids.model"},
              {"version", 1},
              {"name", name_},
              {"kind", to_string(kind())},
              {"n_classes", n_classes_},
              {"features", features_},
              {"model", payload}};
}

LearnerModel LearnerModel::from_json(const json& j) {
  if (j.value("format", "") != "nids.model" || j.value("version", 0) != 1) {
    fail(ErrorKind::Parse, "not a version-1 model document");
  }
  const auto kind = j.at("kind").get<std::string>();
  const auto& p = j.at("model");
  ModelVariant model;
  if (kind == "dt") {
    model = tree_from_json(p);
  } else if (kind == "rf") {
    std::vector<DecisionTree> trees;
    for (const auto& t : p.at("trees")) trees.push_back(tree_from_json(t));
    if (trees.empty()) fail(ErrorKind::Parse, "random forest without trees");
    model = RandomForest(std::move(trees));
  } else if (kind == "knn") {
    Matrix x(p.at("rows").get<std::size_t>(), p.at("cols").get<std::size_t>(),
             decode_doubles(p.at("x").get<std::string>()));
    model = KnnModel(std::move(x), p.at("y").get<std::vector<int>>(), p.at("n_classes").get<std::size_t>(),
                     p.at("k").get<std::size_t>());
  } else if (kind == "mlp") {
    std::vector<DenseLayer> layers;
    for (const auto& l : p.at("layers")) {
      layers.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                        decode_doubles(l.at("weights").get<std::string>()),
                        decode_doubles(l.at("bias").get<std::string>())});
    }
    model = Mlp(std::move(layers));
  } else if (kind == "xgb") {
    model = boost::BoostedForest::from_json(p);
  } else {
    fail(ErrorKind::Parse, "unknown model kind '" + kind + "'");
  }
  return LearnerModel(j.at("name").get<std::string>(), j.at("n_classes").get<std::size_t>(),
                      j.at("features").get<std::vector<std::size_t>>(), std::move(model));
}

}  // namespace nids::learners
