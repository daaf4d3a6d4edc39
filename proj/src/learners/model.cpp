#include "leakedweb/learners/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "leakedweb/learners/vectorize.hpp"

namespace leakedweb {

using json = nlohmann::json;

std::string_view to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::random_forest: return "random_forest";
    case ModelFamily::logit_boost: return "logit_boost";
    case ModelFamily::dtw_knn: return "dtw_knn";
    case ModelFamily::bop: return "bop";
    case ModelFamily::shapelet: return "shapelet";
  }
  return "random_forest";
}

ModelFamily model_family_from_string(std::string_view text) {
  if (text == "random_forest" || text == "rf") return ModelFamily::random_forest;
  if (text == "logit_boost" || text == "logitboost") return ModelFamily::logit_boost;
  if (text == "dtw_knn" || text == "dtwknn") return ModelFamily::dtw_knn;
  if (text == "bop") return ModelFamily::bop;
  if (text == "shapelet") return ModelFamily::shapelet;
  throw ConfigError("unknown model family '" + std::string(text) + "'");
}

namespace {

std::size_t common_trace_length(const Dataset& dataset) {
  std::size_t len = 0;
  for (const auto& trace : dataset.traces) len = std::max(len, trace.n_samples());
  return len;
}

void require_multiclass(const Dataset& dataset) {
  std::vector<bool> seen(dataset.class_list.size(), false);
  std::size_t distinct = 0;
  for (const auto& trace : dataset.traces) {
    const std::size_t c = dataset.class_index(trace.label);
    if (!seen[c]) {
      seen[c] = true;
      ++distinct;
    }
  }
  if (distinct < 2) throw InvariantError("training requires at least two classes");
}

std::vector<std::vector<std::vector<double>>> build_channels(const Dataset& dataset,
                                                             std::size_t target_len) {
  std::vector<std::vector<std::vector<double>>> channels;
  channels.reserve(dataset.traces.size());
  for (const auto& trace : dataset.traces) {
    channels.push_back(znormed_channels(trace, dataset.events(), target_len));
  }
  return channels;
}

TrainedModel make_shell(const Dataset& train, ModelFamily family, std::uint64_t seed) {
  TrainedModel model;
  model.family = family;
  model.class_list = train.class_list;
  model.events = train.events();
  model.samples_per_trace = common_trace_length(train);
  model.seed = seed;
  return model;
}

}  // namespace

TrainedModel train_random_forest(const Dataset& train, RandomForestParams params) {
  train.validate();
  require_multiclass(train);
  TrainedModel model = make_shell(train, ModelFamily::random_forest, params.seed);
  auto design = build_design_matrix(train, model.events, model.samples_per_trace);
  model.impl = fit_random_forest(design.rows, design.labels, train.class_list.size(), params);
  return model;
}

TrainedModel train_logit_boost(const Dataset& train, LogitBoostParams params) {
  train.validate();
  require_multiclass(train);
  TrainedModel model = make_shell(train, ModelFamily::logit_boost, params.seed);
  auto design = build_design_matrix(train, model.events, model.samples_per_trace);
  model.impl = fit_logit_boost(design.rows, design.labels, train.class_list.size(), params);
  return model;
}

TrainedModel train_dtw_knn(const Dataset& train, DtwKnnParams params) {
  train.validate();
  TrainedModel model = make_shell(train, ModelFamily::dtw_knn, 0);
  auto channels = build_channels(train, model.samples_per_trace);
  std::vector<std::size_t> labels;
  labels.reserve(train.traces.size());
  for (const auto& trace : train.traces) labels.push_back(train.class_index(trace.label));
  model.impl = fit_dtw_knn(channels, labels, train.class_list.size(), params);
  return model;
}

TrainedModel train_bop(const Dataset& train, BopParams params) {
  train.validate();
  TrainedModel model = make_shell(train, ModelFamily::bop, 0);
  auto channels = build_channels(train, model.samples_per_trace);
  std::vector<std::size_t> labels;
  labels.reserve(train.traces.size());
  for (const auto& trace : train.traces) labels.push_back(train.class_index(trace.label));
  model.impl = fit_bop(channels, labels, train.class_list.size(), params);
  return model;
}

TrainedModel train_shapelet(const Dataset& train, ShapeletParams params) {
  train.validate();
  require_multiclass(train);
  TrainedModel model = make_shell(train, ModelFamily::shapelet, params.seed);
  auto channels = build_channels(train, model.samples_per_trace);
  std::vector<std::size_t> labels;
  labels.reserve(train.traces.size());
  for (const auto& trace : train.traces) labels.push_back(train.class_index(trace.label));
  model.impl = fit_shapelet(channels, labels, train.class_list.size(), params);
  return model;
}

TrainedModel train_family(ModelFamily family, const Dataset& train, std::uint64_t seed) {
  switch (family) {
    case ModelFamily::random_forest: {
      RandomForestParams params;
      params.seed = seed;
      return train_random_forest(train, params);
    }
    case ModelFamily::logit_boost: {
      LogitBoostParams params;
      params.seed = seed;
      return train_logit_boost(train, params);
    }
    case ModelFamily::dtw_knn: return train_dtw_knn(train, {});
    case ModelFamily::bop: return train_bop(train, {});
    case ModelFamily::shapelet: {
      ShapeletParams params;
      params.seed = seed;
      return train_shapelet(train, params);
    }
  }
  throw ConfigError("unknown model family");
}

PredictionResult predict(const TrainedModel& model, const Trace& trace) {
  trace.validate();
  std::vector<double> scores;
  if (model.family == ModelFamily::random_forest) {
    const auto& forest = std::get<RandomForestModel>(model.impl);
    auto x = flatten_trace(trace, model.events, model.samples_per_trace);
    const auto votes = forest.vote(x);
    scores.resize(votes.size());
    const double total = static_cast<double>(forest.trees.size());
    for (std::size_t c = 0; c < votes.size(); ++c) scores[c] = static_cast<double>(votes[c]) / total;
  } else if (model.family == ModelFamily::logit_boost) {
    const auto& boost = std::get<LogitBoostModel>(model.impl);
    auto x = flatten_trace(trace, model.events, model.samples_per_trace);
    scores = boost.probabilities(x);
  } else {
    auto channels = znormed_channels(trace, model.events, model.samples_per_trace);
    if (model.family == ModelFamily::dtw_knn) {
      scores = std::get<DtwKnnModel>(model.impl).scores(channels);
    } else if (model.family == ModelFamily::bop) {
      scores = std::get<BopModel>(model.impl).scores(channels);
    } else {
      scores = std::get<ShapeletModel>(model.impl).scores(channels);
    }
  }

  PredictionResult result;
  result.scores = std::move(scores);
  const auto argmax = static_cast<std::size_t>(
      std::max_element(result.scores.begin(), result.scores.end()) - result.scores.begin());
  result.label = model.class_list.at(argmax);
  return result;
}

// ---- Serialization ----

namespace {

json tree_nodes_to_json(const std::vector<TreeNode>& nodes) {
  json arr = json::array();
  for (const auto& node : nodes) {
    arr.push_back({node.feature, node.threshold, node.left, node.right, node.label, node.value});
  }
  return arr;
}

std::vector<TreeNode> tree_nodes_from_json(const json& arr) {
  std::vector<TreeNode> nodes;
  for (const auto& item : arr) {
    TreeNode node;
    node.feature = item.at(0).get<int>();
    node.threshold = item.at(1).get<double>();
    node.left = item.at(2).get<int>();
    node.right = item.at(3).get<int>();
    node.label = item.at(4).get<int>();
    node.value = item.at(5).get<double>();
    nodes.push_back(node);
  }
  return nodes;
}

json impl_to_json(const TrainedModel& model) {
  json doc;
  if (model.family == ModelFamily::random_forest) {
    const auto& forest = std::get<RandomForestModel>(model.impl);
    json trees = json::array();
    for (const auto& tree : forest.trees) trees.push_back(tree_nodes_to_json(tree.nodes()));
    doc = {{"n_classes", forest.n_classes}, {"trees", trees}};
  } else if (model.family == ModelFamily::logit_boost) {
    const auto& boost = std::get<LogitBoostModel>(model.impl);
    json stages = json::array();
    for (const auto& stage : boost.stages) {
      json trees = json::array();
      for (const auto& tree : stage) trees.push_back(tree_nodes_to_json(tree.nodes()));
      stages.push_back(trees);
    }
    doc = {{"n_classes", boost.n_classes}, {"shrinkage", boost.shrinkage}, {"stages", stages}};
  } else if (model.family == ModelFamily::dtw_knn) {
    const auto& knn = std::get<DtwKnnModel>(model.impl);
    doc = {{"k", knn.k},
           {"window", knn.window ? json(*knn.window) : json(nullptr)},
           {"n_classes", knn.n_classes},
           {"labels", knn.labels},
           {"prototypes", knn.prototypes}};
  } else if (model.family == ModelFamily::bop) {
    const auto& bop = std::get<BopModel>(model.impl);
    json hists = json::array();
    for (const auto& hist : bop.histograms) hists.push_back(hist);
    doc = {{"window", bop.params.window},
           {"paa_segments", bop.params.paa_segments},
           {"alphabet", bop.params.alphabet},
           {"n_classes", bop.n_classes},
           {"labels", bop.labels},
           {"histograms", hists},
           {"class_priors", bop.class_priors}};
  } else {
    const auto& shapelet = std::get<ShapeletModel>(model.impl);
    json nodes = json::array();
    for (const auto& node : shapelet.nodes) {
      nodes.push_back({{"event", node.event},
                       {"values", node.values},
                       {"threshold", node.threshold},
                       {"left", node.left},
                       {"right", node.right},
                       {"counts", node.class_counts}});
    }
    doc = {{"n_classes", shapelet.n_classes}, {"nodes", nodes}};
  }
  return doc;
}

void impl_from_json(TrainedModel& model, const json& doc) {
  if (model.family == ModelFamily::random_forest) {
    RandomForestModel forest;
    forest.n_classes = doc.at("n_classes").get<std::size_t>();
    for (const auto& tree_json : doc.at("trees")) {
      ClassificationTree tree;
      tree.nodes() = tree_nodes_from_json(tree_json);
      forest.trees.push_back(std::move(tree));
    }
    model.impl = std::move(forest);
  } else if (model.family == ModelFamily::logit_boost) {
    LogitBoostModel boost;
    boost.n_classes = doc.at("n_classes").get<std::size_t>();
    boost.shrinkage = doc.at("shrinkage").get<double>();
    for (const auto& stage_json : doc.at("stages")) {
      std::vector<RegressionTree> stage;
      for (const auto& tree_json : stage_json) {
        RegressionTree tree;
        tree.nodes() = tree_nodes_from_json(tree_json);
        stage.push_back(std::move(tree));
      }
      boost.stages.push_back(std::move(stage));
    }
    model.impl = std::move(boost);
  } else if (model.family == ModelFamily::dtw_knn) {
    DtwKnnModel knn;
    knn.k = doc.at("k").get<std::size_t>();
    if (!doc.at("window").is_null()) knn.window = doc.at("window").get<std::size_t>();
    knn.n_classes = doc.at("n_classes").get<std::size_t>();
    knn.labels = doc.at("labels").get<std::vector<std::size_t>>();
    knn.prototypes = doc.at("prototypes").get<std::vector<std::vector<std::vector<double>>>>();
    knn.n_events = knn.prototypes.empty() ? 0 : knn.prototypes.front().size();
    knn.samples_per_trace =
        knn.n_events == 0 ? 0 : knn.prototypes.front().front().size();
    model.impl = std::move(knn);
  } else if (model.family == ModelFamily::bop) {
    BopModel bop;
    bop.params.window = doc.at("window").get<std::size_t>();
    bop.params.paa_segments = doc.at("paa_segments").get<std::size_t>();
    bop.params.alphabet = doc.at("alphabet").get<std::size_t>();
    bop.n_classes = doc.at("n_classes").get<std::size_t>();
    bop.labels = doc.at("labels").get<std::vector<std::size_t>>();
    for (const auto& hist : doc.at("histograms")) {
      bop.histograms.push_back(hist.get<std::map<std::string, std::uint32_t>>());
    }
    bop.class_priors = doc.at("class_priors").get<std::vector<double>>();
    model.impl = std::move(bop);
  } else {
    ShapeletModel shapelet;
    shapelet.n_classes = doc.at("n_classes").get<std::size_t>();
    for (const auto& node_json : doc.at("nodes")) {
      ShapeletModel::Node node;
      node.event = node_json.at("event").get<int>();
      node.values = node_json.at("values").get<std::vector<double>>();
      node.threshold = node_json.at("threshold").get<double>();
      node.left = node_json.at("left").get<int>();
      node.right = node_json.at("right").get<int>();
      node.class_counts = node_json.at("counts").get<std::vector<std::size_t>>();
      shapelet.nodes.push_back(std::move(node));
    }
    shapelet.n_events = model.events.size();
    shapelet.samples_per_trace = model.samples_per_trace;
    model.impl = std::move(shapelet);
  }
}

}  // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  json doc = {{"format_version", TrainedModel::kFormatVersion},
              {"family", std::string(to_string(model.family))},
              {"class_list", model.class_list},
              {"events", model.events},
              {"samples_per_trace", model.samples_per_trace},
              {"training_config", {{"seed", model.seed}}},
              {"model", impl_to_json(model)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file " + path.string());
  out << doc.dump() << '\n';
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad model JSON: ") + e.what());
  }
  const int version = doc.at("format_version").get<int>();
  if (version != TrainedModel::kFormatVersion) {
    throw ParseError("unsupported model format_version " + std::to_string(version));
  }
  TrainedModel model;
  model.family = model_family_from_string(doc.at("family").get<std::string>());
  model.class_list = doc.at("class_list").get<std::vector<std::string>>();
  model.events = doc.at("events").get<std::vector<std::string>>();
  model.samples_per_trace = doc.at("samples_per_trace").get<std::size_t>();
  model.seed = doc.at("training_config").at("seed").get<std::uint64_t>();
  impl_from_json(model, doc.at("model"));
  return model;
}

}  // namespace leakedweb
