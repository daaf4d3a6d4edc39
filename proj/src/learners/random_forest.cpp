#include "leakedweb/learners/random_forest.hpp"

#include <atomic>
#include <thread>

namespace leakedweb {

RandomForestModel fit_random_forest(const Matrix<double>& X, const std::vector<std::size_t>& y,
                                    std::size_t n_classes, const RandomForestParams& params) {
  if (n_classes < 2) throw InvariantError("random forest needs at least two classes");
  if (X.rows() != y.size()) throw InvariantError("design matrix and labels disagree on size");
  if (params.n_trees < 1) throw ConfigError("n_trees must be >= 1");

  RandomForestModel model;
  model.n_classes = n_classes;
  model.trees.resize(params.n_trees);

  ClassificationTreeParams tree_params;
  tree_params.max_depth = params.max_depth;
  tree_params.min_leaf = params.min_leaf;
  tree_params.features_per_split = params.features_per_split;

  // Each tree draws from its own (seed, tree) substream, so the forest is
  // identical regardless of how the loop is scheduled.
  auto fit_one = [&](std::size_t t) {
    Rng rng(derive_seed(params.seed, {10, t}));
    std::vector<std::size_t> bootstrap(X.rows());
    for (auto& idx : bootstrap) idx = static_cast<std::size_t>(rng.below(X.rows()));
    model.trees[t].fit(X, y, bootstrap, n_classes, tree_params, rng);
  };

  const std::size_t workers =
      std::min<std::size_t>(params.n_trees, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t t = 0; t < params.n_trees; ++t) fit_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (std::size_t t = next.fetch_add(1); t < params.n_trees; t = next.fetch_add(1)) {
          fit_one(t);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  return model;
}

std::vector<std::size_t> RandomForestModel::vote(std::span<const double> x) const {
  std::vector<std::size_t> votes(n_classes, 0);
  for (const auto& tree : trees) votes[tree.predict(x)]++;
  return votes;
}

}  // namespace leakedweb
