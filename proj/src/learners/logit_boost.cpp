#include "leakedweb/learners/logit_boost.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace leakedweb {

std::vector<double> softmax(std::span<const double> scores) {
  std::vector<double> out(scores.size());
  double max_score = -std::numeric_limits<double>::infinity();
  for (double s : scores) max_score = std::max(max_score, s);
  double total = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    out[j] = std::exp(std::clamp(scores[j] - max_score, -700.0, 0.0));
    total += out[j];
  }
  for (double& v : out) v /= total;
  return out;
}

LogitBoostModel fit_logit_boost(const Matrix<double>& X, const std::vector<std::size_t>& y,
                                std::size_t n_classes, const LogitBoostParams& params) {
  if (n_classes < 2) throw InvariantError("LogitBoost needs at least two classes");
  if (X.rows() != y.size()) throw InvariantError("design matrix and labels disagree on size");
  if (params.n_stages < 1) throw ConfigError("n_stages must be >= 1");

  const std::size_t n = X.rows();
  const std::size_t J = n_classes;
  const double j_factor = static_cast<double>(J - 1) / static_cast<double>(J);

  LogitBoostModel model;
  model.n_classes = J;
  model.shrinkage = params.shrinkage;
  model.stages.resize(params.n_stages);

  Matrix<double> scores(n, J, 0.0);
  Matrix<double> probs(n, J, 1.0 / static_cast<double>(J));
  Matrix<double> stage_fit(n, J, 0.0);

  RegressionTreeParams tree_params;
  tree_params.max_depth = params.base_max_depth;
  tree_params.features_per_split = params.features_per_split;

  std::vector<double> row(n);
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());

  for (std::size_t m = 0; m < params.n_stages; ++m) {
    auto& stage = model.stages[m];
    stage.resize(J);

    // One weighted regression fit per class; working responses and weights
    // follow the binomial log-likelihood with the standard clips.
    auto fit_class = [&](std::size_t j) {
      std::vector<double> z(n), w(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double p = probs(i, j);
        const double target = y[i] == j ? 1.0 : 0.0;
        const double denom = std::max(p * (1.0 - p), params.weight_floor);
        w[i] = denom;
        z[i] = std::clamp((target - p) / denom, -params.response_cap, params.response_cap);
      }
      Rng rng(derive_seed(params.seed, {11, m, j}));
      stage[j].fit(X, z, w, tree_params, rng);
      for (std::size_t i = 0; i < n; ++i) {
        stage_fit(i, j) = stage[j].predict(std::span<const double>(&X(i, 0), X.cols()));
      }
    };

    if (workers <= 1 || J == 1) {
      for (std::size_t j = 0; j < J; ++j) fit_class(j);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      const std::size_t active = std::min(workers, J);
      for (std::size_t t = 0; t < active; ++t) {
        pool.emplace_back([&]() {
          for (std::size_t j = next.fetch_add(1); j < J; j = next.fetch_add(1)) fit_class(j);
        });
      }
      for (auto& th : pool) th.join();
    }

    // J-class recentring, score update, probability refresh.
    for (std::size_t i = 0; i < n; ++i) {
      double mean_fit = 0.0;
      for (std::size_t j = 0; j < J; ++j) mean_fit += stage_fit(i, j);
      mean_fit /= static_cast<double>(J);
      for (std::size_t j = 0; j < J; ++j) {
        scores(i, j) += params.shrinkage * j_factor * (stage_fit(i, j) - mean_fit);
      }
      for (std::size_t j = 0; j < J; ++j) row[j] = scores(i, j);
      auto p = softmax(std::span<const double>(row.data(), J));
      for (std::size_t j = 0; j < J; ++j) probs(i, j) = p[j];
    }

    if (params.stage_observer) params.stage_observer(m, probs);
  }
  return model;
}

std::vector<double> LogitBoostModel::probabilities(std::span<const double> x) const {
  std::vector<double> scores(n_classes, 0.0);
  std::vector<double> stage_fit(n_classes);
  const double j_factor = static_cast<double>(n_classes - 1) / static_cast<double>(n_classes);
  for (const auto& stage : stages) {
    double mean_fit = 0.0;
    for (std::size_t j = 0; j < n_classes; ++j) {
      stage_fit[j] = stage[j].predict(x);
      mean_fit += stage_fit[j];
    }
    mean_fit /= static_cast<double>(n_classes);
    for (std::size_t j = 0; j < n_classes; ++j) {
      scores[j] += shrinkage * j_factor * (stage_fit[j] - mean_fit);
    }
  }
  return softmax(scores);
}

}  // namespace leakedweb
