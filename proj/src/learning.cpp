#include "fedirr/learning.hpp"

#include "fedirr/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedirr::fl {

namespace {

void check_dims(const ModelParams& params, std::span<const double> features) {
  if (params.weights.size() != features.size() + 1) {
    throw Error(Errc::dimension_mismatch,
                "model expects " + std::to_string(params.feature_dim()) +
                    " features, got " + std::to_string(features.size()));
  }
}

void check_dataset(const ModelParams& params, std::span<const TrainingExample> data) {
  if (data.empty()) throw Error(Errc::empty_dataset, "dataset is empty");
  for (const auto& ex : data) check_dims(params, ex.features);
}

double residual(const ModelParams& params, const TrainingExample& ex) {
  return predict(params, ex.features) - ex.target;
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

} // namespace

ModelParams ModelParams::zeros(std::size_t feature_dim,
                               std::vector<std::string> feature_names) {
  ModelParams p;
  p.weights.assign(feature_dim + 1, 0.0);
  p.feature_names = std::move(feature_names);
  return p;
}

void TrainConfig::validate() const {
  auto fail = [](const char* field, const char* rule) {
    throw Error(Errc::config_error, std::string("train.") + field + ": " + rule);
  };
  if (local_epochs < 1) fail("local_epochs", "must be >= 1");
  if (!(std::isfinite(learning_rate) && learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (!(std::isfinite(l2) && l2 >= 0.0)) fail("l2", "must be >= 0");
  if (!(std::isfinite(convergence_tol) && convergence_tol > 0.0))
    fail("convergence_tol", "must be > 0");
  if (max_rounds < 1) fail("max_rounds", "must be >= 1");
}

double predict(const ModelParams& params, std::span<const double> features) {
  check_dims(params, features);
  double acc = params.weights.back();
  for (std::size_t j = 0; j < features.size(); ++j) acc += params.weights[j] * features[j];
  return acc;
}

double mse_loss(const ModelParams& params, std::span<const TrainingExample> data, double l2) {
  check_dataset(params, data);
  double sse = 0.0;
  for (const auto& ex : data) {
    const double r = residual(params, ex);
    sse += r * r;
  }
  double penalty = 0.0;
  for (std::size_t j = 0; j < params.feature_dim(); ++j)
    penalty += params.weights[j] * params.weights[j];
  return sse / static_cast<double>(data.size()) + l2 * penalty;
}

std::vector<double> gradient(const ModelParams& params,
                             std::span<const TrainingExample> data, double l2) {
  check_dataset(params, data);
  const std::size_t d = params.feature_dim();
  std::vector<double> grad(d + 1, 0.0);
  for (const auto& ex : data) {
    const double r = residual(params, ex);
    for (std::size_t j = 0; j < d; ++j) grad[j] += r * ex.features[j];
    grad[d] += r;
  }
  const double scale = 2.0 / static_cast<double>(data.size());
  for (std::size_t j = 0; j <= d; ++j) grad[j] *= scale;
  for (std::size_t j = 0; j < d; ++j) grad[j] += 2.0 * l2 * params.weights[j];
  return grad;
}

ClientUpdate local_train(const ModelParams& start, std::span<const TrainingExample> data,
                         const TrainConfig& cfg, std::string client_id) {
  // A zero rate is accepted here (a frozen run); configs still demand > 0.
  if (cfg.local_epochs < 1 || !(std::isfinite(cfg.learning_rate) && cfg.learning_rate >= 0.0) ||
      !(std::isfinite(cfg.l2) && cfg.l2 >= 0.0)) {
    throw Error(Errc::invalid_input, "local_train: need local_epochs >= 1, learning_rate >= 0, l2 >= 0");
  }
  check_dataset(start, data);
  ModelParams w = start;
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    const auto grad = gradient(w, data, cfg.l2);
    for (std::size_t j = 0; j < grad.size(); ++j) w.weights[j] -= cfg.learning_rate * grad[j];
    if (!all_finite(w.weights)) {
      throw Error(Errc::diverged, "local_train diverged at epoch " + std::to_string(epoch) +
                                      "; learning_rate too high?");
    }
  }
  ClientUpdate update;
  update.client_id = std::move(client_id);
  update.round = start.round;
  update.weights = std::move(w.weights);
  update.sample_count = data.size();
  update.local_loss = mse_loss(ModelParams{update.weights, start.round, {}}, data, cfg.l2);
  return update;
}

ModelParams aggregate(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw Error(Errc::empty_update_set, "no updates to aggregate");
  const auto round = updates.front().round;
  const auto dim = updates.front().weights.size();

  std::vector<const ClientUpdate*> order;
  order.reserve(updates.size());
  for (const auto& u : updates) {
    if (u.round != round) {
      throw Error(Errc::round_mismatch, "update from '" + u.client_id + "' answers round " +
                                            std::to_string(u.round) + ", expected " +
                                            std::to_string(round));
    }
    if (u.weights.size() != dim) {
      throw Error(Errc::dimension_mismatch,
                  "update from '" + u.client_id + "' has dimension " +
                      std::to_string(u.weights.size()) + ", expected " + std::to_string(dim));
    }
    if (u.sample_count < 1) {
      throw Error(Errc::invalid_input, "update from '" + u.client_id + "' has sample_count 0");
    }
    order.push_back(&u);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const ClientUpdate* a, const ClientUpdate* b) {
                     return a->client_id < b->client_id;
                   });

  // Running weighted mean: each fold moves the mean toward the next client by
  // its share of the samples seen so far. Identical inputs reproduce exactly.
  ModelParams out;
  out.round = round + 1;
  out.weights.assign(dim, 0.0);
  double seen = 0.0;
  for (const ClientUpdate* u : order) {
    seen += static_cast<double>(u->sample_count);
    const double share = static_cast<double>(u->sample_count) / seen;
    for (std::size_t j = 0; j < dim; ++j)
      out.weights[j] += share * (u->weights[j] - out.weights[j]);
  }
  return out;
}

bool has_converged(const ModelParams& prev, const ModelParams& next, double tol) {
  if (prev.weights.size() != next.weights.size()) {
    throw Error(Errc::dimension_mismatch, "has_converged: parameter dimensions differ");
  }
  double max_delta = 0.0;
  for (std::size_t j = 0; j < prev.weights.size(); ++j)
    max_delta = std::max(max_delta, std::abs(next.weights[j] - prev.weights[j]));
  return max_delta < tol;
}

} // namespace fedirr::fl
