#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fedirr::fl {

/// Linear model: weights[0..d) multiply the features, weights[d] is the bias.
struct ModelParams {
  std::vector<double> weights;
  std::uint64_t round = 0;
  std::vector<std::string> feature_names;

  std::size_t feature_dim() const { return weights.empty() ? 0 : weights.size() - 1; }

  static ModelParams zeros(std::size_t feature_dim,
                           std::vector<std::string> feature_names = {});

  bool operator==(const ModelParams&) const = default;
};

struct TrainingExample {
  std::vector<double> features;
  double target = 0.0;

  bool operator==(const TrainingExample&) const = default;
};

struct ClientUpdate {
  std::string client_id;
  std::uint64_t round = 0;
  std::vector<double> weights;
  std::uint64_t sample_count = 1;
  double local_loss = 0.0;

  bool operator==(const ClientUpdate&) const = default;
};

struct TrainConfig {
  int local_epochs = 5;
  double learning_rate = 0.1;
  double l2 = 0.0;
  double convergence_tol = 1e-4;
  int max_rounds = 200;

  /// Throws Error(config_error) naming the offending field.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

double predict(const ModelParams& params, std::span<const double> features);

/// Mean squared error plus l2 * ||w||^2 over the non-bias weights.
double mse_loss(const ModelParams& params, std::span<const TrainingExample> data,
                double l2 = 0.0);

/// Analytic gradient of mse_loss with respect to all d+1 weights.
std::vector<double> gradient(const ModelParams& params,
                             std::span<const TrainingExample> data, double l2 = 0.0);

/// Full-batch gradient descent for cfg.local_epochs steps. The update answers
/// start.round. Throws Error(diverged) as soon as a weight turns non-finite.
ClientUpdate local_train(const ModelParams& start, std::span<const TrainingExample> data,
                         const TrainConfig& cfg, std::string client_id = {});

/// Sample-count-weighted mean of the client weights. Updates are folded in
/// client_id order, so the result does not depend on arrival order.
ModelParams aggregate(std::span<const ClientUpdate> updates);

/// True iff every component moved by strictly less than tol.
bool has_converged(const ModelParams& prev, const ModelParams& next, double tol);

} // namespace fedirr::fl
