#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dispatch/agent.hpp"

namespace dispatch::trainer {

enum class Optimizer { Sgd, Adam };
std::string_view optimizer_name(Optimizer o);
Optimizer parse_optimizer(std::string_view s);

struct TrainConfig {
  std::size_t epochs = 3500;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  double entropy_coef = 0.01;
  double critic_weight = 1.0;
  double gae_lambda = 0.95;
  double gamma = 0.99;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::Sgd;
  std::size_t embed_dim = agent::PolicyParams::kDefaultWidth;
  // Adam moments; unused by SGD.
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

/// Generalized advantage estimation over one trajectory. `values` has one
/// extra bootstrap entry (ignored after a terminal step).
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        std::span<const bool> terminal, double gamma, double lambda);

/// Single-step terminal episode: GAE collapses to r - V(s).
double advantage(double reward, double value, const TrainConfig& cfg);

struct Sample {
  std::string incident_id;
  env::DispatchState state;
  std::size_t action = 0;
  double reward = 0.0;
};

struct LossComponents {
  double total = 0.0;
  double actor = 0.0;
  double critic = 0.0;
  double entropy = 0.0;
  double mean_reward = 0.0;
  double mean_value = 0.0;
};

/// Optimizer state that persists between updates.
class OptimizerState {
public:
  OptimizerState() = default;
  explicit OptimizerState(const agent::PolicyParams& shape);
  void apply(agent::PolicyParams& params, const agent::Gradients& grads, const TrainConfig& cfg);
  std::uint64_t steps() const { return steps_; }

private:
  agent::Gradients m_, v_;
  std::uint64_t steps_ = 0;
};

/// Mean A2C loss gradient over the batch (advantage = r - V(s) held constant).
LossComponents batch_gradients(const agent::PolicyParams& params, std::span<const Sample> batch,
                               const TrainConfig& cfg, agent::Gradients& grads);

/// One optimizer step on the batch loss; returns the loss at the pre-update params.
LossComponents a2c_update(agent::PolicyParams& params, std::span<const Sample> batch, const TrainConfig& cfg,
                          OptimizerState& opt);

struct TrainingCurve {
  std::vector<double> mean_reward;
  std::vector<double> actor_loss;
  std::vector<double> critic_loss;
  std::vector<double> entropy;
  std::vector<double> rolling_reward;  ///< trailing 50-epoch mean of mean_reward

  static constexpr std::size_t kRollingWindow = 50;
  std::size_t size() const { return mean_reward.size(); }
  /// CSV `epoch,mean_reward,actor_loss,critic_loss,entropy,rolling_mean_reward`.
  std::string to_csv() const;
};

/// Environment inputs for training: a state, context and id per incident.
struct Episode {
  std::string incident_id;
  env::DispatchState state;
  env::IncidentContext context;
};

std::vector<Episode> make_episodes(std::span<const scenario::Incident> incidents, const atlas::TravelTimeAtlas& atlas,
                                   const env::Normalization& norms);

struct TrainResult {
  agent::PolicyParams params;
  TrainingCurve curve;
  std::size_t n_solvable = 0;
};

/// One epoch = one seeded shuffled pass over the solvable episodes in
/// batches; actions are sampled from the current policy. Deterministic given cfg.seed.
TrainResult train(std::span<const Episode> episodes, const env::RewardParams& reward, const TrainConfig& cfg);

}  // namespace dispatch::trainer
