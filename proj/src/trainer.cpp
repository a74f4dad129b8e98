#include "dispatch/trainer.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace dispatch::trainer {

std::string_view optimizer_name(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

Optimizer parse_optimizer(std::string_view s) {
  if (s == "sgd") return Optimizer::Sgd;
  if (s == "adam") return Optimizer::Adam;
  throw InputError("unknown optimizer '" + std::string(s) + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw InputError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw InputError("learning_rate must be positive");
  if (!(entropy_coef >= 0.0)) throw InputError("entropy_coef must be >= 0");
  if (!(critic_weight > 0.0)) throw InputError("critic_weight must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InputError("gamma must lie in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw InputError("gae_lambda must lie in [0, 1]");
  if (embed_dim == 0) throw InputError("embed_dim must be positive");
}

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        std::span<const bool> terminal, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1 || terminal.size() != n) throw ContractError("gae: inconsistent trajectory lengths");
  std::vector<double> adv(n, 0.0);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double not_done = terminal[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * values[k + 1] * not_done - values[k];
    running = delta + gamma * lambda * not_done * running;
    adv[k] = running;
  }
  return adv;
}

double advantage(double reward, double value, const TrainConfig& cfg) {
  const double r[1] = {reward};
  const double v[2] = {value, 0.0};
  const bool done[1] = {true};
  return gae(r, v, done, cfg.gamma, cfg.gae_lambda)[0];
}

OptimizerState::OptimizerState(const agent::PolicyParams& shape)
    : m_(agent::PolicyParams::zeros(shape.d)), v_(agent::PolicyParams::zeros(shape.d)) {}

void OptimizerState::apply(agent::PolicyParams& params, const agent::Gradients& grads, const TrainConfig& cfg) {
  ++steps_;
  if (cfg.optimizer == Optimizer::Sgd) {
    std::vector<const agent::Matrix*> gblocks;
    grads.for_each_block([&](std::string_view, const agent::Matrix& m) { gblocks.push_back(&m); });
    std::size_t k = 0;
    params.for_each_block([&](std::string_view, agent::Matrix& m) {
      const auto& gm = gblocks[k++]->data;
      for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] -= cfg.learning_rate * gm[i];
    });
    return;
  }
  if (m_.d != params.d) {
    m_ = agent::PolicyParams::zeros(params.d);
    v_ = agent::PolicyParams::zeros(params.d);
  }
  std::vector<const agent::Matrix*> gb;
  std::vector<agent::Matrix*> mb, vb;
  grads.for_each_block([&](std::string_view, const agent::Matrix& m) { gb.push_back(&m); });
  m_.for_each_block([&](std::string_view, agent::Matrix& m) { mb.push_back(&m); });
  v_.for_each_block([&](std::string_view, agent::Matrix& m) { vb.push_back(&m); });
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(steps_));
  std::size_t k = 0;
  params.for_each_block([&](std::string_view, agent::Matrix& p) {
    auto& g = gb[k]->data;
    auto& m = mb[k]->data;
    auto& v = vb[k]->data;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
      p.data[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
    }
    ++k;
  });
}

LossComponents batch_gradients(const agent::PolicyParams& params, std::span<const Sample> batch,
                               const TrainConfig& cfg, agent::Gradients& grads) {
  if (batch.empty()) throw ContractError("a2c update on an empty batch");
  grads = agent::PolicyParams::zeros(params.d);
  LossComponents lc;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const auto out = agent::forward(params, s.state);
    agent::LossTargets tg;
    tg.advantage = advantage(s.reward, out.value, cfg);
    tg.value_target = s.reward;
    tg.actor_weight = 1.0;
    tg.critic_weight = cfg.critic_weight;
    tg.entropy_coef = cfg.entropy_coef;
    agent::LossBreakdown lb;
    try {
      lb = agent::backward(params, s.state, s.action, tg, grads, scale);
    } catch (const NumericError& e) {
      throw NumericError("incident " + s.incident_id + ": " + e.what());
    }
    if (!std::isfinite(lb.total)) throw NumericError("non-finite loss on incident " + s.incident_id);
    lc.total += lb.total * scale;
    lc.actor += lb.actor * scale;
    lc.critic += lb.critic * scale;
    lc.entropy += lb.entropy * scale;
    lc.mean_reward += s.reward * scale;
    lc.mean_value += out.value * scale;
  }
  return lc;
}

LossComponents a2c_update(agent::PolicyParams& params, std::span<const Sample> batch, const TrainConfig& cfg,
                          OptimizerState& opt) {
  agent::Gradients grads;
  const auto lc = batch_gradients(params, batch, cfg, grads);
  opt.apply(params, grads, cfg);
  return lc;
}

std::string TrainingCurve::to_csv() const {
  std::ostringstream out;
  out << "epoch,mean_reward,actor_loss,critic_loss,entropy,rolling_mean_reward\n";
  for (std::size_t e = 0; e < size(); ++e) {
    out << e + 1 << ',' << format_double(mean_reward[e]) << ',' << format_double(actor_loss[e]) << ','
        << format_double(critic_loss[e]) << ',' << format_double(entropy[e]) << ','
        << format_double(rolling_reward[e]) << '\n';
  }
  return out.str();
}

std::vector<Episode> make_episodes(std::span<const scenario::Incident> incidents, const atlas::TravelTimeAtlas& atlas,
                                   const env::Normalization& norms) {
  std::vector<Episode> out;
  out.reserve(incidents.size());
  for (const auto& inc : incidents) {
    out.push_back({inc.id, env::build_state(inc, atlas, norms), env::make_context(inc, atlas)});
  }
  return out;
}

TrainResult train(std::span<const Episode> episodes, const env::RewardParams& reward, const TrainConfig& cfg) {
  cfg.validate();
  TrainResult res;
  res.params = agent::PolicyParams::initialize(cfg.embed_dim, Rng::derive(cfg.seed, 1));
  std::vector<std::size_t> solvable;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    if (episodes[i].state.solvable()) solvable.push_back(i);
  }
  res.n_solvable = solvable.size();
  if (cfg.epochs == 0) return res;
  if (solvable.empty()) throw InputError("no solvable incidents to train on");

  Rng order_rng(Rng::derive(cfg.seed, 2));
  Rng action_rng(Rng::derive(cfg.seed, 3));
  OptimizerState opt(res.params);
  auto& curve = res.curve;
  std::vector<Sample> batch;
  batch.reserve(cfg.batch_size);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(solvable.begin(), solvable.end(), order_rng);
    double reward_sum = 0.0, actor_sum = 0.0, critic_sum = 0.0, entropy_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < solvable.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(solvable.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        const auto& ep = episodes[solvable[k]];
        const auto out = agent::forward(res.params, ep.state);
        const std::size_t action = agent::sample_action(out, action_rng);
        const auto outcome = env::step(ep.state, action, ep.context, reward);
        batch.push_back({ep.incident_id, ep.state, action, outcome.reward});
        reward_sum += outcome.reward;
      }
      const auto lc = a2c_update(res.params, batch, cfg, opt);
      actor_sum += lc.actor;
      critic_sum += lc.critic;
      entropy_sum += lc.entropy;
      ++n_batches;
    }
    const double mean_reward = reward_sum / static_cast<double>(solvable.size());
    curve.mean_reward.push_back(mean_reward);
    curve.actor_loss.push_back(actor_sum / static_cast<double>(n_batches));
    curve.critic_loss.push_back(critic_sum / static_cast<double>(n_batches));
    curve.entropy.push_back(entropy_sum / static_cast<double>(n_batches));
    const std::size_t window = std::min(curve.size(), TrainingCurve::kRollingWindow);
    const double window_sum = std::accumulate(curve.mean_reward.end() - static_cast<std::ptrdiff_t>(window),
                                              curve.mean_reward.end(), 0.0);
    curve.rolling_reward.push_back(window_sum / static_cast<double>(window));
  }
  return res;
}

}  // namespace dispatch::trainer
