#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "dispatch/env.hpp"

namespace dispatch::agent {

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }
  double* row_ptr(std::size_t r) { return data.data() + r * cols; }
  bool operator==(const Matrix&) const = default;
};

/// Learnable tensors of the attention actor-critic.
///
///   e      = category_embed[c]                          (d)
///   q      = query_proj * e                             (d)
///   h_j    = facility_embed^T f_j + facility_bias       (d)
///   k_j    = key_proj * h_j                             (d)
///   s_j    = q . k_j / sqrt(d)       masked-in j only   (policy logits)
///   w      = softmax(s) over masked-in facilities
///   ctx    = sum_j w_j k_j
///   V      = critic_out . tanh(critic_hidden * ctx + critic_hidden_bias) + critic_out_bias
struct PolicyParams {
  std::size_t d = 0;
  Matrix category_embed;      // 4 x d
  Matrix facility_embed;      // 3 x d
  Matrix facility_bias;       // 1 x d
  Matrix query_proj;          // d x d
  Matrix key_proj;            // d x d
  Matrix critic_hidden;       // d x d
  Matrix critic_hidden_bias;  // 1 x d
  Matrix critic_out;          // 1 x d
  Matrix critic_out_bias;     // 1 x 1

  static constexpr std::size_t kDefaultWidth = 64;

  /// All-zero parameters of width d (also the gradient container).
  static PolicyParams zeros(std::size_t d);
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per block, seeded.
  static PolicyParams initialize(std::size_t d, std::uint64_t seed);

  /// Visits blocks in a fixed order: f(name, matrix).
  template <typename F>
  void for_each_block(F&& f) {
    f(std::string_view("category_embed"), category_embed);
    f(std::string_view("facility_embed"), facility_embed);
    f(std::string_view("facility_bias"), facility_bias);
    f(std::string_view("query_proj"), query_proj);
    f(std::string_view("key_proj"), key_proj);
    f(std::string_view("critic_hidden"), critic_hidden);
    f(std::string_view("critic_hidden_bias"), critic_hidden_bias);
    f(std::string_view("critic_out"), critic_out);
    f(std::string_view("critic_out_bias"), critic_out_bias);
  }
  template <typename F>
  void for_each_block(F&& f) const {
    const_cast<PolicyParams*>(this)->for_each_block(
        [&](std::string_view name, Matrix& m) { f(name, static_cast<const Matrix&>(m)); });
  }

  std::size_t parameter_count() const;
  /// Throws ContractError naming the first block with a non-finite value or a bad shape.
  void validate() const;
  bool operator==(const PolicyParams&) const = default;
};

using Gradients = PolicyParams;

struct ForwardOutput {
  /// Masked entries hold kMaskedLogit.
  std::vector<double> logits;
  /// Masked entries hold -infinity.
  std::vector<double> log_probs;
  /// Masked entries are exactly 0.
  std::vector<double> probs;
  std::vector<bool> mask;
  double value = 0.0;
  std::vector<double> context;
  /// Entropy of the masked policy.
  double entropy = 0.0;
};

inline constexpr double kMaskedLogit = std::numeric_limits<double>::lowest();

/// Throws ContractError when the mask is all false.
ForwardOutput forward(const PolicyParams& params, const env::DispatchState& state);

/// Draws from the masked categorical distribution.
std::size_t sample_action(const ForwardOutput& out, Rng& rng);

/// Argmax over masked-in logits, ties to the lowest index.
std::size_t greedy_action(const ForwardOutput& out);

/// Per-sample loss targets. The loss is
///   actor_weight * (-advantage * log pi(action))
/// + critic_weight * (value_target - V)^2
/// - entropy_coef * H(pi).
/// `advantage` is a constant: no gradient flows from the actor term into V.
struct LossTargets {
  double advantage = 0.0;
  double value_target = 0.0;
  double actor_weight = 1.0;
  double critic_weight = 1.0;
  double entropy_coef = 0.0;
};

struct LossBreakdown {
  double actor = 0.0;    ///< -advantage * log pi(a), unweighted
  double critic = 0.0;   ///< (value_target - V)^2, unweighted
  double entropy = 0.0;  ///< H(pi)
  double total = 0.0;    ///< weighted sum
};

LossBreakdown loss(const PolicyParams& params, const env::DispatchState& state, std::size_t action,
                   const LossTargets& targets);

/// Analytic gradient of loss(); accumulates `scale * dL/dparams` into `grads`.
/// Throws NumericError naming the block if any gradient is non-finite.
LossBreakdown backward(const PolicyParams& params, const env::DispatchState& state, std::size_t action,
                       const LossTargets& targets, Gradients& grads, double scale = 1.0);

/// Checkpoint JSON (see docs/checkpoint.md).
std::string checkpoint_to_json(const PolicyParams& params, const std::string& config_sha256);
PolicyParams checkpoint_from_json(std::string_view text, std::string* config_sha256 = nullptr);
void save_checkpoint(const PolicyParams& params, const std::string& config_sha256, const std::string& path);
PolicyParams load_checkpoint(const std::string& path, std::string* config_sha256 = nullptr);

}  // namespace dispatch::agent
