#include "dispatch/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace dispatch::agent {

PolicyParams PolicyParams::zeros(std::size_t d) {
  if (d == 0) throw InputError("embedding width must be positive");
  PolicyParams p;
  p.d = d;
  p.category_embed = Matrix(kNumCategories, d);
  p.facility_embed = Matrix(env::kFeatureWidth, d);
  p.facility_bias = Matrix(1, d);
  p.query_proj = Matrix(d, d);
  p.key_proj = Matrix(d, d);
  p.critic_hidden = Matrix(d, d);
  p.critic_hidden_bias = Matrix(1, d);
  p.critic_out = Matrix(1, d);
  p.critic_out_bias = Matrix(1, 1);
  return p;
}

PolicyParams PolicyParams::initialize(std::size_t d, std::uint64_t seed) {
  PolicyParams p = zeros(d);
  Rng rng(seed);
  const double dd = static_cast<double>(d);
  auto fill = [&](Matrix& m, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    for (auto& v : m.data) v = rng.uniform(-bound, bound);
  };
  fill(p.category_embed, kNumCategories);
  fill(p.facility_embed, env::kFeatureWidth);
  fill(p.facility_bias, env::kFeatureWidth);
  fill(p.query_proj, dd);
  fill(p.key_proj, dd);
  fill(p.critic_hidden, dd);
  fill(p.critic_hidden_bias, dd);
  fill(p.critic_out, dd);
  fill(p.critic_out_bias, dd);
  return p;
}

std::size_t PolicyParams::parameter_count() const {
  std::size_t n = 0;
  for_each_block([&](std::string_view, const Matrix& m) { n += m.data.size(); });
  return n;
}

void PolicyParams::validate() const {
  const PolicyParams shape = zeros(d);
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  shape.for_each_block([&](std::string_view, const Matrix& m) { dims.emplace_back(m.rows, m.cols); });
  std::size_t k = 0;
  for_each_block([&](std::string_view name, const Matrix& m) {
    if (m.rows != dims[k].first || m.cols != dims[k].second || m.data.size() != m.rows * m.cols) {
      throw ContractError("parameter block " + std::string(name) + " has the wrong shape");
    }
    for (double v : m.data) {
      if (!std::isfinite(v)) throw ContractError("parameter block " + std::string(name) + " is not finite");
    }
    ++k;
  });
}

namespace {

// Intermediate values shared by forward and backward.
struct Trace {
  std::vector<double> e, q, u, hbar, ctx, z, a;
  std::vector<std::vector<double>> h;  // per facility, empty when masked
  std::vector<std::size_t> feasible;
  ForwardOutput out;
};

Trace run_forward(const PolicyParams& P, const env::DispatchState& s) {
  const std::size_t d = P.d;
  const std::size_t n = s.n_facilities();
  if (s.mask.size() != n) throw ContractError("state mask and features differ in length");
  Trace t;
  for (std::size_t j = 0; j < n; ++j) {
    if (s.mask[j]) t.feasible.push_back(j);
  }
  if (t.feasible.empty()) throw ContractError("forward called on a state with no feasible facility");

  const std::size_t c = static_cast<std::size_t>(category_index(s.category));
  t.e.assign(P.category_embed.row_ptr(c), P.category_embed.row_ptr(c) + d);
  t.q.assign(d, 0.0);
  for (std::size_t a = 0; a < d; ++a) {
    const double* w = P.query_proj.row_ptr(a);
    double acc = 0.0;
    for (std::size_t b = 0; b < d; ++b) acc += w[b] * t.e[b];
    t.q[a] = acc;
  }
  // u = key_proj^T q, so q . (key_proj h) = u . h
  t.u.assign(d, 0.0);
  for (std::size_t a = 0; a < d; ++a) {
    const double* w = P.key_proj.row_ptr(a);
    const double qa = t.q[a];
    for (std::size_t b = 0; b < d; ++b) t.u[b] += w[b] * qa;
  }

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  auto& out = t.out;
  out.mask = s.mask;
  out.logits.assign(n, kMaskedLogit);
  out.log_probs.assign(n, -std::numeric_limits<double>::infinity());
  out.probs.assign(n, 0.0);
  t.h.assign(n, {});
  double max_logit = -std::numeric_limits<double>::infinity();
  for (const auto j : t.feasible) {
    auto& h = t.h[j];
    h.assign(P.facility_bias.data.begin(), P.facility_bias.data.end());
    for (std::size_t r = 0; r < env::kFeatureWidth; ++r) {
      const double f = s.facility_features[j][r];
      const double* w = P.facility_embed.row_ptr(r);
      for (std::size_t m = 0; m < d; ++m) h[m] += f * w[m];
    }
    double dot = 0.0;
    for (std::size_t m = 0; m < d; ++m) dot += t.u[m] * h[m];
    out.logits[j] = dot * inv_sqrt_d;
    max_logit = std::max(max_logit, out.logits[j]);
  }
  double z = 0.0;
  for (const auto j : t.feasible) z += std::exp(out.logits[j] - max_logit);
  const double log_z = max_logit + std::log(z);
  out.entropy = 0.0;
  for (const auto j : t.feasible) {
    out.log_probs[j] = out.logits[j] - log_z;
    out.probs[j] = std::exp(out.log_probs[j]);
    out.entropy -= out.probs[j] * out.log_probs[j];
  }

  // ctx = sum_j w_j k_j = key_proj * hbar
  t.hbar.assign(d, 0.0);
  for (const auto j : t.feasible) {
    const double p = out.probs[j];
    for (std::size_t m = 0; m < d; ++m) t.hbar[m] += p * t.h[j][m];
  }
  t.ctx.assign(d, 0.0);
  for (std::size_t a = 0; a < d; ++a) {
    const double* w = P.key_proj.row_ptr(a);
    double acc = 0.0;
    for (std::size_t b = 0; b < d; ++b) acc += w[b] * t.hbar[b];
    t.ctx[a] = acc;
  }
  t.z.assign(d, 0.0);
  t.a.assign(d, 0.0);
  double v = P.critic_out_bias(0, 0);
  for (std::size_t a = 0; a < d; ++a) {
    const double* w = P.critic_hidden.row_ptr(a);
    double acc = P.critic_hidden_bias(0, a);
    for (std::size_t b = 0; b < d; ++b) acc += w[b] * t.ctx[b];
    t.z[a] = acc;
    t.a[a] = std::tanh(acc);
    v += P.critic_out(0, a) * t.a[a];
  }
  out.value = v;
  out.context = t.ctx;
  return t;
}

LossBreakdown breakdown(const ForwardOutput& out, std::size_t action, const LossTargets& tg) {
  if (action >= out.mask.size() || !out.mask[action]) throw ContractError("loss evaluated at a masked-out action");
  LossBreakdown lb;
  lb.actor = -tg.advantage * out.log_probs[action];
  const double err = tg.value_target - out.value;
  lb.critic = err * err;
  lb.entropy = out.entropy;
  lb.total = tg.actor_weight * lb.actor + tg.critic_weight * lb.critic - tg.entropy_coef * lb.entropy;
  return lb;
}

}  // namespace

ForwardOutput forward(const PolicyParams& params, const env::DispatchState& state) {
  return run_forward(params, state).out;
}

std::size_t sample_action(const ForwardOutput& out, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last = out.probs.size();
  for (std::size_t j = 0; j < out.probs.size(); ++j) {
    if (!out.mask[j]) continue;
    last = j;
    cum += out.probs[j];
    if (u < cum) return j;
  }
  if (last == out.probs.size()) throw ContractError("sample_action on an all-masked distribution");
  // rounding left u above the final cumulative sum
  return last;
}

std::size_t greedy_action(const ForwardOutput& out) {
  std::size_t best = out.logits.size();
  for (std::size_t j = 0; j < out.logits.size(); ++j) {
    if (!out.mask[j]) continue;
    if (best == out.logits.size() || out.logits[j] > out.logits[best]) best = j;
  }
  if (best == out.logits.size()) throw ContractError("greedy_action on an all-masked distribution");
  return best;
}

LossBreakdown loss(const PolicyParams& params, const env::DispatchState& state, std::size_t action,
                   const LossTargets& targets) {
  return breakdown(forward(params, state), action, targets);
}

LossBreakdown backward(const PolicyParams& P, const env::DispatchState& s, std::size_t action,
                       const LossTargets& tg, Gradients& G, double scale) {
  if (G.d != P.d) throw ContractError("gradient container width mismatch");
  const Trace t = run_forward(P, s);
  const auto& out = t.out;
  const LossBreakdown lb = breakdown(out, action, tg);
  const std::size_t d = P.d;
  const std::size_t n = s.n_facilities();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  // critic head
  const double g_v = scale * (-2.0 * tg.critic_weight * (tg.value_target - out.value));
  G.critic_out_bias(0, 0) += g_v;
  std::vector<double> g_z(d);
  for (std::size_t a = 0; a < d; ++a) {
    G.critic_out(0, a) += g_v * t.a[a];
    g_z[a] = g_v * P.critic_out(0, a) * (1.0 - t.a[a] * t.a[a]);
    G.critic_hidden_bias(0, a) += g_z[a];
  }
  std::vector<double> g_ctx(d, 0.0);
  for (std::size_t a = 0; a < d; ++a) {
    const double* w = P.critic_hidden.row_ptr(a);
    double* gw = G.critic_hidden.row_ptr(a);
    const double gz = g_z[a];
    for (std::size_t b = 0; b < d; ++b) {
      gw[b] += gz * t.ctx[b];
      g_ctx[b] += w[b] * gz;
    }
  }
  // ctx = key_proj * hbar
  std::vector<double> g_hbar(d, 0.0);
  for (std::size_t a = 0; a < d; ++a) {
    const double* w = P.key_proj.row_ptr(a);
    double* gw = G.key_proj.row_ptr(a);
    const double gc = g_ctx[a];
    for (std::size_t b = 0; b < d; ++b) {
      gw[b] += gc * t.hbar[b];
      g_hbar[b] += w[b] * gc;
    }
  }

  // gradient w.r.t. the logits
  std::vector<double> g_s(n, 0.0);
  std::vector<double> g_p(n, 0.0);
  double mean_gp = 0.0;
  for (const auto j : t.feasible) {
    double acc = 0.0;
    for (std::size_t m = 0; m < d; ++m) acc += g_hbar[m] * t.h[j][m];
    g_p[j] = acc;
    mean_gp += out.probs[j] * acc;
  }
  for (const auto j : t.feasible) {
    const double p = out.probs[j];
    double gs = p * (g_p[j] - mean_gp);
    gs += scale * tg.actor_weight * (-tg.advantage) * ((j == action ? 1.0 : 0.0) - p);
    gs += scale * tg.entropy_coef * p * (out.log_probs[j] + out.entropy);
    g_s[j] = gs;
  }

  // s_j = u . h_j / sqrt(d), hbar = sum_j p_j h_j
  std::vector<double> g_u(d, 0.0);
  std::vector<double> g_h(d);
  for (const auto j : t.feasible) {
    const double p = out.probs[j];
    const double gs = g_s[j] * inv_sqrt_d;
    const auto& h = t.h[j];
    for (std::size_t m = 0; m < d; ++m) {
      g_u[m] += gs * h[m];
      g_h[m] = gs * t.u[m] + p * g_hbar[m];
    }
    for (std::size_t r = 0; r < env::kFeatureWidth; ++r) {
      const double f = s.facility_features[j][r];
      double* gw = G.facility_embed.row_ptr(r);
      for (std::size_t m = 0; m < d; ++m) gw[m] += f * g_h[m];
    }
    for (std::size_t m = 0; m < d; ++m) G.facility_bias(0, m) += g_h[m];
  }
  // u = key_proj^T q
  std::vector<double> g_q(d, 0.0);
  for (std::size_t a = 0; a < d; ++a) {
    const double* w = P.key_proj.row_ptr(a);
    double* gw = G.key_proj.row_ptr(a);
    const double qa = t.q[a];
    double acc = 0.0;
    for (std::size_t b = 0; b < d; ++b) {
      gw[b] += qa * g_u[b];
      acc += w[b] * g_u[b];
    }
    g_q[a] = acc;
  }
  // q = query_proj * e, e = category_embed[c]
  const std::size_t c = static_cast<std::size_t>(category_index(s.category));
  double* g_e = G.category_embed.row_ptr(c);
  for (std::size_t a = 0; a < d; ++a) {
    const double* w = P.query_proj.row_ptr(a);
    double* gw = G.query_proj.row_ptr(a);
    const double gq = g_q[a];
    for (std::size_t b = 0; b < d; ++b) {
      gw[b] += gq * t.e[b];
      g_e[b] += w[b] * gq;
    }
  }

  G.for_each_block([](std::string_view name, const Matrix& m) {
    for (double v : m.data) {
      if (!std::isfinite(v)) throw NumericError("non-finite gradient in block " + std::string(name));
    }
  });
  return lb;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr std::string_view kCheckpointFormat = "attention-actor-critic/1";
}

std::string checkpoint_to_json(const PolicyParams& params, const std::string& config_sha256) {
  params.validate();
  nlohmann::ordered_json doc;
  doc["format"] = kCheckpointFormat;
  doc["d"] = params.d;
  doc["config_sha256"] = config_sha256;
  nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
  params.for_each_block([&](std::string_view name, const Matrix& m) {
    nlohmann::ordered_json b;
    b["name"] = name;
    b["rows"] = m.rows;
    b["cols"] = m.cols;
    b["data"] = m.data;
    blocks.push_back(std::move(b));
  });
  doc["blocks"] = std::move(blocks);
  return doc.dump() + "\n";
}

PolicyParams checkpoint_from_json(std::string_view text, std::string* config_sha256) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kCheckpointFormat) throw InputError("checkpoint: unsupported format");
    PolicyParams p = PolicyParams::zeros(doc.at("d").get<std::size_t>());
    const auto& blocks = doc.at("blocks");
    std::size_t k = 0;
    p.for_each_block([&](std::string_view name, Matrix& m) {
      if (k >= blocks.size()) throw InputError("checkpoint: missing block " + std::string(name));
      const auto& b = blocks[k++];
      if (b.at("name").get<std::string>() != name) throw InputError("checkpoint: expected block " + std::string(name));
      if (b.at("rows").get<std::size_t>() != m.rows || b.at("cols").get<std::size_t>() != m.cols) {
        throw InputError("checkpoint: block " + std::string(name) + " has the wrong shape");
      }
      auto data = b.at("data").get<std::vector<double>>();
      if (data.size() != m.data.size()) throw InputError("checkpoint: block " + std::string(name) + " has the wrong size");
      m.data = std::move(data);
    });
    if (config_sha256) *config_sha256 = doc.value("config_sha256", std::string());
    try {
      p.validate();
    } catch (const ContractError& e) {
      throw InputError(std::string("checkpoint: ") + e.what());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const PolicyParams& params, const std::string& config_sha256, const std::string& path) {
  write_text_file(path, checkpoint_to_json(params, config_sha256));
}

PolicyParams load_checkpoint(const std::string& path, std::string* config_sha256) {
  return checkpoint_from_json(read_text_file(path), config_sha256);
}

}  // namespace dispatch::agent
