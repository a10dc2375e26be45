#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "frea/feasibility.hpp"
#include "frea/policy.hpp"

namespace frea {

enum class CbvMode { Standard, PPO, FPPO_RS, FREA };

inline const char* mode_name(CbvMode m) {
  switch (m) {
    case CbvMode::Standard: return "Standard";
    case CbvMode::PPO: return "PPO";
    case CbvMode::FPPO_RS: return "FPPO-RS";
    default: return "FREA";
  }
}

inline CbvMode mode_from_name(const std::string& s) {
  if (s == "Standard" || s == "standard") return CbvMode::Standard;
  if (s == "PPO" || s == "ppo") return CbvMode::PPO;
  if (s == "FPPO-RS" || s == "fppo-rs") return CbvMode::FPPO_RS;
  if (s == "FREA" || s == "frea") return CbvMode::FREA;
  throw std::invalid_argument("unknown CBV mode: " + s);
}

inline bool mode_needs_feasibility(CbvMode m) {
  return m == CbvMode::FREA || m == CbvMode::FPPO_RS;
}

inline bool mode_learns(CbvMode m) { return m != CbvMode::Standard; }

struct TrainConfig {
  double gamma = 0.98;
  double gae_lambda = 0.98;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  int batch = 256;
  int horizon = 2048;
  int update_repeats = 4;
  double lr = 3e-4;
  int64_t total_steps = 200000;  // environment-step budget (anneals lr to 0)
  int hidden = 256;
  double fppo_f_max = 8.0;
  double fppo_p_max = 1.0;
  int max_episode_steps = 2000;
  uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Advantage machinery
// ---------------------------------------------------------------------------

struct GaeResult {
  Eigen::VectorXd advantages;
  Eigen::VectorXd value_targets;
};

/// Generalized advantage estimation over one segment. `next_value` bootstraps
/// past the final step (0 for terminal ends); mid-segment `dones` cut both
/// the bootstrap and the advantage recursion.
inline GaeResult gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values,
                     double next_value, const std::vector<uint8_t>& dones,
                     double gamma, double lambda) {
  const Eigen::Index n = rewards.size();
  if (values.size() != n || static_cast<Eigen::Index>(dones.size()) != n)
    throw std::invalid_argument("gae: length mismatch");
  GaeResult r;
  r.advantages.resize(n);
  r.value_targets.resize(n);
  double adv = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const double mask = dones[static_cast<size_t>(t)] ? 0.0 : 1.0;
    const double v_next = t + 1 < n ? values[t + 1] : next_value;
    const double delta = rewards[t] + gamma * v_next * mask - values[t];
    adv = delta + gamma * lambda * mask * adv;
    r.advantages[t] = adv;
    r.value_targets[t] = adv + values[t];
  }
  return r;
}

/// Eq-6 switch: the reward advantage while both endpoints sit inside the
/// LFR, the supplied feasibility advantage otherwise.
inline double hybrid_advantage(double a_r, double a_h, double v_s, double v_next) {
  const bool inside = lfr_membership(v_s) && lfr_membership(v_next);
  return inside ? a_r : a_h;
}

/// Clipped surrogate term min(ratio*A, clip(ratio)*A).
inline double ppo_clip_term(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

/// Reward shaping of the fixed-penalty baseline: subtracts
/// clip(v_h, 0, f_max) * p_max / f_max from the reward.
inline double fppo_rs_reward(double reward, double v_h, double f_max, double p_max) {
  if (f_max <= 0.0) throw std::invalid_argument("fppo_rs_reward: f_max must be > 0");
  return reward - std::clamp(v_h, 0.0, f_max) * p_max / f_max;
}

// ---------------------------------------------------------------------------
// Rollout buffer
// ---------------------------------------------------------------------------

struct BufferStep {
  Eigen::VectorXd features;  // policy/critic input (already featurized)
  Eigen::Vector2d raw;       // pre-squash sample
  Action action;
  double log_prob_old = 0.0;
  double reward = 0.0;
  double v_r = 0.0;
  double h = -1.0;
  double h_next = -1.0;
  double v_h = -1.0;
  double v_h_next = -1.0;
  bool done = false;       // terminal (no bootstrap)
  bool truncated = false;  // withdrawn or cut (bootstraps from v_bootstrap)
};

struct Segment {
  std::vector<BufferStep> steps;
  double bootstrap_value = 0.0;  // V_r of the state after the last step
};

struct RolloutBuffer {
  std::vector<Segment> segments;
  bool sealed = false;

  size_t total_steps() const {
    size_t n = 0;
    for (const auto& s : segments) n += s.steps.size();
    return n;
  }
};

// ---------------------------------------------------------------------------
// Policy update
// ---------------------------------------------------------------------------

struct CbvPolicy {
  PolicyNet policy;
  MlpParams critic;
  OptimizerState policy_opt;
  VecOptimizer log_std_opt;
  OptimizerState critic_opt;
};

inline CbvPolicy make_cbv_policy(int pseudo_rows, const TrainConfig& cfg, Rng& rng) {
  CbvPolicy c;
  c.policy = make_policy(pseudo_rows, rng, cfg.hidden);
  c.critic = make_mlp({c.policy.feature_dim(), cfg.hidden, cfg.hidden, 1}, rng);
  const int64_t updates = std::max<int64_t>(1, cfg.total_steps / cfg.horizon);
  const int64_t minibatches =
      std::max<int64_t>(1, static_cast<int64_t>(cfg.update_repeats) * cfg.horizon / cfg.batch);
  const int64_t total_adam_steps = updates * minibatches;
  c.policy_opt = make_optimizer(c.policy.trunk, {cfg.lr, total_adam_steps});
  c.log_std_opt = make_vec_optimizer(c.policy.log_std);
  c.critic_opt = make_optimizer(c.critic, {cfg.lr, total_adam_steps});
  return c;
}

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double mean_advantage = 0.0;
  double mean_vh = 0.0;
  size_t samples = 0;
  bool aborted = false;
};

namespace detail {

inline double huber(double u) {
  const double a = std::abs(u);
  return a <= 1.0 ? 0.5 * u * u : a - 0.5;
}

inline double huber_grad(double u) { return std::clamp(u, -1.0, 1.0); }

}  // namespace detail

/// One PPO update over a sealed buffer: 4 shuffled passes of minibatches,
/// ascending the clipped surrogate plus entropy bonus, critic fit by smooth
/// L1. Advantages are mode-mixed first and normalized afterwards. A non-finite
/// loss aborts the update and restores the previous parameters.
inline UpdateStats update_policy(const RolloutBuffer& buffer, CbvPolicy& nets,
                                 CbvMode mode, const TrainConfig& cfg,
                                 Rng& shuffle_rng) {
  if (!buffer.sealed) throw std::logic_error("update_policy: buffer not sealed");
  const size_t n = buffer.total_steps();
  if (n == 0) throw std::invalid_argument("update_policy: empty buffer");

  // Flatten segments and compute per-segment GAE on (possibly shaped) rewards.
  std::vector<const BufferStep*> steps;
  steps.reserve(n);
  Eigen::VectorXd advantages(n), value_targets(n);
  {
    size_t at = 0;
    for (const auto& seg : buffer.segments) {
      const size_t m = seg.steps.size();
      Eigen::VectorXd rewards(m), values(m);
      std::vector<uint8_t> dones(m, 0);
      for (size_t t = 0; t < m; ++t) {
        const BufferStep& s = seg.steps[t];
        rewards[static_cast<Eigen::Index>(t)] =
            mode == CbvMode::FPPO_RS
                ? fppo_rs_reward(s.reward, s.v_h, cfg.fppo_f_max, cfg.fppo_p_max)
                : s.reward;
        values[static_cast<Eigen::Index>(t)] = s.v_r;
        dones[t] = s.done ? 1 : 0;
      }
      const double bootstrap = seg.steps.back().done ? 0.0 : seg.bootstrap_value;
      const GaeResult g = gae(rewards, values, bootstrap, dones, cfg.gamma, cfg.gae_lambda);
      for (size_t t = 0; t < m; ++t) {
        const BufferStep& s = seg.steps[t];
        double a = g.advantages[static_cast<Eigen::Index>(t)];
        if (mode == CbvMode::FREA) {
          // Outside the LFR the objective turns to restoring the AV's
          // feasibility, so the ascent direction is the negated feasibility
          // advantage (lower next-state V_h is better).
          const double a_h = -feasibility_advantage(s.h, s.h_next, s.v_h, s.v_h_next);
          a = hybrid_advantage(a, a_h, s.v_h, s.v_h_next);
        }
        advantages[static_cast<Eigen::Index>(at)] = a;
        value_targets[static_cast<Eigen::Index>(at)] = g.value_targets[static_cast<Eigen::Index>(t)];
        steps.push_back(&s);
        ++at;
      }
    }
  }

  UpdateStats stats;
  stats.samples = n;
  stats.mean_advantage = advantages.mean();
  {
    double mv = 0.0;
    for (const auto* s : steps) mv += s->v_h;
    stats.mean_vh = mv / static_cast<double>(n);
  }

  // Normalize after mixing; reward and feasibility advantages live on
  // different scales.
  const double mean = advantages.mean();
  const double var = (advantages.array() - mean).square().sum() /
                     std::max<double>(1.0, static_cast<double>(n) - 1.0);
  advantages = (advantages.array() - mean) / (std::sqrt(var) + 1e-8);

  // Snapshot for rollback on a non-finite loss.
  const PolicyNet policy_before = nets.policy;
  const MlpParams critic_before = nets.critic;
  const OptimizerState popt_before = nets.policy_opt;
  const VecOptimizer lopt_before = nets.log_std_opt;
  const OptimizerState copt_before = nets.critic_opt;

  const int d = nets.policy.feature_dim();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  double sum_policy_loss = 0.0, sum_value_loss = 0.0, sum_entropy = 0.0;
  size_t clip_hits = 0, sample_count = 0, minibatches = 0;
  bool failed = false;

  for (int repeat = 0; repeat < cfg.update_repeats && !failed; ++repeat) {
    shuffle_rng.shuffle(order);
    for (size_t begin = 0; begin < n && !failed; begin += static_cast<size_t>(cfg.batch)) {
      const size_t mb = std::min<size_t>(static_cast<size_t>(cfg.batch), n - begin);
      Eigen::MatrixXd x(d, mb);
      Eigen::MatrixXd raw(2, mb);
      Eigen::VectorXd old_lp(mb), adv(mb), targets(mb);
      for (size_t i = 0; i < mb; ++i) {
        const size_t idx = order[begin + i];
        const BufferStep& s = *steps[idx];
        x.col(static_cast<Eigen::Index>(i)) = s.features;
        raw.col(static_cast<Eigen::Index>(i)) = s.raw;
        old_lp[static_cast<Eigen::Index>(i)] = s.log_prob_old;
        adv[static_cast<Eigen::Index>(i)] = advantages[static_cast<Eigen::Index>(idx)];
        targets[static_cast<Eigen::Index>(i)] = value_targets[static_cast<Eigen::Index>(idx)];
      }

      // Policy pass.
      const ForwardTrace trace = forward_batch(nets.policy.trunk, x);
      const Eigen::MatrixXd& mu = trace.output();
      Eigen::MatrixXd upstream_mu = Eigen::MatrixXd::Zero(2, static_cast<Eigen::Index>(mb));
      Eigen::Vector2d grad_log_std = Eigen::Vector2d::Zero();
      double surrogate = 0.0;
      const double sigma[2] = {std::exp(nets.policy.log_std[0]),
                               std::exp(nets.policy.log_std[1])};
      for (size_t i = 0; i < mb; ++i) {
        const Eigen::Index ii = static_cast<Eigen::Index>(i);
        const double lp = log_prob_raw(nets.policy, mu.col(ii).head<2>(), raw.col(ii));
        const double ratio = std::exp(lp - old_lp[ii]);
        const double a = adv[ii];
        surrogate += ppo_clip_term(ratio, a, cfg.clip_eps);
        if (std::abs(ratio - 1.0) > cfg.clip_eps) ++clip_hits;
        const bool clipped_away = (a >= 0.0 && ratio > 1.0 + cfg.clip_eps) ||
                                  (a < 0.0 && ratio < 1.0 - cfg.clip_eps);
        if (!clipped_away) {
          const double coeff = ratio * a / static_cast<double>(mb);
          for (int dd = 0; dd < 2; ++dd) {
            const double z = (raw(dd, ii) - mu(dd, ii)) / sigma[dd];
            // d logpi / d mu = z / sigma ; d logpi / d logsigma = z^2 - 1.
            upstream_mu(dd, ii) += -coeff * z / sigma[dd];
            grad_log_std[dd] += -coeff * (z * z - 1.0);
          }
        }
        ++sample_count;
      }
      surrogate /= static_cast<double>(mb);
      const double entropy = policy_entropy(nets.policy);
      const double policy_loss = -surrogate - cfg.entropy_coef * entropy;
      grad_log_std.array() -= cfg.entropy_coef;

      // Critic pass.
      const ForwardTrace vtrace = forward_batch(nets.critic, x);
      const Eigen::MatrixXd& v = vtrace.output();
      Eigen::MatrixXd upstream_v(1, static_cast<Eigen::Index>(mb));
      double value_loss = 0.0;
      for (size_t i = 0; i < mb; ++i) {
        const Eigen::Index ii = static_cast<Eigen::Index>(i);
        const double u = v(0, ii) - targets[ii];
        value_loss += detail::huber(u);
        upstream_v(0, ii) = detail::huber_grad(u) / static_cast<double>(mb);
      }
      value_loss /= static_cast<double>(mb);

      if (!std::isfinite(policy_loss) || !std::isfinite(value_loss)) {
        failed = true;
        break;
      }

      adam_step(nets.policy_opt, nets.policy.trunk, backward(nets.policy.trunk, trace, upstream_mu));
      adam_step_vec(nets.log_std_opt, nets.policy.log_std, grad_log_std,
                    linear_lr(nets.policy_opt), nets.policy_opt.cfg, nets.policy_opt.step);
      adam_step(nets.critic_opt, nets.critic, backward(nets.critic, vtrace, upstream_v));

      sum_policy_loss += policy_loss;
      sum_value_loss += value_loss;
      sum_entropy += entropy;
      ++minibatches;
    }
  }

  if (failed) {
    nets.policy = policy_before;
    nets.critic = critic_before;
    nets.policy_opt = popt_before;
    nets.log_std_opt = lopt_before;
    nets.critic_opt = copt_before;
    stats.aborted = true;
    return stats;
  }

  stats.policy_loss = sum_policy_loss / static_cast<double>(minibatches);
  stats.value_loss = sum_value_loss / static_cast<double>(minibatches);
  stats.entropy = sum_entropy / static_cast<double>(minibatches);
  stats.clip_fraction = static_cast<double>(clip_hits) / static_cast<double>(sample_count);
  return stats;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

struct PolicyCheckpoint {
  CbvPolicy nets;
  TrainConfig config;
  int64_t env_steps = 0;
  int64_t updates = 0;
  std::string mode;
  std::string rng_policy;
  std::string rng_shuffle;
  std::string rng_world;
};

inline void save_policy(const PolicyCheckpoint& c, const std::string& path) {
  BinaryWriter w(path);
  w.str("frea-policy-1");
  w.str(c.mode);
  w.i64(c.env_steps);
  w.i64(c.updates);
  w.f64(c.config.gamma);
  w.f64(c.config.gae_lambda);
  w.f64(c.config.clip_eps);
  w.f64(c.config.entropy_coef);
  w.i32(c.config.batch);
  w.i32(c.config.horizon);
  w.i32(c.config.update_repeats);
  w.f64(c.config.lr);
  w.i64(c.config.total_steps);
  w.i32(c.config.hidden);
  w.f64(c.config.fppo_f_max);
  w.f64(c.config.fppo_p_max);
  w.i32(c.config.max_episode_steps);
  w.u64(c.config.seed);
  w.i32(c.nets.policy.pseudo_rows);
  w.f64(c.nets.policy.accel_bound);
  w.f64(c.nets.policy.steer_bound);
  write_mlp(w, c.nets.policy.trunk);
  w.vector(c.nets.policy.log_std);
  write_mlp(w, c.nets.critic);
  write_optimizer(w, c.nets.policy_opt);
  w.vector(c.nets.log_std_opt.m);
  w.vector(c.nets.log_std_opt.v);
  write_optimizer(w, c.nets.critic_opt);
  w.str(c.rng_policy);
  w.str(c.rng_shuffle);
  w.str(c.rng_world);
}

inline PolicyCheckpoint load_policy(const std::string& path) {
  BinaryReader r(path);
  expect_magic(r, "frea-policy-1");
  PolicyCheckpoint c;
  c.mode = r.str();
  c.env_steps = r.i64();
  c.updates = r.i64();
  c.config.gamma = r.f64();
  c.config.gae_lambda = r.f64();
  c.config.clip_eps = r.f64();
  c.config.entropy_coef = r.f64();
  c.config.batch = r.i32();
  c.config.horizon = r.i32();
  c.config.update_repeats = r.i32();
  c.config.lr = r.f64();
  c.config.total_steps = r.i64();
  c.config.hidden = r.i32();
  c.config.fppo_f_max = r.f64();
  c.config.fppo_p_max = r.f64();
  c.config.max_episode_steps = r.i32();
  c.config.seed = r.u64();
  c.nets.policy.pseudo_rows = r.i32();
  c.nets.policy.accel_bound = r.f64();
  c.nets.policy.steer_bound = r.f64();
  c.nets.policy.trunk = read_mlp(r);
  c.nets.policy.log_std = r.vector();
  c.nets.critic = read_mlp(r);
  c.nets.policy_opt = read_optimizer(r);
  c.nets.log_std_opt.m = r.vector();
  c.nets.log_std_opt.v = r.vector();
  c.nets.critic_opt = read_optimizer(r);
  c.rng_policy = r.str();
  c.rng_shuffle = r.str();
  c.rng_world = r.str();
  return c;
}

}  // namespace frea
