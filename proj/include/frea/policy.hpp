#pragma once

#include <cmath>

#include "frea/checkpoint.hpp"
#include "frea/mlp.hpp"
#include "frea/optim.hpp"
#include "frea/rng.hpp"
#include "frea/world.hpp"

namespace frea {

inline double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

/// log(1 - tanh(u)^2), evaluated without cancellation.
inline double log_one_minus_tanh_sq(double u) {
  return 2.0 * (std::log(2.0) - u - softplus(-2.0 * u));
}

// Squashed-Gaussian policy over (accel, steer): the trunk maps pseudo-state
// features to the pre-squash mean, log-std is state independent, and actions
// are bound * tanh(u). Outputs respect the action bounds for any parameters.
struct PolicyNet {
  MlpParams trunk;          // features -> 2 pre-squash means
  Eigen::Vector2d log_std;
  double accel_bound = 3.0;
  double steer_bound = 0.3;
  int pseudo_rows = 5;

  int feature_dim() const { return pseudo_rows * kPseudoFeatures; }
};

inline PolicyNet make_policy(int pseudo_rows, Rng& rng, int hidden = 256) {
  PolicyNet p;
  p.pseudo_rows = pseudo_rows;
  p.trunk = make_mlp({pseudo_rows * kPseudoFeatures, hidden, hidden, 2}, rng, 0.01);
  p.log_std.setConstant(std::log(0.5));
  return p;
}

inline Action squash(const PolicyNet& p, const Eigen::Vector2d& raw) {
  return {p.accel_bound * std::tanh(raw[0]), p.steer_bound * std::tanh(raw[1])};
}

/// Log density of the squashed sample, written in terms of the stored
/// pre-squash draw so recomputation at unchanged parameters is bit-identical.
inline double log_prob_raw(const PolicyNet& p, const Eigen::Vector2d& mean,
                           const Eigen::Vector2d& raw) {
  constexpr double half_log_2pi = 0.91893853320467274178;
  const double bounds[2] = {p.accel_bound, p.steer_bound};
  double lp = 0.0;
  for (int d = 0; d < 2; ++d) {
    const double sigma = std::exp(p.log_std[d]);
    const double z = (raw[d] - mean[d]) / sigma;
    lp += -0.5 * z * z - p.log_std[d] - half_log_2pi;
    lp -= std::log(bounds[d]) + log_one_minus_tanh_sq(raw[d]);
  }
  return lp;
}

/// Entropy of the pre-squash Gaussian (the term the objective regularizes).
inline double policy_entropy(const PolicyNet& p) {
  constexpr double half_log_2pi_e = 1.4189385332046727418;
  return p.log_std.sum() + 2.0 * half_log_2pi_e;
}

struct PolicySample {
  Action action;
  Eigen::Vector2d raw;
  double log_prob = 0.0;
};

inline PolicySample sample_action(const PolicyNet& p,
                                  const Eigen::VectorXd& features, Rng& rng) {
  const Eigen::VectorXd mu = forward(p.trunk, features);
  Eigen::Vector2d raw;
  for (int d = 0; d < 2; ++d)
    raw[d] = mu[d] + std::exp(p.log_std[d]) * rng.normal();
  PolicySample s;
  s.raw = raw;
  s.action = squash(p, raw);
  s.log_prob = log_prob_raw(p, mu.head<2>(), raw);
  return s;
}

inline Action mean_action(const PolicyNet& p, const Eigen::VectorXd& features) {
  const Eigen::VectorXd mu = forward(p.trunk, features);
  return squash(p, Eigen::Vector2d(mu[0], mu[1]));
}

}  // namespace frea
