#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "frea/mlp.hpp"

namespace frea {

// Adam with linearly annealed learning rate (base -> 0 over total_steps).

struct AdamConfig {
  double base_lr = 3e-4;
  int64_t total_steps = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-5;
};

struct OptimizerState {
  AdamConfig cfg;
  int64_t step = 0;
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
};

inline OptimizerState make_optimizer(const MlpParams& p, const AdamConfig& cfg) {
  OptimizerState o;
  o.cfg = cfg;
  for (size_t l = 0; l < p.layer_count(); ++l) {
    o.mw.push_back(Eigen::MatrixXd::Zero(p.weights[l].rows(), p.weights[l].cols()));
    o.vw.push_back(Eigen::MatrixXd::Zero(p.weights[l].rows(), p.weights[l].cols()));
    o.mb.push_back(Eigen::VectorXd::Zero(p.biases[l].size()));
    o.vb.push_back(Eigen::VectorXd::Zero(p.biases[l].size()));
  }
  return o;
}

/// Current annealed learning rate: base_lr * (1 - step/total), floored at 0.
inline double linear_lr(const OptimizerState& o) {
  const double frac = static_cast<double>(o.step) / static_cast<double>(o.cfg.total_steps);
  return std::max(0.0, o.cfg.base_lr * (1.0 - frac));
}

namespace detail {
template <typename Arr>
void adam_update(Arr& param, const Arr& grad, Arr& m, Arr& v, double lr,
                 const AdamConfig& c, int64_t t) {
  m = c.beta1 * m + (1.0 - c.beta1) * grad;
  v.array() = c.beta2 * v.array() + (1.0 - c.beta2) * grad.array().square();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
}
}  // namespace detail

/// One Adam step over every parameter tensor. Rejects non-finite gradients
/// without touching the parameters or the optimizer state.
inline void adam_step(OptimizerState& o, MlpParams& p, const MlpGrads& g) {
  if (g.weights.size() != p.layer_count())
    throw std::invalid_argument("adam_step: gradient layer count mismatch");
  for (size_t l = 0; l < p.layer_count(); ++l) {
    if (g.weights[l].rows() != p.weights[l].rows() ||
        g.weights[l].cols() != p.weights[l].cols() ||
        g.biases[l].size() != p.biases[l].size())
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    if (!g.weights[l].allFinite() || !g.biases[l].allFinite())
      throw std::invalid_argument("adam_step: non-finite gradient");
  }
  const double lr = linear_lr(o);
  o.step += 1;
  for (size_t l = 0; l < p.layer_count(); ++l) {
    detail::adam_update(p.weights[l], g.weights[l], o.mw[l], o.vw[l], lr, o.cfg, o.step);
    detail::adam_update(p.biases[l], g.biases[l], o.mb[l], o.vb[l], lr, o.cfg, o.step);
  }
}

/// Adam state for a single free vector (e.g. a learned log-std), sharing the
/// step counter and schedule of a companion OptimizerState.
struct VecOptimizer {
  Eigen::VectorXd m, v;
};

inline VecOptimizer make_vec_optimizer(const Eigen::VectorXd& param) {
  return {Eigen::VectorXd::Zero(param.size()), Eigen::VectorXd::Zero(param.size())};
}

inline void adam_step_vec(VecOptimizer& o, Eigen::VectorXd& param,
                          const Eigen::VectorXd& grad, double lr,
                          const AdamConfig& cfg, int64_t t) {
  if (grad.size() != param.size())
    throw std::invalid_argument("adam_step_vec: shape mismatch");
  if (!grad.allFinite())
    throw std::invalid_argument("adam_step_vec: non-finite gradient");
  detail::adam_update(param, grad, o.m, o.v, lr, cfg, t);
}

/// Polyak blend: target' = (1-rho)*target + rho*online, element-wise.
inline void soft_update(MlpParams& target, const MlpParams& online, double rho) {
  if (target.layer_sizes != online.layer_sizes)
    throw std::invalid_argument("soft_update: shape mismatch");
  for (size_t l = 0; l < target.layer_count(); ++l) {
    target.weights[l] = (1.0 - rho) * target.weights[l] + rho * online.weights[l];
    target.biases[l] = (1.0 - rho) * target.biases[l] + rho * online.biases[l];
  }
}

}  // namespace frea
