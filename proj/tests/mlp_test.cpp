#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "frea/checkpoint.hpp"
#include "frea/mlp.hpp"
#include "frea/optim.hpp"
#include "frea/rng.hpp"

using namespace frea;

namespace {

// Independent straightforward evaluation used as the forward-pass oracle.
Eigen::VectorXd reference_forward(const MlpParams& p, const Eigen::VectorXd& x) {
  Eigen::VectorXd a = x;
  for (size_t l = 0; l < p.layer_count(); ++l) {
    Eigen::VectorXd z(p.biases[l].size());
    for (int i = 0; i < z.size(); ++i) {
      double acc = p.biases[l][i];
      for (int j = 0; j < a.size(); ++j) acc += p.weights[l](i, j) * a[j];
      z[i] = acc;
    }
    if (l + 1 < p.layer_count())
      for (int i = 0; i < z.size(); ++i) z[i] = std::max(0.0, z[i]);
    a = z;
  }
  return a;
}

double scalar_loss(const MlpParams& p, const Eigen::VectorXd& x) {
  return forward(p, x).sum();
}

}  // namespace

TEST(Forward, ZeroParamsGiveZeroOutput) {
  MlpParams p;
  p.layer_sizes = {4, 3, 2};
  p.weights = {Eigen::MatrixXd::Zero(3, 4), Eigen::MatrixXd::Zero(2, 3)};
  p.biases = {Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2)};
  const Eigen::VectorXd y = forward(p, Eigen::Vector4d(1.0, -2.0, 3.0, 4.0));
  EXPECT_TRUE(y.isZero());
}

TEST(Forward, IdentitySingleLayer) {
  MlpParams p;
  p.layer_sizes = {3, 3};
  p.weights = {Eigen::MatrixXd::Identity(3, 3)};
  p.biases = {Eigen::VectorXd::Zero(3)};
  const Eigen::Vector3d x(0.5, -1.5, 2.0);
  EXPECT_EQ(forward(p, x), x);
}

TEST(Forward, MatchesReferenceImplementation) {
  Rng rng(11);
  const MlpParams p = make_mlp({6, 64, 64, 1}, rng);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd x(6);
    for (int i = 0; i < 6; ++i) x[i] = rng.uniform(-2.0, 2.0);
    const Eigen::VectorXd got = forward(p, x);
    const Eigen::VectorXd want = reference_forward(p, x);
    ASSERT_EQ(got.size(), want.size());
    for (int i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Forward, PureAndShapeChecked) {
  Rng rng(5);
  const MlpParams p = make_mlp({4, 8, 2}, rng);
  Eigen::VectorXd x(4);
  x << 0.1, -0.2, 0.3, 0.7;
  const Eigen::VectorXd a = forward(p, x);
  const Eigen::VectorXd b = forward(p, x);
  EXPECT_EQ(a, b);
  EXPECT_THROW(forward(p, Eigen::Vector3d(1, 2, 3)), std::invalid_argument);
}

TEST(Backward, LinearUnitGradients) {
  MlpParams p;
  p.layer_sizes = {1, 1};
  p.weights = {Eigen::MatrixXd::Constant(1, 1, 2.0)};
  p.biases = {Eigen::VectorXd::Constant(1, 0.5)};
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 3.0);
  const ForwardTrace t = forward_batch(p, x);
  const MlpGrads g = backward(p, t, Eigen::MatrixXd::Ones(1, 1));
  EXPECT_DOUBLE_EQ(g.weights[0](0, 0), 3.0);  // dL/dw = x
  EXPECT_DOUBLE_EQ(g.biases[0][0], 1.0);      // dL/db = 1
}

TEST(Backward, ZeroUpstreamGivesZeroGrads) {
  Rng rng(3);
  const MlpParams p = make_mlp({5, 16, 2}, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 7);
  const ForwardTrace t = forward_batch(p, x);
  const MlpGrads g = backward(p, t, Eigen::MatrixXd::Zero(2, 7));
  for (size_t l = 0; l < p.layer_count(); ++l) {
    EXPECT_TRUE(g.weights[l].isZero());
    EXPECT_TRUE(g.biases[l].isZero());
  }
}

// Central finite differences (eps = 1e-5) against analytic gradients, probing
// random parameters in every layer.
TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(17);
  MlpParams p = make_mlp({5, 12, 8, 1}, rng);
  Eigen::VectorXd x(5);
  for (int i = 0; i < 5; ++i) x[i] = rng.uniform(-1.5, 1.5);

  const ForwardTrace t = forward_batch(p, x);
  const MlpGrads g = backward(p, t, Eigen::MatrixXd::Ones(1, 1));

  const double eps = 1e-5;
  int probes = 0;
  for (size_t l = 0; l < p.layer_count(); ++l) {
    for (int k = 0; k < 40; ++k) {
      const int i = static_cast<int>(rng.uniform_index(p.weights[l].rows()));
      const int j = static_cast<int>(rng.uniform_index(p.weights[l].cols()));
      const double saved = p.weights[l](i, j);
      p.weights[l](i, j) = saved + eps;
      const double up = scalar_loss(p, x);
      p.weights[l](i, j) = saved - eps;
      const double dn = scalar_loss(p, x);
      p.weights[l](i, j) = saved;
      const double fd = (up - dn) / (2.0 * eps);
      const double an = g.weights[l](i, j);
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      EXPECT_LT(std::abs(fd - an) / denom, 1e-4)
          << "layer " << l << " weight (" << i << "," << j << ")";
      ++probes;
    }
    for (int i = 0; i < p.biases[l].size(); ++i) {
      const double saved = p.biases[l][i];
      p.biases[l][i] = saved + eps;
      const double up = scalar_loss(p, x);
      p.biases[l][i] = saved - eps;
      const double dn = scalar_loss(p, x);
      p.biases[l][i] = saved;
      const double fd = (up - dn) / (2.0 * eps);
      const double denom = std::max({std::abs(fd), std::abs(g.biases[l][i]), 1e-6});
      EXPECT_LT(std::abs(fd - g.biases[l][i]) / denom, 1e-4);
      ++probes;
    }
  }
  EXPECT_GE(probes, 100);
}

TEST(OrthogonalInit, ColumnsOrthonormal) {
  Rng rng(23);
  const Eigen::MatrixXd q = orthogonal_matrix(16, 16, std::sqrt(2.0), rng);
  const Eigen::MatrixXd gram = q * q.transpose();
  EXPECT_TRUE(gram.isApprox(2.0 * Eigen::MatrixXd::Identity(16, 16), 1e-9));

  const Eigen::MatrixXd wide = orthogonal_matrix(4, 10, 1.0, rng);
  EXPECT_TRUE((wide * wide.transpose())
                  .isApprox(Eigen::MatrixXd::Identity(4, 4), 1e-9));
}

TEST(Adam, ZeroGradIsIdentityFromFreshState) {
  Rng rng(9);
  MlpParams p = make_mlp({3, 4, 1}, rng);
  const MlpParams before = p;
  OptimizerState o = make_optimizer(p, {1e-3, 100});
  adam_step(o, p, zero_grads(p));
  for (size_t l = 0; l < p.layer_count(); ++l) {
    EXPECT_EQ(p.weights[l], before.weights[l]);
    EXPECT_EQ(p.biases[l], before.biases[l]);
  }
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  MlpParams p;
  p.layer_sizes = {1, 1};
  p.weights = {Eigen::MatrixXd::Zero(1, 1)};
  p.biases = {Eigen::VectorXd::Zero(1)};
  OptimizerState o = make_optimizer(p, {0.01, 1000000});
  MlpGrads g = zero_grads(p);
  g.weights[0](0, 0) = 0.37;
  g.biases[0][0] = -4.2;
  adam_step(o, p, g);
  EXPECT_NEAR(p.weights[0](0, 0), -0.01, 1e-6);
  EXPECT_NEAR(p.biases[0][0], 0.01, 1e-6);
}

TEST(Adam, ConvergesOnQuadratic) {
  // Minimize (w - 3)^2 from w = 0 with lr 0.1.
  MlpParams p;
  p.layer_sizes = {1, 1};
  p.weights = {Eigen::MatrixXd::Zero(1, 1)};
  p.biases = {Eigen::VectorXd::Zero(1)};
  AdamConfig cfg;
  cfg.base_lr = 0.1;
  cfg.total_steps = 1000000;  // effectively constant lr over 200 steps
  OptimizerState o = make_optimizer(p, cfg);
  for (int i = 0; i < 200; ++i) {
    MlpGrads g = zero_grads(p);
    g.weights[0](0, 0) = 2.0 * (p.weights[0](0, 0) - 3.0);
    adam_step(o, p, g);
  }
  EXPECT_NEAR(p.weights[0](0, 0), 3.0, 1e-2);
}

TEST(Adam, RejectsNonFiniteGradients) {
  Rng rng(2);
  MlpParams p = make_mlp({2, 2}, rng);
  const MlpParams before = p;
  OptimizerState o = make_optimizer(p, {1e-3, 10});
  MlpGrads g = zero_grads(p);
  g.weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(adam_step(o, p, g), std::invalid_argument);
  EXPECT_EQ(o.step, 0);
  EXPECT_EQ(p.weights[0], before.weights[0]);
}

TEST(LinearLr, AnnealSchedule) {
  MlpParams p;
  p.layer_sizes = {1, 1};
  p.weights = {Eigen::MatrixXd::Zero(1, 1)};
  p.biases = {Eigen::VectorXd::Zero(1)};
  OptimizerState o = make_optimizer(p, {3e-4, 1000});
  EXPECT_DOUBLE_EQ(linear_lr(o), 3e-4);
  o.step = 500;
  EXPECT_DOUBLE_EQ(linear_lr(o), 1.5e-4);
  o.step = 1000;
  EXPECT_DOUBLE_EQ(linear_lr(o), 0.0);
}

TEST(SoftUpdate, BlendAndEdgeCases) {
  Rng rng(4);
  MlpParams target = make_mlp({2, 3, 1}, rng);
  const MlpParams online = make_mlp({2, 3, 1}, rng);

  MlpParams t0 = target;
  soft_update(t0, online, 0.0);
  EXPECT_EQ(t0.weights[0], target.weights[0]);

  MlpParams t1 = target;
  soft_update(t1, online, 1.0);
  EXPECT_EQ(t1.weights[0], online.weights[0]);

  MlpParams zeros = target;
  for (auto& w : zeros.weights) w.setZero();
  for (auto& b : zeros.biases) b.setZero();
  MlpParams ones = zeros;
  for (auto& w : ones.weights) w.setOnes();
  for (auto& b : ones.biases) b.setOnes();
  soft_update(zeros, ones, 5e-3);
  EXPECT_DOUBLE_EQ(zeros.weights[0](0, 0), 0.005);
  EXPECT_DOUBLE_EQ(zeros.biases[1][0], 0.005);

  // Idempotent when target == online.
  MlpParams same = online;
  soft_update(same, online, 0.37);
  for (size_t l = 0; l < same.layer_count(); ++l)
    EXPECT_TRUE(same.weights[l].isApprox(online.weights[l], 1e-15));

  MlpParams other = make_mlp({3, 3, 1}, rng);
  EXPECT_THROW(soft_update(other, online, 0.5), std::invalid_argument);
}

TEST(Checkpoint, BitExactRoundTrip) {
  namespace fs = std::filesystem;
  Rng rng(77);
  MlpParams p = make_mlp({6, 32, 32, 2}, rng);
  OptimizerState o = make_optimizer(p, {3e-4, 12345});
  // Dirty the optimizer state so the round trip is non-trivial.
  for (int i = 0; i < 5; ++i) {
    MlpGrads g = zero_grads(p);
    for (auto& w : g.weights) w.setRandom();
    for (auto& b : g.biases) b.setRandom();
    adam_step(o, p, g);
  }

  const std::string path = (fs::temp_directory_path() / "frea_ckpt_test.bin").string();
  {
    BinaryWriter w(path);
    w.str("test-ckpt-1");
    write_mlp(w, p);
    write_optimizer(w, o);
    w.str(rng.serialize());
  }
  BinaryReader r(path);
  expect_magic(r, "test-ckpt-1");
  const MlpParams p2 = read_mlp(r);
  const OptimizerState o2 = read_optimizer(r);
  Rng rng2;
  rng2.deserialize(r.str());

  ASSERT_EQ(p2.layer_sizes, p.layer_sizes);
  for (size_t l = 0; l < p.layer_count(); ++l) {
    EXPECT_EQ(p2.weights[l], p.weights[l]);
    EXPECT_EQ(p2.biases[l], p.biases[l]);
    EXPECT_EQ(o2.mw[l], o.mw[l]);
    EXPECT_EQ(o2.vw[l], o.vw[l]);
  }
  EXPECT_EQ(o2.step, o.step);
  EXPECT_EQ(o2.cfg.total_steps, o.cfg.total_steps);
  EXPECT_EQ(rng2.next_u64(), rng.next_u64());

  BinaryReader bad(path);
  EXPECT_THROW(expect_magic(bad, "other-magic"), std::runtime_error);
  fs::remove(path);
}
