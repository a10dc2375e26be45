#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "frea/rng.hpp"

namespace frea {

// Dense multilayer perceptron with rectifier hidden layers and a linear
// output, in 64-bit floats throughout. weights[l] has shape
// (layer_sizes[l+1] x layer_sizes[l]).
struct MlpParams {
  std::vector<int> layer_sizes;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  size_t layer_count() const { return weights.size(); }
};

struct MlpGrads {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

inline MlpGrads zero_grads(const MlpParams& p) {
  MlpGrads g;
  for (size_t l = 0; l < p.layer_count(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Zero(p.weights[l].rows(), p.weights[l].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(p.biases[l].size()));
  }
  return g;
}

/// Orthogonal matrix (rows x cols) scaled by gain, from a QR decomposition of
/// a standard normal draw.
inline Eigen::MatrixXd orthogonal_matrix(int rows, int cols, double gain, Rng& rng) {
  const bool wide = rows < cols;
  const int r = wide ? cols : rows;
  const int c = wide ? rows : cols;
  Eigen::MatrixXd g(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
  const Eigen::MatrixXd rmat = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
  for (int j = 0; j < c; ++j)
    if (rmat(j, j) < 0.0) q.col(j) = -q.col(j);
  if (wide) return gain * q.transpose();
  return gain * q;
}

/// Builds an MLP with orthogonal weights (sqrt(2) gain on hidden layers,
/// `output_gain` on the last layer) and zero biases.
inline MlpParams make_mlp(const std::vector<int>& layer_sizes, Rng& rng,
                          double output_gain = 1.0) {
  if (layer_sizes.size() < 2)
    throw std::invalid_argument("mlp needs at least input and output sizes");
  MlpParams p;
  p.layer_sizes = layer_sizes;
  for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const bool last = (l + 2 == layer_sizes.size());
    const double gain = last ? output_gain : std::sqrt(2.0);
    p.weights.push_back(
        orthogonal_matrix(layer_sizes[l + 1], layer_sizes[l], gain, rng));
    p.biases.push_back(Eigen::VectorXd::Zero(layer_sizes[l + 1]));
  }
  return p;
}

inline void check_input(const MlpParams& p, Eigen::Index rows) {
  if (rows != p.input_size())
    throw std::invalid_argument("mlp input size mismatch: got " +
                                std::to_string(rows) + ", expected " +
                                std::to_string(p.input_size()));
}

/// Activations retained for the backward pass. acts[0] is the input batch,
/// acts[l] the post-rectifier output of layer l-1, acts.back() the output.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> acts;
  const Eigen::MatrixXd& output() const { return acts.back(); }
};

/// Batched forward pass; columns are samples.
inline ForwardTrace forward_batch(const MlpParams& p, const Eigen::MatrixXd& x) {
  check_input(p, x.rows());
  ForwardTrace t;
  t.acts.reserve(p.layer_count() + 1);
  t.acts.push_back(x);
  for (size_t l = 0; l < p.layer_count(); ++l) {
    Eigen::MatrixXd z = (p.weights[l] * t.acts.back()).colwise() + p.biases[l];
    if (l + 1 < p.layer_count()) z = z.cwiseMax(0.0);
    t.acts.push_back(std::move(z));
  }
  return t;
}

inline Eigen::VectorXd forward(const MlpParams& p, const Eigen::VectorXd& x) {
  return forward_batch(p, x).output().col(0);
}

/// Exact reverse-mode gradients of forward_batch with respect to all
/// parameters, given dL/d(output) for each sample column.
inline MlpGrads backward(const MlpParams& p, const ForwardTrace& t,
                         const Eigen::MatrixXd& upstream) {
  if (upstream.rows() != p.output_size() ||
      upstream.cols() != t.output().cols())
    throw std::invalid_argument("mlp upstream gradient shape mismatch");
  MlpGrads g;
  g.weights.resize(p.layer_count());
  g.biases.resize(p.layer_count());
  Eigen::MatrixXd delta = upstream;
  for (size_t l = p.layer_count(); l-- > 0;) {
    g.weights[l] = delta * t.acts[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = (p.weights[l].transpose() * delta).eval();
      delta.array() *= (t.acts[l].array() > 0.0).cast<double>();
    }
  }
  return g;
}

inline void accumulate(MlpGrads& into, const MlpGrads& g, double scale = 1.0) {
  for (size_t l = 0; l < into.weights.size(); ++l) {
    into.weights[l] += scale * g.weights[l];
    into.biases[l] += scale * g.biases[l];
  }
}

}  // namespace frea
