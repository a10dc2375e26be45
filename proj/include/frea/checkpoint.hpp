#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "frea/mlp.hpp"
#include "frea/optim.hpp"

namespace frea {

// Little-endian binary container used for all checkpoints. Doubles are stored
// as raw IEEE-754 bit patterns, so round trips are bit-exact.

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path)
      : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write checkpoint: " + path);
  }

  void u64(uint64_t v) { raw(&v, sizeof(v)); }
  void i64(int64_t v) { raw(&v, sizeof(v)); }
  void i32(int32_t v) { raw(&v, sizeof(v)); }
  void f64(double v) { raw(&v, sizeof(v)); }

  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }

  void doubles(const double* p, size_t n) {
    u64(n);
    raw(p, n * sizeof(double));
  }

  void matrix(const Eigen::MatrixXd& m) {
    i64(m.rows());
    i64(m.cols());
    raw(m.data(), static_cast<size_t>(m.size()) * sizeof(double));
  }

  void vector(const Eigen::VectorXd& v) {
    i64(v.size());
    raw(v.data(), static_cast<size_t>(v.size()) * sizeof(double));
  }

 private:
  void raw(const void* p, size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw std::runtime_error("checkpoint write failed");
  }
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path)
      : in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open checkpoint: " + path);
  }

  uint64_t u64() { uint64_t v; raw(&v, sizeof(v)); return v; }
  int64_t i64() { int64_t v; raw(&v, sizeof(v)); return v; }
  int32_t i32() { int32_t v; raw(&v, sizeof(v)); return v; }
  double f64() { double v; raw(&v, sizeof(v)); return v; }

  std::string str() {
    const uint64_t n = u64();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

  Eigen::MatrixXd matrix() {
    const int64_t r = i64();
    const int64_t c = i64();
    Eigen::MatrixXd m(r, c);
    raw(m.data(), static_cast<size_t>(m.size()) * sizeof(double));
    return m;
  }

  Eigen::VectorXd vector() {
    const int64_t n = i64();
    Eigen::VectorXd v(n);
    raw(v.data(), static_cast<size_t>(v.size()) * sizeof(double));
    return v;
  }

 private:
  void raw(void* p, size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw std::runtime_error("checkpoint truncated or unreadable");
  }
  std::ifstream in_;
};

inline void expect_magic(BinaryReader& r, const std::string& magic) {
  const std::string got = r.str();
  if (got != magic)
    throw std::runtime_error("checkpoint type mismatch: expected '" + magic +
                             "', found '" + got + "'");
}

inline void write_mlp(BinaryWriter& w, const MlpParams& p) {
  w.u64(p.layer_sizes.size());
  for (const int s : p.layer_sizes) w.i32(s);
  for (size_t l = 0; l < p.layer_count(); ++l) {
    w.matrix(p.weights[l]);
    w.vector(p.biases[l]);
  }
}

inline MlpParams read_mlp(BinaryReader& r) {
  MlpParams p;
  const uint64_t n = r.u64();
  for (uint64_t i = 0; i < n; ++i) p.layer_sizes.push_back(r.i32());
  for (size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
    p.weights.push_back(r.matrix());
    p.biases.push_back(r.vector());
  }
  return p;
}

inline void write_optimizer(BinaryWriter& w, const OptimizerState& o) {
  w.f64(o.cfg.base_lr);
  w.i64(o.cfg.total_steps);
  w.f64(o.cfg.beta1);
  w.f64(o.cfg.beta2);
  w.f64(o.cfg.eps);
  w.i64(o.step);
  w.u64(o.mw.size());
  for (size_t l = 0; l < o.mw.size(); ++l) {
    w.matrix(o.mw[l]);
    w.matrix(o.vw[l]);
    w.vector(o.mb[l]);
    w.vector(o.vb[l]);
  }
}

inline OptimizerState read_optimizer(BinaryReader& r) {
  OptimizerState o;
  o.cfg.base_lr = r.f64();
  o.cfg.total_steps = r.i64();
  o.cfg.beta1 = r.f64();
  o.cfg.beta2 = r.f64();
  o.cfg.eps = r.f64();
  o.step = r.i64();
  const uint64_t n = r.u64();
  for (uint64_t l = 0; l < n; ++l) {
    o.mw.push_back(r.matrix());
    o.vw.push_back(r.matrix());
    o.mb.push_back(r.vector());
    o.vb.push_back(r.vector());
  }
  return o;
}

}  // namespace frea
