#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "frea/checkpoint.hpp"

namespace frea {

// Exact discounted reachability solver on a regular grid. The backup
//   V(s) <- min_a [ (1-gamma) h(s) + gamma * max{ h(s), V(f(s,a)) } ]
// is evaluated in the algebraically equivalent form h + gamma*(m - h) with
// m = max(h, V'), which keeps V(s) >= h(s) exact in floating point.

constexpr int kMaxGridDims = 4;

struct GridAxis {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  int n = 2;

  double step() const { return n > 1 ? (hi - lo) / (n - 1) : 0.0; }
  double coord(int i) const { return lo + step() * i; }
};

struct FeasibleValueGrid {
  std::vector<GridAxis> axes;
  std::vector<double> values;   // row-major, last axis fastest
  std::vector<double> h;        // constraint per cell
  double gamma = 0.98;
  std::vector<double> action_set;
  double iteration_residual = 0.0;
  int sweeps = 0;

  int dims() const { return static_cast<int>(axes.size()); }

  size_t cell_count() const {
    size_t n = 1;
    for (const auto& a : axes) n *= static_cast<size_t>(a.n);
    return n;
  }

  std::array<size_t, kMaxGridDims> strides() const {
    std::array<size_t, kMaxGridDims> s{};
    size_t acc = 1;
    for (int d = dims() - 1; d >= 0; --d) {
      s[static_cast<size_t>(d)] = acc;
      acc *= static_cast<size_t>(axes[static_cast<size_t>(d)].n);
    }
    return s;
  }

  size_t flat_index(const int* idx) const {
    const auto s = strides();
    size_t f = 0;
    for (int d = 0; d < dims(); ++d) f += static_cast<size_t>(idx[d]) * s[static_cast<size_t>(d)];
    return f;
  }

  void unflatten(size_t flat, int* idx) const {
    const auto s = strides();
    for (int d = 0; d < dims(); ++d) {
      idx[d] = static_cast<int>(flat / s[static_cast<size_t>(d)]);
      flat %= s[static_cast<size_t>(d)];
    }
  }

  void cell_coords(size_t flat, double* x) const {
    int idx[kMaxGridDims];
    unflatten(flat, idx);
    for (int d = 0; d < dims(); ++d) x[d] = axes[static_cast<size_t>(d)].coord(idx[d]);
  }
};

/// Multilinear interpolation with border clamping.
inline double interpolate(const FeasibleValueGrid& g, const double* x) {
  const int dims = g.dims();
  int i0[kMaxGridDims];
  double frac[kMaxGridDims];
  for (int d = 0; d < dims; ++d) {
    const GridAxis& a = g.axes[static_cast<size_t>(d)];
    if (a.n == 1) {
      i0[d] = 0;
      frac[d] = 0.0;
      continue;
    }
    double u = (x[d] - a.lo) / a.step();
    u = std::clamp(u, 0.0, static_cast<double>(a.n - 1));
    int i = std::min(static_cast<int>(u), a.n - 2);
    i0[d] = i;
    frac[d] = u - i;
  }
  const auto strides = g.strides();
  size_t base = 0;
  for (int d = 0; d < dims; ++d) base += static_cast<size_t>(i0[d]) * strides[static_cast<size_t>(d)];
  double acc = 0.0;
  const int corners = 1 << dims;
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    size_t off = 0;
    for (int d = 0; d < dims; ++d) {
      if (c & (1 << d)) {
        w *= frac[d];
        off += strides[static_cast<size_t>(d)];
      } else {
        w *= 1.0 - frac[d];
      }
    }
    if (w != 0.0) acc += w * g.values[base + off];
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

struct GridProblem {
  std::vector<GridAxis> axes;
  double gamma = 0.98;
  std::vector<double> actions;
  std::function<double(const double*)> h_fn;
  std::function<void(const double*, double, double*)> step_fn;
};

struct SolveOptions {
  double tol = 1e-6;
  int max_sweeps = 10000;
  int threads = 0;  // 0: hardware concurrency
  std::vector<double>* residual_history = nullptr;
};

struct GridSolveError : std::runtime_error {
  double residual;
  GridSolveError(const std::string& what, double res)
      : std::runtime_error(what), residual(res) {}
};

namespace detail {

// Per (cell, action) successor records. When every successor lands on a node
// (the aligned default instance), only `node` is populated.
struct SuccessorTable {
  std::vector<int64_t> node;   // corner-0 flat index
  std::vector<uint8_t> exact;  // 1 when the successor snaps to `node`
  std::vector<double> frac;    // dims fractions per record when any inexact
  bool all_exact = true;
};

inline SuccessorTable build_successors(const GridProblem& prob,
                                       const FeasibleValueGrid& g) {
  const int dims = g.dims();
  const size_t cells = g.cell_count();
  const size_t n_actions = prob.actions.size();
  const auto strides = g.strides();
  constexpr double snap_eps = 1e-9;

  SuccessorTable t;
  t.node.resize(cells * n_actions);
  t.exact.resize(cells * n_actions);

  double x[kMaxGridDims], nx[kMaxGridDims];
  for (size_t c = 0; c < cells; ++c) {
    g.cell_coords(c, x);
    for (size_t a = 0; a < n_actions; ++a) {
      prob.step_fn(x, prob.actions[a], nx);
      size_t base = 0;
      bool exact = true;
      double frac[kMaxGridDims] = {0, 0, 0, 0};
      for (int d = 0; d < dims; ++d) {
        const GridAxis& ax = g.axes[static_cast<size_t>(d)];
        if (ax.n == 1) continue;
        double u = (nx[d] - ax.lo) / ax.step();
        u = std::clamp(u, 0.0, static_cast<double>(ax.n - 1));
        int i = std::min(static_cast<int>(u), ax.n - 2);
        double f = u - i;
        if (f < snap_eps) {
          f = 0.0;
        } else if (f > 1.0 - snap_eps) {
          f = 0.0;
          ++i;
        } else {
          exact = false;
        }
        frac[d] = f;
        base += static_cast<size_t>(i) * strides[static_cast<size_t>(d)];
      }
      const size_t r = c * n_actions + a;
      t.node[r] = static_cast<int64_t>(base);
      t.exact[r] = exact ? 1 : 0;
      if (!exact && t.frac.empty()) {
        t.frac.assign(t.node.size() * static_cast<size_t>(dims), 0.0);
        t.all_exact = false;
      }
      if (!t.frac.empty())
        for (int d = 0; d < dims; ++d)
          t.frac[r * static_cast<size_t>(dims) + static_cast<size_t>(d)] = frac[d];
    }
  }
  return t;
}

inline double gather(const std::vector<double>& v, const SuccessorTable& t,
                     size_t rec, int dims,
                     const std::array<size_t, kMaxGridDims>& strides) {
  if (t.exact[rec]) return v[static_cast<size_t>(t.node[rec])];
  const double* frac = &t.frac[rec * static_cast<size_t>(dims)];
  const size_t base = static_cast<size_t>(t.node[rec]);
  double acc = 0.0;
  const int corners = 1 << dims;
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    size_t off = 0;
    for (int d = 0; d < dims; ++d) {
      if (c & (1 << d)) {
        w *= frac[d];
        off += strides[static_cast<size_t>(d)];
      } else {
        w *= 1.0 - frac[d];
      }
    }
    if (w != 0.0) acc += w * v[base + off];
  }
  return acc;
}

}  // namespace detail

/// Solves for the optimal feasible value function on the grid by Jacobi value
/// iteration. Throws GridSolveError when the residual does not reach `tol`
/// within `max_sweeps`.
inline FeasibleValueGrid grid_value_iteration(const GridProblem& prob,
                                              const SolveOptions& opt = {}) {
  if (prob.gamma <= 0.0 || prob.gamma >= 1.0)
    throw std::invalid_argument("grid_value_iteration: gamma must be in (0,1)");
  if (prob.axes.empty() || prob.axes.size() > kMaxGridDims)
    throw std::invalid_argument("grid_value_iteration: need 1..4 axes");
  if (prob.actions.empty())
    throw std::invalid_argument("grid_value_iteration: empty action set");

  FeasibleValueGrid g;
  g.axes = prob.axes;
  g.gamma = prob.gamma;
  g.action_set = prob.actions;
  const size_t cells = g.cell_count();
  g.h.resize(cells);
  double x[kMaxGridDims];
  for (size_t c = 0; c < cells; ++c) {
    g.cell_coords(c, x);
    g.h[c] = prob.h_fn(x);
  }
  g.values = g.h;  // start from the constraint itself

  const detail::SuccessorTable succ = detail::build_successors(prob, g);
  const auto strides = g.strides();
  const int dims = g.dims();
  const size_t n_actions = prob.actions.size();
  const double gamma = prob.gamma;

  int n_threads = opt.threads > 0
                      ? opt.threads
                      : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  n_threads = std::min<int>(n_threads, 8);

  std::vector<double> next(cells);
  const auto sweep_range = [&](const std::vector<double>& old, std::vector<double>& out,
                               size_t begin, size_t end) {
    double local_res = 0.0;
    for (size_t c = begin; c < end; ++c) {
      const double hc = g.h[c];
      double best = std::numeric_limits<double>::infinity();
      const size_t r0 = c * n_actions;
      for (size_t a = 0; a < n_actions; ++a) {
        const double v = detail::gather(old, succ, r0 + a, dims, strides);
        if (v < best) best = v;
      }
      const double m = best > hc ? best : hc;
      const double q = hc + gamma * (m - hc);
      out[c] = q;
      const double diff = std::abs(q - old[c]);
      if (diff > local_res) local_res = diff;
    }
    return local_res;
  };

  double residual = std::numeric_limits<double>::infinity();
  int sweep = 0;
  for (; sweep < opt.max_sweeps; ++sweep) {
    double res = 0.0;
    if (n_threads <= 1 || cells < 4096) {
      res = sweep_range(g.values, next, 0, cells);
    } else {
      std::vector<std::thread> pool;
      std::vector<double> part(static_cast<size_t>(n_threads), 0.0);
      const size_t chunk = (cells + static_cast<size_t>(n_threads) - 1) / static_cast<size_t>(n_threads);
      for (int tno = 0; tno < n_threads; ++tno) {
        const size_t b = static_cast<size_t>(tno) * chunk;
        const size_t e = std::min(cells, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&, tno, b, e]() { part[static_cast<size_t>(tno)] = sweep_range(g.values, next, b, e); });
      }
      for (auto& th : pool) th.join();
      for (const double p : part) res = std::max(res, p);
    }
    g.values.swap(next);
    residual = res;
    if (opt.residual_history != nullptr) opt.residual_history->push_back(res);
    if (res <= opt.tol) {
      ++sweep;
      break;
    }
  }
  if (residual > opt.tol)
    throw GridSolveError("grid value iteration did not converge: residual " +
                             std::to_string(residual) + " after " +
                             std::to_string(sweep) + " sweeps",
                         residual);
  g.iteration_residual = residual;
  g.sweeps = sweep;
  return g;
}

// ---------------------------------------------------------------------------
// One-step quantities on a solved grid
// ---------------------------------------------------------------------------

/// Discounted one-step backup Q(s,a) on the converged grid.
inline double q_backup(const FeasibleValueGrid& g, const GridProblem& prob,
                       const double* x, double action) {
  double nx[kMaxGridDims];
  prob.step_fn(x, action, nx);
  const double hs = prob.h_fn(x);
  const double vn = interpolate(g, nx);
  const double m = vn > hs ? vn : hs;
  return hs + g.gamma * (m - hs);
}

/// The case-split form of the action-value using only h at both states and
/// V at the successor: V(s') when h(s') >= h(s), max{h(s), V(s')} otherwise,
/// discounted the same way as the backup.
inline double lemma_q(double h_s, double h_next, double v_next, double gamma) {
  const double core = h_next >= h_s ? v_next
                                    : (v_next > h_s ? v_next : h_s);
  return h_s + gamma * (core - h_s);
}

// ---------------------------------------------------------------------------
// Longitudinal stopping instance
// ---------------------------------------------------------------------------

// One-lane car-following instance: state (bumper gap, AV speed, hazard
// speed), hazard speed constant, AV accelerations {-3, 0, 3}. Axis steps are
// chosen so every successor lands exactly on a node (speed step = accel*dt,
// gap step = speed step * dt), which keeps the solver free of interpolation
// error across the sparse-h discontinuity.
struct LongitudinalParams {
  double gap_max = 30.0;
  double speed_max = 12.0;
  double dt = 0.1;
  double accel = 3.0;
  double d_th = 0.1;
  double violation_m = 18.0;
  double gamma = 0.98;
  int hazard_cells = 41;  // 1 pins the hazard to hazard_lo
  double hazard_lo = 0.0;
};

inline GridProblem longitudinal_problem(const LongitudinalParams& p = {}) {
  GridProblem prob;
  const double v_step = p.accel * p.dt;          // 0.3
  const double g_step = v_step * p.dt;           // 0.03
  const int n_gap = static_cast<int>(std::lround(p.gap_max / g_step)) + 1;
  const int n_speed = static_cast<int>(std::lround(p.speed_max / v_step)) + 1;
  const double hazard_hi =
      p.hazard_cells > 1 ? p.speed_max : p.hazard_lo;
  prob.axes = {
      {"gap", 0.0, p.gap_max, n_gap},
      {"av_speed", 0.0, p.speed_max, n_speed},
      {"hazard_speed", p.hazard_lo, hazard_hi, p.hazard_cells},
  };
  prob.gamma = p.gamma;
  prob.actions = {-p.accel, 0.0, p.accel};
  const double d_th = p.d_th;
  const double viol = p.violation_m;
  prob.h_fn = [d_th, viol](const double* x) {
    return x[0] <= d_th ? viol : -1.0;
  };
  const double dt = p.dt;
  const double gap_max = p.gap_max;
  const double speed_max = p.speed_max;
  prob.step_fn = [dt, gap_max, speed_max](const double* x, double a, double* nx) {
    nx[1] = std::clamp(x[1] + a * dt, 0.0, speed_max);
    nx[0] = std::clamp(x[0] + (x[2] - x[1]) * dt, 0.0, gap_max);
    nx[2] = x[2];
  };
  return prob;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline void save_grid(const FeasibleValueGrid& g, const std::string& path) {
  BinaryWriter w(path);
  w.str("frea-grid-1");
  w.u64(g.axes.size());
  for (const auto& a : g.axes) {
    w.str(a.name);
    w.f64(a.lo);
    w.f64(a.hi);
    w.i32(a.n);
  }
  w.f64(g.gamma);
  w.u64(g.action_set.size());
  for (const double a : g.action_set) w.f64(a);
  w.f64(g.iteration_residual);
  w.i32(g.sweeps);
  w.doubles(g.values.data(), g.values.size());
  w.doubles(g.h.data(), g.h.size());
}

inline FeasibleValueGrid load_grid(const std::string& path) {
  BinaryReader r(path);
  expect_magic(r, "frea-grid-1");
  FeasibleValueGrid g;
  const uint64_t n_axes = r.u64();
  for (uint64_t i = 0; i < n_axes; ++i) {
    GridAxis a;
    a.name = r.str();
    a.lo = r.f64();
    a.hi = r.f64();
    a.n = r.i32();
    g.axes.push_back(std::move(a));
  }
  g.gamma = r.f64();
  const uint64_t n_act = r.u64();
  for (uint64_t i = 0; i < n_act; ++i) g.action_set.push_back(r.f64());
  g.iteration_residual = r.f64();
  g.sweeps = r.i32();
  const uint64_t nv = r.u64();
  g.values.resize(nv);
  for (uint64_t i = 0; i < nv; ++i) g.values[i] = r.f64();
  const uint64_t nh = r.u64();
  g.h.resize(nh);
  for (uint64_t i = 0; i < nh; ++i) g.h[i] = r.f64();
  return g;
}

}  // namespace frea
