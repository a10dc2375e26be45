#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "frea/grid.hpp"
#include "frea/mlp.hpp"
#include "frea/optim.hpp"
#include "frea/rng.hpp"
#include "frea/world.hpp"

namespace frea {

// ---------------------------------------------------------------------------
// Scalar formulas
// ---------------------------------------------------------------------------

/// Reversed expectile loss |tau - I(u > 0)| * u^2. With u = Q - V and tau in
/// (0.5, 1) this pulls V toward the lower expectile of Q, approximating the
/// minimum over actions.
inline double expectile_loss(double u, double tau) {
  const double w = std::abs(tau - (u > 0.0 ? 1.0 : 0.0));
  return w * u * u;
}

/// Discounted action-value regression target (1-gamma)*h + gamma*max{h, V'}.
/// Terminal transitions bootstrap with h itself. Evaluated as
/// h + gamma*(max{h, V'} - h), which is exact when the max collapses to h.
inline double qh_target(double h, double v_next, double gamma, bool done) {
  const double v = done ? h : v_next;
  const double m = v > h ? v : h;
  return h + gamma * (m - h);
}

/// Membership in the largest feasible region: the sub-zero level set,
/// boundary included.
inline bool lfr_membership(double v_value) { return v_value <= 0.0; }

/// Feasibility advantage from current/next state quantities: V(s') - V(s)
/// when h does not decrease, max{h(s), V(s')} - V(s) otherwise.
inline double feasibility_advantage(double h_s, double h_next, double v_s,
                                    double v_next) {
  if (h_next >= h_s) return v_next - v_s;
  return (v_next > h_s ? v_next : h_s) - v_s;
}

// ---------------------------------------------------------------------------
// Transition dataset
// ---------------------------------------------------------------------------

struct TransitionRecord {
  PseudoState pseudo_state;
  Action av_action;
  PseudoState next_pseudo_state;
  double h = -1.0;
  double h_next = -1.0;
  bool done = false;
  std::string source_policy;
};

inline void save_dataset(const std::vector<TransitionRecord>& data,
                         const std::string& path) {
  if (data.empty()) throw std::invalid_argument("refusing to write empty dataset");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  const auto rows = data.front().pseudo_state.rows();
  const auto cols = data.front().pseudo_state.cols();
  out << "# frea-dataset 1 rows=" << rows << " cols=" << cols << "\n";
  char buf[32];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf << " ";
  };
  for (const auto& r : data) {
    for (int i = 0; i < r.pseudo_state.rows(); ++i)
      for (int j = 0; j < r.pseudo_state.cols(); ++j) put(r.pseudo_state(i, j));
    put(r.av_action.accel);
    put(r.av_action.steer);
    for (int i = 0; i < r.next_pseudo_state.rows(); ++i)
      for (int j = 0; j < r.next_pseudo_state.cols(); ++j)
        put(r.next_pseudo_state(i, j));
    put(r.h);
    put(r.h_next);
    out << (r.done ? 1 : 0) << " " << r.source_policy << "\n";
  }
}

inline std::vector<TransitionRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::string header;
  if (!std::getline(in, header) || header.rfind("# frea-dataset 1", 0) != 0)
    throw std::runtime_error("dataset missing version header: " + path);
  long rows = 0, cols = 0;
  if (std::sscanf(header.c_str(), "# frea-dataset 1 rows=%ld cols=%ld", &rows,
                  &cols) != 2 ||
      rows <= 0 || cols <= 0)
    throw std::runtime_error("dataset header malformed: " + path);

  std::vector<TransitionRecord> data;
  std::string line;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    TransitionRecord r;
    r.pseudo_state.resize(rows, cols);
    r.next_pseudo_state.resize(rows, cols);
    bool ok = true;
    for (long i = 0; i < rows && ok; ++i)
      for (long j = 0; j < cols && ok; ++j) ok = bool(is >> r.pseudo_state(i, j));
    ok = ok && bool(is >> r.av_action.accel >> r.av_action.steer);
    for (long i = 0; i < rows && ok; ++i)
      for (long j = 0; j < cols && ok; ++j)
        ok = bool(is >> r.next_pseudo_state(i, j));
    int done = 0;
    ok = ok && bool(is >> r.h >> r.h_next >> done >> r.source_policy);
    std::string extra;
    if (!ok || (is >> extra))
      throw std::runtime_error("dataset field count mismatch at line " +
                               std::to_string(lineno));
    r.done = done != 0;
    data.push_back(std::move(r));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Dataset coverage report
// ---------------------------------------------------------------------------

struct DatasetReport {
  size_t count = 0;
  std::map<std::string, size_t> source_counts;
  size_t violating = 0;          // records with h == M
  double positive_fraction = 0.0;
  bool imbalanced = false;       // one class missing entirely
  std::vector<size_t> av_speed_hist;
  std::vector<size_t> distance_hist;
  double speed_bin = 1.0;    // m/s per bin
  double distance_bin = 2.0; // m per bin
};

inline DatasetReport validate_dataset(const std::vector<TransitionRecord>& data) {
  if (data.empty()) throw std::invalid_argument("empty dataset");
  DatasetReport rep;
  rep.count = data.size();
  rep.av_speed_hist.assign(16, 0);
  rep.distance_hist.assign(16, 0);
  for (const auto& r : data) {
    rep.source_counts[r.source_policy] += 1;
    if (r.h > 0.0) rep.violating += 1;
    const double speed = r.pseudo_state(0, 5);
    const double dist = std::hypot(r.pseudo_state(2, 0), r.pseudo_state(2, 1));
    const size_t sb = std::min<size_t>(rep.av_speed_hist.size() - 1,
                                       static_cast<size_t>(std::max(0.0, speed) / rep.speed_bin));
    const size_t db = std::min<size_t>(rep.distance_hist.size() - 1,
                                       static_cast<size_t>(std::max(0.0, dist) / rep.distance_bin));
    rep.av_speed_hist[sb] += 1;
    rep.distance_hist[db] += 1;
  }
  rep.positive_fraction = static_cast<double>(rep.violating) / static_cast<double>(rep.count);
  rep.imbalanced = rep.violating == 0 || rep.violating == rep.count;
  return rep;
}

inline std::string format_report(const DatasetReport& rep) {
  std::ostringstream os;
  os << "records: " << rep.count << "\n";
  os << "violating (h=M): " << rep.violating << " ("
     << 100.0 * rep.positive_fraction << "%)"
     << (rep.imbalanced ? "  [IMBALANCED]" : "") << "\n";
  os << "sources:";
  for (const auto& [tag, n] : rep.source_counts) os << " " << tag << "=" << n;
  os << "\nav speed hist (" << rep.speed_bin << " m/s bins):";
  for (const size_t n : rep.av_speed_hist) os << " " << n;
  os << "\nnearest distance hist (" << rep.distance_bin << " m bins):";
  for (const size_t n : rep.distance_hist) os << " " << n;
  os << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Feasibility value networks
// ---------------------------------------------------------------------------

struct FeasibilityNets {
  MlpParams v_net;     // featurized pseudo-state -> V_h
  MlpParams q_net;     // featurized pseudo-state (+) scaled AV action -> Q_h
  MlpParams q_target;
  MlpParams v_target;  // Polyak copy of v_net used in the Eq-4 bootstrap
  double tau = 0.9;
  double gamma = 0.98;
  int pseudo_rows = 5;
  int pseudo_cols = kPseudoFeatures;

  int state_dim() const { return pseudo_rows * pseudo_cols; }

  static Eigen::Vector2d scaled_action(const Action& a) {
    return {a.accel / 3.0, a.steer / 0.3};
  }
};

inline FeasibilityNets make_feasibility_nets(int pseudo_rows, double tau,
                                             double gamma, Rng& rng,
                                             int hidden = 64) {
  if (!(tau > 0.5 && tau < 1.0))
    throw std::invalid_argument("tau must be in (0.5, 1)");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("gamma must be in (0, 1)");
  FeasibilityNets n;
  n.tau = tau;
  n.gamma = gamma;
  n.pseudo_rows = pseudo_rows;
  const int d = n.state_dim();
  n.v_net = make_mlp({d, hidden, hidden, 1}, rng);
  n.q_net = make_mlp({d + 2, hidden, hidden, 1}, rng);
  n.q_target = n.q_net;
  n.v_target = n.v_net;
  return n;
}

inline double v_value(const FeasibilityNets& n, const PseudoState& ps) {
  return forward(n.v_net, pseudo_features(ps))[0];
}

inline double q_value(const FeasibilityNets& n, const PseudoState& ps,
                      const Action& a) {
  Eigen::VectorXd x(n.state_dim() + 2);
  x.head(n.state_dim()) = pseudo_features(ps);
  x.tail(2) = FeasibilityNets::scaled_action(a);
  return forward(n.q_net, x)[0];
}

// ---------------------------------------------------------------------------
// Offline training (Algorithm 1, offline part)
// ---------------------------------------------------------------------------

struct OfflineTrainConfig {
  int64_t steps = 50000;
  int batch = 512;
  double lr = 3e-4;
  double rho = 5e-3;  // target-network blend
  uint64_t seed = 0;
  int log_every = 500;
};

struct OfflineTrainRow {
  int64_t step = 0;
  double v_loss = 0.0;
  double q_loss = 0.0;
  double mean_v = 0.0;
};

struct OfflineTrainStats {
  std::vector<OfflineTrainRow> rows;
};

/// Minimizes Eq-3 (expectile regression of V against the frozen target Q) and
/// Eq-4 (squared regression of Q against the discounted backup through V),
/// soft-updating the target network each step.
inline OfflineTrainStats train_offline(const std::vector<TransitionRecord>& data,
                                       FeasibilityNets& nets,
                                       const OfflineTrainConfig& cfg,
                                       OptimizerState* v_opt_io = nullptr,
                                       OptimizerState* q_opt_io = nullptr) {
  if (data.empty()) throw std::invalid_argument("train_offline: empty dataset");
  if (cfg.batch <= 0 || static_cast<size_t>(cfg.batch) > data.size())
    throw std::invalid_argument("train_offline: batch size must be in [1, dataset size]");

  const int d = nets.state_dim();
  for (const auto& r : data)
    if (r.pseudo_state.size() != d)
      throw std::invalid_argument("train_offline: record shape mismatch");

  OptimizerState local_v = make_optimizer(nets.v_net, {cfg.lr, cfg.steps});
  OptimizerState local_q = make_optimizer(nets.q_net, {cfg.lr, cfg.steps});
  OptimizerState& v_opt = v_opt_io != nullptr ? *v_opt_io : local_v;
  OptimizerState& q_opt = q_opt_io != nullptr ? *q_opt_io : local_q;

  // The exact value function lies in [min h, max h]; clamping bootstrap
  // targets to that range leaves the fixed point untouched while stopping
  // approximation noise from compounding through max{h, V'} at gamma/(1-gamma)
  // amplification.
  double h_lo = data.front().h, h_hi = data.front().h;
  for (const auto& r : data) {
    h_lo = std::min({h_lo, r.h, r.h_next});
    h_hi = std::max({h_hi, r.h, r.h_next});
  }

  Rng rng = Rng::stream(cfg.seed, "offline-batch");
  const int b = cfg.batch;
  Eigen::MatrixXd xs(d, b), xq(d + 2, b), xnext(d, b);
  Eigen::VectorXd hv(b), hnext(b);
  std::vector<uint8_t> done(static_cast<size_t>(b));

  OfflineTrainStats stats;
  const int64_t start_step = v_opt.step;
  for (int64_t step = start_step; step < cfg.steps; ++step) {
    for (int i = 0; i < b; ++i) {
      const TransitionRecord& r = data[rng.uniform_index(data.size())];
      pseudo_features_into(r.pseudo_state, xs.col(i).data());
      pseudo_features_into(r.next_pseudo_state, xnext.col(i).data());
      xq.col(i).head(d) = xs.col(i);
      xq.col(i).tail(2) = FeasibilityNets::scaled_action(r.av_action);
      hv[i] = r.h;
      hnext[i] = r.h_next;
      done[static_cast<size_t>(i)] = r.done ? 1 : 0;
    }

    // Eq 3: V regresses toward the target network's Q through the reversed
    // expectile loss.
    const Eigen::MatrixXd q_tgt = forward_batch(nets.q_target, xq).output();
    const ForwardTrace v_trace = forward_batch(nets.v_net, xs);
    const Eigen::MatrixXd& v_out = v_trace.output();
    Eigen::MatrixXd upstream_v(1, b);
    double v_loss = 0.0;
    for (int i = 0; i < b; ++i) {
      const double u = std::clamp(q_tgt(0, i), h_lo, h_hi) - v_out(0, i);
      const double w = std::abs(nets.tau - (u > 0.0 ? 1.0 : 0.0));
      v_loss += w * u * u;
      upstream_v(0, i) = -2.0 * w * u / b;
    }
    v_loss /= b;
    adam_step(v_opt, nets.v_net, backward(nets.v_net, v_trace, upstream_v));

    // Eq 4: Q regresses toward the discounted backup through the slow copy
    // of V; bootstrapping through the online V couples the two regressions
    // into a limit cycle.
    const Eigen::MatrixXd v_next = forward_batch(nets.v_target, xnext).output();
    const ForwardTrace q_trace = forward_batch(nets.q_net, xq);
    const Eigen::MatrixXd& q_out = q_trace.output();
    Eigen::MatrixXd upstream_q(1, b);
    double q_loss = 0.0;
    for (int i = 0; i < b; ++i) {
      const double vb = std::clamp(v_next(0, i), h_lo, h_hi);
      const double target =
          qh_target(hv[i], vb, nets.gamma, done[static_cast<size_t>(i)] != 0);
      const double diff = q_out(0, i) - target;
      q_loss += diff * diff;
      upstream_q(0, i) = 2.0 * diff / b;
    }
    q_loss /= b;
    adam_step(q_opt, nets.q_net, backward(nets.q_net, q_trace, upstream_q));

    soft_update(nets.q_target, nets.q_net, cfg.rho);
    soft_update(nets.v_target, nets.v_net, cfg.rho);

    if (step % cfg.log_every == 0 || step + 1 == cfg.steps)
      stats.rows.push_back({step, v_loss, q_loss, v_out.mean()});
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Grid-world bridge (oracle-comparable training data)
// ---------------------------------------------------------------------------

/// Embeds a longitudinal grid state (bumper gap, AV speed, hazard speed) as a
/// two-vehicle world pseudo-state, so the learner consumes exactly what the
/// traffic pipeline produces.
inline PseudoState grid_pseudo_state(double gap, double av_speed,
                                     double hazard_speed, int nearby_rows) {
  WorldState w;
  VehicleState av;
  av.id = 1;
  av.role = Role::AV;
  av.speed = av_speed;
  VehicleState hz;
  hz.id = 2;
  hz.role = Role::BV;
  hz.speed = hazard_speed;
  hz.position = {gap + av.extent.x + hz.extent.x, 0.0};
  w.vehicles = {av, hz};
  return encode_pseudo_state(w, 2, av.position, nearby_rows);
}

/// One-step transitions at grid nodes: every action at each sampled state.
/// A fraction of draws concentrates on the small-gap band, where the value
/// cliff lives and coverage matters most.
inline std::vector<TransitionRecord> make_grid_dataset(const GridProblem& prob,
                                                       size_t n_states,
                                                       uint64_t seed,
                                                       int nearby_rows = 3,
                                                       double near_fraction = 0.5,
                                                       double near_band = 0.35) {
  Rng rng = Rng::stream(seed, "grid-dataset");
  std::vector<TransitionRecord> out;
  out.reserve(n_states * prob.actions.size());
  FeasibleValueGrid shape;
  shape.axes = prob.axes;
  const size_t cells = shape.cell_count();
  const auto strides = shape.strides();
  const size_t gap_cells = static_cast<size_t>(shape.axes[0].n);
  const size_t near_cells = std::max<size_t>(1, static_cast<size_t>(near_band * gap_cells));
  double x[kMaxGridDims], nx[kMaxGridDims];
  for (size_t s = 0; s < n_states; ++s) {
    size_t cell = rng.uniform_index(cells);
    if (rng.uniform() < near_fraction) {
      const size_t gap_idx = rng.uniform_index(near_cells);
      cell = gap_idx * strides[0] + rng.uniform_index(cells / gap_cells);
    }
    shape.cell_coords(cell, x);
    for (const double a : prob.actions) {
      prob.step_fn(x, a, nx);
      TransitionRecord r;
      r.pseudo_state = grid_pseudo_state(x[0], x[1], x[2], nearby_rows);
      r.next_pseudo_state = grid_pseudo_state(nx[0], nx[1], nx[2], nearby_rows);
      r.av_action = {a, 0.0};
      r.h = prob.h_fn(x);
      r.h_next = prob.h_fn(nx);
      r.done = false;
      r.source_policy = "grid";
      out.push_back(std::move(r));
    }
  }
  return out;
}

struct GridAgreement {
  double sign_agreement = 0.0;  // over cells with |V*| >= margin
  double mean_abs_err = 0.0;    // over all cells
  size_t cells_scored = 0;
  size_t cells_total = 0;
};

/// Scores the learned V against the oracle grid: sign agreement on cells with
/// |V*| >= margin and mean absolute error over every cell.
inline GridAgreement evaluate_against_grid(const FeasibilityNets& nets,
                                           const FeasibleValueGrid& g,
                                           double margin = 1.0,
                                           int nearby_rows = 3) {
  const size_t cells = g.cell_count();
  const int d = nets.state_dim();
  const int batch = 4096;
  Eigen::MatrixXd xs(d, batch);
  GridAgreement res;
  res.cells_total = cells;
  size_t agree = 0;
  double abs_err = 0.0;
  double x[kMaxGridDims];
  for (size_t base = 0; base < cells; base += batch) {
    const int nb = static_cast<int>(std::min<size_t>(batch, cells - base));
    for (int i = 0; i < nb; ++i) {
      g.cell_coords(base + i, x);
      const PseudoState ps = grid_pseudo_state(x[0], x[1], x[2], nearby_rows);
      pseudo_features_into(ps, xs.col(i).data());
    }
    const Eigen::MatrixXd out = forward_batch(nets.v_net, xs.leftCols(nb)).output();
    for (int i = 0; i < nb; ++i) {
      const double oracle = g.values[base + i];
      const double learned = out(0, i);
      abs_err += std::abs(learned - oracle);
      if (std::abs(oracle) >= margin) {
        res.cells_scored += 1;
        if (lfr_membership(oracle) == lfr_membership(learned)) ++agree;
      }
    }
  }
  res.mean_abs_err = abs_err / static_cast<double>(cells);
  res.sign_agreement =
      res.cells_scored > 0 ? static_cast<double>(agree) / res.cells_scored : 1.0;
  return res;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

struct FeasibilityCheckpoint {
  FeasibilityNets nets;
  OptimizerState v_opt;
  OptimizerState q_opt;
  std::string rng_state;
};

inline void save_feasibility(const FeasibilityCheckpoint& c, const std::string& path) {
  BinaryWriter w(path);
  w.str("frea-feasibility-1");
  w.f64(c.nets.tau);
  w.f64(c.nets.gamma);
  w.i32(c.nets.pseudo_rows);
  w.i32(c.nets.pseudo_cols);
  write_mlp(w, c.nets.v_net);
  write_mlp(w, c.nets.q_net);
  write_mlp(w, c.nets.q_target);
  write_mlp(w, c.nets.v_target);
  write_optimizer(w, c.v_opt);
  write_optimizer(w, c.q_opt);
  w.str(c.rng_state);
}

inline FeasibilityCheckpoint load_feasibility(const std::string& path) {
  BinaryReader r(path);
  expect_magic(r, "frea-feasibility-1");
  FeasibilityCheckpoint c;
  c.nets.tau = r.f64();
  c.nets.gamma = r.f64();
  c.nets.pseudo_rows = r.i32();
  c.nets.pseudo_cols = r.i32();
  c.nets.v_net = read_mlp(r);
  c.nets.q_net = read_mlp(r);
  c.nets.q_target = read_mlp(r);
  c.nets.v_target = read_mlp(r);
  c.v_opt = read_optimizer(r);
  c.q_opt = read_optimizer(r);
  c.rng_state = r.str();
  return c;
}

}  // namespace frea
