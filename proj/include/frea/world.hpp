#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "frea/geometry.hpp"

namespace frea {

enum class Role { AV, BV, CBV };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::AV: return "AV";
    case Role::BV: return "BV";
    default: return "CBV";
  }
}

inline Role role_from_name(const std::string& s) {
  if (s == "AV") return Role::AV;
  if (s == "BV") return Role::BV;
  if (s == "CBV") return Role::CBV;
  throw std::invalid_argument("unknown role: " + s);
}

struct VehicleState {
  int id = 0;
  Vec2 position;
  double yaw = 0.0;    // (-pi, pi]
  double speed = 0.0;  // >= 0
  Vec2 extent{2.4, 1.1};  // (half_length, half_width)
  Role role = Role::BV;
};

inline OrientedBox vehicle_box(const VehicleState& v) {
  return {v.position, v.yaw, v.extent.x, v.extent.y};
}

inline Vec2 velocity_vec(const VehicleState& v) {
  return heading_vec(v.yaw) * v.speed;
}

struct Action {
  double accel = 0.0;  // m/s^2
  double steer = 0.0;  // front wheel angle command
};

struct Lane {
  int id = 0;
  double width = 3.5;
  Polyline center;
};

struct SpawnSlot {
  int lane_id = 0;
  double s = 0.0;      // arc length along the lane
  double speed = 5.0;  // initial speed
};

struct RoadLayout {
  std::string name;
  std::vector<Lane> lanes;
  std::vector<Vec2> conflict_points;
  std::vector<SpawnSlot> spawn_slots;

  const Lane* lane_by_id(int id) const {
    for (const auto& l : lanes)
      if (l.id == id) return &l;
    return nullptr;
  }
};

struct WorldState {
  double time = 0.0;
  double dt = 0.1;
  std::vector<VehicleState> vehicles;
  RoadLayout layout;
  uint64_t rng_seed = 0;

  const VehicleState* find(int id) const {
    for (const auto& v : vehicles)
      if (v.id == id) return &v;
    return nullptr;
  }
  VehicleState* find(int id) {
    for (auto& v : vehicles)
      if (v.id == id) return &v;
    return nullptr;
  }
  const VehicleState& av() const {
    for (const auto& v : vehicles)
      if (v.role == Role::AV) return v;
    throw std::logic_error("world has no AV");
  }
};

inline void validate_world(const WorldState& w) {
  if (w.dt <= 0.0) throw std::invalid_argument("dt must be > 0");
  int avs = 0;
  for (const auto& v : w.vehicles) {
    if (v.role == Role::AV) ++avs;
    if (v.speed < 0.0) throw std::invalid_argument("negative speed");
    if (v.extent.x <= 0.0 || v.extent.y <= 0.0)
      throw std::invalid_argument("non-positive extent");
  }
  if (avs != 1) throw std::invalid_argument("world must have exactly one AV");
  for (size_t i = 0; i < w.vehicles.size(); ++i)
    for (size_t j = i + 1; j < w.vehicles.size(); ++j)
      if (w.vehicles[i].id == w.vehicles[j].id)
        throw std::invalid_argument("duplicate vehicle id");
  for (const auto& l : w.layout.lanes) {
    if (l.center.size() < 2) throw std::invalid_argument("lane with < 2 points");
    if (l.width <= 0.0) throw std::invalid_argument("non-positive lane width");
  }
}

// ---------------------------------------------------------------------------
// Dynamics and constraint
// ---------------------------------------------------------------------------

struct SimParams {
  double wheelbase = 2.5;
  double steer_gain = 1.0;    // action 0.3 maps to a 0.3 rad wheel angle
  double accel_limit = 3.0;
  double steer_limit = 0.3;
  double d_th = 0.1;          // violation distance threshold
  double constraint_m = 18.0; // violation magnitude M
};

inline Action clamp_action(Action a, const SimParams& p = {}) {
  a.accel = std::clamp(a.accel, -p.accel_limit, p.accel_limit);
  a.steer = std::clamp(a.steer, -p.steer_limit, p.steer_limit);
  return a;
}

/// Kinematic bicycle step. Speed is floored at zero; position advances at the
/// step's mean speed along the mid-step heading.
inline VehicleState step_vehicle(const VehicleState& s, Action a, double dt,
                                 const SimParams& p = {}) {
  a = clamp_action(a, p);
  VehicleState n = s;
  n.speed = std::max(0.0, s.speed + a.accel * dt);
  const double yaw_rate = (s.speed / p.wheelbase) * std::tan(p.steer_gain * a.steer);
  n.yaw = normalize_angle(s.yaw + yaw_rate * dt);
  const double mid_yaw = s.yaw + 0.5 * yaw_rate * dt;
  const double mean_speed = 0.5 * (s.speed + n.speed);
  n.position = s.position + heading_vec(mid_yaw) * (mean_speed * dt);
  return n;
}

/// Smallest bounding-box gap between the AV and any other vehicle.
inline double min_av_gap(const WorldState& w) {
  const VehicleState& av = w.av();
  const OrientedBox ab = vehicle_box(av);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& v : w.vehicles) {
    if (v.id == av.id) continue;
    best = std::min(best, min_box_distance(ab, vehicle_box(v)));
  }
  return best;
}

/// Sparse constraint function: -1 while every vehicle keeps a gap above d_th
/// to the AV, M once any gap falls to d_th or below. A world without
/// background vehicles is unconstrained (-1).
inline double constraint_h(const WorldState& w, const SimParams& p = {}) {
  if (w.vehicles.size() < 2) return -1.0;
  return min_av_gap(w) <= p.d_th ? p.constraint_m : -1.0;
}

// ---------------------------------------------------------------------------
// Pseudo-state encoding
// ---------------------------------------------------------------------------

// Fixed-layout observation built from the AV's viewpoint for one subject
// vehicle: (V+2) rows x 6 columns. Row 0 is the AV, row 1 the goal point,
// rows 2.. the nearby vehicles sorted by distance to the AV (the subject is
// always included). Columns are (rel_x, rel_y, extent_x, extent_y, rel_yaw,
// abs_speed); the goal row carries its relative distance in the last column.
using PseudoState = Eigen::MatrixXd;

constexpr int kPseudoFeatures = 6;

inline PseudoState encode_pseudo_state(const WorldState& w, int subject_id,
                                       const Vec2& goal, int nearby_rows) {
  const VehicleState& av = w.av();
  const VehicleState* subject = w.find(subject_id);
  if (subject == nullptr)
    throw std::invalid_argument("encode_pseudo_state: unknown vehicle id " +
                                std::to_string(subject_id));

  PseudoState m = PseudoState::Zero(nearby_rows + 2, kPseudoFeatures);
  m(0, 2) = av.extent.x;
  m(0, 3) = av.extent.y;
  m(0, 5) = av.speed;

  const Vec2 goal_rel = rotate(goal - av.position, -av.yaw);
  m(1, 0) = goal_rel.x;
  m(1, 1) = goal_rel.y;
  m(1, 5) = norm(goal_rel);

  std::vector<const VehicleState*> others;
  for (const auto& v : w.vehicles)
    if (v.id != av.id) others.push_back(&v);
  std::sort(others.begin(), others.end(),
            [&](const VehicleState* a, const VehicleState* b) {
              const double da = distance(a->position, av.position);
              const double db = distance(b->position, av.position);
              return da != db ? da < db : a->id < b->id;
            });

  // The subject must occupy a row even when it is not among the nearest.
  if (subject->id != av.id) {
    const size_t keep = static_cast<size_t>(nearby_rows);
    auto it = std::find(others.begin(), others.end(), subject);
    if (it != others.end() && static_cast<size_t>(it - others.begin()) >= keep && keep > 0) {
      others.erase(it);
      others.insert(others.begin() + (keep - 1), subject);
    }
  }

  const int n = std::min<int>(nearby_rows, static_cast<int>(others.size()));
  for (int i = 0; i < n; ++i) {
    const VehicleState& v = *others[i];
    const Vec2 rel = rotate(v.position - av.position, -av.yaw);
    m(i + 2, 0) = rel.x;
    m(i + 2, 1) = rel.y;
    m(i + 2, 2) = v.extent.x;
    m(i + 2, 3) = v.extent.y;
    m(i + 2, 4) = normalize_angle(v.yaw - av.yaw);
    m(i + 2, 5) = v.speed;
  }
  return m;
}

inline Eigen::VectorXd flatten(const PseudoState& m) {
  Eigen::VectorXd v(m.size());
  int k = 0;
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) v[k++] = m(r, c);
  return v;
}

/// Fixed featurization applied before any value or policy network. Angles and
/// extents pass through near unit scale; speeds are scaled down; positions
/// and distances are log-compressed, which preserves resolution in the
/// near range where the constraint function lives while keeping far-field
/// inputs bounded.
inline double compress_position(double x) {
  return x >= 0.0 ? std::log1p(x) : -std::log1p(-x);
}

inline void pseudo_features_into(const PseudoState& m, double* out) {
  int k = 0;
  for (int r = 0; r < m.rows(); ++r) {
    out[k++] = compress_position(m(r, 0));
    out[k++] = compress_position(m(r, 1));
    out[k++] = 0.5 * m(r, 2);
    out[k++] = 0.5 * m(r, 3);
    out[k++] = m(r, 4);
    out[k++] = r == 1 ? compress_position(m(r, 5)) : 0.2 * m(r, 5);
  }
}

inline Eigen::VectorXd pseudo_features(const PseudoState& m) {
  Eigen::VectorXd v(m.size());
  pseudo_features_into(m, v.data());
  return v;
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

struct CollisionEvent {
  int id_a = 0;
  int id_b = 0;
  double rel_speed = 0.0;  // |v_a - v_b| at contact
  Vec2 contact;
};

inline std::vector<CollisionEvent> detect_collisions(const WorldState& w) {
  std::vector<CollisionEvent> out;
  for (size_t i = 0; i < w.vehicles.size(); ++i) {
    for (size_t j = i + 1; j < w.vehicles.size(); ++j) {
      const auto& a = w.vehicles[i];
      const auto& b = w.vehicles[j];
      if (min_box_distance(vehicle_box(a), vehicle_box(b)) == 0.0) {
        const Vec2 dv = velocity_vec(a) - velocity_vec(b);
        out.push_back({a.id, b.id, norm(dv),
                       (a.position + b.position) * 0.5});
      }
    }
  }
  return out;
}

}  // namespace frea
