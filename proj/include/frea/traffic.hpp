#pragma once

#include <cmath>
#include <limits>
#include <map>

#include "frea/rng.hpp"
#include "frea/world.hpp"

namespace frea {

struct TrafficParams {
  double bv_desired_speed = 6.0;
  double av_desired_speed = 6.0;
  double idm_accel = 2.0;
  double idm_brake = 3.0;
  double idm_min_gap = 2.0;
  double idm_headway = 1.5;
  double pursuit_lookahead = 5.0;
  double av_brake_ttc = 1.5;   // full brake below this time-to-collision
  double spawn_period = 4.0;
  double spawn_clearance = 9.0;
  int max_vehicles = 10;
  bool spawning = true;
};

struct TrafficContext {
  Polyline av_route;
  SimParams sim;
  TrafficParams traffic;
};

/// Index of the lane the vehicle is travelling on: nearest centerline among
/// lanes whose local direction is within 90 degrees of the vehicle heading
/// and whose corridor contains the vehicle. -1 when off every lane.
inline int current_lane(const RoadLayout& layout, const VehicleState& v) {
  int best = -1;
  double best_lat = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < layout.lanes.size(); ++i) {
    const Lane& lane = layout.lanes[i];
    const auto proj = lane.center.project(v.position);
    if (proj.lateral > lane.width) continue;
    const Vec2 tan = lane.center.tangent_at(proj.s);
    if (dot(tan, heading_vec(v.yaw)) <= 0.0) continue;
    if (proj.lateral < best_lat) {
      best_lat = proj.lateral;
      best = static_cast<int>(i);
    }
  }
  return best;
}

inline double pure_pursuit_steer(const VehicleState& v, const Polyline& path,
                                 const SimParams& sp, double lookahead) {
  const auto proj = path.project(v.position);
  const Vec2 target = path.point_at(proj.s + std::max(lookahead, 1.0));
  const Vec2 rel = rotate(target - v.position, -v.yaw);
  const double dist = std::max(norm(rel), 1e-6);
  const double alpha = std::atan2(rel.y, rel.x);
  const double wheel = std::atan(2.0 * sp.wheelbase * std::sin(alpha) / dist);
  return std::clamp(wheel / sp.steer_gain, -sp.steer_limit, sp.steer_limit);
}

inline double idm_accel(double speed, double desired, double gap,
                        double lead_speed, const TrafficParams& tp) {
  const double free_term =
      1.0 - std::pow(speed / std::max(desired, 0.1), 4.0);
  double interaction = 0.0;
  if (std::isfinite(gap)) {
    const double dv = speed - lead_speed;
    const double s_star =
        tp.idm_min_gap +
        std::max(0.0, speed * tp.idm_headway +
                          speed * dv / (2.0 * std::sqrt(tp.idm_accel * tp.idm_brake)));
    const double ratio = s_star / std::max(gap, 0.1);
    interaction = -ratio * ratio;
  }
  return std::clamp(tp.idm_accel * (free_term + interaction), -3.0, 3.0);
}

/// Bumper gap and speed of the nearest vehicle ahead of `v` along `path`.
inline std::pair<double, double> lead_gap_on_path(const WorldState& w,
                                                  const VehicleState& v,
                                                  const Polyline& path,
                                                  double corridor_halfwidth) {
  const double s0 = path.project(v.position).s;
  double gap = std::numeric_limits<double>::infinity();
  double lead_speed = 0.0;
  for (const auto& o : w.vehicles) {
    if (o.id == v.id) continue;
    const auto proj = path.project(o.position);
    if (proj.lateral > corridor_halfwidth) continue;
    const double ds = proj.s - s0;
    if (ds <= 0.0) continue;
    const double g = ds - v.extent.x - o.extent.x;
    if (g < gap) {
      gap = g;
      lead_speed = o.speed;
    }
  }
  return {gap, lead_speed};
}

/// Time-to-collision between the AV and the nearest approaching vehicle,
/// computed from the bounding-box gap and the closing component of the
/// relative velocity.
inline double min_forward_ttc(const WorldState& w, const VehicleState& av) {
  const OrientedBox ab = vehicle_box(av);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& o : w.vehicles) {
    if (o.id == av.id) continue;
    const Vec2 to_other = o.position - av.position;
    const double range = norm(to_other);
    if (range < 1e-9) return 0.0;
    const Vec2 dir{to_other.x / range, to_other.y / range};
    const double closing = dot(velocity_vec(av) - velocity_vec(o), dir);
    if (closing <= 1e-9) continue;
    const double gap = min_box_distance(ab, vehicle_box(o));
    best = std::min(best, gap / closing);
  }
  return best;
}

/// Rule-based background-vehicle policy: lane following with IDM gap keeping.
inline Action bv_policy(const WorldState& w, const VehicleState& v,
                        const TrafficContext& ctx) {
  const int li = current_lane(w.layout, v);
  if (li < 0) return {-1.0, 0.0};  // off the map: roll to a stop
  const Lane& lane = w.layout.lanes[static_cast<size_t>(li)];
  const double steer = pure_pursuit_steer(v, lane.center, ctx.sim,
                                          ctx.traffic.pursuit_lookahead);
  const auto [gap, lead_speed] =
      lead_gap_on_path(w, v, lane.center, lane.width * 0.75);
  const double accel =
      idm_accel(v.speed, ctx.traffic.bv_desired_speed, gap, lead_speed, ctx.traffic);
  return {accel, steer};
}

/// Surrogate AV: pure-pursuit route follower with IDM cruise and a hard
/// braking rule when the time-to-collision falls below the threshold.
inline Action av_policy(const WorldState& w, const VehicleState& av,
                        const TrafficContext& ctx) {
  const double steer = pure_pursuit_steer(av, ctx.av_route, ctx.sim,
                                          ctx.traffic.pursuit_lookahead);
  if (min_forward_ttc(w, av) < ctx.traffic.av_brake_ttc)
    return {-ctx.sim.accel_limit, steer};
  const auto [gap, lead_speed] =
      lead_gap_on_path(w, av, ctx.av_route, 2.5);
  double accel =
      idm_accel(av.speed, ctx.traffic.av_desired_speed, gap, lead_speed, ctx.traffic);
  const double remaining = ctx.av_route.length() - ctx.av_route.project(av.position).s;
  if (remaining < 5.0) accel = std::min(accel, -1.0);
  return {accel, steer};
}

/// Scripted attacker used for offline data collection: full throttle pursuit
/// of the AV's short-horizon predicted position.
inline Action aggressive_cbv_policy(const WorldState& w, const VehicleState& cbv,
                                    const SimParams& sp) {
  const VehicleState& av = w.av();
  const Vec2 predicted = av.position + velocity_vec(av) * 0.5;
  const Vec2 rel = rotate(predicted - cbv.position, -cbv.yaw);
  const double dist = std::max(norm(rel), 1e-6);
  const double alpha = std::atan2(rel.y, rel.x);
  const double wheel = std::atan(2.0 * sp.wheelbase * std::sin(alpha) / dist);
  const double steer = std::clamp(wheel / sp.steer_gain, -sp.steer_limit, sp.steer_limit);
  const double gap = min_box_distance(vehicle_box(cbv), vehicle_box(av));
  return {gap > 3.0 ? sp.accel_limit : 1.0, steer};
}

inline Action random_cbv_policy(Rng& rng, const SimParams& sp) {
  return {rng.uniform(-sp.accel_limit, sp.accel_limit),
          rng.uniform(-sp.steer_limit, sp.steer_limit)};
}

// ---------------------------------------------------------------------------
// World stepping
// ---------------------------------------------------------------------------

struct StepResult {
  std::vector<CollisionEvent> collisions;
  double h = -1.0;
};

inline int next_vehicle_id(const WorldState& w) {
  int id = 0;
  for (const auto& v : w.vehicles) id = std::max(id, v.id);
  return id + 1;
}

inline VehicleState vehicle_at_slot(const RoadLayout& layout, const SpawnSlot& slot,
                                    int id, Role role) {
  const Lane* lane = layout.lane_by_id(slot.lane_id);
  if (lane == nullptr)
    throw std::invalid_argument("spawn slot references unknown lane");
  VehicleState v;
  v.id = id;
  v.position = lane->center.point_at(slot.s);
  const Vec2 t = lane->center.tangent_at(slot.s);
  v.yaw = std::atan2(t.y, t.x);
  v.speed = slot.speed;
  v.role = role;
  return v;
}

/// Advances the world by one step. Background vehicles follow the rule-based
/// policy, the AV its surrogate policy, and subject vehicles the supplied
/// actions (one is required per CBV). Spawning and despawning are functions
/// of the step index only, so replays are bit-identical.
inline StepResult step_world(WorldState& w, const std::map<int, Action>& cbv_actions,
                             const TrafficContext& ctx) {
  // Actions from the pre-step snapshot; simultaneous move.
  std::vector<Action> actions(w.vehicles.size());
  for (size_t i = 0; i < w.vehicles.size(); ++i) {
    const VehicleState& v = w.vehicles[i];
    switch (v.role) {
      case Role::AV:
        actions[i] = av_policy(w, v, ctx);
        break;
      case Role::BV:
        actions[i] = bv_policy(w, v, ctx);
        break;
      case Role::CBV: {
        const auto it = cbv_actions.find(v.id);
        if (it == cbv_actions.end())
          throw std::invalid_argument("missing action for CBV " + std::to_string(v.id));
        actions[i] = it->second;
        break;
      }
    }
  }
  for (size_t i = 0; i < w.vehicles.size(); ++i)
    w.vehicles[i] = step_vehicle(w.vehicles[i], actions[i], w.dt, ctx.sim);
  w.time += w.dt;

  // Background vehicles leave the map at the end of their lane.
  std::erase_if(w.vehicles, [&](const VehicleState& v) {
    if (v.role != Role::BV) return false;
    const int li = current_lane(w.layout, v);
    if (li < 0) return false;
    const Lane& lane = w.layout.lanes[static_cast<size_t>(li)];
    return lane.center.project(v.position).s >= lane.center.length() - 1.0;
  });

  // Deterministic spawner: every spawn period, try the next slot round-robin.
  if (ctx.traffic.spawning && !w.layout.spawn_slots.empty() &&
      static_cast<int>(w.vehicles.size()) < ctx.traffic.max_vehicles) {
    const long step_idx = std::lround(w.time / w.dt);
    const long period_steps =
        std::max<long>(1, std::lround(ctx.traffic.spawn_period / w.dt));
    if (step_idx % period_steps == 0) {
      const size_t n = w.layout.spawn_slots.size();
      const size_t start = static_cast<size_t>(step_idx / period_steps) % n;
      for (size_t k = 0; k < n; ++k) {
        const SpawnSlot& slot = w.layout.spawn_slots[(start + k) % n];
        VehicleState cand =
            vehicle_at_slot(w.layout, slot, next_vehicle_id(w), Role::BV);
        bool clear = true;
        for (const auto& v : w.vehicles)
          if (distance(v.position, cand.position) < ctx.traffic.spawn_clearance)
            clear = false;
        if (clear) {
          w.vehicles.push_back(cand);
          break;
        }
      }
    }
  }

  return {detect_collisions(w), constraint_h(w, ctx.sim)};
}

/// Seeds a world with the AV at the route start plus `n_bvs` background
/// vehicles drawn from the spawn slots.
inline WorldState make_world(const RoadLayout& layout, const Polyline& route,
                             uint64_t seed, int n_bvs, double dt = 0.1) {
  WorldState w;
  w.dt = dt;
  w.layout = layout;
  w.rng_seed = seed;

  VehicleState av;
  av.id = 1;
  av.position = route.point_at(0.0);
  const Vec2 t = route.tangent_at(0.0);
  av.yaw = std::atan2(t.y, t.x);
  av.speed = 5.0;
  av.role = Role::AV;
  w.vehicles.push_back(av);

  Rng rng = Rng::stream(seed, "world-init");
  std::vector<size_t> order(layout.spawn_slots.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  int id = 2;
  for (const size_t si : order) {
    if (id - 2 >= n_bvs) break;
    SpawnSlot slot = layout.spawn_slots[si];
    slot.speed = rng.uniform(3.0, 6.0);
    VehicleState bv = vehicle_at_slot(layout, slot, id, Role::BV);
    if (distance(bv.position, av.position) < 8.0) continue;
    w.vehicles.push_back(bv);
    ++id;
  }
  validate_world(w);
  return w;
}

}  // namespace frea
