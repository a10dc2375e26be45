#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "frea/layout.hpp"
#include "frea/rng.hpp"
#include "frea/traffic.hpp"
#include "frea/trajlog.hpp"
#include "frea/world.hpp"

using namespace frea;

namespace {

WorldState two_vehicle_world(double gap) {
  WorldState w;
  w.dt = 0.1;
  VehicleState av;
  av.id = 1;
  av.role = Role::AV;
  av.speed = 4.0;
  VehicleState bv;
  bv.id = 10;
  bv.role = Role::CBV;
  bv.speed = 7.0;
  bv.position = {av.extent.x + bv.extent.x + gap, 0.0};
  w.vehicles = {av, bv};
  w.layout.lanes.push_back({1, 3.5, Polyline({{-100.0, 0.0}, {100.0, 0.0}})});
  return w;
}

}  // namespace

TEST(StepVehicle, StraightLineAdvance) {
  VehicleState s;
  s.speed = 5.0;
  s.yaw = 0.7;
  const VehicleState n = step_vehicle(s, {0.0, 0.0}, 0.1);
  EXPECT_DOUBLE_EQ(n.speed, 5.0);
  EXPECT_DOUBLE_EQ(n.yaw, 0.7);
  EXPECT_NEAR(distance(n.position, s.position), 0.5, 1e-12);
  EXPECT_NEAR(n.position.x, 0.5 * std::cos(0.7), 1e-12);
  EXPECT_NEAR(n.position.y, 0.5 * std::sin(0.7), 1e-12);
}

TEST(StepVehicle, SpeedFlooredAtZero) {
  VehicleState s;
  s.speed = 0.0;
  const VehicleState n = step_vehicle(s, {-3.0, 0.0}, 0.1);
  EXPECT_DOUBLE_EQ(n.speed, 0.0);
  EXPECT_DOUBLE_EQ(n.position.x, 0.0);
}

// Yaw increment cross-checked against a 1e-4-substep integration of the
// continuous bicycle model (exact for constant speed).
TEST(StepVehicle, YawRateMatchesFineStepIntegrator) {
  const SimParams p;
  VehicleState s;
  s.speed = 5.0;
  const Action a{0.0, 0.3};
  const VehicleState n = step_vehicle(s, a, 0.1, p);

  double yaw = 0.0;
  const double sub_dt = 1e-4;
  for (int i = 0; i < 1000; ++i)
    yaw += (s.speed / p.wheelbase) * std::tan(p.steer_gain * a.steer) * sub_dt;
  EXPECT_NEAR(n.yaw, yaw, 1e-9);
  EXPECT_NEAR(n.yaw, (5.0 / p.wheelbase) * std::tan(0.3 * p.steer_gain) * 0.1, 1e-12);
}

TEST(StepVehicle, PreservesInvariantsUnderRandomInputs) {
  Rng rng(31);
  for (int i = 0; i < 2000; ++i) {
    VehicleState s;
    s.position = {rng.uniform(-100, 100), rng.uniform(-100, 100)};
    s.yaw = rng.uniform(-kPi, kPi);
    s.speed = rng.uniform(0.0, 15.0);
    const Action a{rng.uniform(-10.0, 10.0), rng.uniform(-1.0, 1.0)};
    const VehicleState n = step_vehicle(s, a, 0.1);
    EXPECT_GE(n.speed, 0.0);
    EXPECT_GT(n.yaw, -kPi);
    EXPECT_LE(n.yaw, kPi);
  }
}

TEST(Constraint, SparseBranches) {
  EXPECT_DOUBLE_EQ(constraint_h(two_vehicle_world(0.5)), -1.0);
  EXPECT_DOUBLE_EQ(constraint_h(two_vehicle_world(0.05)), 18.0);

  // The violating branch includes the boundary: gap == d_th -> M.
  WorldState w = two_vehicle_world(0.3);
  SimParams p;
  p.d_th = min_av_gap(w);
  EXPECT_DOUBLE_EQ(constraint_h(w, p), p.constraint_m);
}

TEST(Constraint, NoBackgroundVehicles) {
  WorldState w = two_vehicle_world(0.5);
  w.vehicles.resize(1);
  EXPECT_DOUBLE_EQ(constraint_h(w), -1.0);
}

TEST(PseudoState, FrameDefinition) {
  WorldState w = two_vehicle_world(10.0 - 2.0 * 2.4);  // center distance 10
  const PseudoState m = encode_pseudo_state(w, 10, w.av().position, 3);
  ASSERT_EQ(m.rows(), 5);
  ASSERT_EQ(m.cols(), 6);
  // AV row.
  EXPECT_DOUBLE_EQ(m(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(m(0, 2), 2.4);
  EXPECT_DOUBLE_EQ(m(0, 5), 4.0);
  // Goal row: coincident with the AV -> zero relative distance.
  EXPECT_DOUBLE_EQ(m(1, 5), 0.0);
  // Subject row, 10 m ahead, same heading.
  EXPECT_DOUBLE_EQ(m(2, 0), 10.0);
  EXPECT_DOUBLE_EQ(m(2, 1), 0.0);
  EXPECT_DOUBLE_EQ(m(2, 4), 0.0);
  EXPECT_DOUBLE_EQ(m(2, 5), 7.0);
  // Absent vehicles zero-padded.
  EXPECT_TRUE(m.row(3).isZero());
  EXPECT_TRUE(m.row(4).isZero());
}

TEST(PseudoState, RotatedFrame) {
  WorldState w = two_vehicle_world(1.0);
  w.find(1)->yaw = kPi / 2.0;  // AV facing +y
  w.find(10)->position = {0.0, 8.0};
  w.find(10)->yaw = kPi / 2.0;
  const PseudoState m = encode_pseudo_state(w, 10, Vec2{0.0, 3.0}, 3);
  EXPECT_NEAR(m(2, 0), 8.0, 1e-12);  // ahead in the AV frame
  EXPECT_NEAR(m(2, 1), 0.0, 1e-12);
  EXPECT_NEAR(m(1, 0), 3.0, 1e-12);
  EXPECT_NEAR(m(1, 5), 3.0, 1e-12);
}

TEST(PseudoState, SubjectAlwaysIncluded) {
  WorldState w = two_vehicle_world(0.5);
  // Three background vehicles closer than the subject.
  for (int i = 0; i < 3; ++i) {
    VehicleState bv;
    bv.id = 20 + i;
    bv.role = Role::BV;
    bv.position = {-3.0 - i, 2.0};
    w.vehicles.push_back(bv);
  }
  w.find(10)->position = {40.0, 0.0};
  const PseudoState m = encode_pseudo_state(w, 10, Vec2{}, 3);
  bool found = false;
  for (int r = 2; r < m.rows(); ++r)
    if (m(r, 0) == 40.0) found = true;
  EXPECT_TRUE(found);
}

TEST(PseudoState, UnknownSubjectRejected) {
  WorldState w = two_vehicle_world(0.5);
  EXPECT_THROW(encode_pseudo_state(w, 999, Vec2{}, 3), std::invalid_argument);
}

TEST(StepWorld, NoSubjectsAdvances) {
  const ScenarioLayout sl = straight_layout();
  WorldState w = make_world(sl.road, sl.av_route, 42, 4);
  TrafficContext ctx{sl.av_route, {}, {}};
  const double x0 = w.av().position.x;
  const StepResult r = step_world(w, {}, ctx);
  EXPECT_GT(w.av().position.x, x0);
  EXPECT_TRUE(r.collisions.empty());
  EXPECT_DOUBLE_EQ(r.h, -1.0);
}

TEST(StepWorld, MissingSubjectActionRejected) {
  WorldState w = two_vehicle_world(5.0);
  TrafficContext ctx{Polyline({{-100.0, 0.0}, {100.0, 0.0}}), {}, {}};
  EXPECT_THROW(step_world(w, {}, ctx), std::invalid_argument);
}

TEST(StepWorld, DrivenIntoAvCollides) {
  WorldState w = two_vehicle_world(2.0);
  VehicleState* cbv = w.find(10);
  cbv->yaw = kPi;  // facing the AV
  cbv->speed = 8.0;
  TrafficContext ctx{Polyline({{-100.0, 0.0}, {100.0, 0.0}}), {}, {}};
  ctx.traffic.spawning = false;
  bool collided = false;
  for (int i = 0; i < 20 && !collided; ++i) {
    const StepResult r = step_world(w, {{10, Action{3.0, 0.0}}}, ctx);
    for (const auto& e : r.collisions)
      if ((e.id_a == 1 && e.id_b == 10) || (e.id_a == 10 && e.id_b == 1)) {
        collided = true;
        EXPECT_DOUBLE_EQ(r.h, 18.0);
      }
  }
  EXPECT_TRUE(collided);
}

TEST(StepWorld, ReplayIsBitIdentical) {
  const ScenarioLayout sl = intersection_layout();
  auto run = [&]() {
    WorldState w = make_world(sl.road, sl.av_route, 7, 5);
    TrafficContext ctx{sl.av_route, {}, {}};
    for (int i = 0; i < 300; ++i) step_world(w, {}, ctx);
    return w;
  };
  const WorldState a = run();
  const WorldState b = run();
  ASSERT_EQ(a.vehicles.size(), b.vehicles.size());
  for (size_t i = 0; i < a.vehicles.size(); ++i) {
    EXPECT_EQ(a.vehicles[i].id, b.vehicles[i].id);
    EXPECT_EQ(a.vehicles[i].position.x, b.vehicles[i].position.x);
    EXPECT_EQ(a.vehicles[i].position.y, b.vehicles[i].position.y);
    EXPECT_EQ(a.vehicles[i].yaw, b.vehicles[i].yaw);
    EXPECT_EQ(a.vehicles[i].speed, b.vehicles[i].speed);
  }
}

TEST(Layout, BuiltinsAreValid) {
  for (const auto& sl : {straight_layout(), intersection_layout()}) {
    EXPECT_GE(sl.road.lanes.size(), 2u);
    EXPECT_FALSE(sl.road.spawn_slots.empty());
    EXPECT_GT(sl.av_route.length(), 50.0);
    WorldState w = make_world(sl.road, sl.av_route, 1, 4);
    EXPECT_NO_THROW(validate_world(w));
  }
}

TEST(Layout, FileRoundTrip) {
  namespace fs = std::filesystem;
  const ScenarioLayout sl = intersection_layout();
  const std::string path = (fs::temp_directory_path() / "frea_layout_test.txt").string();
  save_layout(sl, path);
  const ScenarioLayout back = load_layout(path);
  ASSERT_EQ(back.road.lanes.size(), sl.road.lanes.size());
  for (size_t i = 0; i < sl.road.lanes.size(); ++i) {
    EXPECT_EQ(back.road.lanes[i].id, sl.road.lanes[i].id);
    EXPECT_EQ(back.road.lanes[i].width, sl.road.lanes[i].width);
    ASSERT_EQ(back.road.lanes[i].center.size(), sl.road.lanes[i].center.size());
  }
  EXPECT_EQ(back.road.conflict_points.size(), sl.road.conflict_points.size());
  EXPECT_EQ(back.road.spawn_slots.size(), sl.road.spawn_slots.size());
  EXPECT_EQ(back.av_route.length(), sl.av_route.length());
  fs::remove(path);
}

TEST(Layout, RejectsBadFiles) {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "frea_layout_bad.txt").string();
  {
    std::ofstream out(path);
    out << "lane 1 3.5 0 0 1 1\n";
  }
  EXPECT_THROW(load_layout(path), std::runtime_error);
  {
    std::ofstream out(path);
    out << "# frea layout 1\nwibble 3\n";
  }
  EXPECT_THROW(load_layout(path), std::runtime_error);
  fs::remove(path);
}

TEST(TrajectoryLog, RoundTrip) {
  namespace fs = std::filesystem;
  const ScenarioLayout sl = straight_layout();
  WorldState w = make_world(sl.road, sl.av_route, 3, 3);
  TrafficContext ctx{sl.av_route, {}, {}};

  TrajectoryData td;
  for (int i = 0; i < 50; ++i) {
    const StepResult r = step_world(w, {}, ctx);
    LogStep s;
    s.time = w.time;
    s.h = r.h;
    s.vehicles = w.vehicles;
    s.events = r.collisions;
    s.feas.push_back({2, -0.5 * i});
    td.steps.push_back(std::move(s));
  }
  const std::string path = (fs::temp_directory_path() / "frea_traj_test.txt").string();
  save_trajectory(td, path);
  const TrajectoryData back = load_trajectory(path);
  ASSERT_EQ(back.size(), td.size());
  for (size_t i = 0; i < td.size(); ++i) {
    EXPECT_EQ(back.steps[i].time, td.steps[i].time);
    EXPECT_EQ(back.steps[i].h, td.steps[i].h);
    ASSERT_EQ(back.steps[i].vehicles.size(), td.steps[i].vehicles.size());
    for (size_t j = 0; j < td.steps[i].vehicles.size(); ++j) {
      EXPECT_EQ(back.steps[i].vehicles[j].position.x, td.steps[i].vehicles[j].position.x);
      EXPECT_EQ(back.steps[i].vehicles[j].yaw, td.steps[i].vehicles[j].yaw);
    }
    ASSERT_EQ(back.steps[i].feas.size(), td.steps[i].feas.size());
    EXPECT_EQ(back.steps[i].feas[0].second, td.steps[i].feas[0].second);
  }
  fs::remove(path);
}

TEST(World, ValidationRejectsBadStates) {
  WorldState w = two_vehicle_world(1.0);
  EXPECT_NO_THROW(validate_world(w));
  WorldState no_av = w;
  no_av.vehicles[0].role = Role::BV;
  EXPECT_THROW(validate_world(no_av), std::invalid_argument);
  WorldState dup = w;
  dup.vehicles[1].id = 1;
  EXPECT_THROW(validate_world(dup), std::invalid_argument);
  WorldState bad_dt = w;
  bad_dt.dt = 0.0;
  EXPECT_THROW(validate_world(bad_dt), std::invalid_argument);
}
