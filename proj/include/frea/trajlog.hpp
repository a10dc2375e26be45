#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "frea/layout.hpp"
#include "frea/world.hpp"

namespace frea {

// Newline-delimited trajectory log. Field order is fixed; numbers are written
// with full round-trip precision so replays compare byte-for-byte.
//
//   # frea-trajectory 1
//   step <time> <h> <n_vehicles> <n_events> <n_feas>
//   veh <id> <role> <x> <y> <yaw> <speed> <half_len> <half_wid>
//   event collision <id_a> <id_b> <rel_speed> <cx> <cy>
//   feas <subject_id> <v_h>

struct LogStep {
  double time = 0.0;
  double h = -1.0;
  std::vector<VehicleState> vehicles;
  std::vector<CollisionEvent> events;
  std::vector<std::pair<int, double>> feas;  // per-subject feasibility value
};

struct TrajectoryData {
  std::vector<LogStep> steps;

  const LogStep& back() const { return steps.back(); }
  bool empty() const { return steps.empty(); }
  size_t size() const { return steps.size(); }
};

inline void save_trajectory(const TrajectoryData& td, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory file: " + path);
  out << "# frea-trajectory 1\n";
  for (const auto& s : td.steps) {
    out << "step " << detail::fmt_double(s.time) << " " << detail::fmt_double(s.h)
        << " " << s.vehicles.size() << " " << s.events.size() << " "
        << s.feas.size() << "\n";
    for (const auto& v : s.vehicles) {
      out << "veh " << v.id << " " << role_name(v.role) << " "
          << detail::fmt_double(v.position.x) << " " << detail::fmt_double(v.position.y)
          << " " << detail::fmt_double(v.yaw) << " " << detail::fmt_double(v.speed)
          << " " << detail::fmt_double(v.extent.x) << " "
          << detail::fmt_double(v.extent.y) << "\n";
    }
    for (const auto& e : s.events) {
      out << "event collision " << e.id_a << " " << e.id_b << " "
          << detail::fmt_double(e.rel_speed) << " " << detail::fmt_double(e.contact.x)
          << " " << detail::fmt_double(e.contact.y) << "\n";
    }
    for (const auto& [id, vh] : s.feas)
      out << "feas " << id << " " << detail::fmt_double(vh) << "\n";
  }
}

inline TrajectoryData load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory file: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# frea-trajectory 1", 0) != 0)
    throw std::runtime_error("trajectory file missing version header: " + path);

  TrajectoryData td;
  size_t want_veh = 0, want_ev = 0, want_feas = 0;
  const auto check_counts = [&]() {
    if (td.steps.empty()) return;
    const LogStep& s = td.steps.back();
    if (s.vehicles.size() != want_veh || s.events.size() != want_ev ||
        s.feas.size() != want_feas)
      throw std::runtime_error("trajectory record count mismatch at t=" +
                               std::to_string(s.time));
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    if (kind == "step") {
      check_counts();
      LogStep s;
      if (!(is >> s.time >> s.h >> want_veh >> want_ev >> want_feas))
        throw std::runtime_error("malformed step record");
      td.steps.push_back(std::move(s));
    } else if (kind == "veh") {
      if (td.steps.empty()) throw std::runtime_error("veh record before step");
      VehicleState v;
      std::string role;
      if (!(is >> v.id >> role >> v.position.x >> v.position.y >> v.yaw >>
            v.speed >> v.extent.x >> v.extent.y))
        throw std::runtime_error("malformed veh record");
      v.role = role_from_name(role);
      td.steps.back().vehicles.push_back(v);
    } else if (kind == "event") {
      std::string what;
      CollisionEvent e;
      if (!(is >> what >> e.id_a >> e.id_b >> e.rel_speed >> e.contact.x >> e.contact.y) ||
          what != "collision")
        throw std::runtime_error("malformed event record");
      td.steps.back().events.push_back(e);
    } else if (kind == "feas") {
      int id;
      double vh;
      if (!(is >> id >> vh)) throw std::runtime_error("malformed feas record");
      td.steps.back().feas.push_back({id, vh});
    } else {
      throw std::runtime_error("unknown trajectory record: " + kind);
    }
  }
  check_counts();
  return td;
}

}  // namespace frea
