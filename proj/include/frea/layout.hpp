#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "frea/world.hpp"

namespace frea {

/// A road layout plus the AV's planned route through it.
struct ScenarioLayout {
  RoadLayout road;
  Polyline av_route;
};

namespace detail {
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

// Plain-text layout format, one record per line:
//   # frea layout 1            (required header)
//   name <string>
//   lane <id> <width> <x0> <y0> <x1> <y1> ...
//   spawn <lane_id> <s> <speed>
//   conflict <x> <y>
//   route pts <x> <y> ...      (or: route lanes <id> ...)
inline void save_layout(const ScenarioLayout& sl, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write layout file: " + path);
  out << "# frea layout 1\n";
  out << "name " << sl.road.name << "\n";
  for (const auto& lane : sl.road.lanes) {
    out << "lane " << lane.id << " " << detail::fmt_double(lane.width);
    for (const auto& p : lane.center.points())
      out << " " << detail::fmt_double(p.x) << " " << detail::fmt_double(p.y);
    out << "\n";
  }
  for (const auto& s : sl.road.spawn_slots)
    out << "spawn " << s.lane_id << " " << detail::fmt_double(s.s) << " "
        << detail::fmt_double(s.speed) << "\n";
  for (const auto& c : sl.road.conflict_points)
    out << "conflict " << detail::fmt_double(c.x) << " " << detail::fmt_double(c.y) << "\n";
  if (sl.av_route.size() > 0) {
    out << "route pts";
    for (const auto& p : sl.av_route.points())
      out << " " << detail::fmt_double(p.x) << " " << detail::fmt_double(p.y);
    out << "\n";
  }
}

inline ScenarioLayout load_layout(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open layout file: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# frea layout 1", 0) != 0)
    throw std::runtime_error("layout file missing version header: " + path);

  ScenarioLayout sl;
  std::vector<int> route_lanes;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    if (kind == "name") {
      is >> sl.road.name;
    } else if (kind == "lane") {
      Lane lane;
      is >> lane.id >> lane.width;
      std::vector<Vec2> pts;
      double x, y;
      while (is >> x >> y) pts.push_back({x, y});
      if (pts.size() < 2) throw std::runtime_error("lane needs at least 2 points");
      if (lane.width <= 0.0) throw std::runtime_error("lane width must be > 0");
      lane.center = Polyline(std::move(pts));
      sl.road.lanes.push_back(std::move(lane));
    } else if (kind == "spawn") {
      SpawnSlot s;
      if (!(is >> s.lane_id >> s.s >> s.speed))
        throw std::runtime_error("malformed spawn record");
      sl.road.spawn_slots.push_back(s);
    } else if (kind == "conflict") {
      Vec2 c;
      if (!(is >> c.x >> c.y)) throw std::runtime_error("malformed conflict record");
      sl.road.conflict_points.push_back(c);
    } else if (kind == "route") {
      std::string mode;
      is >> mode;
      if (mode == "pts") {
        std::vector<Vec2> pts;
        double x, y;
        while (is >> x >> y) pts.push_back({x, y});
        sl.av_route = Polyline(std::move(pts));
      } else if (mode == "lanes") {
        int id;
        while (is >> id) route_lanes.push_back(id);
      } else {
        throw std::runtime_error("route record must use 'pts' or 'lanes'");
      }
    } else {
      throw std::runtime_error("unknown layout record: " + kind);
    }
  }
  if (!route_lanes.empty()) {
    std::vector<Vec2> pts;
    for (const int id : route_lanes) {
      const Lane* lane = sl.road.lane_by_id(id);
      if (lane == nullptr) throw std::runtime_error("route references unknown lane");
      for (const auto& p : lane->center.points()) {
        if (pts.empty() || distance(pts.back(), p) > 1e-9) pts.push_back(p);
      }
    }
    sl.av_route = Polyline(std::move(pts));
  }
  if (sl.av_route.size() < 2) throw std::runtime_error("layout defines no AV route");
  return sl;
}

// ---------------------------------------------------------------------------
// Built-in layouts
// ---------------------------------------------------------------------------

/// Straight road: two eastbound lanes plus one opposing lane.
inline ScenarioLayout straight_layout() {
  ScenarioLayout sl;
  sl.road.name = "straight";

  Lane l1{1, 3.5, Polyline({{-80.0, -1.75}, {80.0, -1.75}})};
  Lane l2{2, 3.5, Polyline({{-80.0, 1.75}, {80.0, 1.75}})};
  Lane l3{3, 3.5, Polyline({{80.0, 5.25}, {-80.0, 5.25}})};
  sl.road.lanes = {l1, l2, l3};

  for (const double s : {30.0, 60.0, 90.0, 120.0}) {
    sl.road.spawn_slots.push_back({1, s, 5.0});
    sl.road.spawn_slots.push_back({2, s - 12.0, 5.0});
  }
  sl.road.spawn_slots.push_back({3, 30.0, 5.0});
  sl.road.spawn_slots.push_back({3, 80.0, 5.0});

  sl.av_route = Polyline({{-80.0, -1.75}, {80.0, -1.75}});
  return sl;
}

/// Four-way intersection; the AV route turns left from the eastbound
/// approach onto the northbound exit.
inline ScenarioLayout intersection_layout() {
  ScenarioLayout sl;
  sl.road.name = "intersection";

  Lane east{1, 3.5, Polyline({{-50.0, -1.75}, {50.0, -1.75}})};
  Lane west{2, 3.5, Polyline({{50.0, 1.75}, {-50.0, 1.75}})};
  Lane north{3, 3.5, Polyline({{1.75, -50.0}, {1.75, 50.0}})};
  Lane south{4, 3.5, Polyline({{-1.75, 50.0}, {-1.75, -50.0}})};
  sl.road.lanes = {east, west, north, south};

  sl.road.conflict_points = {{-1.75, -1.75}, {1.75, -1.75}, {1.75, 1.75}, {-1.75, 1.75}};

  for (const double s : {15.0, 30.0, 55.0, 75.0}) {
    sl.road.spawn_slots.push_back({2, s, 5.0});
    sl.road.spawn_slots.push_back({3, s, 5.0});
    sl.road.spawn_slots.push_back({4, s, 5.0});
  }
  sl.road.spawn_slots.push_back({1, 20.0, 5.0});
  sl.road.spawn_slots.push_back({1, 70.0, 5.0});

  // Straight approach, left-turn arc (radius 7.75 around (-6, 6)), exit north.
  std::vector<Vec2> pts;
  pts.push_back({-50.0, -1.75});
  pts.push_back({-6.0, -1.75});
  const Vec2 arc_center{-6.0, 6.0};
  const double radius = 7.75;
  for (int i = 1; i <= 12; ++i) {
    const double ang = -kPi / 2.0 + (kPi / 2.0) * (static_cast<double>(i) / 12.0);
    pts.push_back({arc_center.x + radius * std::cos(ang),
                   arc_center.y + radius * std::sin(ang)});
  }
  pts.push_back({1.75, 50.0});
  sl.av_route = Polyline(std::move(pts));
  return sl;
}

/// Resolves a layout argument: a built-in name or a file path.
inline ScenarioLayout resolve_layout(const std::string& spec) {
  if (spec == "straight") return straight_layout();
  if (spec == "intersection") return intersection_layout();
  return load_layout(spec);
}

}  // namespace frea
