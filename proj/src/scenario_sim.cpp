#include "evigrid/scenario_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "evigrid/error.hpp"

namespace evigrid {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Segment {
  Eigen::Vector2d a;
  Eigen::Vector2d b;
  int object = 0;
};

struct RayHit {
  double distance = kInf;
  int object = -1;
};

double cross(const Eigen::Vector2d& u, const Eigen::Vector2d& v) { return u.x() * v.y() - u.y() * v.x(); }

double ray_segment(const Eigen::Vector2d& o, const Eigen::Vector2d& d, const Segment& s) {
  const Eigen::Vector2d e = s.b - s.a;
  const double denom = cross(d, e);
  if (std::abs(denom) < 1e-12) return kInf;
  const Eigen::Vector2d ao = s.a - o;
  const double t = cross(ao, e) / denom;
  const double u = cross(ao, d) / denom;
  if (t <= 1e-9 || u < 0.0 || u > 1.0) return kInf;
  return t;
}

RayHit cast(const std::vector<Segment>& segs, const Eigen::Vector2d& o, const Eigen::Vector2d& d, double max_range) {
  RayHit best;
  for (const Segment& s : segs) {
    const double t = ray_segment(o, d, s);
    if (t < best.distance) best = {t, s.object};
  }
  if (best.distance > max_range) return {};
  return best;
}

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d e = b - a;
  const double len2 = e.squaredNorm();
  const double u = len2 > 0.0 ? std::clamp((p - a).dot(e) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + u * e)).norm();
}

double polyline_distance(const Polyline& line, const Eigen::Vector2d& p) {
  if (line.size() == 1) return (p - line.front()).norm();
  double best = kInf;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) best = std::min(best, point_segment_distance(p, line[i], line[i + 1]));
  return best;
}

// Objects are numbered guardrails first, then vehicles.
std::vector<Segment> world_segments(const Scenario& s, double t) {
  std::vector<Segment> segs;
  const int g = static_cast<int>(s.guardrails.size());
  for (int i = 0; i < g; ++i) {
    const Polyline& line = s.guardrails[i];
    for (std::size_t k = 0; k + 1 < line.size(); ++k) segs.push_back({line[k], line[k + 1], i});
  }
  for (std::size_t v = 0; v < s.vehicles.size(); ++v) {
    const auto c = s.vehicles[v].box_at(t).corners();
    for (int k = 0; k < 4; ++k) segs.push_back({c[k], c[(k + 1) % 4], g + static_cast<int>(v)});
  }
  return segs;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::mt19937_64 frame_rng(std::uint64_t seed, std::string_view stream, double t) {
  const auto tick = static_cast<std::uint64_t>(std::llround(t * 1e6));
  const std::uint64_t tag = fnv1a(stream);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                    static_cast<std::uint32_t>(tick), static_cast<std::uint32_t>(tick >> 32)};
  return std::mt19937_64(seq);
}

double gauss(std::mt19937_64& rng, double sd) {
  if (!(sd > 0.0)) return 0.0;
  return std::normal_distribution<double>(0.0, sd)(rng);
}

int poisson(std::mt19937_64& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  return std::poisson_distribution<int>(mean)(rng);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (!(hi > lo)) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::Vector2d heading(double deg) { return {std::cos(deg2rad(deg)), std::sin(deg2rad(deg))}; }

void check_time(const Scenario& s, double t) {
  if (!(t >= 0.0 && t <= s.duration_s + 1e-9)) {
    throw Error(ErrorCode::kInvalidArgument, "time " + std::to_string(t) + " outside the scenario duration");
  }
}

// Over-ground sensor velocity in the world frame (ego translation plus yaw-rate lever arm).
Eigen::Vector2d sensor_velocity(const Scenario& s, const SensorPose& mount, double t) {
  const Pose2D ego = s.ego_pose(t);
  const EgoMotion m = s.ego_motion(t);
  const Eigen::Vector2d lever = ego.rotation() * mount.translation();
  const double w = deg2rad(m.yaw_rate);
  return m.v * heading(ego.yaw_deg) + w * Eigen::Vector2d(-lever.y(), lever.x());
}

struct Occupant {
  bool occupied = false;
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
};

Occupant occupant_at(const Scenario& s, const std::vector<OrientedBox>& boxes, const Eigen::Vector2d& p,
                     double half_cell) {
  for (std::size_t v = 0; v < boxes.size(); ++v) {
    if (boxes[v].contains(p)) return {true, s.vehicles[v].velocity};
  }
  for (const Polyline& line : s.guardrails) {
    if (polyline_distance(line, p) <= half_cell) return {true, Eigen::Vector2d::Zero()};
  }
  return {};
}

}  // namespace

OrientedBox SimVehicle::box_at(double t) const {
  OrientedBox b = box;
  b.cx += velocity.x() * t;
  b.cy += velocity.y() * t;
  return b;
}

void Scenario::validate() const {
  if (ego.empty()) throw Error(ErrorCode::kInvalidArgument, "scenario needs at least one ego sample");
  for (std::size_t i = 1; i < ego.size(); ++i) {
    if (!(ego[i].t > ego[i - 1].t)) throw Error(ErrorCode::kInvalidArgument, "ego trajectory is not time-monotonic");
  }
  if (!(duration_s >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative scenario duration");
  for (const Polyline& line : guardrails) {
    if (line.empty()) throw Error(ErrorCode::kInvalidArgument, "empty guardrail polyline");
  }
  for (const SimVehicle& v : vehicles) {
    if (!(v.box.length > 0.0 && v.box.width > 0.0)) throw Error(ErrorCode::kInvalidArgument, "degenerate vehicle box");
  }
  for (const SensorMount& m : sensors) {
    if (!(m.fov_deg > 0.0 && m.fov_deg <= 360.0 && m.max_range_m > 0.0 && m.update_period_s > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "sensor '" + m.id + "' has an invalid coverage");
    }
  }
  if (!(lidar_max_range_m > 0.0 && lidar_period_s > 0.0)) throw Error(ErrorCode::kInvalidArgument, "invalid LiDAR setup");
}

Pose2D Scenario::ego_pose(double t) const {
  if (ego.empty()) return {};
  auto it = std::upper_bound(ego.begin(), ego.end(), t, [](double v, const EgoSample& e) { return v < e.t; });
  const EgoSample& e = it == ego.begin() ? ego.front() : *std::prev(it);
  const double dt = t - e.t;
  const double yaw0 = deg2rad(e.pose.yaw_deg);
  const double w = deg2rad(e.yaw_rate);
  Pose2D p = e.pose;
  if (std::abs(w) < 1e-12) {
    p.x += e.v * dt * std::cos(yaw0);
    p.y += e.v * dt * std::sin(yaw0);
  } else {
    p.x += e.v / w * (std::sin(yaw0 + w * dt) - std::sin(yaw0));
    p.y += e.v / w * (std::cos(yaw0) - std::cos(yaw0 + w * dt));
  }
  p.yaw_deg = wrap_deg(e.pose.yaw_deg + e.yaw_rate * dt);
  return p;
}

EgoMotion Scenario::ego_motion(double t) const {
  if (ego.empty()) return {0.0, 0.0, t};
  auto it = std::upper_bound(ego.begin(), ego.end(), t, [](double v, const EgoSample& e) { return v < e.t; });
  const EgoSample& e = it == ego.begin() ? ego.front() : *std::prev(it);
  return {e.v, e.yaw_rate, t};
}

Pose2D Scenario::relative_motion(double t0, double t1) const {
  return ego_pose(t0).inverse().compose(ego_pose(t1));
}

std::vector<OrientedBox> Scenario::vehicle_boxes(double t) const {
  const Pose2D to_vehicle = ego_pose(t).inverse();
  std::vector<OrientedBox> out;
  out.reserve(vehicles.size());
  for (const SimVehicle& v : vehicles) out.push_back(v.box_at(t).transformed(to_vehicle));
  return out;
}

const SensorMount& Scenario::sensor(std::string_view id) const {
  for (const SensorMount& m : sensors) {
    if (m.id == id) return m;
  }
  throw Error(ErrorCode::kUnknownSensor, "no sensor named '" + std::string(id) + "'");
}

void SimConfig::validate() const {
  const bool ok = radar_range_noise >= 0.0 && radar_az_noise >= 0.0 && radar_doppler_noise >= 0.0 &&
                  detections_per_target_mean >= 0.0 && guardrail_detections_per_m >= 0.0 &&
                  detection_dropout >= 0.0 && detection_dropout <= 1.0 && clutter_rate >= 0.0 &&
                  rcs_target_range.first <= rcs_target_range.second &&
                  rcs_clutter_range.first <= rcs_clutter_range.second && radar_cast_res_deg > 0.0 &&
                  lidar_az_res > 0.0 && lidar_range_noise >= 0.0;
  if (!ok) throw Error(ErrorCode::kInvalidArgument, "simulation configuration out of range");
}

std::vector<SensorMount> default_radar_suite() {
  return {
      {"front_center", {3.75, 0.0, 0.0}, 108.0, 100.0, 0.05},
      {"front_left", {3.45, 0.80, 45.0}, 108.0, 100.0, 0.05},
      {"front_right", {3.45, -0.80, -45.0}, 108.0, 100.0, 0.05},
      {"rear_left", {-0.95, 0.80, 135.0}, 108.0, 100.0, 0.05},
      {"rear_right", {-0.95, -0.80, -135.0}, 108.0, 100.0, 0.05},
      {"rear_center", {-1.05, 0.0, 180.0}, 108.0, 100.0, 0.05},
  };
}

std::vector<SensorMount> shifted_radar_suite(std::vector<SensorMount> suite) {
  struct Delta {
    const char* id;
    double dx, dy, dyaw;
  };
  static constexpr Delta kDeltas[] = {
      {"front_center", -0.0780, -0.1260, 0.2167},
      {"front_left", -0.0230, -0.0267, -0.0661},
      {"rear_center", -0.0384, 1.0111, -0.5267},
  };
  for (SensorMount& m : suite) {
    for (const Delta& d : kDeltas) {
      if (m.id != d.id) continue;
      m.pose.x += d.dx;
      m.pose.y += d.dy;
      m.pose.yaw_deg += d.dyaw;
    }
  }
  return suite;
}

Scenario make_highway_scenario(std::uint64_t seed, const HighwayParams& params) {
  if (params.lanes < 1 || params.min_vehicles < 0 || params.max_vehicles < params.min_vehicles) {
    throw Error(ErrorCode::kInvalidArgument, "highway parameters out of range");
  }
  std::mt19937_64 rng(seed);
  Scenario s;
  s.seed = seed;
  s.duration_s = params.duration_s;
  s.sensors = default_radar_suite();
  s.ego.push_back({0.0, {0.0, 0.0, 0.0}, params.ego_speed, 0.0});

  const int ego_lane = std::uniform_int_distribution<int>(0, params.lanes - 1)(rng);
  const auto lane_y = [&](int lane) { return (lane - ego_lane) * params.lane_width; };
  const double x_begin = -300.0;
  const double x_end = params.ego_speed * params.duration_s + 400.0;
  const double right = lane_y(0) - 0.5 * params.lane_width - uniform(rng, 0.5, 2.5);
  const double left = lane_y(params.lanes - 1) + 0.5 * params.lane_width + uniform(rng, 0.5, 2.5);
  s.guardrails.push_back({{x_begin, right}, {x_end, right}});
  s.guardrails.push_back({{x_begin, left}, {x_end, left}});

  std::vector<double> lane_speed(params.lanes);
  for (int l = 0; l < params.lanes; ++l) lane_speed[l] = params.ego_speed + uniform(rng, -6.0, 6.0);
  const double ahead_speed = params.ego_speed + uniform(rng, 0.0, 4.0);
  const double behind_speed = params.ego_speed - uniform(rng, 0.0, 4.0);

  const int count = std::uniform_int_distribution<int>(params.min_vehicles, params.max_vehicles)(rng);
  std::vector<int> lanes_of;
  for (int k = 0; k < count; ++k) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const int lane = std::uniform_int_distribution<int>(0, params.lanes - 1)(rng);
      const double x = uniform(rng, -70.0, 90.0);
      if (lane == ego_lane && std::abs(x) < 15.0) continue;
      bool clear = true;
      for (std::size_t j = 0; j < s.vehicles.size(); ++j) {
        if (lanes_of[j] == lane && std::abs(s.vehicles[j].box.cx - x) < params.vehicle_length + 6.0) clear = false;
      }
      if (!clear) continue;
      double v = lane_speed[lane];
      if (lane == ego_lane) v = x > 0.0 ? ahead_speed : behind_speed;
      SimVehicle veh;
      veh.box = {x, lane_y(lane) + uniform(rng, -0.3, 0.3), params.vehicle_length, params.vehicle_width, 0.0};
      veh.velocity = {v, 0.0};
      s.vehicles.push_back(veh);
      lanes_of.push_back(lane);
      break;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Scenario files

namespace {

Pose2D pose_from(const YAML::Node& n, const Pose2D& fallback = {}) {
  Pose2D p = fallback;
  if (!n) return p;
  if (n["x"]) p.x = n["x"].as<double>();
  if (n["y"]) p.y = n["y"].as<double>();
  if (n["yaw_deg"]) p.yaw_deg = n["yaw_deg"].as<double>();
  return p;
}

}  // namespace

Scenario parse_scenario(std::string_view yaml_text) {
  Scenario s;
  try {
    const YAML::Node root = YAML::Load(std::string(yaml_text));
    if (!root.IsMap()) throw Error(ErrorCode::kParse, "scenario document must be a mapping");
    s.seed = root["seed"].as<std::uint64_t>(0);
    s.duration_s = root["duration_s"].as<double>(10.0);
    if (const YAML::Node g = root["guardrails"]) {
      for (const YAML::Node& line : g) {
        Polyline pl;
        for (const YAML::Node& pt : line) pl.emplace_back(pt[0].as<double>(), pt[1].as<double>());
        s.guardrails.push_back(std::move(pl));
      }
    }
    if (const YAML::Node vs = root["vehicles"]) {
      for (const YAML::Node& v : vs) {
        SimVehicle veh;
        veh.box = {v["cx"].as<double>(), v["cy"].as<double>(), v["length"].as<double>(4.5),
                   v["width"].as<double>(1.8), v["yaw_deg"].as<double>(0.0)};
        veh.velocity = {v["vx"].as<double>(0.0), v["vy"].as<double>(0.0)};
        s.vehicles.push_back(veh);
      }
    }
    if (const YAML::Node es = root["ego"]) {
      for (const YAML::Node& e : es) {
        s.ego.push_back({e["t"].as<double>(0.0), pose_from(e), e["v"].as<double>(0.0), e["yaw_rate_dps"].as<double>(0.0)});
      }
    } else {
      s.ego.push_back({});
    }
    if (const YAML::Node l = root["lidar"]) {
      s.lidar_pose = pose_from(l);
      s.lidar_max_range_m = l["max_range_m"].as<double>(s.lidar_max_range_m);
      s.lidar_period_s = l["period_s"].as<double>(s.lidar_period_s);
    }
    if (const YAML::Node ss = root["sensors"]) {
      for (const YAML::Node& n : ss) {
        SensorMount m;
        m.id = n["id"].as<std::string>();
        m.pose = pose_from(n);
        m.fov_deg = n["fov_deg"].as<double>(m.fov_deg);
        m.max_range_m = n["max_range_m"].as<double>(m.max_range_m);
        m.update_period_s = n["period_s"].as<double>(m.update_period_s);
        s.sensors.push_back(m);
      }
    } else {
      s.sensors = default_radar_suite();
    }
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::kParse, std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

std::string dump_scenario(const Scenario& s) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << s.seed;
  out << YAML::Key << "duration_s" << YAML::Value << s.duration_s;
  out << YAML::Key << "lidar" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "x" << YAML::Value
      << s.lidar_pose.x << YAML::Key << "y" << YAML::Value << s.lidar_pose.y << YAML::Key << "yaw_deg" << YAML::Value
      << s.lidar_pose.yaw_deg << YAML::Key << "max_range_m" << YAML::Value << s.lidar_max_range_m << YAML::Key
      << "period_s" << YAML::Value << s.lidar_period_s << YAML::EndMap;
  out << YAML::Key << "guardrails" << YAML::Value << YAML::BeginSeq;
  for (const Polyline& line : s.guardrails) {
    out << YAML::Flow << YAML::BeginSeq;
    for (const auto& p : line) out << YAML::Flow << YAML::BeginSeq << p.x() << p.y() << YAML::EndSeq;
    out << YAML::EndSeq;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "vehicles" << YAML::Value << YAML::BeginSeq;
  for (const SimVehicle& v : s.vehicles) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "cx" << YAML::Value << v.box.cx << YAML::Key << "cy"
        << YAML::Value << v.box.cy << YAML::Key << "length" << YAML::Value << v.box.length << YAML::Key << "width"
        << YAML::Value << v.box.width << YAML::Key << "yaw_deg" << YAML::Value << v.box.yaw_deg << YAML::Key << "vx"
        << YAML::Value << v.velocity.x() << YAML::Key << "vy" << YAML::Value << v.velocity.y() << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "ego" << YAML::Value << YAML::BeginSeq;
  for (const EgoSample& e : s.ego) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "t" << YAML::Value << e.t << YAML::Key << "x" << YAML::Value
        << e.pose.x << YAML::Key << "y" << YAML::Value << e.pose.y << YAML::Key << "yaw_deg" << YAML::Value
        << e.pose.yaw_deg << YAML::Key << "v" << YAML::Value << e.v << YAML::Key << "yaw_rate_dps" << YAML::Value
        << e.yaw_rate << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "sensors" << YAML::Value << YAML::BeginSeq;
  for (const SensorMount& m : s.sensors) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "id" << YAML::Value << m.id << YAML::Key << "x" << YAML::Value
        << m.pose.x << YAML::Key << "y" << YAML::Value << m.pose.y << YAML::Key << "yaw_deg" << YAML::Value
        << m.pose.yaw_deg << YAML::Key << "fov_deg" << YAML::Value << m.fov_deg << YAML::Key << "max_range_m"
        << YAML::Value << m.max_range_m << YAML::Key << "period_s" << YAML::Value << m.update_period_s << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open scenario " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str());
}

void save_scenario(const std::filesystem::path& path, const Scenario& s) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write scenario " + path.string());
  out << dump_scenario(s);
}

// ---------------------------------------------------------------------------
// Sensors

std::optional<double> first_hit(const Scenario& s, double t, const Eigen::Vector2d& origin,
                                const Eigen::Vector2d& direction, double max_range) {
  const RayHit h = cast(world_segments(s, t), origin, direction.normalized(), max_range);
  if (h.object < 0) return std::nullopt;
  return h.distance;
}

std::vector<Detection> simulate_radar(const Scenario& s, const SimConfig& cfg, std::string_view sensor_id, double t) {
  const SensorMount& mount = s.sensor(sensor_id);
  check_time(s, t);
  cfg.validate();

  std::mt19937_64 rng = frame_rng(s.seed, std::string("radar/") + mount.id, t);
  const std::vector<Segment> segs = world_segments(s, t);
  const Pose2D sensor = s.ego_pose(t).compose(mount.pose);
  const Eigen::Vector2d origin = sensor.translation();
  const Eigen::Vector2d v_sensor = sensor_velocity(s, mount.pose, t);
  const int guardrails = static_cast<int>(s.guardrails.size());
  const int objects = guardrails + static_cast<int>(s.vehicles.size());

  std::vector<std::vector<Eigen::Vector2d>> visible(objects);
  const int rays = std::max(1, static_cast<int>(std::floor(mount.fov_deg / cfg.radar_cast_res_deg)));
  for (int k = 0; k < rays; ++k) {
    const double az = -0.5 * mount.fov_deg + (k + 0.5) * cfg.radar_cast_res_deg;
    const Eigen::Vector2d dir = heading(sensor.yaw_deg + az);
    const RayHit h = cast(segs, origin, dir, mount.max_range_m);
    if (h.object >= 0) visible[h.object].push_back(origin + h.distance * dir);
  }

  std::vector<Detection> out;
  const auto emit = [&](const Eigen::Vector2d& p, const Eigen::Vector2d& v_obj, double rcs) {
    const Eigen::Vector2d local = sensor.to_local(p);
    const double range0 = local.norm();
    if (range0 <= 0.0) return;
    const Eigen::Vector2d u = (p - origin) / range0;
    Detection d;
    d.range = range0 + gauss(rng, cfg.radar_range_noise);
    d.azimuth = rad2deg(std::atan2(local.y(), local.x())) + gauss(rng, cfg.radar_az_noise);
    d.doppler = (v_obj - v_sensor).dot(u) + gauss(rng, cfg.radar_doppler_noise);
    d.rcs = rcs;
    d.timestamp = t;
    d.sensor_id = mount.id;
    if (d.range < 0.0 || d.range >= mount.max_range_m || std::abs(d.azimuth) >= 0.5 * mount.fov_deg) return;
    out.push_back(std::move(d));
  };

  for (int obj = 0; obj < objects; ++obj) {
    const auto& pts = visible[obj];
    if (pts.empty()) continue;
    double mean = cfg.detections_per_target_mean;
    Eigen::Vector2d v_obj = Eigen::Vector2d::Zero();
    if (obj < guardrails) {
      double length = 0.0;
      for (std::size_t i = 1; i < pts.size(); ++i) {
        const double step = (pts[i] - pts[i - 1]).norm();
        if (step < 2.0) length += step;
      }
      mean = cfg.guardrail_detections_per_m * length;
    } else {
      v_obj = s.vehicles[obj - guardrails].velocity;
    }
    const int n = poisson(rng, mean);
    std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
    for (int k = 0; k < n; ++k) {
      const Eigen::Vector2d p = pts[pick(rng)];
      const double rcs = uniform(rng, cfg.rcs_target_range.first, cfg.rcs_target_range.second);
      if (uniform(rng, 0.0, 1.0) < cfg.detection_dropout) continue;
      emit(p, v_obj, rcs);
    }
  }

  const int clutter = poisson(rng, cfg.clutter_rate);
  for (int k = 0; k < clutter; ++k) {
    const double range = uniform(rng, 0.0, mount.max_range_m);
    const double az = uniform(rng, -0.5 * mount.fov_deg, 0.5 * mount.fov_deg);
    const Eigen::Vector2d u = heading(sensor.yaw_deg + az);
    Detection d;
    d.range = range;
    d.azimuth = az;
    d.doppler = -v_sensor.dot(u) + gauss(rng, cfg.radar_doppler_noise);
    d.rcs = uniform(rng, cfg.rcs_clutter_range.first, cfg.rcs_clutter_range.second);
    d.timestamp = t;
    d.sensor_id = mount.id;
    out.push_back(std::move(d));
  }
  return out;
}

LidarScan simulate_lidar(const Scenario& s, const SimConfig& cfg, double t) {
  check_time(s, t);
  cfg.validate();
  std::mt19937_64 rng = frame_rng(s.seed, "lidar", t);
  const std::vector<Segment> segs = world_segments(s, t);
  const Pose2D ego = s.ego_pose(t);
  const Pose2D sensor = ego.compose(s.lidar_pose);
  const Eigen::Vector2d origin = sensor.translation();

  LidarScan scan;
  scan.timestamp = t;
  const int rays = static_cast<int>(std::llround(360.0 / cfg.lidar_az_res));
  for (int k = 0; k < rays; ++k) {
    const double az = -180.0 + (k + 0.5) * cfg.lidar_az_res;
    const Eigen::Vector2d dir = heading(sensor.yaw_deg + az);
    const RayHit h = cast(segs, origin, dir, s.lidar_max_range_m);
    if (h.object < 0) continue;
    const double range = std::max(0.0, h.distance + gauss(rng, cfg.lidar_range_noise));
    const Eigen::Vector2d p = ego.to_local(origin + range * dir);
    scan.points.push_back({p.x(), p.y(), cfg.lidar_z});
  }
  return scan;
}

GroundTruth ground_truth(const Scenario& s, double t, std::string_view sensor_id, const PolarGridSpec& spec) {
  const SensorMount& mount = s.sensor(sensor_id);
  check_time(s, t);
  const Pose2D ego = s.ego_pose(t);
  const Pose2D sensor = ego.compose(mount.pose);
  const Eigen::Vector2d origin = sensor.translation();
  const std::vector<Segment> segs = world_segments(s, t);
  std::vector<OrientedBox> boxes;
  for (const SimVehicle& v : s.vehicles) boxes.push_back(v.box_at(t));
  const Eigen::Matrix2d to_vehicle = ego.rotation().transpose();

  GroundTruth gt{LabelImage::polar(spec), std::vector<Eigen::Vector2d>(spec.size(), Eigen::Vector2d::Zero())};
  const double az_res_rad = deg2rad(spec.azimuth_res_deg);
  for (int a = 0; a < spec.azimuth_bins; ++a) {
    const double az = spec.azimuth_center(a);
    if (std::abs(az) > 0.5 * mount.fov_deg) continue;
    const Eigen::Vector2d dir = heading(sensor.yaw_deg + az);
    const RayHit h = cast(segs, origin, dir, mount.max_range_m);
    const double visible = std::min(h.distance, mount.max_range_m);
    for (int r = 0; r < spec.range_bins; ++r) {
      const double rc = spec.range_center(r);
      const std::size_t i = static_cast<std::size_t>(a) * spec.range_bins + r;
      const Occupant occ = occupant_at(s, boxes, origin + rc * dir, 0.5 * std::max(spec.range_res_m, rc * az_res_rad));
      if (occ.occupied) {
        gt.labels.classes[i] = CellClass::kOccupied;
        gt.velocity[i] = to_vehicle * occ.velocity;
      } else if (rc < visible) {
        gt.labels.classes[i] = CellClass::kFree;
      }
    }
  }
  return gt;
}

GroundTruth ground_truth(const Scenario& s, double t, const CartesianGridSpec& cspec) {
  check_time(s, t);
  const Pose2D ego = s.ego_pose(t);
  const Eigen::Vector2d origin = ego.to_parent(s.lidar_pose.translation());
  const std::vector<Segment> segs = world_segments(s, t);
  std::vector<OrientedBox> boxes;
  for (const SimVehicle& v : s.vehicles) boxes.push_back(v.box_at(t));
  const Eigen::Matrix2d to_vehicle = ego.rotation().transpose();
  const double half_cell = 0.5 * std::max(cspec.cell_x, cspec.cell_y);

  GroundTruth gt{LabelImage(cspec.height, cspec.width),
                 std::vector<Eigen::Vector2d>(cspec.size(), Eigen::Vector2d::Zero())};
  for (int row = 0; row < cspec.height; ++row) {
    for (int col = 0; col < cspec.width; ++col) {
      const std::size_t i = cspec.flat(row, col);
      const Eigen::Vector2d p = ego.to_parent(cspec.cell_center(row, col));
      const Occupant occ = occupant_at(s, boxes, p, half_cell);
      if (occ.occupied) {
        gt.labels.classes[i] = CellClass::kOccupied;
        gt.velocity[i] = to_vehicle * occ.velocity;
        continue;
      }
      const Eigen::Vector2d d = p - origin;
      const double range = d.norm();
      if (range >= s.lidar_max_range_m) continue;
      if (range < 1e-9 || cast(segs, origin, d / range, range).object < 0) gt.labels.classes[i] = CellClass::kFree;
    }
  }
  return gt;
}

}  // namespace evigrid
