#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "evigrid/geometry.hpp"
#include "evigrid/lidar_label_gen.hpp"
#include "evigrid/polar_grid.hpp"

namespace evigrid {

using Polyline = std::vector<Eigen::Vector2d>;

/// Box-shaped vehicle moving at constant velocity; `box` is its pose at t = 0 (world frame).
struct SimVehicle {
  OrientedBox box;
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // m/s, world frame

  OrientedBox box_at(double t) const;
};

/// Ego state sample; between samples the vehicle follows a constant turn-rate arc.
struct EgoSample {
  double t = 0.0;
  Pose2D pose;  // world frame
  double v = 0.0;
  double yaw_rate = 0.0;  // deg/s
};

struct SensorMount {
  std::string id;
  SensorPose pose;
  double fov_deg = 108.0;
  double max_range_m = 100.0;
  double update_period_s = 0.05;
};

struct Scenario {
  std::vector<Polyline> guardrails;  // world frame
  std::vector<SimVehicle> vehicles;
  std::vector<EgoSample> ego;        // time-ordered
  std::vector<SensorMount> sensors;
  SensorPose lidar_pose;             // vehicle frame
  double lidar_max_range_m = 120.0;
  double lidar_period_s = 0.1;
  double duration_s = 10.0;
  std::uint64_t seed = 0;

  /// Throws Error(kInvalidArgument) on non-monotonic trajectories or bad mounts.
  void validate() const;

  Pose2D ego_pose(double t) const;
  EgoMotion ego_motion(double t) const;
  /// Pose of the vehicle frame at `t1` expressed in the vehicle frame at `t0`.
  Pose2D relative_motion(double t0, double t1) const;
  /// Vehicle boxes at time t in the ego vehicle frame.
  std::vector<OrientedBox> vehicle_boxes(double t) const;
  const SensorMount& sensor(std::string_view id) const;
};

struct SimConfig {
  double radar_range_noise = 0.1;      // m std
  double radar_az_noise = 0.3;         // deg std
  double radar_doppler_noise = 0.1;    // m/s std
  double detections_per_target_mean = 6.0;
  double guardrail_detections_per_m = 0.15;
  double detection_dropout = 0.1;
  double clutter_rate = 3.0;           // expected false detections per frame
  std::pair<double, double> rcs_target_range{-5.0, 15.0};    // dBsm
  std::pair<double, double> rcs_clutter_range{-35.0, -15.0};
  double radar_cast_res_deg = 0.1;     // angular step of the surface visibility cast
  double lidar_az_res = 0.2;           // deg
  double lidar_range_noise = 0.02;     // m std
  double lidar_z = 1.0;                // m

  void validate() const;
};

/// Desk-scale highway drive: straight multi-lane road with guardrails on both
/// sides, traffic in every lane and the default six-radar suite.
struct HighwayParams {
  double duration_s = 10.0;
  double ego_speed = 125.0 / 3.6;
  int lanes = 3;
  double lane_width = 3.75;
  int min_vehicles = 4;
  int max_vehicles = 10;
  double vehicle_length = 4.5;
  double vehicle_width = 1.8;
};

Scenario make_highway_scenario(std::uint64_t seed, const HighwayParams& params = {});

/// Six radars: front/rear center and four corners at +-45 / +-135 deg yaw.
std::vector<SensorMount> default_radar_suite();
/// Applies per-sensor mounting deltas (dx, dy, dyaw) of the second test setup.
std::vector<SensorMount> shifted_radar_suite(std::vector<SensorMount> suite);

/// Scenario file: YAML document with seed, duration_s, guardrails, vehicles, ego, lidar, sensors.
Scenario parse_scenario(std::string_view yaml_text);
std::string dump_scenario(const Scenario& s);
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const std::filesystem::path& path, const Scenario& s);

/// Radar frame of sensor `sensor_id` at time t. Deterministic in (scenario, cfg, sensor, t).
std::vector<Detection> simulate_radar(const Scenario& s, const SimConfig& cfg, std::string_view sensor_id, double t);

/// 360 deg sweep from the LiDAR mount; points in the vehicle frame at z = cfg.lidar_z.
LidarScan simulate_lidar(const Scenario& s, const SimConfig& cfg, double t);

/// Reference classes and true over-ground velocity (vehicle-frame axes) per cell.
struct GroundTruth {
  LabelImage labels;
  std::vector<Eigen::Vector2d> velocity;
};

GroundTruth ground_truth(const Scenario& s, double t, std::string_view sensor_id, const PolarGridSpec& spec);
/// Cartesian reference seen from the LiDAR mount, free up to the LiDAR range.
GroundTruth ground_truth(const Scenario& s, double t, const CartesianGridSpec& cspec);

/// Distance along a ray to the first guardrail or vehicle surface at time t
/// (world frame); nullopt when nothing is hit within max_range.
std::optional<double> first_hit(const Scenario& s, double t, const Eigen::Vector2d& origin,
                                const Eigen::Vector2d& direction, double max_range);

}  // namespace evigrid
