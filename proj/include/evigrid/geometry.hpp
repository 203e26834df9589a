#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include <Eigen/Core>

namespace evigrid {

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Wraps an angle in degrees to [-180, 180).
inline double wrap_deg(double deg) {
  double w = std::fmod(deg + 180.0, 360.0);
  if (w < 0.0) w += 360.0;
  return w - 180.0;
}

/// Planar rigid pose; x forward, y left, yaw counter-clockwise in degrees.
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double yaw_deg = 0.0;

  Eigen::Vector2d translation() const { return {x, y}; }
  Eigen::Matrix2d rotation() const;

  /// Maps a point given in this pose's local frame into the parent frame.
  Eigen::Vector2d to_parent(const Eigen::Vector2d& local) const;
  Eigen::Vector2d to_local(const Eigen::Vector2d& parent) const;

  /// Composition: (this ∘ child) maps child-local points into this pose's parent frame.
  Pose2D compose(const Pose2D& child) const;
  Pose2D inverse() const;
};

/// Sensor mounting in the vehicle frame. Elevation and tilt are not modelled.
using SensorPose = Pose2D;

struct EgoMotion {
  double v = 0.0;           // m/s forward
  double yaw_rate = 0.0;    // deg/s
  double timestamp = 0.0;   // s
};

/// One radar return in the sensor frame.
struct Detection {
  double range = 0.0;        // m
  double azimuth = 0.0;      // deg, counter-clockwise from boresight
  double doppler = 0.0;      // m/s, positive when receding
  double rcs = 0.0;          // dBsm
  double timestamp = 0.0;    // s
  std::string sensor_id;

  Eigen::Vector2d position() const {
    const double a = deg2rad(azimuth);
    return {range * std::cos(a), range * std::sin(a)};
  }
};

struct BinIndex {
  int azimuth = 0;
  int range = 0;
};

/// Azimuth x range raster covering [-A*alpha_A/2, A*alpha_A/2) and [0, R*alpha_R).
struct PolarGridSpec {
  int azimuth_bins = 300;
  int range_bins = 350;
  double azimuth_res_deg = 0.36;
  double range_res_m = 0.2;

  bool is_valid() const {
    return azimuth_bins > 0 && range_bins > 0 && azimuth_res_deg > 0.0 && range_res_m > 0.0 &&
           azimuth_bins * azimuth_res_deg <= 360.0 + 1e-9;
  }
  double fov_deg() const { return azimuth_bins * azimuth_res_deg; }
  double max_range() const { return range_bins * range_res_m; }
  std::size_t size() const { return static_cast<std::size_t>(azimuth_bins) * range_bins; }

  double azimuth_center(int a) const { return -0.5 * fov_deg() + (a + 0.5) * azimuth_res_deg; }
  double range_center(int r) const { return (r + 0.5) * range_res_m; }

  /// Bin containing a polar coordinate; nullopt outside the field of view.
  std::optional<BinIndex> bin_of(double range, double azimuth_deg) const;

  bool operator==(const PolarGridSpec&) const = default;

  /// Deep ISM raster: 300 x 350 bins of 0.36 deg x 0.2 m.
  static PolarGridSpec deep_default() { return {300, 350, 0.36, 0.2}; }
  /// Geometric ISM raster: 108 x 200 bins of 1 deg x 0.5 m.
  static PolarGridSpec geometric_default() { return {108, 200, 1.0, 0.5}; }
};

struct CellIndex {
  int row = 0;  // along y
  int col = 0;  // along x
};

/// Cartesian raster of `height` rows (y) by `width` columns (x). `origin` is
/// the pose of the grid center in the vehicle frame.
struct CartesianGridSpec {
  int width = 700;
  int height = 700;
  double cell_x = 0.2;
  double cell_y = 0.2;
  Pose2D origin{};

  bool is_valid() const { return width > 0 && height > 0 && cell_x > 0.0 && cell_y > 0.0; }
  std::size_t size() const { return static_cast<std::size_t>(width) * height; }

  /// Cell center in the vehicle frame.
  Eigen::Vector2d cell_center(int row, int col) const;
  std::optional<CellIndex> cell_of(const Eigen::Vector2d& vehicle_point) const;
  std::size_t flat(int row, int col) const { return static_cast<std::size_t>(row) * width + col; }

  bool operator==(const CartesianGridSpec& o) const {
    return width == o.width && height == o.height && cell_x == o.cell_x && cell_y == o.cell_y &&
           origin.x == o.origin.x && origin.y == o.origin.y && origin.yaw_deg == o.origin.yaw_deg;
  }

  static CartesianGridSpec paper_default() { return {}; }
};

}  // namespace evigrid
