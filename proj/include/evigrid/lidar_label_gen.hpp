#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "evigrid/dgm_fusion.hpp"
#include "evigrid/polar_grid.hpp"

namespace evigrid {

struct LidarPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// One LiDAR sweep, points in the vehicle frame.
struct LidarScan {
  std::vector<LidarPoint> points;
  double timestamp = 0.0;
};

struct OrientedBox {
  double cx = 0.0;
  double cy = 0.0;
  double length = 4.5;
  double width = 1.8;
  double yaw_deg = 0.0;

  bool contains(const Eigen::Vector2d& p) const;
  std::array<Eigen::Vector2d, 4> corners() const;
  OrientedBox transformed(const Pose2D& frame_to_parent) const;
};

struct LidarIsmParams {
  double z_min = 0.3;   // m; drops road surface returns
  double z_max = 2.5;   // m; drops gantries and overhead signs
  double sector_deg = 0.2;
  double free_mass = 0.8;
  double occupied_mass = 0.9;
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();  // sensor position in the vehicle frame
};

struct LabelParams {
  int accumulation_steps = 10;
  int stride = 8;           // emit every stride-th accumulated map
  int dilation_radius = 3;  // bins, Chebyshev
};

/// Single-sweep ray-traced grid: free before the first return of each
/// angular sector, occupied at returns, vacuous elsewhere.
CartesianGrid lidar_measurement_grid(const LidarScan& scan, const CartesianGridSpec& cspec,
                                     const LidarIsmParams& params = {});

/// Sets (0, 1, 0) in every cell whose center lies inside a box.
CartesianGrid refine_with_boxes(CartesianGrid grid, std::span<const OrientedBox> boxes);

/// Per azimuth row, occupied mass strictly between the first and last occupied
/// bins is moved to unknown unless the bin lies within `dilation_radius` of a
/// radar detection bin or is flagged in `keep_mask`.
PolarGrid filter_partial_area(PolarGrid grid, const PolarImage& radar, int dilation_radius,
                              std::span<const std::uint8_t> keep_mask = {});

LabelImage make_label(const PolarGrid& grid);
LabelImage make_label(const CartesianGrid& grid);

/// Polar mask of bins whose centers fall inside any box (vehicle frame).
std::vector<std::uint8_t> box_mask(std::span<const OrientedBox> boxes, const SensorPose& pose,
                                   const PolarGridSpec& spec);

/// Accumulates LiDAR sweeps into a LiDAR DGM and turns it into per-radar
/// training labels. Sweeps must be pushed in time order.
class LabelGenerator {
 public:
  LabelGenerator(const CartesianGridSpec& cspec, const DgmConfig& dgm_cfg, const LidarIsmParams& lidar,
                 const LabelParams& params, std::uint64_t seed);

  /// `ego_motion` is the pose of the current vehicle frame in the previous one.
  void push_scan(const LidarScan& scan, const std::optional<Pose2D>& ego_motion = std::nullopt);

  int steps() const { return steps_; }
  /// True once enough sweeps are fused and the stride lands on this step.
  bool label_due() const;

  /// Reference measurement grid: DGM converted to masses and refined with boxes.
  CartesianGrid reference_grid(std::span<const OrientedBox> boxes) const;

  /// Polar annotation for one radar given its detections in the same frame.
  PolarGrid polar_reference(const CartesianGrid& reference, std::span<const OrientedBox> boxes,
                            const SensorPose& pose, const PolarGridSpec& spec,
                            std::span<const Detection> radar) const;

  const Dgm& dgm() const { return dgm_; }

 private:
  Dgm dgm_;
  DgmConfig dgm_cfg_;
  LidarIsmParams lidar_;
  LabelParams params_;
  int steps_ = 0;
  double last_time_ = 0.0;
};

}  // namespace evigrid
