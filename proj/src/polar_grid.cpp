#include "evigrid/polar_grid.hpp"

#include <algorithm>
#include <cmath>

#include "evigrid/error.hpp"

namespace evigrid {

std::size_t GridPlanes::valid_velocity_count() const {
  return static_cast<std::size_t>(std::count(vr_valid.begin(), vr_valid.end(), std::uint8_t{1}));
}

bool GridPlanes::all_vacuous() const {
  for (std::size_t i = 0; i < cell_count(); ++i) {
    if (free[i] != 0.0 || occupied[i] != 0.0) return false;
  }
  return true;
}

std::size_t PolarImage::count() const {
  return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), std::uint8_t{1}));
}

std::size_t LabelImage::count(CellClass c) const {
  return static_cast<std::size_t>(std::count(classes.begin(), classes.end(), c));
}

void AggregationPolicy::validate() const {
  if (n < 1 || period_s <= 0.0 || v_max < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "aggregation policy needs n >= 1 and a positive period");
  }
  if (spatial_error() > kMaxSpatialError) {
    throw Error(ErrorCode::kAggregationBudget,
                "delta_L = " + std::to_string(spatial_error()) + " m exceeds " + std::to_string(kMaxSpatialError) + " m");
  }
}

PolarImage rasterize(std::span<const Detection> detections, const PolarGridSpec& spec) {
  PolarImage image(spec);
  for (const Detection& d : detections) {
    if (const auto bin = spec.bin_of(d.range, d.azimuth)) {
      image.pixels[static_cast<std::size_t>(bin->azimuth) * spec.range_bins + bin->range] = 1;
    }
  }
  return image;
}

CartesianGrid polar_to_cartesian(const PolarGrid& grid, const SensorPose& pose, const CartesianGridSpec& cspec) {
  CartesianGrid out(cspec);
  const PolarGridSpec& spec = grid.spec;
  for (int row = 0; row < cspec.height; ++row) {
    for (int col = 0; col < cspec.width; ++col) {
      const Eigen::Vector2d p = cspec.cell_center(row, col);
      const Eigen::Vector2d local = pose.to_local(p);
      const double range = local.norm();
      const double azimuth = rad2deg(std::atan2(local.y(), local.x()));
      const auto bin = spec.bin_of(range, azimuth);
      if (!bin) continue;
      const std::size_t dst = out.index(row, col);
      out.copy_cell_from(grid, grid.index(bin->azimuth, bin->range), dst);
      const Eigen::Vector2d ray = p - pose.translation();
      out.vr_dir[dst] = std::atan2(ray.y(), ray.x());
    }
  }
  return out;
}

PolarGrid cartesian_to_polar(const CartesianGrid& grid, const SensorPose& pose, const PolarGridSpec& spec) {
  PolarGrid out(spec);
  const double yaw = deg2rad(pose.yaw_deg);
  for (int a = 0; a < spec.azimuth_bins; ++a) {
    const double az = deg2rad(spec.azimuth_center(a));
    const Eigen::Vector2d dir{std::cos(az), std::sin(az)};
    for (int r = 0; r < spec.range_bins; ++r) {
      const Eigen::Vector2d p = pose.to_parent(dir * spec.range_center(r));
      const auto cell = grid.spec.cell_of(p);
      if (!cell) continue;
      const std::size_t dst = out.index(a, r);
      out.copy_cell_from(grid, grid.index(cell->row, cell->col), dst);
      out.vr_dir[dst] = az + yaw;
    }
  }
  return out;
}

double compensate_doppler(const Detection& d, const EgoMotion& ego, const SensorPose& pose) {
  // Sensor velocity in the vehicle frame: v e_x + omega x lever arm.
  const double omega = deg2rad(ego.yaw_rate);
  const Eigen::Vector2d sensor_velocity{ego.v - omega * pose.y, omega * pose.x};
  const double heading = deg2rad(pose.yaw_deg + d.azimuth);
  const Eigen::Vector2d ray{std::cos(heading), std::sin(heading)};
  return d.doppler + sensor_velocity.dot(ray);
}

std::vector<Detection> aggregate_frames(std::span<const AggregationFrame> frames, const SensorPose& pose,
                                        const AggregationPolicy& policy) {
  policy.validate();
  if (frames.size() != static_cast<std::size_t>(policy.n)) {
    throw Error(ErrorCode::kInvalidArgument, "expected " + std::to_string(policy.n) + " frames, got " +
                                                 std::to_string(frames.size()));
  }
  std::vector<Detection> out;
  if (frames.empty()) return out;
  const Pose2D& newest = frames.back().ego_pose;
  for (const AggregationFrame& frame : frames) {
    for (const Detection& d : frame.detections) {
      const Eigen::Vector2d world = frame.ego_pose.to_parent(pose.to_parent(d.position()));
      const Eigen::Vector2d local = pose.to_local(newest.to_local(world));
      Detection moved = d;
      moved.range = local.norm();
      moved.azimuth = rad2deg(std::atan2(local.y(), local.x()));
      out.push_back(std::move(moved));
    }
  }
  return out;
}

LabelImage label_to_cartesian(const LabelImage& label, const PolarGridSpec& spec, const SensorPose& pose,
                              const CartesianGridSpec& cspec) {
  if (label.rows != spec.azimuth_bins || label.cols != spec.range_bins) {
    throw Error(ErrorCode::kDimensionMismatch, "label does not match polar spec");
  }
  LabelImage out(cspec.height, cspec.width, CellClass::kUnknown);
  for (int row = 0; row < cspec.height; ++row) {
    for (int col = 0; col < cspec.width; ++col) {
      const Eigen::Vector2d local = pose.to_local(cspec.cell_center(row, col));
      const auto bin = spec.bin_of(local.norm(), rad2deg(std::atan2(local.y(), local.x())));
      if (!bin) continue;
      out.classes[cspec.flat(row, col)] = label.at(bin->azimuth, bin->range);
    }
  }
  return out;
}

}  // namespace evigrid
