#include "evigrid/geometry.hpp"

namespace evigrid {

Eigen::Matrix2d Pose2D::rotation() const {
  const double a = deg2rad(yaw_deg);
  const double c = std::cos(a);
  const double s = std::sin(a);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

Eigen::Vector2d Pose2D::to_parent(const Eigen::Vector2d& local) const {
  return rotation() * local + translation();
}

Eigen::Vector2d Pose2D::to_local(const Eigen::Vector2d& parent) const {
  return rotation().transpose() * (parent - translation());
}

Pose2D Pose2D::compose(const Pose2D& child) const {
  const Eigen::Vector2d t = to_parent(child.translation());
  return {t.x(), t.y(), wrap_deg(yaw_deg + child.yaw_deg)};
}

Pose2D Pose2D::inverse() const {
  const Eigen::Vector2d t = -(rotation().transpose() * translation());
  return {t.x(), t.y(), wrap_deg(-yaw_deg)};
}

std::optional<BinIndex> PolarGridSpec::bin_of(double range, double azimuth_deg) const {
  if (!(range >= 0.0)) return std::nullopt;
  const double r = std::floor(range / range_res_m);
  const double a = std::floor(wrap_deg(azimuth_deg) / azimuth_res_deg + 0.5 * azimuth_bins);
  if (r < 0.0 || r >= range_bins || a < 0.0 || a >= azimuth_bins) return std::nullopt;
  return BinIndex{static_cast<int>(a), static_cast<int>(r)};
}

Eigen::Vector2d CartesianGridSpec::cell_center(int row, int col) const {
  const Eigen::Vector2d local{(col + 0.5 - 0.5 * width) * cell_x, (row + 0.5 - 0.5 * height) * cell_y};
  return origin.to_parent(local);
}

std::optional<CellIndex> CartesianGridSpec::cell_of(const Eigen::Vector2d& vehicle_point) const {
  const Eigen::Vector2d local = origin.to_local(vehicle_point);
  const double col = std::floor(local.x() / cell_x + 0.5 * width);
  const double row = std::floor(local.y() / cell_y + 0.5 * height);
  if (col < 0.0 || col >= width || row < 0.0 || row >= height) return std::nullopt;
  return CellIndex{static_cast<int>(row), static_cast<int>(col)};
}

}  // namespace evigrid
