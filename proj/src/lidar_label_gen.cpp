#include "evigrid/lidar_label_gen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Geometry>

#include "evigrid/error.hpp"

namespace evigrid {

bool OrientedBox::contains(const Eigen::Vector2d& p) const {
  const double yaw = deg2rad(yaw_deg);
  const double dx = p.x() - cx;
  const double dy = p.y() - cy;
  const double along = std::cos(yaw) * dx + std::sin(yaw) * dy;
  const double across = -std::sin(yaw) * dx + std::cos(yaw) * dy;
  return std::abs(along) <= 0.5 * length && std::abs(across) <= 0.5 * width;
}

std::array<Eigen::Vector2d, 4> OrientedBox::corners() const {
  const Pose2D frame{cx, cy, yaw_deg};
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  return {frame.to_parent({hl, hw}), frame.to_parent({-hl, hw}), frame.to_parent({-hl, -hw}),
          frame.to_parent({hl, -hw})};
}

OrientedBox OrientedBox::transformed(const Pose2D& frame_to_parent) const {
  const Eigen::Vector2d c = frame_to_parent.to_parent({cx, cy});
  return {c.x(), c.y(), length, width, wrap_deg(yaw_deg + frame_to_parent.yaw_deg)};
}

CartesianGrid lidar_measurement_grid(const LidarScan& scan, const CartesianGridSpec& cspec,
                                     const LidarIsmParams& params) {
  if (!(params.sector_deg > 0.0) || params.free_mass < 0.0 || params.occupied_mass < 0.0 ||
      params.free_mass > 1.0 || params.occupied_mass > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "LiDAR ISM parameters out of range");
  }
  CartesianGrid grid(cspec);
  grid.timestamp = scan.timestamp;

  const int sectors = static_cast<int>(std::ceil(360.0 / params.sector_deg));
  const auto sector_of = [&](double angle_deg) {
    const int s = static_cast<int>(std::floor((wrap_deg(angle_deg) + 180.0) / params.sector_deg));
    return std::clamp(s, 0, sectors - 1);
  };
  std::vector<double> first_return(sectors, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> hits;

  for (const LidarPoint& p : scan.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) continue;
    if (p.z < params.z_min || p.z > params.z_max) continue;
    const Eigen::Vector2d d = Eigen::Vector2d(p.x, p.y) - params.origin;
    const double range = d.norm();
    if (range <= 0.0) continue;
    const int s = sector_of(rad2deg(std::atan2(d.y(), d.x())));
    first_return[s] = std::min(first_return[s], range);
    if (auto c = cspec.cell_of({p.x, p.y})) hits.push_back(cspec.flat(c->row, c->col));
  }
  if (std::all_of(first_return.begin(), first_return.end(), [](double r) { return std::isinf(r); })) return grid;

  const double margin = 0.5 * std::max(cspec.cell_x, cspec.cell_y);
  const MeasurementCell free_cell{params.free_mass, 0.0, 1.0 - params.free_mass};
  for (int row = 0; row < cspec.height; ++row) {
    for (int col = 0; col < cspec.width; ++col) {
      const Eigen::Vector2d d = cspec.cell_center(row, col) - params.origin;
      const double range = d.norm();
      const int s = sector_of(rad2deg(std::atan2(d.y(), d.x())));
      if (std::isfinite(first_return[s]) && range + margin < first_return[s]) grid.set_cell(cspec.flat(row, col), free_cell);
    }
  }
  const MeasurementCell occupied_cell{0.0, params.occupied_mass, 1.0 - params.occupied_mass};
  for (std::size_t i : hits) grid.set_cell(i, occupied_cell);
  return grid;
}

CartesianGrid refine_with_boxes(CartesianGrid grid, std::span<const OrientedBox> boxes) {
  if (boxes.empty()) return grid;
  struct Bounds {
    double x0, x1, y0, y1;
  };
  std::vector<Bounds> bounds;
  bounds.reserve(boxes.size());
  for (const OrientedBox& b : boxes) {
    Bounds bb{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
              std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& c : b.corners()) {
      bb.x0 = std::min(bb.x0, c.x());
      bb.x1 = std::max(bb.x1, c.x());
      bb.y0 = std::min(bb.y0, c.y());
      bb.y1 = std::max(bb.y1, c.y());
    }
    bounds.push_back(bb);
  }
  const CartesianGridSpec& cs = grid.spec;
  for (int row = 0; row < cs.height; ++row) {
    for (int col = 0; col < cs.width; ++col) {
      const Eigen::Vector2d p = cs.cell_center(row, col);
      for (std::size_t k = 0; k < boxes.size(); ++k) {
        const Bounds& bb = bounds[k];
        if (p.x() < bb.x0 || p.x() > bb.x1 || p.y() < bb.y0 || p.y() > bb.y1) continue;
        if (boxes[k].contains(p)) {
          grid.set_cell(cs.flat(row, col), {0.0, 1.0, 0.0});
          break;
        }
      }
    }
  }
  return grid;
}

namespace {

std::vector<std::uint8_t> dilate(const PolarImage& image, int radius) {
  const int rows = image.spec.azimuth_bins;
  const int cols = image.spec.range_bins;
  std::vector<std::uint8_t> along(image.pixels.size(), 0);
  for (int a = 0; a < rows; ++a) {
    for (int r = 0; r < cols; ++r) {
      if (!image.at(a, r)) continue;
      const int lo = std::max(0, r - radius);
      const int hi = std::min(cols - 1, r + radius);
      for (int k = lo; k <= hi; ++k) along[static_cast<std::size_t>(a) * cols + k] = 1;
    }
  }
  std::vector<std::uint8_t> out(image.pixels.size(), 0);
  for (int a = 0; a < rows; ++a) {
    for (int r = 0; r < cols; ++r) {
      if (!along[static_cast<std::size_t>(a) * cols + r]) continue;
      const int lo = std::max(0, a - radius);
      const int hi = std::min(rows - 1, a + radius);
      for (int k = lo; k <= hi; ++k) out[static_cast<std::size_t>(k) * cols + r] = 1;
    }
  }
  return out;
}

}  // namespace

PolarGrid filter_partial_area(PolarGrid grid, const PolarImage& radar, int dilation_radius,
                              std::span<const std::uint8_t> keep_mask) {
  if (!(radar.spec == grid.spec)) {
    throw Error(ErrorCode::kGeometryMismatch, "radar image and reference grid use different specs");
  }
  if (!keep_mask.empty() && keep_mask.size() != grid.cell_count()) {
    throw Error(ErrorCode::kDimensionMismatch, "keep mask size differs from the grid");
  }
  if (dilation_radius < 0) throw Error(ErrorCode::kInvalidArgument, "dilation radius must be non-negative");

  const std::vector<std::uint8_t> support = dilate(radar, dilation_radius);
  const int rows = grid.spec.azimuth_bins;
  const int cols = grid.spec.range_bins;
  for (int a = 0; a < rows; ++a) {
    int first = -1;
    int last = -1;
    for (int r = 0; r < cols; ++r) {
      if (classify(grid.cell(grid.index(a, r))) == CellClass::kOccupied) {
        if (first < 0) first = r;
        last = r;
      }
    }
    for (int r = first + 1; r < last; ++r) {
      const std::size_t i = grid.index(a, r);
      if (grid.occupied[i] <= 0.0 || support[i] || (!keep_mask.empty() && keep_mask[i])) continue;
      grid.unknown[i] = 1.0 - grid.free[i];
      grid.occupied[i] = 0.0;
    }
  }
  return grid;
}

LabelImage make_label(const PolarGrid& grid) {
  LabelImage out = LabelImage::polar(grid.spec);
  for (std::size_t i = 0; i < grid.cell_count(); ++i) out.classes[i] = classify(grid.cell(i));
  return out;
}

LabelImage make_label(const CartesianGrid& grid) {
  LabelImage out(grid.spec.height, grid.spec.width);
  for (std::size_t i = 0; i < grid.cell_count(); ++i) out.classes[i] = classify(grid.cell(i));
  return out;
}

std::vector<std::uint8_t> box_mask(std::span<const OrientedBox> boxes, const SensorPose& pose,
                                   const PolarGridSpec& spec) {
  std::vector<std::uint8_t> mask(spec.size(), 0);
  if (boxes.empty()) return mask;
  for (int a = 0; a < spec.azimuth_bins; ++a) {
    const double az = deg2rad(spec.azimuth_center(a));
    const Eigen::Vector2d dir(std::cos(az), std::sin(az));
    for (int r = 0; r < spec.range_bins; ++r) {
      const Eigen::Vector2d p = pose.to_parent(spec.range_center(r) * dir);
      for (const OrientedBox& b : boxes) {
        if (b.contains(p)) {
          mask[static_cast<std::size_t>(a) * spec.range_bins + r] = 1;
          break;
        }
      }
    }
  }
  return mask;
}

LabelGenerator::LabelGenerator(const CartesianGridSpec& cspec, const DgmConfig& dgm_cfg,
                               const LidarIsmParams& lidar, const LabelParams& params, std::uint64_t seed)
    : dgm_(cspec, seed), dgm_cfg_(dgm_cfg), lidar_(lidar), params_(params) {
  dgm_cfg_.validate();
  if (params_.accumulation_steps < 1 || params_.stride < 1 || params_.dilation_radius < 0) {
    throw Error(ErrorCode::kInvalidArgument, "label parameters out of range");
  }
}

void LabelGenerator::push_scan(const LidarScan& scan, const std::optional<Pose2D>& ego_motion) {
  if (steps_ == 0) {
    dgm_.set_timestamp(scan.timestamp);
  } else {
    const double dt = scan.timestamp - last_time_;
    if (!(dt >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "LiDAR sweeps out of time order");
    dgm_.predict(dt, dgm_cfg_, ego_motion);
  }
  dgm_.update(lidar_measurement_grid(scan, dgm_.spec(), lidar_), dgm_cfg_);
  last_time_ = scan.timestamp;
  ++steps_;
}

bool LabelGenerator::label_due() const {
  return steps_ >= params_.accumulation_steps && (steps_ - params_.accumulation_steps) % params_.stride == 0;
}

CartesianGrid LabelGenerator::reference_grid(std::span<const OrientedBox> boxes) const {
  return refine_with_boxes(dgm_.to_measurement_grid(), boxes);
}

PolarGrid LabelGenerator::polar_reference(const CartesianGrid& reference, std::span<const OrientedBox> boxes,
                                          const SensorPose& pose, const PolarGridSpec& spec,
                                          std::span<const Detection> radar) const {
  const PolarGrid polar = cartesian_to_polar(reference, pose, spec);
  return filter_partial_area(polar, rasterize(radar, spec), params_.dilation_radius, box_mask(boxes, pose, spec));
}

}  // namespace evigrid
