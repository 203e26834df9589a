#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evigrid/evidential.hpp"
#include "evigrid/geometry.hpp"

namespace evigrid {

/// Structure-of-arrays storage for measurement masses and the radial
/// velocity channel. `vr_dir` is the ray heading (rad, vehicle frame) that
/// `vr` was measured along.
struct GridPlanes {
  std::vector<double> free;
  std::vector<double> occupied;
  std::vector<double> unknown;
  std::vector<double> vr;
  std::vector<std::uint8_t> vr_valid;
  std::vector<double> vr_dir;

  GridPlanes() = default;
  explicit GridPlanes(std::size_t n)
      : free(n, 0.0), occupied(n, 0.0), unknown(n, 1.0), vr(n, 0.0), vr_valid(n, 0), vr_dir(n, 0.0) {}

  std::size_t cell_count() const { return free.size(); }
  MeasurementCell cell(std::size_t i) const { return {free[i], occupied[i], unknown[i]}; }
  void set_cell(std::size_t i, const MeasurementCell& c) {
    free[i] = c.free;
    occupied[i] = c.occupied;
    unknown[i] = c.unknown;
  }
  void copy_cell_from(const GridPlanes& src, std::size_t from, std::size_t to) {
    free[to] = src.free[from];
    occupied[to] = src.occupied[from];
    unknown[to] = src.unknown[from];
    vr[to] = src.vr[from];
    vr_valid[to] = src.vr_valid[from];
    vr_dir[to] = src.vr_dir[from];
  }
  std::size_t valid_velocity_count() const;
  bool all_vacuous() const;
};

/// Measurement grid in a sensor's polar frame; cell (a, r) at index a * R + r.
struct PolarGrid : GridPlanes {
  PolarGridSpec spec;

  PolarGrid() = default;
  explicit PolarGrid(const PolarGridSpec& s) : GridPlanes(s.size()), spec(s) {}

  std::size_t index(int a, int r) const { return static_cast<std::size_t>(a) * spec.range_bins + r; }
};

/// Measurement grid on a Cartesian raster; cell (row, col) at row * W + col.
struct CartesianGrid : GridPlanes {
  CartesianGridSpec spec;
  double timestamp = 0.0;

  CartesianGrid() = default;
  explicit CartesianGrid(const CartesianGridSpec& s) : GridPlanes(s.size()), spec(s) {}

  std::size_t index(int row, int col) const { return spec.flat(row, col); }
};

/// Binary raster of radar detections (1 = at least one detection in the bin).
struct PolarImage {
  PolarGridSpec spec;
  std::vector<std::uint8_t> pixels;

  PolarImage() = default;
  explicit PolarImage(const PolarGridSpec& s) : spec(s), pixels(s.size(), 0) {}
  std::uint8_t at(int a, int r) const { return pixels[static_cast<std::size_t>(a) * spec.range_bins + r]; }
  std::size_t count() const;
};

/// Hard per-cell classes on a rows x cols raster (polar: rows = azimuth bins).
struct LabelImage {
  int rows = 0;
  int cols = 0;
  std::vector<CellClass> classes;

  LabelImage() = default;
  LabelImage(int r, int c, CellClass fill = CellClass::kUnknown)
      : rows(r), cols(c), classes(static_cast<std::size_t>(r) * c, fill) {}
  static LabelImage polar(const PolarGridSpec& s, CellClass fill = CellClass::kUnknown) {
    return LabelImage(s.azimuth_bins, s.range_bins, fill);
  }
  CellClass at(int r, int c) const { return classes[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t count(CellClass c) const;
};

/// Worst-case spatial smear of pre-aggregating radar frames.
struct AggregationPolicy {
  int n = 1;
  double period_s = 0.05;
  double v_max = 125.0 / 3.6;

  static constexpr double kMaxSpatialError = 4.5;  // m, average passenger car length

  double spatial_error() const { return v_max * n * period_s; }
  /// Throws Error(kAggregationBudget) when the smear exceeds one car length.
  void validate() const;
};

struct AggregationFrame {
  std::vector<Detection> detections;
  Pose2D ego_pose;  // vehicle pose in the world at capture time
};

PolarImage rasterize(std::span<const Detection> detections, const PolarGridSpec& spec);

/// Nearest-bin resampling. Cells outside the sensor's field of view or range are vacuous.
CartesianGrid polar_to_cartesian(const PolarGrid& grid, const SensorPose& pose, const CartesianGridSpec& cspec);

/// Nearest-cell resampling of bin centers. Bins outside the raster are vacuous.
PolarGrid cartesian_to_polar(const CartesianGrid& grid, const SensorPose& pose, const PolarGridSpec& spec);

/// Ego-compensated (absolute) radial velocity of a detection.
double compensate_doppler(const Detection& d, const EgoMotion& ego, const SensorPose& pose);

/// Moves every frame's detections into the sensor frame of the newest frame.
std::vector<Detection> aggregate_frames(std::span<const AggregationFrame> frames, const SensorPose& pose,
                                        const AggregationPolicy& policy);

/// Resamples a polar label image into a Cartesian label raster; cells the
/// sensor does not cover become UNKNOWN.
LabelImage label_to_cartesian(const LabelImage& label, const PolarGridSpec& spec, const SensorPose& pose,
                              const CartesianGridSpec& cspec);

}  // namespace evigrid
