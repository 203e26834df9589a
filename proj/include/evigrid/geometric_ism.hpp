#pragma once

#include <span>

#include "evigrid/polar_grid.hpp"

namespace evigrid {

/// Hand-tuned baseline parameters. None of these come from published values;
/// they are deliberately conservative so that false positives stay faint.
struct GeometricIsmParams {
  double sigma_r = 0.5;        // m
  double sigma_phi = 1.0;      // deg
  double lambda_o = 0.6;       // peak occupied mass per detection
  double lambda_f = 0.3;       // free mass in front of the first return
  double rcs_min = -20.0;      // dBsm; weaker returns are treated as clutter
  int velocity_spread_radius = 1;  // bins, Chebyshev

  /// Throws Error(kInvalidArgument) on out-of-range values.
  void validate() const;
};

/// Gaussian-mixture occupancy, implicit free space up to the first return per
/// azimuth bin, and ego-compensated Doppler spread to neighbouring bins.
PolarGrid geometric_ism(std::span<const Detection> detections, const EgoMotion& ego, const SensorPose& pose,
                        const GeometricIsmParams& params, const PolarGridSpec& spec);

}  // namespace evigrid
