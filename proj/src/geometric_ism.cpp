#include "evigrid/geometric_ism.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "evigrid/error.hpp"

namespace evigrid {

namespace {

// Gaussian tails beyond this many sigmas contribute < 1e-14 and are skipped.
constexpr double kWindowSigmas = 8.0;

}  // namespace

void GeometricIsmParams::validate() const {
  if (!(sigma_r > 0.0) || !(sigma_phi > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "geometric ISM sigmas must be positive");
  }
  if (!(lambda_o > 0.0 && lambda_o < 1.0) || !(lambda_f > 0.0 && lambda_f < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "geometric ISM masses must lie in (0, 1)");
  }
  if (velocity_spread_radius < 0) {
    throw Error(ErrorCode::kInvalidArgument, "velocity spread radius must be non-negative");
  }
}

PolarGrid geometric_ism(std::span<const Detection> detections, const EgoMotion& ego, const SensorPose& pose,
                        const GeometricIsmParams& params, const PolarGridSpec& spec) {
  params.validate();
  PolarGrid grid(spec);
  const int A = spec.azimuth_bins;
  const int R = spec.range_bins;

  struct Kept {
    const Detection* det;
    BinIndex bin;
  };
  std::vector<Kept> kept;
  kept.reserve(detections.size());
  for (const Detection& d : detections) {
    if (d.rcs < params.rcs_min) continue;
    if (const auto bin = spec.bin_of(d.range, d.azimuth)) kept.push_back({&d, *bin});
  }
  if (kept.empty()) return grid;

  // Complementary product of per-detection occupancy, and the strongest
  // single contribution per cell (decides velocity ownership).
  std::vector<double> miss(spec.size(), 1.0);
  std::vector<double> best(spec.size(), 0.0);
  std::vector<double> first_return(static_cast<std::size_t>(A), std::numeric_limits<double>::infinity());

  const int win_r = static_cast<int>(std::ceil(kWindowSigmas * params.sigma_r / spec.range_res_m)) + 1;
  const int win_a = static_cast<int>(std::ceil(kWindowSigmas * params.sigma_phi / spec.azimuth_res_deg)) + 1;
  const double inv_2sr2 = 1.0 / (2.0 * params.sigma_r * params.sigma_r);
  const double inv_2sp2 = 1.0 / (2.0 * params.sigma_phi * params.sigma_phi);

  for (const Kept& k : kept) {
    const Detection& d = *k.det;
    first_return[k.bin.azimuth] = std::min(first_return[k.bin.azimuth], d.range);
    const int a0 = std::max(0, k.bin.azimuth - win_a);
    const int a1 = std::min(A - 1, k.bin.azimuth + win_a);
    const int r0 = std::max(0, k.bin.range - win_r);
    const int r1 = std::min(R - 1, k.bin.range + win_r);
    for (int a = a0; a <= a1; ++a) {
      const double dphi = wrap_deg(spec.azimuth_center(a) - d.azimuth);
      const double angular = dphi * dphi * inv_2sp2;
      for (int r = r0; r <= r1; ++r) {
        const double dr = spec.range_center(r) - d.range;
        const double c = params.lambda_o * std::exp(-dr * dr * inv_2sr2 - angular);
        miss[grid.index(a, r)] *= 1.0 - c;
      }
    }
  }

  for (int a = 0; a < A; ++a) {
    const double ret = first_return[a];
    for (int r = 0; r < R; ++r) {
      const std::size_t i = grid.index(a, r);
      double bf = 0.0;
      if (std::isfinite(ret)) {
        const double rc = spec.range_center(r);
        if (rc < ret) bf = params.lambda_f * std::min(1.0, (ret - rc) / (2.0 * params.sigma_r));
      }
      const double bo = std::min(1.0 - miss[i], 1.0 - bf);
      grid.free[i] = bf;
      grid.occupied[i] = bo;
      grid.unknown[i] = std::max(0.0, 1.0 - bf - bo);
    }
  }

  // Velocity: each detection claims its bin and Chebyshev neighbours unless a
  // detection with a stronger occupancy contribution already owns the cell.
  const int rad = params.velocity_spread_radius;
  for (const Kept& k : kept) {
    const Detection& d = *k.det;
    const double vr = compensate_doppler(d, ego, pose);
    for (int a = std::max(0, k.bin.azimuth - rad); a <= std::min(A - 1, k.bin.azimuth + rad); ++a) {
      const double dphi = wrap_deg(spec.azimuth_center(a) - d.azimuth);
      for (int r = std::max(0, k.bin.range - rad); r <= std::min(R - 1, k.bin.range + rad); ++r) {
        const double dr = spec.range_center(r) - d.range;
        const double c = params.lambda_o * std::exp(-dr * dr * inv_2sr2 - dphi * dphi * inv_2sp2);
        const std::size_t i = grid.index(a, r);
        if (grid.vr_valid[i] && c <= best[i]) continue;
        best[i] = c;
        grid.vr[i] = vr;
        grid.vr_valid[i] = 1;
        grid.vr_dir[i] = deg2rad(pose.yaw_deg + spec.azimuth_center(a));
      }
    }
  }
  return grid;
}

}  // namespace evigrid
