#include "evigrid/evidential.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

#include "evigrid/error.hpp"

namespace evigrid {

namespace {

bool in_unit(double x, double tol) { return x >= -tol && x <= 1.0 + tol; }

// Hypotheses of {F, D, S} as bitmasks: F=1, D=2, S=4.
constexpr std::array<std::uint8_t, 6> kHypotheses = {1, 2, 4, 3, 6, 7};
constexpr std::uint8_t kFreeStatic = 5;

std::array<double, 6> masses(const DgmCell& c) {
  return {c.m_f, c.m_d, c.m_s, c.m_fd, c.m_ds, c.m_fds};
}

int slot_of(std::uint8_t set) {
  switch (set) {
    case 1: return 0;
    case 2: return 1;
    case 4: return 2;
    case 3: return 3;
    case 6: return 4;
    case 7: return 5;
    default: return -1;
  }
}

}  // namespace

bool MeasurementCell::is_valid(double tol) const {
  return in_unit(free, tol) && in_unit(occupied, tol) && in_unit(unknown, tol) &&
         std::abs(free + occupied + unknown - 1.0) <= tol;
}

bool DgmCell::is_valid(double tol) const {
  for (double m : masses(*this)) {
    if (!in_unit(m, tol)) return false;
  }
  if (std::abs(sum() - 1.0) > tol) return false;
  if (v_valid) {
    if (std::abs(v_cov(0, 1) - v_cov(1, 0)) > 1e-9) return false;
    // 2x2 PSD: non-negative diagonal and determinant.
    if (v_cov(0, 0) < -tol || v_cov(1, 1) < -tol || v_cov.determinant() < -1e-9) return false;
  }
  return true;
}

MeasurementCell normalized(MeasurementCell c) {
  c.free = std::max(c.free, 0.0);
  c.occupied = std::max(c.occupied, 0.0);
  c.unknown = std::max(c.unknown, 0.0);
  const double s = c.free + c.occupied + c.unknown;
  if (s <= 0.0) return MeasurementCell::vacuous();
  c.free /= s;
  c.occupied /= s;
  c.unknown = 1.0 - c.free - c.occupied;
  if (c.unknown < 0.0) c.unknown = 0.0;
  return c;
}

MeasurementCell dempster_combine(const MeasurementCell& a, const MeasurementCell& b) {
  const double conflict = a.free * b.occupied + a.occupied * b.free;
  const double norm = 1.0 - conflict;
  if (norm <= 0.0) throw Error(ErrorCode::kFullConflict, "measurement cells fully contradict");
  MeasurementCell out;
  out.free = (a.free * b.free + a.free * b.unknown + a.unknown * b.free) / norm;
  out.occupied = (a.occupied * b.occupied + a.occupied * b.unknown + a.unknown * b.occupied) / norm;
  out.unknown = (a.unknown * b.unknown) / norm;
  return normalized(out);
}

MeasurementCell dempster_combine_or_vacuous(const MeasurementCell& a, const MeasurementCell& b) {
  const double conflict = a.free * b.occupied + a.occupied * b.free;
  if (1.0 - conflict <= 0.0) return MeasurementCell::vacuous();
  return dempster_combine(a, b);
}

DgmCell dempster_combine(const DgmCell& predicted, const DgmCell& measured) {
  const auto pa = masses(predicted);
  const auto pb = masses(measured);
  std::array<double, 6> out{};
  double conflict = 0.0;
  for (std::size_t i = 0; i < kHypotheses.size(); ++i) {
    if (pa[i] == 0.0) continue;
    for (std::size_t j = 0; j < kHypotheses.size(); ++j) {
      if (pb[j] == 0.0) continue;
      const std::uint8_t meet = kHypotheses[i] & kHypotheses[j];
      const double m = pa[i] * pb[j];
      if (meet == 0 || meet == kFreeStatic) {
        conflict += m;
      } else {
        out[slot_of(meet)] += m;
      }
    }
  }
  const double norm = 1.0 - conflict;
  if (norm <= 1e-12) throw Error(ErrorCode::kFullConflict, "dynamic grid cells fully contradict");
  double total = 0.0;
  for (double& m : out) {
    m = std::clamp(m / norm, 0.0, 1.0);
    total += m;
  }
  for (double& m : out) m /= total;

  DgmCell result = predicted;
  result.m_f = out[0];
  result.m_d = out[1];
  result.m_s = out[2];
  result.m_fd = out[3];
  result.m_ds = out[4];
  result.m_fds = std::max(0.0, 1.0 - (out[0] + out[1] + out[2] + out[3] + out[4]));
  return result;
}

MeasurementCell dgm_to_measurement(const DgmCell& c) {
  MeasurementCell m;
  m.occupied = c.m_d + c.m_s + c.m_ds;
  m.free = c.m_f;
  m.unknown = 1.0 - m.free - m.occupied;
  return m;
}

CellClass classify(const MeasurementCell& c) {
  CellClass best = CellClass::kUnknown;
  double value = c.unknown;
  if (c.occupied > value) {
    best = CellClass::kOccupied;
    value = c.occupied;
  }
  if (c.free > value) best = CellClass::kFree;
  return best;
}

RgbColor dgm_cell_color(const DgmCell& c) {
  // Hypotheses disjoint from S: {F}, {D}, {F,D}; from F: {D}, {S}, {D,S};
  // from D: {F}, {S}.
  RgbColor rgb;
  rgb.r = std::clamp(1.0 - (c.m_f + c.m_d + c.m_fd), 0.0, 1.0);
  rgb.g = std::clamp(1.0 - (c.m_d + c.m_s + c.m_ds), 0.0, 1.0);
  rgb.b = std::clamp(1.0 - (c.m_f + c.m_s), 0.0, 1.0);
  return rgb;
}

MeasurementCell one_hot(CellClass c) {
  switch (c) {
    case CellClass::kFree: return {1.0, 0.0, 0.0};
    case CellClass::kOccupied: return {0.0, 1.0, 0.0};
    case CellClass::kUnknown: break;
  }
  return MeasurementCell::vacuous();
}

}  // namespace evigrid
