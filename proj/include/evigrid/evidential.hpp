#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Core>

namespace evigrid {

/// Dempster-Shafer masses over the measurement frame {F, O}.
struct MeasurementCell {
  double free = 0.0;
  double occupied = 0.0;
  double unknown = 1.0;

  static constexpr MeasurementCell vacuous() { return {0.0, 0.0, 1.0}; }

  bool is_vacuous() const { return free == 0.0 && occupied == 0.0; }
  bool is_valid(double tol = 1e-9) const;
};

/// Masses over the dynamic-grid frame {F, D, S}. {F,S} is excluded from the
/// power set, so it has no slot here.
struct DgmCell {
  double m_f = 0.0;
  double m_d = 0.0;
  double m_s = 0.0;
  double m_fd = 0.0;
  double m_ds = 0.0;
  double m_fds = 1.0;
  Eigen::Vector2d v_mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d v_cov = Eigen::Matrix2d::Zero();
  bool v_valid = false;

  static DgmCell vacuous() { return {}; }

  double occupied() const { return m_d + m_s + m_ds; }
  double sum() const { return m_f + m_d + m_s + m_fd + m_ds + m_fds; }
  bool is_valid(double tol = 1e-9) const;
};

enum class CellClass : std::uint8_t { kFree = 0, kOccupied = 1, kUnknown = 2 };

struct RgbColor {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
};

/// Dempster's rule on {F, O}. Throws Error(kFullConflict) when K == 1.
MeasurementCell dempster_combine(const MeasurementCell& a, const MeasurementCell& b);

/// Same rule, but a fully conflicting pair yields the vacuous cell.
MeasurementCell dempster_combine_or_vacuous(const MeasurementCell& a, const MeasurementCell& b);

/// Dempster's rule on {F, D, S} with {F,S} treated as the empty set.
/// Velocity statistics are copied from `predicted`. Throws on full conflict.
DgmCell dempster_combine(const DgmCell& predicted, const DgmCell& measured);

/// b_O = m_D + m_S + m_DS, b_F = m_F, remainder (m_FD, m_FDS) is unknown.
MeasurementCell dgm_to_measurement(const DgmCell& c);

/// Argmax with ties resolved UNKNOWN > OCCUPIED > FREE.
CellClass classify(const MeasurementCell& c);

/// Each channel is one minus the mass of hypotheses disjoint from S, F, D.
RgbColor dgm_cell_color(const DgmCell& c);

/// Clamp to [0,1] and rescale so the three masses sum to one.
MeasurementCell normalized(MeasurementCell c);

/// One-hot measurement cell for a hard class.
MeasurementCell one_hot(CellClass c);

}  // namespace evigrid
