#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "evigrid/evidential.hpp"
#include "evigrid/polar_grid.hpp"

namespace evigrid {

struct Particle {
  double x = 0.0;   // m, vehicle frame
  double y = 0.0;
  double vx = 0.0;  // m/s over ground, vehicle-frame axes
  double vy = 0.0;
  double weight = 0.0;
  bool newborn = false;  // spawned in the latest update, cleared by predict
};

/// Fusion parameters. Only the Doppler threshold is a published value; the
/// rest are engineering defaults.
struct DgmConfig {
  int particles_per_cell_max = 32;
  double birth_fraction = 0.1;         // share of a cell's occupied mass given to newborns
  int births_per_cell = 12;            // newborn particles per occupied cell and update
  double persistence = 0.98;
  double process_noise_pos = 0.1;      // m std per nominal step
  double process_noise_vel = 0.5;      // m/s std per nominal step
  double nominal_dt = 0.05;            // s, step the noise levels refer to
  double static_speed_threshold = 1.0; // m/s
  double doppler_inject_threshold = 0.196;

  double birth_min_occupancy = 0.1;      // measured b_O needed to spawn particles
  double birth_velocity_std = 4.0;       // m/s, zero-mean prior without Doppler
  double doppler_velocity_std = 0.5;     // m/s, radial spread of Doppler-seeded births
  double doppler_likelihood_std = 1.0;   // m/s, particle reweighting against measured vr
  double tangential_velocity_std = 4.0;  // m/s, across-ray spread of Doppler-seeded births
  double particle_split_confidence = 0.8;  // share of measured b_O the particles may classify
  bool use_doppler = true;

  void validate() const;
};

/// Particle-based dynamic grid map over {F, D, S}. One writer per instance.
class Dgm {
 public:
  Dgm(const CartesianGridSpec& spec, std::uint64_t seed);

  const CartesianGridSpec& spec() const { return spec_; }
  std::span<const DgmCell> cells() const { return cells_; }
  std::span<DgmCell> mutable_cells() { return cells_; }
  const DgmCell& cell(int row, int col) const { return cells_[spec_.flat(row, col)]; }
  const std::vector<Particle>& particles() const { return particles_; }
  std::vector<Particle>& mutable_particles() { return particles_; }
  double timestamp() const { return timestamp_; }
  void set_timestamp(double t) { timestamp_ = t; }

  /// Advects particles, applies optional ego motion (pose of the new vehicle
  /// frame in the old one) and decays masses toward the vacuous state.
  void predict(double dt, const DgmConfig& cfg, const std::optional<Pose2D>& ego_motion = std::nullopt);

  /// Fuses a measurement grid sharing this map's Cartesian spec.
  void update(const CartesianGrid& measurement, const DgmConfig& cfg);

  /// Dempster-Shafer measurement view of the map (b_O = m_D + m_S + m_DS).
  CartesianGrid to_measurement_grid() const;

 private:
  std::vector<std::uint32_t> bucket_particles(std::vector<std::uint32_t>& offsets) const;
  void recompute_velocity_statistics(const std::vector<std::uint32_t>& order,
                                     const std::vector<std::uint32_t>& offsets);

  CartesianGridSpec spec_;
  std::vector<DgmCell> cells_;
  std::vector<Particle> particles_;
  double timestamp_ = 0.0;
  std::mt19937_64 rng_;
};

Dgm predict(Dgm dgm, double dt, const DgmConfig& cfg, const std::optional<Pose2D>& ego_motion = std::nullopt);
Dgm update(Dgm dgm, const CartesianGrid& measurement, const DgmConfig& cfg);

/// A detection with its ego-compensated radial velocity, in the vehicle frame.
struct VelocityMeasurement {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double vr = 0.0;       // m/s along the ray
  double ray_dir = 0.0;  // rad, ray heading from the sensor
};

std::vector<VelocityMeasurement> velocity_measurements(std::span<const Detection> detections, const EgoMotion& ego,
                                                       const SensorPose& pose);

/// Writes vr into the detection's cell and its 8 neighbours wherever the
/// detection's cell holds b_O >= cfg.doppler_inject_threshold. Masses are untouched.
CartesianGrid inject_doppler(CartesianGrid grid, std::span<const VelocityMeasurement> measurements,
                             const DgmConfig& cfg);

/// Cell-wise Dempster combination of overlapping sensor grids. Velocity is
/// taken from the grid with the strongest occupied mass among valid entries.
CartesianGrid fuse_measurement_grids(std::span<const CartesianGrid> grids);

/// Occupied-dominant cell whose dynamic mass exceeds its static mass.
bool is_dynamic(const DgmCell& c);

}  // namespace evigrid
