#include "evigrid/dgm_fusion.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "evigrid/error.hpp"
#include "evigrid/kernels.hpp"

namespace evigrid {

namespace {

// Below this posterior occupied mass a cell keeps no particles.
constexpr double kMinCellParticleMass = 1e-4;

// Mean velocity above the speed threshold, weighted by how far the mean sits
// from zero in the particle covariance (Mahalanobis, 2 dof). Small clouds
// borrow spread from the birth prior.
double dynamic_probability(const Eigen::Vector2d& mean, const Eigen::Matrix2d& second_moment, double n_eff,
                           const DgmConfig& cfg) {
  if (mean.norm() <= cfg.static_speed_threshold) return 0.0;
  const double prior = cfg.birth_velocity_std * cfg.birth_velocity_std / std::max(1.0, n_eff);
  const Eigen::Matrix2d cov = second_moment - mean * mean.transpose() + (prior + 1e-6) * Eigen::Matrix2d::Identity();
  const double d2 = mean.dot(cov.ldlt().solve(mean));
  return 1.0 - std::exp(-0.5 * d2);
}

void set_masses_from(DgmCell& dst, const DgmCell& src) {
  dst.m_f = src.m_f;
  dst.m_d = src.m_d;
  dst.m_s = src.m_s;
  dst.m_fd = src.m_fd;
  dst.m_ds = src.m_ds;
  dst.m_fds = src.m_fds;
}

void renormalize_theta(DgmCell& c) {
  c.m_fds = std::max(0.0, 1.0 - (c.m_f + c.m_d + c.m_s + c.m_fd + c.m_ds));
}

}  // namespace

void DgmConfig::validate() const {
  const auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (particles_per_cell_max < 1 || births_per_cell < 1 || !unit(birth_fraction) || !unit(persistence) || !unit(doppler_inject_threshold) ||
      !unit(birth_min_occupancy) || !unit(particle_split_confidence) || process_noise_pos < 0.0 ||
      process_noise_vel < 0.0 || nominal_dt <= 0.0 || static_speed_threshold < 0.0 || birth_velocity_std < 0.0 ||
      doppler_velocity_std <= 0.0 || doppler_likelihood_std <= 0.0 || tangential_velocity_std < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "DGM configuration out of range");
  }
}

Dgm::Dgm(const CartesianGridSpec& spec, std::uint64_t seed) : spec_(spec), cells_(spec.size()), rng_(seed) {
  if (!spec.is_valid()) throw Error(ErrorCode::kInvalidArgument, "invalid Cartesian grid spec");
}

std::vector<std::uint32_t> Dgm::bucket_particles(std::vector<std::uint32_t>& offsets) const {
  offsets.assign(cells_.size() + 1, 0);
  std::vector<std::uint32_t> cell_of(particles_.size());
  for (std::size_t k = 0; k < particles_.size(); ++k) {
    const auto c = spec_.cell_of({particles_[k].x, particles_[k].y});
    // Particles are kept inside the grid; clamp guards against rounding at the border.
    const std::size_t idx = c ? spec_.flat(c->row, c->col) : 0;
    cell_of[k] = static_cast<std::uint32_t>(idx);
    ++offsets[idx + 1];
  }
  for (std::size_t i = 1; i < offsets.size(); ++i) offsets[i] += offsets[i - 1];
  std::vector<std::uint32_t> order(particles_.size());
  std::vector<std::uint32_t> cursor(offsets.begin(), offsets.end() - 1);
  for (std::size_t k = 0; k < particles_.size(); ++k) order[cursor[cell_of[k]]++] = static_cast<std::uint32_t>(k);
  return order;
}

void Dgm::recompute_velocity_statistics(const std::vector<std::uint32_t>& order,
                                        const std::vector<std::uint32_t>& offsets) {
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    DgmCell& c = cells_[i];
    c.v_mean.setZero();
    c.v_cov.setZero();
    c.v_valid = false;
    // Persistent particles only; newborns count when a cell has nothing else.
    bool any_persistent = false;
    for (std::uint32_t k = offsets[i]; k < offsets[i + 1]; ++k) {
      if (!particles_[order[k]].newborn && particles_[order[k]].weight > 0.0) any_persistent = true;
    }
    const auto counts = [&](const Particle& p) { return !any_persistent || !p.newborn; };
    double w = 0.0;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (std::uint32_t k = offsets[i]; k < offsets[i + 1]; ++k) {
      const Particle& p = particles_[order[k]];
      if (!counts(p)) continue;
      w += p.weight;
      mean += p.weight * Eigen::Vector2d(p.vx, p.vy);
    }
    if (!(w > 0.0)) continue;
    mean /= w;
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (std::uint32_t k = offsets[i]; k < offsets[i + 1]; ++k) {
      const Particle& p = particles_[order[k]];
      if (!counts(p)) continue;
      const Eigen::Vector2d d = Eigen::Vector2d(p.vx, p.vy) - mean;
      cov += p.weight * d * d.transpose();
    }
    cov /= w;
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    c.v_mean = mean;
    c.v_cov = cov;
    c.v_valid = true;
  }
}

void Dgm::predict(double dt, const DgmConfig& cfg, const std::optional<Pose2D>& ego_motion) {
  cfg.validate();
  if (!(dt >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "prediction step must be non-negative");

  std::vector<std::uint32_t> offsets;
  const std::vector<std::uint32_t> order = bucket_particles(offsets);

  // Dynamic mass rides along with the particles that populate a cell.
  std::vector<double> share(particles_.size(), 0.0);
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    DgmCell& c = cells_[i];
    if (c.m_d <= 0.0 || offsets[i] == offsets[i + 1]) continue;
    double w = 0.0;
    for (std::uint32_t k = offsets[i]; k < offsets[i + 1]; ++k) w += particles_[order[k]].weight;
    if (!(w > 0.0)) continue;
    for (std::uint32_t k = offsets[i]; k < offsets[i + 1]; ++k) share[order[k]] = c.m_d * particles_[order[k]].weight / w;
    c.m_fds += c.m_d;
    c.m_d = 0.0;
  }

  const double scale = std::sqrt(dt / cfg.nominal_dt);
  const double sp = cfg.process_noise_pos * scale;
  const double sv = cfg.process_noise_vel * scale;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Particle& p : particles_) {
    p.newborn = false;
    p.x += p.vx * dt + sp * gauss(rng_);
    p.y += p.vy * dt + sp * gauss(rng_);
    p.vx += sv * gauss(rng_);
    p.vy += sv * gauss(rng_);
  }

  if (ego_motion) {
    const Eigen::Matrix2d rot_t = ego_motion->rotation().transpose();
    for (Particle& p : particles_) {
      const Eigen::Vector2d pos = ego_motion->to_local({p.x, p.y});
      const Eigen::Vector2d vel = rot_t * Eigen::Vector2d(p.vx, p.vy);
      p.x = pos.x();
      p.y = pos.y();
      p.vx = vel.x();
      p.vy = vel.y();
    }
    std::vector<DgmCell> shifted(cells_.size());
    for (int row = 0; row < spec_.height; ++row) {
      for (int col = 0; col < spec_.width; ++col) {
        const auto src = spec_.cell_of(ego_motion->to_parent(spec_.cell_center(row, col)));
        if (src) shifted[spec_.flat(row, col)] = cells_[spec_.flat(src->row, src->col)];
      }
    }
    cells_.swap(shifted);
  }

  const double rho = cfg.persistence;
  for (DgmCell& c : cells_) {
    c.m_f *= rho;
    c.m_d *= rho;
    c.m_s *= rho;
    c.m_fd *= rho;
    c.m_ds *= rho;
    renormalize_theta(c);
  }

  std::vector<double> incoming(cells_.size(), 0.0);
  std::vector<Particle> kept;
  kept.reserve(particles_.size());
  for (std::size_t k = 0; k < particles_.size(); ++k) {
    Particle p = particles_[k];
    const auto cell = spec_.cell_of({p.x, p.y});
    if (!cell) continue;
    p.weight *= rho;
    incoming[spec_.flat(cell->row, cell->col)] += share[k] * rho;
    kept.push_back(p);
  }
  particles_.swap(kept);

  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (incoming[i] <= 0.0) continue;
    DgmCell& c = cells_[i];
    const double dyn = std::min(1.0, c.m_d + incoming[i]);
    const double rest = c.m_f + c.m_s + c.m_fd + c.m_ds;
    if (rest + dyn > 1.0 && rest > 0.0) {
      const double f = (1.0 - dyn) / rest;
      c.m_f *= f;
      c.m_s *= f;
      c.m_fd *= f;
      c.m_ds *= f;
    }
    c.m_d = dyn;
    renormalize_theta(c);
  }

  timestamp_ += dt;
  std::vector<std::uint32_t> new_offsets;
  const auto new_order = bucket_particles(new_offsets);
  recompute_velocity_statistics(new_order, new_offsets);
}

void Dgm::update(const CartesianGrid& meas, const DgmConfig& cfg) {
  cfg.validate();
  if (!(meas.spec == spec_)) throw Error(ErrorCode::kGeometryMismatch, "measurement grid spec differs from the map");
  if (meas.timestamp + 1e-9 < timestamp_) {
    throw Error(ErrorCode::kInvalidArgument, "measurement is older than the map");
  }
  timestamp_ = std::max(timestamp_, meas.timestamp);

  std::vector<std::uint32_t> offsets;
  const std::vector<std::uint32_t> order = bucket_particles(offsets);

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int births = cfg.births_per_cell;
  const double thr = cfg.static_speed_threshold;
  const double inv_2sd2 = 1.0 / (2.0 * cfg.doppler_likelihood_std * cfg.doppler_likelihood_std);

  std::vector<Particle> next;
  next.reserve(particles_.size() + 1024);
  std::vector<Particle> local;

  for (int row = 0; row < spec_.height; ++row) {
    for (int col = 0; col < spec_.width; ++col) {
      const std::size_t i = spec_.flat(row, col);
      const MeasurementCell m = meas.cell(i);
      const bool has_vr = cfg.use_doppler && meas.vr_valid[i] != 0;

      double w_total = 0.0;
      Eigen::Vector2d v_sum = Eigen::Vector2d::Zero();
      Eigen::Matrix2d v_outer = Eigen::Matrix2d::Zero();
      double w_sq = 0.0;
      for (std::uint32_t k = offsets[i]; k < offsets[i + 1]; ++k) {
        const Particle& p = particles_[order[k]];
        const Eigen::Vector2d v(p.vx, p.vy);
        w_total += p.weight;
        v_sum += p.weight * v;
        v_outer += p.weight * v * v.transpose();
        w_sq += p.weight * p.weight;
      }

      // Split measured occupancy into dynamic / static / undecided.
      DgmCell split;
      split.m_f = m.free;
      split.m_fds = 0.0;
      if (m.occupied > 0.0) {
        if (has_vr) {
          (std::abs(meas.vr[i]) > thr ? split.m_d : split.m_s) = m.occupied;
        } else if (w_total > 1e-9) {
          const double p_dyn = dynamic_probability(v_sum / w_total, v_outer / w_total, w_total * w_total / w_sq, cfg);
          const double kappa = cfg.particle_split_confidence;
          split.m_d = m.occupied * p_dyn * kappa;
          split.m_s = m.occupied * (1.0 - p_dyn) * kappa;
          split.m_ds = m.occupied * (1.0 - kappa);
        } else {
          split.m_ds = m.occupied;
        }
      }
      renormalize_theta(split);

      DgmCell& c = cells_[i];
      if (!m.is_vacuous()) {
        try {
          set_masses_from(c, dempster_combine(c, split));
        } catch (const Error&) {
          set_masses_from(c, split);
        }
      }

      const double occupied = c.occupied();
      if (occupied < kMinCellParticleMass) continue;

      // Persistent particles: measured free space and Doppler disagreement thin them out.
      local.clear();
      double w_persist = 0.0;
      const Eigen::Vector2d ray{std::cos(meas.vr_dir[i]), std::sin(meas.vr_dir[i])};
      for (std::uint32_t k = offsets[i]; k < offsets[i + 1]; ++k) {
        Particle p = particles_[order[k]];
        p.weight *= 1.0 - m.free;
        if (has_vr) {
          const double e = p.vx * ray.x() + p.vy * ray.y() - meas.vr[i];
          p.weight *= std::exp(-e * e * inv_2sd2);
        }
        if (p.weight > 0.0) {
          w_persist += p.weight;
          local.push_back(p);
        }
      }

      const bool birth = m.occupied >= cfg.birth_min_occupancy;
      double newborn_mass = 0.0;
      if (birth) newborn_mass = cfg.birth_fraction * occupied;
      const double persistent_mass = occupied - newborn_mass;
      if (w_persist > 0.0) {
        const double f = persistent_mass / w_persist;
        for (Particle& p : local) p.weight *= f;
      }
      if (birth) {
        const Eigen::Vector2d center = spec_.cell_center(row, col);
        const Eigen::Vector2d tangent{-ray.y(), ray.x()};
        for (int b = 0; b < births; ++b) {
          Particle p;
          p.newborn = true;
          p.x = center.x() + (unit(rng_) - 0.5) * spec_.cell_x;
          p.y = center.y() + (unit(rng_) - 0.5) * spec_.cell_y;
          if (has_vr) {
            const double radial = meas.vr[i] + cfg.doppler_velocity_std * gauss(rng_);
            const double across = cfg.tangential_velocity_std * gauss(rng_);
            const Eigen::Vector2d v = radial * ray + across * tangent;
            p.vx = v.x();
            p.vy = v.y();
          } else {
            p.vx = cfg.birth_velocity_std * gauss(rng_);
            p.vy = cfg.birth_velocity_std * gauss(rng_);
          }
          p.weight = newborn_mass / births;
          local.push_back(p);
        }
      }

      if (local.size() > static_cast<std::size_t>(cfg.particles_per_cell_max)) {
        // Stratified resampling down to the per-cell cap; total mass is preserved.
        double total = 0.0;
        for (const Particle& p : local) total += p.weight;
        const int n = cfg.particles_per_cell_max;
        const double step = total / n;
        double u = unit(rng_) * step;
        double cum = local[0].weight;
        std::size_t j = 0;
        for (int s = 0; s < n; ++s) {
          while (cum < u && j + 1 < local.size()) cum += local[++j].weight;
          Particle p = local[j];
          p.weight = step;
          next.push_back(p);
          u += step;
        }
      } else {
        next.insert(next.end(), local.begin(), local.end());
      }
    }
  }
  particles_.swap(next);

  std::vector<std::uint32_t> new_offsets;
  const auto new_order = bucket_particles(new_offsets);
  recompute_velocity_statistics(new_order, new_offsets);
}

CartesianGrid Dgm::to_measurement_grid() const {
  CartesianGrid grid(spec_);
  grid.timestamp = timestamp_;
  for (std::size_t i = 0; i < cells_.size(); ++i) grid.set_cell(i, dgm_to_measurement(cells_[i]));
  return grid;
}

Dgm predict(Dgm dgm, double dt, const DgmConfig& cfg, const std::optional<Pose2D>& ego_motion) {
  dgm.predict(dt, cfg, ego_motion);
  return dgm;
}

Dgm update(Dgm dgm, const CartesianGrid& measurement, const DgmConfig& cfg) {
  dgm.update(measurement, cfg);
  return dgm;
}

std::vector<VelocityMeasurement> velocity_measurements(std::span<const Detection> detections, const EgoMotion& ego,
                                                       const SensorPose& pose) {
  std::vector<VelocityMeasurement> out;
  out.reserve(detections.size());
  for (const Detection& d : detections) {
    VelocityMeasurement v;
    v.position = pose.to_parent(d.position());
    v.vr = compensate_doppler(d, ego, pose);
    v.ray_dir = deg2rad(pose.yaw_deg + d.azimuth);
    out.push_back(v);
  }
  return out;
}

CartesianGrid inject_doppler(CartesianGrid grid, std::span<const VelocityMeasurement> measurements,
                             const DgmConfig& cfg) {
  const CartesianGridSpec& spec = grid.spec;
  for (const VelocityMeasurement& v : measurements) {
    const auto cell = spec.cell_of(v.position);
    if (!cell) continue;
    if (grid.occupied[spec.flat(cell->row, cell->col)] < cfg.doppler_inject_threshold) continue;
    for (int row = std::max(0, cell->row - 1); row <= std::min(spec.height - 1, cell->row + 1); ++row) {
      for (int col = std::max(0, cell->col - 1); col <= std::min(spec.width - 1, cell->col + 1); ++col) {
        const std::size_t i = spec.flat(row, col);
        grid.vr[i] = v.vr;
        grid.vr_dir[i] = v.ray_dir;
        grid.vr_valid[i] = 1;
      }
    }
  }
  return grid;
}

CartesianGrid fuse_measurement_grids(std::span<const CartesianGrid> grids) {
  if (grids.empty()) throw Error(ErrorCode::kInvalidArgument, "no measurement grids to fuse");
  CartesianGrid out = grids.front();
  for (std::size_t g = 1; g < grids.size(); ++g) {
    const CartesianGrid& other = grids[g];
    if (!(other.spec == out.spec)) throw Error(ErrorCode::kGeometryMismatch, "fused grids must share a spec");
    for (std::size_t i = 0; i < out.cell_count(); ++i) {
      if (!other.vr_valid[i]) continue;
      if (!out.vr_valid[i] || other.occupied[i] > out.occupied[i]) {
        out.vr[i] = other.vr[i];
        out.vr_dir[i] = other.vr_dir[i];
        out.vr_valid[i] = 1;
      }
    }
    kernels::dempster_combine({out.free, out.occupied, out.unknown}, {other.free, other.occupied, other.unknown},
                              {out.free, out.occupied, out.unknown});
    out.timestamp = std::max(out.timestamp, other.timestamp);
  }
  return out;
}

bool is_dynamic(const DgmCell& c) { return c.occupied() >= 0.5 && c.m_d > c.m_s; }

}  // namespace evigrid
