#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "evigrid/evidential.hpp"
#include "evigrid/geometric_ism.hpp"
#include "evigrid/polar_grid.hpp"

// Independent reference implementations shared by unit and acceptance tests.
namespace evigrid::testing {

// Power-set Dempster combination over an arbitrary frame, masses keyed by bitmask.
using MassMap = std::map<unsigned, double>;

inline MassMap oracle_combine(const MassMap& a, const MassMap& b, unsigned forbidden = 0) {
  MassMap out;
  double conflict = 0.0;
  for (const auto& [sa, ma] : a) {
    for (const auto& [sb, mb] : b) {
      const unsigned meet = sa & sb;
      if (meet == 0 || meet == forbidden) {
        conflict += ma * mb;
      } else {
        out[meet] += ma * mb;
      }
    }
  }
  for (auto& [s, m] : out) m /= 1.0 - conflict;
  return out;
}

inline MassMap to_map(const MeasurementCell& c) { return {{1u, c.free}, {2u, c.occupied}, {3u, c.unknown}}; }

inline MassMap to_map(const DgmCell& c) {
  return {{1u, c.m_f}, {2u, c.m_d}, {4u, c.m_s}, {3u, c.m_fd}, {6u, c.m_ds}, {7u, c.m_fds}};
}

inline double get(const MassMap& m, unsigned k) {
  auto it = m.find(k);
  return it == m.end() ? 0.0 : it->second;
}

template <std::size_t N>
inline std::array<double, N> simplex(std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::bernoulli_distribution zero(0.15);
  std::array<double, N> v{};
  double s = 0.0;
  for (auto& x : v) {
    x = zero(rng) ? 0.0 : e(rng);
    s += x;
  }
  if (s == 0.0) {
    v[N - 1] = 1.0;
    return v;
  }
  for (auto& x : v) x /= s;
  return v;
}

inline MeasurementCell random_cell(std::mt19937_64& rng) {
  const auto v = simplex<3>(rng);
  return {v[0], v[1], 1.0 - v[0] - v[1]};
}

inline DgmCell random_dgm(std::mt19937_64& rng) {
  const auto v = simplex<6>(rng);
  DgmCell c;
  c.m_f = v[0];
  c.m_d = v[1];
  c.m_s = v[2];
  c.m_fd = v[3];
  c.m_ds = v[4];
  c.m_fds = v[5];
  return c;
}

inline Detection det(double range, double azimuth, double rcs = 5.0, double doppler = 0.0) {
  Detection d;
  d.range = range;
  d.azimuth = azimuth;
  d.rcs = rcs;
  d.doppler = doppler;
  return d;
}

// Full mixture evaluated at every bin center, no windowing.
inline PolarGrid oracle_geometric_ism(const std::vector<Detection>& dets, const GeometricIsmParams& p, const PolarGridSpec& spec) {
  PolarGrid g(spec);
  std::vector<double> first(spec.azimuth_bins, std::numeric_limits<double>::infinity());
  std::vector<const Detection*> kept;
  for (const auto& d : dets) {
    if (d.rcs < p.rcs_min) continue;
    const double a = std::floor(d.azimuth / spec.azimuth_res_deg + spec.azimuth_bins / 2.0);
    const double r = std::floor(d.range / spec.range_res_m);
    if (a < 0 || a >= spec.azimuth_bins || r < 0 || r >= spec.range_bins) continue;
    kept.push_back(&d);
    first[static_cast<int>(a)] = std::min(first[static_cast<int>(a)], d.range);
  }
  for (int a = 0; a < spec.azimuth_bins; ++a) {
    const double phi = -spec.azimuth_bins * spec.azimuth_res_deg / 2.0 + (a + 0.5) * spec.azimuth_res_deg;
    for (int r = 0; r < spec.range_bins; ++r) {
      const double rc = (r + 0.5) * spec.range_res_m;
      double miss = 1.0;
      for (const Detection* d : kept) {
        const double dr = rc - d->range;
        const double dp = phi - d->azimuth;
        miss *= 1.0 - p.lambda_o * std::exp(-dr * dr / (2 * p.sigma_r * p.sigma_r) - dp * dp / (2 * p.sigma_phi * p.sigma_phi));
      }
      double bf = 0.0;
      if (rc < first[a]) bf = p.lambda_f * std::min(1.0, (first[a] - rc) / (2 * p.sigma_r));
      if (!std::isfinite(first[a])) bf = 0.0;
      const double bo = std::min(1.0 - miss, 1.0 - bf);
      g.set_cell(g.index(a, r), {bf, bo, 1.0 - bf - bo});
    }
  }
  return g;
}

inline std::vector<Detection> random_set(std::mt19937_64& rng, const PolarGridSpec& spec) {
  std::uniform_int_distribution<int> count(1, 25);
  std::uniform_real_distribution<double> range(0.5, spec.max_range() - 0.5);
  std::uniform_real_distribution<double> az(-spec.fov_deg() / 2 + 0.1, spec.fov_deg() / 2 - 0.1);
  std::uniform_real_distribution<double> rcs(-30.0, 20.0);
  std::vector<Detection> out;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) out.push_back(det(range(rng), az(rng), rcs(rng)));
  return out;
}

inline LabelImage random_label(int rows, int cols, std::mt19937_64& rng, int max_class = 2) {
  LabelImage l(rows, cols);
  std::uniform_int_distribution<int> k(0, max_class);
  for (auto& c : l.classes) c = static_cast<CellClass>(k(rng));
  return l;
}

inline LabelImage from(std::initializer_list<int> v) {
  LabelImage l(1, static_cast<int>(v.size()));
  std::size_t i = 0;
  for (int c : v) l.classes[i++] = static_cast<CellClass>(c);
  return l;
}

// Set-based IoU: cells where either image has class k.
inline std::optional<double> oracle_iou(const LabelImage& p, const LabelImage& r, int k) {
  std::set<std::size_t> a, b, u;
  for (std::size_t i = 0; i < p.classes.size(); ++i) {
    if (static_cast<int>(p.classes[i]) == k) a.insert(i);
    if (static_cast<int>(r.classes[i]) == k) b.insert(i);
  }
  u.insert(a.begin(), a.end());
  u.insert(b.begin(), b.end());
  if (u.empty()) return std::nullopt;
  std::size_t inter = 0;
  for (std::size_t i : a) inter += b.count(i);
  return static_cast<double>(inter) / static_cast<double>(u.size());
}


}  // namespace evigrid::testing
