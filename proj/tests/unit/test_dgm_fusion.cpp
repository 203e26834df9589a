#include <doctest.h>

#include <cmath>
#include <random>

#include "evigrid/dgm_fusion.hpp"
#include "evigrid/error.hpp"

using namespace evigrid;

namespace {

CartesianGridSpec small_spec() { return {60, 60, 0.2, 0.2, {}}; }

CartesianGrid uniform(const CartesianGridSpec& spec, MeasurementCell c, double t = 0.0) {
  CartesianGrid g(spec);
  for (std::size_t i = 0; i < g.cell_count(); ++i) g.set_cell(i, c);
  g.timestamp = t;
  return g;
}

// Free world with a square block of occupied cells centered at (cx, cy).
CartesianGrid block_scene(const CartesianGridSpec& spec, double cx, double cy, double half, double t,
                          std::optional<double> vr = std::nullopt) {
  CartesianGrid g = uniform(spec, {0.7, 0.0, 0.3}, t);
  for (int row = 0; row < spec.height; ++row) {
    for (int col = 0; col < spec.width; ++col) {
      const Eigen::Vector2d p = spec.cell_center(row, col);
      if (std::abs(p.x() - cx) > half || std::abs(p.y() - cy) > half) continue;
      const std::size_t i = spec.flat(row, col);
      g.set_cell(i, {0.0, 0.9, 0.1});
      if (vr) {
        g.vr[i] = *vr;
        g.vr_dir[i] = 0.0;
        g.vr_valid[i] = 1;
      }
    }
  }
  return g;
}

bool all_valid(const Dgm& d) {
  for (const DgmCell& c : d.cells()) {
    if (!c.is_valid(1e-9)) return false;
  }
  return true;
}

const DgmCell& cell_at(const Dgm& d, double x, double y) {
  const auto c = d.spec().cell_of({x, y});
  REQUIRE(c.has_value());
  return d.cell(c->row, c->col);
}

}  // namespace

TEST_CASE("a fresh map is vacuous and prediction keeps it so") {
  Dgm d(small_spec(), 1);
  const DgmConfig cfg;
  d.predict(0.05, cfg);
  for (const DgmCell& c : d.cells()) CHECK(c.m_fds == 1.0);
  CHECK(d.particles().empty());
  CHECK(d.timestamp() == doctest::Approx(0.05));
}

TEST_CASE("update rejects a foreign geometry and stale measurements") {
  Dgm d(small_spec(), 1);
  const DgmConfig cfg;
  CartesianGridSpec other = small_spec();
  other.cell_x = 0.25;
  try {
    d.update(uniform(other, MeasurementCell::vacuous()), cfg);
    FAIL("expected geometry mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kGeometryMismatch);
  }
  d.update(uniform(small_spec(), MeasurementCell::vacuous(), 1.0), cfg);
  CHECK_THROWS_AS(d.update(uniform(small_spec(), MeasurementCell::vacuous(), 0.5), cfg), Error);
}

TEST_CASE("masses stay normalized over a random measurement sequence") {
  const CartesianGridSpec spec = small_spec();
  Dgm d(spec, 7);
  const DgmConfig cfg;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::optional<Pose2D> motion = Pose2D{0.3, 0.05, 1.0};
  for (int step = 0; step < 12; ++step) {
    d.predict(0.05, cfg, motion);
    CartesianGrid m(spec);
    for (std::size_t i = 0; i < m.cell_count(); ++i) {
      const double a = u(rng), b = u(rng);
      m.set_cell(i, {std::min(a, b), std::max(a, b) - std::min(a, b), 1.0 - std::max(a, b)});
      if (u(rng) < 0.1) {
        m.vr[i] = 10.0 * (u(rng) - 0.5);
        m.vr_valid[i] = 1;
      }
    }
    m.timestamp = d.timestamp();
    d.update(m, cfg);
    CHECK(all_valid(d));
  }
  for (const Particle& p : d.particles()) CHECK(spec.cell_of({p.x, p.y}).has_value());
}

TEST_CASE("persistence decays masses toward the vacuous state") {
  const CartesianGridSpec spec = small_spec();
  Dgm d(spec, 3);
  DgmConfig cfg;
  cfg.use_doppler = false;
  d.update(uniform(spec, {0.8, 0.0, 0.2}), cfg);
  const double before = d.cell(10, 10).m_f;
  d.predict(0.05, cfg);
  CHECK(d.cell(10, 10).m_f == doctest::Approx(before * cfg.persistence));
  CHECK(d.cell(10, 10).is_valid());
}

TEST_CASE("Doppler separates static and dynamic occupancy") {
  const CartesianGridSpec spec = small_spec();
  const DgmConfig cfg;
  Dgm still(spec, 4);
  Dgm moving(spec, 4);
  for (int step = 0; step < 5; ++step) {
    const double t = 0.05 * step;
    if (step > 0) {
      still.predict(0.05, cfg);
      moving.predict(0.05, cfg);
    }
    still.update(block_scene(spec, 0.0, 0.0, 0.5, t, 0.0), cfg);
    moving.update(block_scene(spec, 0.0, 0.0, 0.5, t, 6.0), cfg);
  }
  const DgmCell& s = cell_at(still, 0.1, 0.1);
  const DgmCell& m = cell_at(moving, 0.1, 0.1);
  CHECK(s.m_s > 0.8);
  CHECK_FALSE(is_dynamic(s));
  CHECK(m.m_d > 0.5);
  CHECK(is_dynamic(m));
  CHECK(cell_at(still, 3.0, 3.0).m_f > 0.9);
}

TEST_CASE("particles track a moving block") {
  const CartesianGridSpec spec = small_spec();
  const DgmConfig cfg;
  Dgm d(spec, 11);
  const double v = 4.0;
  double x = -3.0;
  for (int step = 0; step < 25; ++step) {
    const double t = 0.05 * step;
    if (step > 0) d.predict(0.05, cfg);
    d.update(block_scene(spec, x, 0.0, 0.5, t, v), cfg);
    x += v * 0.05;
  }
  const DgmCell& c = cell_at(d, x - v * 0.05, 0.0);
  REQUIRE(c.v_valid);
  CHECK(c.v_mean.x() == doctest::Approx(v).epsilon(0.25));
  CHECK(is_dynamic(c));
}

TEST_CASE("ego motion shifts the map into the new vehicle frame") {
  const CartesianGridSpec spec = small_spec();
  DgmConfig cfg;
  cfg.use_doppler = false;
  Dgm d(spec, 5);
  d.update(block_scene(spec, 2.1, 0.1, 0.05, 0.0), cfg);
  const double occupied = cell_at(d, 2.1, 0.1).occupied();
  REQUIRE(occupied > 0.5);
  // Vehicle drives 1 m forward: the obstacle appears 1 m closer.
  d.predict(0.0, cfg, Pose2D{1.0, 0.0, 0.0});
  CHECK(cell_at(d, 1.1, 0.1).occupied() == doctest::Approx(occupied * cfg.persistence).epsilon(0.01));
  CHECK(cell_at(d, 2.1, 0.1).occupied() < 0.5);
}

TEST_CASE("same seed gives the same map") {
  const CartesianGridSpec spec = small_spec();
  const DgmConfig cfg;
  Dgm a(spec, 99), b(spec, 99);
  for (int step = 0; step < 4; ++step) {
    const auto m = block_scene(spec, -1.0 + 0.2 * step, 0.0, 0.5, 0.05 * step, 4.0);
    if (step > 0) {
      a.predict(0.05, cfg);
      b.predict(0.05, cfg);
    }
    a.update(m, cfg);
    b.update(m, cfg);
  }
  REQUIRE(a.particles().size() == b.particles().size());
  for (std::size_t i = 0; i < a.particles().size(); ++i) CHECK(a.particles()[i].vx == b.particles()[i].vx);
  for (std::size_t i = 0; i < a.cells().size(); ++i) CHECK(a.cells()[i].m_d == b.cells()[i].m_d);
}

TEST_CASE("measurement view of the map") {
  const CartesianGridSpec spec = small_spec();
  Dgm d(spec, 1);
  d.update(block_scene(spec, 0.0, 0.0, 1.0, 0.0, 3.0), DgmConfig{});
  const CartesianGrid g = d.to_measurement_grid();
  for (std::size_t i = 0; i < g.cell_count(); ++i) {
    const MeasurementCell e = dgm_to_measurement(d.cells()[i]);
    CHECK(g.free[i] == e.free);
    CHECK(g.occupied[i] == e.occupied);
  }
}

TEST_CASE("Doppler injection honours the occupancy threshold") {
  const CartesianGridSpec spec = small_spec();
  CartesianGrid g = uniform(spec, {0.0, 0.195, 0.805});
  const auto c = spec.cell_of({1.0, 1.0});
  REQUIRE(c.has_value());
  const VelocityMeasurement v{{1.0, 1.0}, 2.5, 0.3};
  const std::vector<VelocityMeasurement> vs{v};
  CHECK(inject_doppler(g, vs, DgmConfig{}).valid_velocity_count() == 0);
  g.set_cell(spec.flat(c->row, c->col), {0.0, 0.196, 0.804});
  const CartesianGrid out = inject_doppler(g, vs, DgmConfig{});
  CHECK(out.valid_velocity_count() == 9);
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      const std::size_t i = spec.flat(c->row + dr, c->col + dc);
      CHECK(out.vr[i] == 2.5);
      CHECK(out.vr_dir[i] == 0.3);
    }
  }
  CHECK(out.occupied == g.occupied);
}

TEST_CASE("velocity measurements are ego-compensated in the vehicle frame") {
  Detection d;
  d.range = 10.0;
  d.azimuth = 0.0;
  d.doppler = -20.0;
  const SensorPose pose{3.45, 0.8, 45.0};
  const auto vs = velocity_measurements(std::vector<Detection>{d}, EgoMotion{20.0, 0.0, 0.0}, pose);
  REQUIRE(vs.size() == 1);
  CHECK(vs[0].position.x() == doctest::Approx(3.45 + 10.0 * std::cos(deg2rad(45.0))));
  CHECK(vs[0].position.y() == doctest::Approx(0.8 + 10.0 * std::sin(deg2rad(45.0))));
  CHECK(vs[0].vr == doctest::Approx(-20.0 + 20.0 * std::cos(deg2rad(45.0))));
  CHECK(vs[0].ray_dir == doctest::Approx(deg2rad(45.0)));
}

TEST_CASE("multi-sensor fusion combines cell-wise and keeps the strongest velocity") {
  const CartesianGridSpec spec = small_spec();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<CartesianGrid> grids;
  for (int k = 0; k < 3; ++k) {
    CartesianGrid g(spec);
    for (std::size_t i = 0; i < g.cell_count(); ++i) {
      const double a = u(rng) * 0.9, b = u(rng) * 0.9;
      g.set_cell(i, {std::min(a, b), std::max(a, b) - std::min(a, b), 1.0 - std::max(a, b)});
    }
    g.vr[0] = k;
    g.vr_valid[0] = 1;
    g.timestamp = k;
    grids.push_back(g);
  }
  grids[1].occupied[0] = 0.99;
  grids[1].free[0] = 0.0;
  grids[1].unknown[0] = 0.01;
  const CartesianGrid fused = fuse_measurement_grids(grids);
  for (std::size_t i = 0; i < fused.cell_count(); ++i) {
    const MeasurementCell e = dempster_combine_or_vacuous(
        dempster_combine_or_vacuous(grids[0].cell(i), grids[1].cell(i)), grids[2].cell(i));
    CHECK(fused.free[i] == doctest::Approx(e.free).epsilon(1e-12));
    CHECK(fused.occupied[i] == doctest::Approx(e.occupied).epsilon(1e-12));
  }
  CHECK(fused.vr[0] == 1.0);
  CHECK(fused.timestamp == 2.0);
  CartesianGridSpec other = spec;
  other.width = 61;
  std::vector<CartesianGrid> bad{grids[0], CartesianGrid(other)};
  CHECK_THROWS_AS(fuse_measurement_grids(bad), Error);
  CHECK_THROWS_AS(fuse_measurement_grids({}), Error);
}

TEST_CASE("configuration validation") {
  DgmConfig cfg;
  cfg.persistence = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.particles_per_cell_max = 0;
  CHECK_THROWS_AS(Dgm(small_spec(), 1).predict(0.05, cfg), Error);
}
