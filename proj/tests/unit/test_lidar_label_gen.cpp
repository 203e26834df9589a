#include <doctest.h>

#include <cmath>
#include <random>

#include "evigrid/error.hpp"
#include "evigrid/lidar_label_gen.hpp"

using namespace evigrid;

namespace {

CartesianGridSpec small_spec() { return {100, 100, 0.2, 0.2, {}}; }

// Ring of points at `radius` around the origin, one per 0.1 degree.
LidarScan ring(double radius, double t, double z = 1.0) {
  LidarScan s;
  s.timestamp = t;
  for (int k = 0; k < 3600; ++k) {
    const double a = deg2rad(-180.0 + 0.1 * (k + 0.5));
    s.points.push_back({radius * std::cos(a), radius * std::sin(a), z});
  }
  return s;
}

PolarGrid ray_grid(const PolarGridSpec& spec, std::initializer_list<std::pair<int, MeasurementCell>> cells, int a) {
  PolarGrid g(spec);
  for (const auto& [r, c] : cells) g.set_cell(g.index(a, r), c);
  return g;
}

}  // namespace

TEST_CASE("oriented box containment and corners") {
  const OrientedBox b{2.0, 1.0, 4.0, 2.0, 90.0};
  CHECK(b.contains({2.0, 2.9}));
  CHECK_FALSE(b.contains({3.5, 1.0}));
  const auto corners = b.corners();
  CHECK(corners[0].x() == doctest::Approx(1.0));
  CHECK(corners[0].y() == doctest::Approx(3.0));
  const OrientedBox moved = b.transformed(Pose2D{1.0, 0.0, 90.0});
  CHECK(moved.cx == doctest::Approx(0.0));
  CHECK(moved.cy == doctest::Approx(2.0));
  CHECK(std::abs(moved.yaw_deg) == doctest::Approx(180.0));
}

TEST_CASE("LiDAR measurement grid: free inside the ring, occupied on it, vacuous beyond") {
  const CartesianGridSpec spec = small_spec();
  const LidarIsmParams p;
  const CartesianGrid g = lidar_measurement_grid(ring(6.0, 0.5), spec, p);
  CHECK(g.timestamp == 0.5);
  for (int row = 0; row < spec.height; ++row) {
    for (int col = 0; col < spec.width; ++col) {
      const double r = spec.cell_center(row, col).norm();
      const MeasurementCell c = g.cell(spec.flat(row, col));
      if (r < 5.6) {
        CHECK(c.free == p.free_mass);
        CHECK(c.occupied == 0.0);
      } else if (r > 6.4) {
        CHECK(c.is_vacuous());
      }
    }
  }
  const auto hit = spec.cell_of({6.0 * std::cos(0.3), 6.0 * std::sin(0.3)});
  REQUIRE(hit.has_value());
  CHECK(g.occupied[spec.flat(hit->row, hit->col)] == p.occupied_mass);
}

TEST_CASE("height filter drops ground and overhanging returns") {
  const CartesianGridSpec spec = small_spec();
  CHECK(lidar_measurement_grid(ring(6.0, 0.0, 0.1), spec, {}).all_vacuous());
  CHECK(lidar_measurement_grid(ring(6.0, 0.0, 3.0), spec, {}).all_vacuous());
  CHECK(lidar_measurement_grid(LidarScan{}, spec, {}).all_vacuous());
}

TEST_CASE("sectors without a return stay vacuous") {
  const CartesianGridSpec spec = small_spec();
  LidarScan s = ring(6.0, 0.0);
  std::erase_if(s.points, [](const LidarPoint& p) { return p.x < 0.0; });
  const CartesianGrid g = lidar_measurement_grid(s, spec, {});
  const auto behind = spec.cell_of({-3.0, 0.1});
  REQUIRE(behind.has_value());
  CHECK(g.cell(spec.flat(behind->row, behind->col)).is_vacuous());
}

TEST_CASE("boxes force full occupancy") {
  const CartesianGridSpec spec = small_spec();
  const OrientedBox box{3.0, 0.0, 4.5, 1.8, 30.0};
  const CartesianGrid g = refine_with_boxes(lidar_measurement_grid(ring(8.0, 0.0), spec, {}), std::vector{box});
  for (int row = 0; row < spec.height; ++row) {
    for (int col = 0; col < spec.width; ++col) {
      if (!box.contains(spec.cell_center(row, col))) continue;
      const MeasurementCell c = g.cell(spec.flat(row, col));
      CHECK(c.occupied == 1.0);
      CHECK(c.free == 0.0);
    }
  }
}

TEST_CASE("partial-area filter keeps radar-supported bins only") {
  const PolarGridSpec spec{4, 40, 1.0, 0.5};
  const MeasurementCell occ{0.0, 0.9, 0.1};
  const MeasurementCell weak{0.5, 0.3, 0.2};
  // Azimuth 1: occupied at 10 (first), 20 (unsupported), 25 (supported), 30 (last).
  PolarGrid g = ray_grid(spec, {{10, occ}, {15, weak}, {20, occ}, {25, occ}, {30, occ}, {35, occ}}, 1);
  PolarImage radar(spec);
  radar.pixels[1 * 40 + 26] = 1;
  const PolarGrid f = filter_partial_area(g, radar, 1, {});
  CHECK(f.occupied[f.index(1, 10)] == 0.9);  // first occupied bin stays
  CHECK(f.occupied[f.index(1, 35)] == 0.9);  // last occupied bin stays
  CHECK(f.occupied[f.index(1, 25)] == 0.9);  // within dilated support
  CHECK(f.occupied[f.index(1, 20)] == 0.0);
  CHECK(f.unknown[f.index(1, 20)] == doctest::Approx(1.0));
  CHECK(f.occupied[f.index(1, 15)] == 0.0);
  CHECK(f.free[f.index(1, 15)] == 0.5);
  CHECK(f.unknown[f.index(1, 15)] == doctest::Approx(0.5));
  CHECK(f.occupied[f.index(1, 30)] == 0.0);

  std::vector<std::uint8_t> keep(spec.size(), 0);
  keep[1 * 40 + 20] = 1;
  const PolarGrid k = filter_partial_area(g, radar, 1, keep);
  CHECK(k.occupied[k.index(1, 20)] == 0.9);

  CHECK_THROWS_AS(filter_partial_area(g, PolarImage(PolarGridSpec::deep_default()), 1, {}), Error);
}

TEST_CASE("partial-area filter property: masses stay valid and never gain occupancy") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const PolarGridSpec spec{30, 60, 1.0, 0.5};
  for (int trial = 0; trial < 10; ++trial) {
    PolarGrid g(spec);
    PolarImage radar(spec);
    for (std::size_t i = 0; i < g.cell_count(); ++i) {
      const double a = u(rng), b = u(rng);
      g.set_cell(i, {std::min(a, b), std::max(a, b) - std::min(a, b), 1.0 - std::max(a, b)});
      radar.pixels[i] = u(rng) < 0.02;
    }
    const PolarGrid f = filter_partial_area(g, radar, 2, {});
    for (std::size_t i = 0; i < f.cell_count(); ++i) {
      CHECK(f.cell(i).is_valid(1e-12));
      CHECK(f.occupied[i] <= g.occupied[i]);
      CHECK(f.free[i] == g.free[i]);
    }
  }
}

TEST_CASE("box mask marks bins inside boxes") {
  const PolarGridSpec spec = PolarGridSpec::geometric_default();
  const OrientedBox box{10.0, 0.0, 4.5, 1.8, 0.0};
  const auto mask = box_mask(std::vector{box}, SensorPose{}, spec);
  const auto inside = spec.bin_of(10.0, 0.5);
  const auto outside = spec.bin_of(20.0, 0.5);
  CHECK(mask[static_cast<std::size_t>(inside->azimuth) * spec.range_bins + inside->range] == 1);
  CHECK(mask[static_cast<std::size_t>(outside->azimuth) * spec.range_bins + outside->range] == 0);
}

TEST_CASE("labels classify each cell") {
  PolarGrid g(PolarGridSpec{1, 3, 1.0, 1.0});
  g.set_cell(0, {0.8, 0.1, 0.1});
  g.set_cell(1, {0.1, 0.8, 0.1});
  const LabelImage l = make_label(g);
  CHECK(l.classes[0] == CellClass::kFree);
  CHECK(l.classes[1] == CellClass::kOccupied);
  CHECK(l.classes[2] == CellClass::kUnknown);
}

TEST_CASE("label generator accumulates and emits on a stride") {
  LabelParams lp;
  lp.accumulation_steps = 3;
  lp.stride = 2;
  LabelGenerator gen(small_spec(), DgmConfig{}, LidarIsmParams{}, lp, 1);
  std::vector<bool> due;
  for (int k = 0; k < 8; ++k) {
    gen.push_scan(ring(6.0, 0.1 * k), Pose2D{});
    due.push_back(gen.label_due());
  }
  CHECK(due == std::vector<bool>{false, false, true, false, true, false, true, false});
  CHECK(gen.steps() == 8);

  const CartesianGrid ref = gen.reference_grid({});
  const auto inside = small_spec().cell_of({2.0, 1.0});
  const auto wall = small_spec().cell_of({5.9, 0.1});
  CHECK(classify(ref.cell(small_spec().flat(inside->row, inside->col))) == CellClass::kFree);
  CHECK(classify(ref.cell(small_spec().flat(wall->row, wall->col))) == CellClass::kOccupied);
  CHECK_THROWS_AS(gen.push_scan(ring(6.0, 0.0), Pose2D{}), Error);
}

TEST_CASE("polar reference resamples, filters and keeps boxes") {
  LabelParams lp;
  lp.accumulation_steps = 1;
  LabelGenerator gen(small_spec(), DgmConfig{}, LidarIsmParams{}, lp, 2);
  gen.push_scan(ring(8.0, 0.0));
  const OrientedBox box{4.0, 0.0, 1.0, 1.0, 0.0};
  const CartesianGrid ref = gen.reference_grid(std::vector{box});
  const PolarGridSpec spec = PolarGridSpec::geometric_default();
  const PolarGrid polar = gen.polar_reference(ref, std::vector{box}, SensorPose{}, spec, {});
  const auto b = spec.bin_of(4.0, 0.5);
  CHECK(classify(polar.cell(polar.index(b->azimuth, b->range))) == CellClass::kOccupied);
  const auto near = spec.bin_of(1.5, 0.5);
  CHECK(classify(polar.cell(polar.index(near->azimuth, near->range))) == CellClass::kFree);
}
