#include <doctest.h>

#include <atomic>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "commands.hpp"
#include "evigrid/error.hpp"
#include "evigrid/io.hpp"
#include "pipeline_config.hpp"
#include "render.hpp"

using namespace evigrid;
using namespace evigrid::cli;
namespace fs = std::filesystem;

namespace {

const fs::path kData = EVIGRID_DATA_DIR;

std::string with_scenario(const std::string& rest) {
  return "scenario:\n  file: demo_scenario.yaml\n" + rest;
}

std::vector<std::uint8_t> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

PipelineConfig small_config() {
  PipelineConfig c = parse_pipeline_config(with_scenario(R"(  sensors: [front_center, front_left]
seed: 3
frames: {count: 4, period_s: 0.05}
grids:
  cartesian: {width: 120, height: 120, cell_m: 0.5}
label: {accumulation_steps: 2, stride: 1}
)"),
                                           kData);
  return c;
}

}  // namespace

TEST_CASE("pipeline config defaults and overrides") {
  const PipelineConfig c = parse_pipeline_config(with_scenario("seed: 5\n"), kData);
  CHECK(c.seed == 5);
  CHECK(c.model == IsmModel::kGeometric);
  CHECK(c.learned_polar == PolarGridSpec::deep_default());
  CHECK(c.geometric_polar == PolarGridSpec::geometric_default());
  CHECK(c.cartesian == CartesianGridSpec::paper_default());
  CHECK(c.dgm.doppler_inject_threshold == 0.196);
  CHECK(c.aggregation.n == 1);

  const PipelineConfig o = parse_pipeline_config(with_scenario(R"(frames: {count: 3, period_s: 0.1}
ism: {model: learned, weights: w.enet, aggregation_frames: 2}
eval: {iou: frame_mean}
)"),
                                                 kData);
  CHECK(o.model == IsmModel::kLearned);
  CHECK(o.weights == kData / "w.enet");
  CHECK(o.aggregation.n == 2);
  CHECK(o.aggregation.period_s == 0.1);
  CHECK(o.dgm.nominal_dt == 0.1);
  CHECK(o.frame_mean_iou);
}

TEST_CASE("malformed configs raise ConfigError") {
  const char* bad[] = {
      "seed: [1, 2]\n",
      "scenario:\n  file: missing.yaml\n",
      "scenario:\n  highway: {lanes: 3}\n  file: demo_scenario.yaml\n",
      "scenario: {}\n",
      "unknown_key: 1\n",
      "{{{ not yaml",
  };
  for (const char* text : bad) CHECK_THROWS_AS(parse_pipeline_config(text, kData), ConfigError);
  const char* bad_with_scenario[] = {
      "frames: {count: 0}\n",
      "ism: {model: neural}\n",
      "ism: {aggregation_frames: 0}\n",
      "grids:\n  learned: {azimuth_bins: 0}\n",
      "dgm: {persistence: 2.0}\n",
      "eval: {iou: median}\n",
      "label: {stride: 0}\n",
      "sim: {clutter_rate: -1}\n",
  };
  for (const char* text : bad_with_scenario) {
    CAPTURE(text);
    CHECK_THROWS_AS(parse_pipeline_config(with_scenario(text), kData), ConfigError);
  }
  CHECK_THROWS_AS(load_pipeline_config(kData / "nope.yaml"), ConfigError);
  CHECK_NOTHROW(load_pipeline_config(kData / "demo_pipeline.yaml"));
}

TEST_CASE("pure DGM cells render with exact colors") {
  std::vector<DgmCell> cells(4);
  cells[0] = {.m_s = 1.0, .m_fds = 0.0};
  cells[1] = {.m_f = 1.0, .m_fds = 0.0};
  cells[2] = {.m_d = 1.0, .m_fds = 0.0};
  cells[3] = DgmCell{};
  const RgbImage img = render_dgm(cells, 2, 2);
  // Row 0 of the grid is the bottom image row.
  CHECK(img.at(0, 1) == std::array<std::uint8_t, 3>{255, 0, 0});
  CHECK(img.at(1, 1) == std::array<std::uint8_t, 3>{0, 255, 0});
  CHECK(img.at(0, 0) == std::array<std::uint8_t, 3>{0, 0, 255});
  CHECK(img.at(1, 0) == std::array<std::uint8_t, 3>{255, 255, 255});

  CHECK(measurement_rgb8({1.0, 0.0, 0.0}) == std::array<std::uint8_t, 3>{255, 255, 255});
  CHECK(measurement_rgb8({0.0, 1.0, 0.0}) == std::array<std::uint8_t, 3>{255, 0, 0});
  CHECK(measurement_rgb8({0.0, 0.0, 1.0}) == std::array<std::uint8_t, 3>{0, 0, 0});

  const auto ppm = encode_ppm(img);
  const std::string header = "P6\n2 2\n255\n";
  REQUIRE(ppm.size() == header.size() + 12);
  CHECK(std::string(ppm.begin(), ppm.begin() + header.size()) == header);
  CHECK(ppm[header.size()] == 0);  // top-left: blue cell
  CHECK(ppm[header.size() + 2] == 255);
}

TEST_CASE("parallel_for visits every index once and rethrows failures") {
  for (int workers : {1, 3, 16}) {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(hits.size(), workers, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(parallel_for(50, workers,
                                 [](std::size_t i) {
                                   if (i == 17) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
  }
  CHECK(frame_file("fused", 7) == "fused_0007.egrid");
}

TEST_CASE("pipeline stages are reproducible and independent of the worker count") {
  const PipelineConfig cfg = small_config();
  const fs::path root = fs::temp_directory_path() / "evigrid_test_cli";
  fs::remove_all(root);
  for (int workers : {1, 3}) {
    RunOptions opt;
    opt.out = root / std::to_string(workers);
    opt.workers = workers;
    run_simulate(cfg, opt);
    run_ism(cfg, opt);
    run_label_gen(cfg, opt);
    run_dgm(cfg, opt);
    run_eval(cfg, opt);
    run_render(cfg, opt);
  }
  const char* files[] = {"sim/radar_front_left.jsonl", "sim/lidar.jsonl",  "sim/gt_cart_0003.egrid",
                         "ism_geometric/fused_0003.egrid", "dgm_geometric/dgm_0003.egrid",
                         "labels/label_front_center_0000.egrid", "eval/ism_geometric.json",
                         "render/dgm_geometric_0003.ppm"};
  for (const char* f : files) {
    CAPTURE(f);
    const auto a = bytes_of(root / "1" / f);
    CHECK_FALSE(a.empty());
    CHECK(a == bytes_of(root / "3" / f));
  }
  // Every grid artifact reads back.
  for (const auto& e : fs::recursive_directory_iterator(root / "1")) {
    if (e.path().extension() == ".egrid") CHECK_NOTHROW(read_egrid(e.path()));
  }
  const CartesianGrid fused = cartesian_grid_from(read_egrid(root / "1" / "ism_geometric/fused_0000.egrid"));
  CHECK(fused.spec.width == 120);
  fs::remove_all(root);
}

TEST_CASE("stage errors carry module error codes") {
  const PipelineConfig cfg = small_config();
  RunOptions opt;
  opt.out = fs::temp_directory_path() / "evigrid_test_cli_empty";
  fs::remove_all(opt.out);
  CHECK_THROWS_AS(run_ism(cfg, opt), Error);
  CHECK_THROWS_AS(run_eval(cfg, opt), Error);

  PipelineConfig learned = cfg;
  learned.model = IsmModel::kLearned;
  CHECK_THROWS_AS(run_ism(learned, opt), ConfigError);

  PipelineConfig too_long = cfg;
  too_long.frames.count = 1000;
  CHECK_THROWS_AS(run_simulate(too_long, opt), ConfigError);

  PipelineConfig budget = cfg;
  budget.aggregation.n = 3;
  budget.aggregation.v_max = 35.0;
  try {
    run_ism(budget, opt);
    FAIL("expected an aggregation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kAggregationBudget);
  }
  fs::remove_all(opt.out);
}
