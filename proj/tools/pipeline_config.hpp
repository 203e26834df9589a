#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "evigrid/dgm_fusion.hpp"
#include "evigrid/geometric_ism.hpp"
#include "evigrid/lidar_label_gen.hpp"
#include "evigrid/polar_grid.hpp"
#include "evigrid/scenario_sim.hpp"

namespace evigrid::cli {

/// Malformed or inconsistent pipeline configuration (exit status 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class IsmModel { kGeometric, kLearned };

std::string model_name(IsmModel m);

struct FrameWindow {
  double start_s = 0.0;
  int count = 20;
  double period_s = 0.05;

  double time(int k) const { return start_s + k * period_s; }
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path scenario_file;           // empty: generated highway
  std::optional<HighwayParams> highway;          // generator settings when no file is given
  std::vector<std::string> sensors;              // empty: every mounted radar
  bool shifted_mounting = false;
  FrameWindow frames;
  SimConfig sim;

  PolarGridSpec geometric_polar = PolarGridSpec::geometric_default();
  PolarGridSpec learned_polar = PolarGridSpec::deep_default();
  CartesianGridSpec cartesian = CartesianGridSpec::paper_default();

  IsmModel model = IsmModel::kGeometric;
  std::filesystem::path weights;
  GeometricIsmParams geometric;
  AggregationPolicy aggregation;
  bool sequential_fusion = false;

  DgmConfig dgm;
  LidarIsmParams lidar;
  LabelParams label;
  bool frame_mean_iou = false;

  const PolarGridSpec& polar_spec(IsmModel m) const {
    return m == IsmModel::kLearned ? learned_polar : geometric_polar;
  }
};

/// Parses a YAML pipeline file; relative paths resolve against `base_dir`.
/// Throws ConfigError on any malformed, missing or out-of-range entry.
PipelineConfig parse_pipeline_config(const std::string& text, const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

}  // namespace evigrid::cli
