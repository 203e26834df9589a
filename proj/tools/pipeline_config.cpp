#include "pipeline_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "evigrid/error.hpp"

namespace evigrid::cli {
namespace {

void only_keys(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> keys) {
  if (!node || node.IsNull()) return;
  if (!node.IsMap()) throw ConfigError(where + ": expected a mapping");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (node && node.IsMap() && node[key]) out = node[key].as<T>();
}

PolarGridSpec read_polar(const YAML::Node& n, const std::string& where, PolarGridSpec s) {
  only_keys(n, where, {"azimuth_bins", "range_bins", "azimuth_res_deg", "range_res_m"});
  read(n, "azimuth_bins", s.azimuth_bins);
  read(n, "range_bins", s.range_bins);
  read(n, "azimuth_res_deg", s.azimuth_res_deg);
  read(n, "range_res_m", s.range_res_m);
  if (!s.is_valid()) throw ConfigError(where + ": invalid polar grid");
  return s;
}

void parse_body(const YAML::Node& root, const std::filesystem::path& base, PipelineConfig& c) {
  if (!root.IsMap()) throw ConfigError("pipeline config must be a mapping");
  only_keys(root, "config", {"seed", "scenario", "frames", "sim", "grids", "ism", "dgm", "label", "eval"});
  read(root, "seed", c.seed);

  const YAML::Node sc = root["scenario"];
  if (!sc) throw ConfigError("scenario: missing section");
  only_keys(sc, "scenario", {"file", "highway", "sensors", "shifted_mounting"});
  if (sc["file"]) {
    c.scenario_file = base / sc["file"].as<std::string>();
    if (!std::filesystem::is_regular_file(c.scenario_file)) {
      throw ConfigError("scenario.file: no such file " + c.scenario_file.string());
    }
  }
  if (const YAML::Node h = sc["highway"]) {
    only_keys(h, "scenario.highway", {"duration_s", "ego_speed_mps", "lanes", "lane_width_m", "min_vehicles",
                                      "max_vehicles"});
    HighwayParams p;
    read(h, "duration_s", p.duration_s);
    read(h, "ego_speed_mps", p.ego_speed);
    read(h, "lanes", p.lanes);
    read(h, "lane_width_m", p.lane_width);
    read(h, "min_vehicles", p.min_vehicles);
    read(h, "max_vehicles", p.max_vehicles);
    if (p.lanes < 1 || p.min_vehicles < 0 || p.max_vehicles < p.min_vehicles || !(p.duration_s > 0.0)) {
      throw ConfigError("scenario.highway: parameters out of range");
    }
    c.highway = p;
  }
  if (c.scenario_file.empty() == !c.highway.has_value()) {
    throw ConfigError("scenario: give exactly one of 'file' or 'highway'");
  }
  read(sc, "sensors", c.sensors);
  read(sc, "shifted_mounting", c.shifted_mounting);

  const YAML::Node fr = root["frames"];
  only_keys(fr, "frames", {"start_s", "count", "period_s"});
  read(fr, "start_s", c.frames.start_s);
  read(fr, "count", c.frames.count);
  read(fr, "period_s", c.frames.period_s);
  if (c.frames.count < 1 || !(c.frames.period_s > 0.0) || c.frames.start_s < 0.0) {
    throw ConfigError("frames: need count >= 1, period_s > 0 and start_s >= 0");
  }

  const YAML::Node sim = root["sim"];
  only_keys(sim, "sim", {"radar_range_noise_m", "radar_az_noise_deg", "radar_doppler_noise_mps",
                         "detections_per_target", "guardrail_detections_per_m", "detection_dropout", "clutter_rate",
                         "lidar_az_res_deg", "lidar_range_noise_m"});
  read(sim, "radar_range_noise_m", c.sim.radar_range_noise);
  read(sim, "radar_az_noise_deg", c.sim.radar_az_noise);
  read(sim, "radar_doppler_noise_mps", c.sim.radar_doppler_noise);
  read(sim, "detections_per_target", c.sim.detections_per_target_mean);
  read(sim, "guardrail_detections_per_m", c.sim.guardrail_detections_per_m);
  read(sim, "detection_dropout", c.sim.detection_dropout);
  read(sim, "clutter_rate", c.sim.clutter_rate);
  read(sim, "lidar_az_res_deg", c.sim.lidar_az_res);
  read(sim, "lidar_range_noise_m", c.sim.lidar_range_noise);

  const YAML::Node grids = root["grids"];
  only_keys(grids, "grids", {"geometric", "learned", "cartesian"});
  if (grids) {
    c.geometric_polar = read_polar(grids["geometric"], "grids.geometric", c.geometric_polar);
    c.learned_polar = read_polar(grids["learned"], "grids.learned", c.learned_polar);
    const YAML::Node cart = grids["cartesian"];
    only_keys(cart, "grids.cartesian", {"width", "height", "cell_m"});
    read(cart, "width", c.cartesian.width);
    read(cart, "height", c.cartesian.height);
    if (cart && cart["cell_m"]) c.cartesian.cell_x = c.cartesian.cell_y = cart["cell_m"].as<double>();
    if (!c.cartesian.is_valid()) throw ConfigError("grids.cartesian: invalid grid");
  }

  const YAML::Node ism = root["ism"];
  only_keys(ism, "ism", {"model", "weights", "aggregation_frames", "v_max_mps", "sequential_fusion", "geometric"});
  if (ism && ism["model"]) {
    const auto m = ism["model"].as<std::string>();
    if (m == "geometric") {
      c.model = IsmModel::kGeometric;
    } else if (m == "learned") {
      c.model = IsmModel::kLearned;
    } else {
      throw ConfigError("ism.model: expected 'geometric' or 'learned', got '" + m + "'");
    }
  }
  if (ism && ism["weights"]) c.weights = base / ism["weights"].as<std::string>();
  read(ism, "aggregation_frames", c.aggregation.n);
  read(ism, "v_max_mps", c.aggregation.v_max);
  c.aggregation.period_s = c.frames.period_s;
  read(ism, "sequential_fusion", c.sequential_fusion);
  if (c.aggregation.n < 1) throw ConfigError("ism.aggregation_frames: must be >= 1");
  const YAML::Node g = ism ? ism["geometric"] : YAML::Node();
  only_keys(g, "ism.geometric", {"sigma_r_m", "sigma_phi_deg", "lambda_o", "lambda_f", "rcs_min_dbsm",
                                 "velocity_spread_radius"});
  read(g, "sigma_r_m", c.geometric.sigma_r);
  read(g, "sigma_phi_deg", c.geometric.sigma_phi);
  read(g, "lambda_o", c.geometric.lambda_o);
  read(g, "lambda_f", c.geometric.lambda_f);
  read(g, "rcs_min_dbsm", c.geometric.rcs_min);
  read(g, "velocity_spread_radius", c.geometric.velocity_spread_radius);

  const YAML::Node d = root["dgm"];
  only_keys(d, "dgm", {"particles_per_cell_max", "births_per_cell", "birth_fraction", "persistence", "process_noise_pos_m",
                       "process_noise_vel_mps", "static_speed_threshold_mps", "doppler_inject_threshold",
                       "use_doppler"});
  read(d, "particles_per_cell_max", c.dgm.particles_per_cell_max);
  read(d, "births_per_cell", c.dgm.births_per_cell);
  read(d, "birth_fraction", c.dgm.birth_fraction);
  read(d, "persistence", c.dgm.persistence);
  read(d, "process_noise_pos_m", c.dgm.process_noise_pos);
  read(d, "process_noise_vel_mps", c.dgm.process_noise_vel);
  read(d, "static_speed_threshold_mps", c.dgm.static_speed_threshold);
  read(d, "doppler_inject_threshold", c.dgm.doppler_inject_threshold);
  read(d, "use_doppler", c.dgm.use_doppler);
  c.dgm.nominal_dt = c.frames.period_s;

  const YAML::Node l = root["label"];
  only_keys(l, "label", {"accumulation_steps", "stride", "dilation_radius", "z_min_m", "z_max_m"});
  read(l, "accumulation_steps", c.label.accumulation_steps);
  read(l, "stride", c.label.stride);
  read(l, "dilation_radius", c.label.dilation_radius);
  read(l, "z_min_m", c.lidar.z_min);
  read(l, "z_max_m", c.lidar.z_max);

  const YAML::Node e = root["eval"];
  only_keys(e, "eval", {"iou"});
  if (e && e["iou"]) {
    const auto mode = e["iou"].as<std::string>();
    if (mode != "pooled" && mode != "frame_mean") throw ConfigError("eval.iou: expected 'pooled' or 'frame_mean'");
    c.frame_mean_iou = mode == "frame_mean";
  }
}

}  // namespace

std::string model_name(IsmModel m) { return m == IsmModel::kLearned ? "learned" : "geometric"; }

PipelineConfig parse_pipeline_config(const std::string& text, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  try {
    parse_body(YAML::Load(text), base_dir, c);
    c.sim.validate();
    c.geometric.validate();
    c.dgm.validate();
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed YAML: ") + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (c.label.accumulation_steps < 1 || c.label.stride < 1 || c.label.dilation_radius < 0) {
    throw ConfigError("label: accumulation_steps and stride must be >= 1, dilation_radius >= 0");
  }
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_pipeline_config(text.str(), path.parent_path());
}

}  // namespace evigrid::cli
