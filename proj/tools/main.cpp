#include <cstdlib>
#include <functional>
#include <map>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "evigrid/error.hpp"

namespace {

constexpr int kExitModuleError = 1;
constexpr int kExitConfigError = 2;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("evigrid");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("EVIGRID_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off") {
      spdlog::warn("EVIGRID_LOG: unknown level '{}', keeping info", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  using namespace evigrid::cli;
  setup_logging();

  CLI::App app{"Evidential radar occupancy grid pipeline"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string model;

  using Runner = std::function<void(const PipelineConfig&, const RunOptions&)>;
  const std::vector<std::tuple<const char*, const char*, Runner>> commands{
      {"simulate", "Simulate radar, LiDAR, ego and ground-truth artifacts", run_simulate},
      {"ism", "Radar measurement grids per sensor and fused", run_ism},
      {"label-gen", "LiDAR-derived training labels", run_label_gen},
      {"dgm", "Dynamic grid map over the fused measurement grids", run_dgm},
      {"eval", "IoU and conditional-probability reports", run_eval},
      {"render", "PPM images of measurement grids and DGMs", run_render},
  };
  std::map<CLI::App*, Runner> runners;
  for (const auto& [name, help, runner] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Pipeline YAML file")->required();
    sub->add_option("--seed", seed, "Override the configured seed");
    sub->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "Output directory");
    if (std::string(name) == "ism" || std::string(name) == "dgm") {
      sub->add_option("--model", model, "geometric or learned")->check(CLI::IsMember({"geometric", "learned"}));
    }
    runners[sub] = runner;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfigError;
  }

  try {
    PipelineConfig cfg = load_pipeline_config(config_path);
    if (seed) cfg.seed = *seed;
    RunOptions opt;
    opt.out = out;
    opt.workers = workers;
    if (!model.empty()) opt.model = model == "learned" ? IsmModel::kLearned : IsmModel::kGeometric;
    for (const auto& [sub, runner] : runners) {
      if (sub->parsed()) runner(cfg, opt);
    }
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kExitConfigError;
  } catch (const evigrid::Error& e) {
    spdlog::error("{}", e.what());
    return kExitModuleError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitModuleError;
  }
  return 0;
}
