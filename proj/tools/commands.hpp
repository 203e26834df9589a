#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "pipeline_config.hpp"

namespace evigrid::cli {

struct RunOptions {
  std::filesystem::path out = "out";
  int workers = 1;
  std::optional<IsmModel> model;  // overrides ism.model
};

/// Runs fn(0..n-1) on up to `workers` threads; rethrows the first failure.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

std::string frame_file(const std::string& stem, int index);

void run_simulate(const PipelineConfig& cfg, const RunOptions& opt);
void run_ism(const PipelineConfig& cfg, const RunOptions& opt);
void run_label_gen(const PipelineConfig& cfg, const RunOptions& opt);
void run_dgm(const PipelineConfig& cfg, const RunOptions& opt);
void run_eval(const PipelineConfig& cfg, const RunOptions& opt);
void run_render(const PipelineConfig& cfg, const RunOptions& opt);

}  // namespace evigrid::cli
