#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "evigrid/evidential.hpp"
#include "evigrid/polar_grid.hpp"

namespace evigrid::cli {

/// 8-bit RGB raster, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // 3 bytes per pixel

  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}
  std::array<std::uint8_t, 3> at(int x, int y) const;
  void set(int x, int y, std::array<std::uint8_t, 3> rgb);
};

std::array<std::uint8_t, 3> to_rgb8(const RgbColor& c);

/// Free mass as gray level plus occupied mass in red; unknown stays black.
std::array<std::uint8_t, 3> measurement_rgb8(const MeasurementCell& c);

/// Bird's-eye view with +x to the right and +y up.
RgbImage render_dgm(std::span<const DgmCell> cells, int width, int height);
RgbImage render_measurement(const GridPlanes& grid, int width, int height);

std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

}  // namespace evigrid::cli
