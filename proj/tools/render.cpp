#include "render.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evigrid/error.hpp"
#include "evigrid/io.hpp"

namespace evigrid::cli {
namespace {

std::uint8_t byte_of(double v) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); }

}  // namespace

std::array<std::uint8_t, 3> RgbImage::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void RgbImage::set(int x, int y, std::array<std::uint8_t, 3> rgb) {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  std::copy(rgb.begin(), rgb.end(), pixels.begin() + static_cast<std::ptrdiff_t>(i));
}

std::array<std::uint8_t, 3> to_rgb8(const RgbColor& c) { return {byte_of(c.r), byte_of(c.g), byte_of(c.b)}; }

std::array<std::uint8_t, 3> measurement_rgb8(const MeasurementCell& c) {
  return {byte_of(c.free + c.occupied), byte_of(c.free), byte_of(c.free)};
}

RgbImage render_dgm(std::span<const DgmCell> cells, int width, int height) {
  if (cells.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::kDimensionMismatch, "DGM cell count does not match the image size");
  }
  RgbImage image(width, height);
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      image.set(col, height - 1 - row, to_rgb8(dgm_cell_color(cells[static_cast<std::size_t>(row) * width + col])));
    }
  }
  return image;
}

RgbImage render_measurement(const GridPlanes& grid, int width, int height) {
  if (grid.cell_count() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::kDimensionMismatch, "grid cell count does not match the image size");
  }
  RgbImage image(width, height);
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      image.set(col, height - 1 - row, measurement_rgb8(grid.cell(static_cast<std::size_t>(row) * width + col)));
    }
  }
  return image;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  write_bytes(path, encode_ppm(image));
}

}  // namespace evigrid::cli
