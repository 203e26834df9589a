#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "evigrid/dgm_fusion.hpp"
#include "evigrid/lidar_label_gen.hpp"
#include "evigrid/polar_grid.hpp"

namespace evigrid {

enum class GridScheme : std::uint8_t { kPolar = 0, kCartesian = 1 };

/// Raw content of an EGRID file. dim0/bin0 run along azimuth (polar) or y
/// (Cartesian); dim1/bin1 along range or x. A single-channel file stores
/// one u8 plane instead of f32 planes.
struct EgridFile {
  GridScheme scheme = GridScheme::kPolar;
  std::uint32_t dim0 = 0;
  std::uint32_t dim1 = 0;
  double bin0 = 0.0;
  double bin1 = 0.0;
  std::vector<std::vector<float>> planes;  // f32 channels, empty for u8 files
  std::vector<std::uint8_t> bytes;         // u8 plane when the channel count is 1

  std::uint32_t channel_count() const { return planes.empty() ? 1u : static_cast<std::uint32_t>(planes.size()); }
  std::size_t plane_size() const { return static_cast<std::size_t>(dim0) * dim1; }
};

inline constexpr std::uint32_t kEgridVersion = 1;
inline constexpr std::uint32_t kMeasurementChannels = 5;  // b_F, b_O, b_FO, vr, vr_valid
inline constexpr std::uint32_t kDgmChannels = 8;          // m_F, m_D, m_S, m_FD, m_DS, m_FDS, vx, vy

std::vector<std::uint8_t> encode_egrid(const EgridFile& f);
EgridFile decode_egrid(std::span<const std::uint8_t> data);
EgridFile read_egrid(const std::filesystem::path& path);
void write_egrid(const std::filesystem::path& path, const EgridFile& f);

EgridFile to_egrid(const PolarGrid& g);
EgridFile to_egrid(const CartesianGrid& g);
EgridFile to_egrid(const PolarImage& image);
EgridFile to_egrid(const LabelImage& label, const PolarGridSpec& spec);
EgridFile to_egrid(const LabelImage& label, const CartesianGridSpec& cspec);
EgridFile to_egrid(const Dgm& dgm);

PolarGridSpec polar_spec_of(const EgridFile& f);
/// Cartesian grids are stored vehicle-centered; the origin pose is not kept.
CartesianGridSpec cartesian_spec_of(const EgridFile& f);

/// Masses are renormalized after the f32 round trip.
PolarGrid polar_grid_from(const EgridFile& f);
CartesianGrid cartesian_grid_from(const EgridFile& f);
PolarImage polar_image_from(const EgridFile& f);
LabelImage label_from(const EgridFile& f);
std::vector<DgmCell> dgm_cells_from(const EgridFile& f);

struct EgoRecord {
  double t = 0.0;
  Pose2D pose;             // world frame
  double v = 0.0;
  double yaw_rate = 0.0;   // deg/s

  EgoMotion motion() const { return {v, yaw_rate, t}; }
};

/// Vehicle box at a timestamp, in the ego vehicle frame.
struct BoxRecord {
  double t = 0.0;
  OrientedBox box;
};

/// Writes through a temporary file and a rename.
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

std::string detection_to_jsonl(const Detection& d);
void write_detections(const std::filesystem::path& path, std::span<const Detection> detections);
std::vector<Detection> read_detections(const std::filesystem::path& path);

/// One point per line; consecutive lines sharing t_s form a scan.
void write_lidar(const std::filesystem::path& path, std::span<const LidarScan> scans);
std::vector<LidarScan> read_lidar(const std::filesystem::path& path);

void write_ego(const std::filesystem::path& path, std::span<const EgoRecord> records);
std::vector<EgoRecord> read_ego(const std::filesystem::path& path);

void write_boxes(const std::filesystem::path& path, std::span<const BoxRecord> records);
std::vector<BoxRecord> read_boxes(const std::filesystem::path& path);

}  // namespace evigrid
