#include "evigrid/io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "byte_io.hpp"
#include "evigrid/error.hpp"

namespace evigrid {

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(file), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw Error(ErrorCode::kIo, "cannot write " + tmp);
    file.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!file) throw Error(ErrorCode::kIo, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot rename " + tmp + ": " + ec.message());
}

}  // namespace detail

namespace {

constexpr char kMagic[4] = {'E', 'G', 'R', 'D'};
using nlohmann::json;

void check_planes(const EgridFile& f) {
  if (f.planes.empty()) {
    if (f.bytes.size() != f.plane_size()) throw Error(ErrorCode::kSizeMismatch, "u8 plane does not match dimensions");
    return;
  }
  if (f.planes.size() == 1) throw Error(ErrorCode::kInvalidArgument, "single-channel grids are stored as u8");
  for (const auto& p : f.planes) {
    if (p.size() != f.plane_size()) throw Error(ErrorCode::kSizeMismatch, "f32 plane does not match dimensions");
  }
}

void expect(const EgridFile& f, GridScheme scheme, std::uint32_t channels, const char* what) {
  if (f.scheme != scheme || f.channel_count() != channels) {
    throw Error(ErrorCode::kParse, std::string("EGRID file is not a ") + what);
  }
}

EgridFile header(GridScheme scheme, int dim0, int dim1, double bin0, double bin1) {
  EgridFile f;
  f.scheme = scheme;
  f.dim0 = static_cast<std::uint32_t>(dim0);
  f.dim1 = static_cast<std::uint32_t>(dim1);
  f.bin0 = bin0;
  f.bin1 = bin1;
  return f;
}

void store_measurement(const GridPlanes& g, EgridFile& f) {
  const std::size_t n = g.cell_count();
  f.planes.assign(kMeasurementChannels, std::vector<float>(n));
  for (std::size_t i = 0; i < n; ++i) {
    f.planes[0][i] = static_cast<float>(g.free[i]);
    f.planes[1][i] = static_cast<float>(g.occupied[i]);
    f.planes[2][i] = static_cast<float>(g.unknown[i]);
    f.planes[3][i] = g.vr_valid[i] ? static_cast<float>(g.vr[i]) : 0.0f;
    f.planes[4][i] = g.vr_valid[i] ? 1.0f : 0.0f;
  }
}

void load_measurement(const EgridFile& f, GridPlanes& g) {
  for (std::size_t i = 0; i < g.cell_count(); ++i) {
    MeasurementCell c{std::max(0.0, static_cast<double>(f.planes[0][i])),
                      std::max(0.0, static_cast<double>(f.planes[1][i])),
                      std::max(0.0, static_cast<double>(f.planes[2][i]))};
    g.set_cell(i, c.free + c.occupied + c.unknown > 0.0 ? normalized(c) : MeasurementCell::vacuous());
    g.vr_valid[i] = f.planes[4][i] != 0.0f ? 1 : 0;
    g.vr[i] = g.vr_valid[i] ? f.planes[3][i] : 0.0;
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) {
    text += l;
    text += '\n';
  }
  detail::write_file_atomic(path.string(), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

template <typename Fn>
void parse_each(const std::filesystem::path& path, Fn&& fn) {
  std::size_t lineno = 0;
  for (const std::string& line : read_lines(path)) {
    ++lineno;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<std::uint8_t> encode_egrid(const EgridFile& f) {
  check_planes(f);
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  detail::put_u32(out, kEgridVersion);
  out.push_back(static_cast<std::uint8_t>(f.scheme));
  detail::put_u32(out, f.dim0);
  detail::put_u32(out, f.dim1);
  detail::put_f64(out, f.bin0);
  detail::put_f64(out, f.bin1);
  detail::put_u32(out, f.channel_count());
  if (f.planes.empty()) {
    out.insert(out.end(), f.bytes.begin(), f.bytes.end());
  } else {
    out.reserve(out.size() + f.planes.size() * f.plane_size() * 4);
    for (const auto& p : f.planes) {
      for (float v : p) detail::put_f32(out, v);
    }
  }
  return out;
}

EgridFile decode_egrid(std::span<const std::uint8_t> data) {
  if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0) throw Error(ErrorCode::kBadMagic, "not an EGRID file");
  detail::ByteReader in(data.subspan(4), "EGRID");
  const std::uint32_t version = in.u32();
  if (version != kEgridVersion) throw Error(ErrorCode::kParse, "unsupported EGRID version " + std::to_string(version));
  EgridFile f;
  const std::uint8_t scheme = in.u8();
  if (scheme > 1) throw Error(ErrorCode::kParse, "unknown EGRID scheme " + std::to_string(scheme));
  f.scheme = static_cast<GridScheme>(scheme);
  f.dim0 = in.u32();
  f.dim1 = in.u32();
  f.bin0 = in.f64();
  f.bin1 = in.f64();
  const std::uint32_t channels = in.u32();
  if (channels == 0) throw Error(ErrorCode::kParse, "EGRID file without channels");
  if (channels == 1) {
    in.raw(f.bytes, f.plane_size());
  } else {
    f.planes.resize(channels);
    for (auto& p : f.planes) in.f32s(p, f.plane_size());
  }
  if (!in.at_end()) throw Error(ErrorCode::kSizeMismatch, "trailing bytes after EGRID planes");
  return f;
}

EgridFile read_egrid(const std::filesystem::path& path) { return decode_egrid(detail::read_file(path.string())); }

void write_egrid(const std::filesystem::path& path, const EgridFile& f) {
  detail::write_file_atomic(path.string(), encode_egrid(f));
}

EgridFile to_egrid(const PolarGrid& g) {
  const PolarGridSpec& s = g.spec;
  EgridFile f = header(GridScheme::kPolar, s.azimuth_bins, s.range_bins, s.azimuth_res_deg, s.range_res_m);
  store_measurement(g, f);
  return f;
}

EgridFile to_egrid(const CartesianGrid& g) {
  const CartesianGridSpec& s = g.spec;
  EgridFile f = header(GridScheme::kCartesian, s.height, s.width, s.cell_y, s.cell_x);
  store_measurement(g, f);
  return f;
}

EgridFile to_egrid(const PolarImage& image) {
  const PolarGridSpec& s = image.spec;
  EgridFile f = header(GridScheme::kPolar, s.azimuth_bins, s.range_bins, s.azimuth_res_deg, s.range_res_m);
  f.bytes = image.pixels;
  return f;
}

EgridFile to_egrid(const LabelImage& label, const PolarGridSpec& spec) {
  if (label.rows != spec.azimuth_bins || label.cols != spec.range_bins) {
    throw Error(ErrorCode::kDimensionMismatch, "label does not match the polar spec");
  }
  EgridFile f = header(GridScheme::kPolar, spec.azimuth_bins, spec.range_bins, spec.azimuth_res_deg, spec.range_res_m);
  f.bytes.resize(label.classes.size());
  std::transform(label.classes.begin(), label.classes.end(), f.bytes.begin(),
                 [](CellClass c) { return static_cast<std::uint8_t>(c); });
  return f;
}

EgridFile to_egrid(const LabelImage& label, const CartesianGridSpec& cspec) {
  if (label.rows != cspec.height || label.cols != cspec.width) {
    throw Error(ErrorCode::kDimensionMismatch, "label does not match the Cartesian spec");
  }
  EgridFile f = header(GridScheme::kCartesian, cspec.height, cspec.width, cspec.cell_y, cspec.cell_x);
  f.bytes.resize(label.classes.size());
  std::transform(label.classes.begin(), label.classes.end(), f.bytes.begin(),
                 [](CellClass c) { return static_cast<std::uint8_t>(c); });
  return f;
}

EgridFile to_egrid(const Dgm& dgm) {
  const CartesianGridSpec& s = dgm.spec();
  EgridFile f = header(GridScheme::kCartesian, s.height, s.width, s.cell_y, s.cell_x);
  const auto cells = dgm.cells();
  f.planes.assign(kDgmChannels, std::vector<float>(cells.size()));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const DgmCell& c = cells[i];
    f.planes[0][i] = static_cast<float>(c.m_f);
    f.planes[1][i] = static_cast<float>(c.m_d);
    f.planes[2][i] = static_cast<float>(c.m_s);
    f.planes[3][i] = static_cast<float>(c.m_fd);
    f.planes[4][i] = static_cast<float>(c.m_ds);
    f.planes[5][i] = static_cast<float>(c.m_fds);
    f.planes[6][i] = c.v_valid ? static_cast<float>(c.v_mean.x()) : 0.0f;
    f.planes[7][i] = c.v_valid ? static_cast<float>(c.v_mean.y()) : 0.0f;
  }
  return f;
}

PolarGridSpec polar_spec_of(const EgridFile& f) {
  if (f.scheme != GridScheme::kPolar) throw Error(ErrorCode::kParse, "EGRID file is not polar");
  PolarGridSpec s{static_cast<int>(f.dim0), static_cast<int>(f.dim1), f.bin0, f.bin1};
  if (!s.is_valid()) throw Error(ErrorCode::kParse, "EGRID polar geometry is invalid");
  return s;
}

CartesianGridSpec cartesian_spec_of(const EgridFile& f) {
  if (f.scheme != GridScheme::kCartesian) throw Error(ErrorCode::kParse, "EGRID file is not Cartesian");
  CartesianGridSpec s;
  s.height = static_cast<int>(f.dim0);
  s.width = static_cast<int>(f.dim1);
  s.cell_y = f.bin0;
  s.cell_x = f.bin1;
  if (!s.is_valid()) throw Error(ErrorCode::kParse, "EGRID Cartesian geometry is invalid");
  return s;
}

PolarGrid polar_grid_from(const EgridFile& f) {
  expect(f, GridScheme::kPolar, kMeasurementChannels, "polar measurement grid");
  PolarGrid g(polar_spec_of(f));
  load_measurement(f, g);
  return g;
}

CartesianGrid cartesian_grid_from(const EgridFile& f) {
  expect(f, GridScheme::kCartesian, kMeasurementChannels, "Cartesian measurement grid");
  CartesianGrid g(cartesian_spec_of(f));
  load_measurement(f, g);
  return g;
}

PolarImage polar_image_from(const EgridFile& f) {
  expect(f, GridScheme::kPolar, 1, "polar detection image");
  PolarImage image(polar_spec_of(f));
  for (std::size_t i = 0; i < f.bytes.size(); ++i) image.pixels[i] = f.bytes[i] ? 1 : 0;
  return image;
}

LabelImage label_from(const EgridFile& f) {
  if (f.channel_count() != 1) throw Error(ErrorCode::kParse, "EGRID file is not a label image");
  LabelImage label(static_cast<int>(f.dim0), static_cast<int>(f.dim1));
  for (std::size_t i = 0; i < f.bytes.size(); ++i) {
    if (f.bytes[i] > 2) throw Error(ErrorCode::kParse, "label value out of range");
    label.classes[i] = static_cast<CellClass>(f.bytes[i]);
  }
  return label;
}

std::vector<DgmCell> dgm_cells_from(const EgridFile& f) {
  expect(f, GridScheme::kCartesian, kDgmChannels, "DGM snapshot");
  std::vector<DgmCell> cells(f.plane_size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    DgmCell& c = cells[i];
    double m[6];
    double sum = 0.0;
    for (int k = 0; k < 6; ++k) sum += (m[k] = std::max(0.0, static_cast<double>(f.planes[k][i])));
    if (sum <= 0.0) {
      m[5] = 1.0;
      sum = 1.0;
    }
    c.m_f = m[0] / sum;
    c.m_d = m[1] / sum;
    c.m_s = m[2] / sum;
    c.m_fd = m[3] / sum;
    c.m_ds = m[4] / sum;
    c.m_fds = m[5] / sum;
    c.v_mean = {f.planes[6][i], f.planes[7][i]};
    c.v_valid = c.v_mean.x() != 0.0 || c.v_mean.y() != 0.0;
  }
  return cells;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  detail::write_file_atomic(path.string(), bytes);
}

// ---------------------------------------------------------------------------
// JSON lines

std::string detection_to_jsonl(const Detection& d) {
  return json{{"range_m", d.range},  {"azimuth_deg", d.azimuth}, {"doppler_mps", d.doppler},
              {"rcs_dbsm", d.rcs},   {"t_s", d.timestamp},       {"sensor_id", d.sensor_id}}
      .dump();
}

void write_detections(const std::filesystem::path& path, std::span<const Detection> detections) {
  std::vector<std::string> lines;
  lines.reserve(detections.size());
  for (const Detection& d : detections) lines.push_back(detection_to_jsonl(d));
  write_lines(path, lines);
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::vector<Detection> out;
  parse_each(path, [&](const json& j) {
    out.push_back({j.at("range_m").get<double>(), j.at("azimuth_deg").get<double>(), j.at("doppler_mps").get<double>(),
                   j.at("rcs_dbsm").get<double>(), j.at("t_s").get<double>(), j.at("sensor_id").get<std::string>()});
  });
  return out;
}

void write_lidar(const std::filesystem::path& path, std::span<const LidarScan> scans) {
  std::vector<std::string> lines;
  for (const LidarScan& scan : scans) {
    for (const LidarPoint& p : scan.points) {
      lines.push_back(json{{"x_m", p.x}, {"y_m", p.y}, {"z_m", p.z}, {"t_s", scan.timestamp}}.dump());
    }
  }
  write_lines(path, lines);
}

std::vector<LidarScan> read_lidar(const std::filesystem::path& path) {
  std::vector<LidarScan> scans;
  parse_each(path, [&](const json& j) {
    const double t = j.at("t_s").get<double>();
    if (scans.empty() || scans.back().timestamp != t) {
      if (!scans.empty() && t < scans.back().timestamp) throw Error(ErrorCode::kParse, "LiDAR points out of time order");
      scans.push_back({{}, t});
    }
    scans.back().points.push_back({j.at("x_m").get<double>(), j.at("y_m").get<double>(), j.at("z_m").get<double>()});
  });
  return scans;
}

void write_ego(const std::filesystem::path& path, std::span<const EgoRecord> records) {
  std::vector<std::string> lines;
  for (const EgoRecord& r : records) {
    lines.push_back(json{{"t_s", r.t},
                         {"x_m", r.pose.x},
                         {"y_m", r.pose.y},
                         {"yaw_deg", r.pose.yaw_deg},
                         {"v_mps", r.v},
                         {"yaw_rate_dps", r.yaw_rate}}
                        .dump());
  }
  write_lines(path, lines);
}

std::vector<EgoRecord> read_ego(const std::filesystem::path& path) {
  std::vector<EgoRecord> out;
  parse_each(path, [&](const json& j) {
    out.push_back({j.at("t_s").get<double>(),
                   {j.at("x_m").get<double>(), j.at("y_m").get<double>(), j.at("yaw_deg").get<double>()},
                   j.at("v_mps").get<double>(),
                   j.at("yaw_rate_dps").get<double>()});
  });
  return out;
}

void write_boxes(const std::filesystem::path& path, std::span<const BoxRecord> records) {
  std::vector<std::string> lines;
  for (const BoxRecord& r : records) {
    lines.push_back(json{{"t_s", r.t},
                         {"cx_m", r.box.cx},
                         {"cy_m", r.box.cy},
                         {"length_m", r.box.length},
                         {"width_m", r.box.width},
                         {"yaw_deg", r.box.yaw_deg}}
                        .dump());
  }
  write_lines(path, lines);
}

std::vector<BoxRecord> read_boxes(const std::filesystem::path& path) {
  std::vector<BoxRecord> out;
  parse_each(path, [&](const json& j) {
    out.push_back({j.at("t_s").get<double>(),
                   {j.at("cx_m").get<double>(), j.at("cy_m").get<double>(), j.at("length_m").get<double>(),
                    j.at("width_m").get<double>(), j.at("yaw_deg").get<double>()}});
  });
  return out;
}

}  // namespace evigrid
