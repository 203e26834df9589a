#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "evigrid/error.hpp"
#include "evigrid/geometric_ism.hpp"
#include "evigrid/io.hpp"
#include "evigrid/learned_ism.hpp"
#include "evigrid/metrics.hpp"
#include "render.hpp"

namespace evigrid::cli {
namespace fs = std::filesystem;

namespace {

constexpr double kTimeTolerance = 1e-6;

fs::path sim_dir(const RunOptions& o) { return o.out / "sim"; }
fs::path ism_dir(const RunOptions& o, IsmModel m) { return o.out / ("ism_" + model_name(m)); }
fs::path dgm_dir(const RunOptions& o, IsmModel m) { return o.out / ("dgm_" + model_name(m)); }

IsmModel chosen_model(const PipelineConfig& cfg, const RunOptions& opt) { return opt.model.value_or(cfg.model); }

void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::is_regular_file(p)) throw Error(ErrorCode::kIo, "missing " + p.string() + " (" + hint + ")");
}

Scenario source_scenario(const PipelineConfig& cfg) {
  Scenario s = cfg.highway ? make_highway_scenario(cfg.seed, *cfg.highway) : load_scenario(cfg.scenario_file);
  s.seed = cfg.seed;
  if (cfg.shifted_mounting) s.sensors = shifted_radar_suite(std::move(s.sensors));
  if (!cfg.sensors.empty()) {
    std::vector<SensorMount> chosen;
    for (const std::string& id : cfg.sensors) chosen.push_back(s.sensor(id));
    s.sensors = std::move(chosen);
  }
  s.validate();
  return s;
}

/// Scenario written by `simulate` with its ego track replaced by the ego JSONL.
Scenario simulated_scenario(const RunOptions& opt) {
  const fs::path dir = sim_dir(opt);
  require_file(dir / "scenario.yaml", "run 'simulate' first");
  Scenario s = load_scenario(dir / "scenario.yaml");
  s.ego.clear();
  for (const EgoRecord& r : read_ego(dir / "ego.jsonl")) s.ego.push_back({r.t, r.pose, r.v, r.yaw_rate});
  s.validate();
  return s;
}

/// Radar frames of one sensor grouped by the configured frame times.
std::vector<std::vector<Detection>> radar_frames(const RunOptions& opt, const std::string& sensor,
                                                 const FrameWindow& frames) {
  const fs::path path = sim_dir(opt) / ("radar_" + sensor + ".jsonl");
  require_file(path, "run 'simulate' first");
  std::vector<std::vector<Detection>> out(frames.count);
  for (Detection& d : read_detections(path)) {
    const double k = std::round((d.timestamp - frames.start_s) / frames.period_s);
    if (k < 0.0 || k >= frames.count || std::abs(frames.time(static_cast<int>(k)) - d.timestamp) > kTimeTolerance) {
      continue;
    }
    out[static_cast<std::size_t>(k)].push_back(std::move(d));
  }
  return out;
}

std::vector<double> lidar_times(const Scenario& s, const FrameWindow& frames) {
  std::vector<double> out;
  const double last = frames.time(frames.count - 1) + kTimeTolerance;
  for (int j = 0;; ++j) {
    const double t = frames.start_s + j * s.lidar_period_s;
    if (t > last) break;
    out.push_back(t);
  }
  return out;
}

std::vector<OrientedBox> boxes_at(const std::vector<BoxRecord>& records, double t) {
  std::vector<OrientedBox> out;
  for (const BoxRecord& r : records) {
    if (std::abs(r.t - t) <= kTimeTolerance) out.push_back(r.box);
  }
  return out;
}

void write_text_file(const fs::path& path, const std::string& text) {
  write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string frame_file(const std::string& stem, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "_%04d", index);
  return stem + buf + ".egrid";
}

void run_simulate(const PipelineConfig& cfg, const RunOptions& opt) {
  const Scenario s = source_scenario(cfg);
  const FrameWindow& fr = cfg.frames;
  if (fr.time(fr.count - 1) > s.duration_s + kTimeTolerance) {
    throw ConfigError("frames: window ends after the scenario duration of " + std::to_string(s.duration_s) + " s");
  }
  const fs::path dir = sim_dir(opt);
  fs::create_directories(dir);
  save_scenario(dir / "scenario.yaml", s);

  const std::size_t n_sensors = s.sensors.size();
  std::vector<std::vector<Detection>> radar(n_sensors * fr.count);
  parallel_for(radar.size(), opt.workers, [&](std::size_t i) {
    const SensorMount& m = s.sensors[i / fr.count];
    radar[i] = simulate_radar(s, cfg.sim, m.id, fr.time(static_cast<int>(i % fr.count)));
  });
  for (std::size_t si = 0; si < n_sensors; ++si) {
    std::vector<Detection> all;
    for (int k = 0; k < fr.count; ++k) {
      const auto& f = radar[si * fr.count + k];
      all.insert(all.end(), f.begin(), f.end());
    }
    write_detections(dir / ("radar_" + s.sensors[si].id + ".jsonl"), all);
  }

  const std::vector<double> lt = lidar_times(s, fr);
  std::vector<LidarScan> scans(lt.size());
  parallel_for(lt.size(), opt.workers, [&](std::size_t j) { scans[j] = simulate_lidar(s, cfg.sim, lt[j]); });
  write_lidar(dir / "lidar.jsonl", scans);

  std::vector<double> times = lt;
  for (int k = 0; k < fr.count; ++k) times.push_back(fr.time(k));
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end(),
                          [](double a, double b) { return std::abs(a - b) <= kTimeTolerance; }),
              times.end());
  std::vector<EgoRecord> ego;
  std::vector<BoxRecord> boxes;
  for (double t : times) {
    const EgoMotion m = s.ego_motion(t);
    ego.push_back({t, s.ego_pose(t), m.v, m.yaw_rate});
    for (const OrientedBox& b : s.vehicle_boxes(t)) boxes.push_back({t, b});
  }
  write_ego(dir / "ego.jsonl", ego);
  write_boxes(dir / "boxes.jsonl", boxes);

  parallel_for(static_cast<std::size_t>(fr.count), opt.workers, [&](std::size_t k) {
    const int ki = static_cast<int>(k);
    const double t = fr.time(ki);
    write_egrid(dir / frame_file("gt_cart", ki), to_egrid(ground_truth(s, t, cfg.cartesian).labels, cfg.cartesian));
    for (const SensorMount& m : s.sensors) {
      const GroundTruth gt = ground_truth(s, t, m.id, cfg.learned_polar);
      write_egrid(dir / frame_file("gt_" + m.id, ki), to_egrid(gt.labels, cfg.learned_polar));
    }
  });
  spdlog::info("simulate: {} sensors, {} radar frames, {} LiDAR sweeps -> {}", n_sensors, fr.count, scans.size(),
               dir.string());
}

void run_ism(const PipelineConfig& cfg, const RunOptions& opt) {
  const IsmModel model = chosen_model(cfg, opt);
  NetWeights net;
  if (model == IsmModel::kLearned) {
    if (cfg.weights.empty()) throw ConfigError("ism.weights: required for the learned model");
    if (!fs::is_regular_file(cfg.weights)) throw ConfigError("ism.weights: no such file " + cfg.weights.string());
    net = load_weights(cfg.weights);
  }
  cfg.aggregation.validate();
  const Scenario s = simulated_scenario(opt);
  const FrameWindow& fr = cfg.frames;
  const PolarGridSpec& pspec = cfg.polar_spec(model);
  std::vector<std::vector<std::vector<Detection>>> radar;
  for (const SensorMount& m : s.sensors) radar.push_back(radar_frames(opt, m.id, fr));

  const fs::path dir = ism_dir(opt, model);
  fs::create_directories(dir);
  parallel_for(static_cast<std::size_t>(fr.count), opt.workers, [&](std::size_t k) {
    const int ki = static_cast<int>(k);
    const double t = fr.time(ki);
    const EgoMotion ego = s.ego_motion(t);
    std::vector<CartesianGrid> carts;
    for (std::size_t si = 0; si < s.sensors.size(); ++si) {
      const SensorMount& m = s.sensors[si];
      const int first = std::max(0, ki - cfg.aggregation.n + 1);
      std::vector<Detection> dets;
      if (ki == first) {
        dets = radar[si][k];
      } else {
        std::vector<AggregationFrame> frames;
        for (int j = first; j <= ki; ++j) frames.push_back({radar[si][j], s.ego_pose(fr.time(j))});
        AggregationPolicy policy = cfg.aggregation;
        policy.n = static_cast<int>(frames.size());
        dets = aggregate_frames(frames, m.pose, policy);
      }
      PolarGrid polar = model == IsmModel::kLearned ? infer(rasterize(dets, pspec), net)
                                                    : geometric_ism(dets, ego, m.pose, cfg.geometric, pspec);
      write_egrid(dir / frame_file("polar_" + m.id, ki), to_egrid(polar));
      CartesianGrid cart = polar_to_cartesian(polar, m.pose, cfg.cartesian);
      if (model == IsmModel::kLearned) {
        cart = inject_doppler(std::move(cart), velocity_measurements(radar[si][k], ego, m.pose), cfg.dgm);
      }
      cart.timestamp = t;
      if (cfg.sequential_fusion) write_egrid(dir / frame_file("cart_" + m.id, ki), to_egrid(cart));
      carts.push_back(std::move(cart));
    }
    CartesianGrid fused = fuse_measurement_grids(carts);
    fused.timestamp = t;
    write_egrid(dir / frame_file("fused", ki), to_egrid(fused));
  });
  spdlog::info("ism: {} model, {} frames, aggregation n={} -> {}", model_name(model), fr.count, cfg.aggregation.n,
               dir.string());
}

void run_label_gen(const PipelineConfig& cfg, const RunOptions& opt) {
  const Scenario s = simulated_scenario(opt);
  const FrameWindow& fr = cfg.frames;
  const fs::path sdir = sim_dir(opt);
  require_file(sdir / "lidar.jsonl", "run 'simulate' first");
  require_file(sdir / "boxes.jsonl", "run 'simulate' first");
  const std::vector<LidarScan> scans = read_lidar(sdir / "lidar.jsonl");
  const std::vector<BoxRecord> box_records = read_boxes(sdir / "boxes.jsonl");
  std::vector<std::vector<std::vector<Detection>>> radar;
  for (const SensorMount& m : s.sensors) radar.push_back(radar_frames(opt, m.id, fr));

  LidarIsmParams lidar = cfg.lidar;
  lidar.origin = s.lidar_pose.translation();
  LabelGenerator gen(cfg.cartesian, cfg.dgm, lidar, cfg.label, cfg.seed);
  const fs::path dir = opt.out / "labels";
  fs::create_directories(dir);
  std::string index;
  int written = 0;
  for (std::size_t j = 0; j < scans.size(); ++j) {
    const double t = scans[j].timestamp;
    std::optional<Pose2D> motion;
    if (j > 0) motion = s.relative_motion(scans[j - 1].timestamp, t);
    gen.push_scan(scans[j], motion);
    if (!gen.label_due()) continue;

    const std::vector<OrientedBox> boxes = boxes_at(box_records, t);
    const CartesianGrid reference = gen.reference_grid(boxes);
    const double kf = std::round((t - fr.start_s) / fr.period_s);
    const bool has_radar = kf >= 0.0 && kf < fr.count && std::abs(fr.time(static_cast<int>(kf)) - t) <= kTimeTolerance;
    if (!has_radar) {
      spdlog::warn("label-gen: no radar frame at t={:.3f} s, skipped", t);
      continue;
    }
    const int label_id = written++;
    write_egrid(dir / frame_file("ref_cart", label_id), to_egrid(reference));
    write_egrid(dir / frame_file("label_cart", label_id), to_egrid(make_label(reference), cfg.cartesian));
    std::vector<std::string> lines(s.sensors.size());
    parallel_for(s.sensors.size(), opt.workers, [&](std::size_t si) {
      const SensorMount& m = s.sensors[si];
      const auto& dets = radar[si][static_cast<std::size_t>(kf)];
      const PolarGrid polar = gen.polar_reference(reference, boxes, m.pose, cfg.learned_polar, dets);
      const std::string input = frame_file("input_" + m.id, label_id);
      const std::string label = frame_file("label_" + m.id, label_id);
      write_egrid(dir / input, to_egrid(rasterize(dets, cfg.learned_polar)));
      write_egrid(dir / label, to_egrid(make_label(polar), cfg.learned_polar));
      nlohmann::json line{{"index", label_id}, {"t_s", t},         {"sensor_id", m.id},
                          {"seed", cfg.seed},  {"input", input},   {"label", label}};
      lines[si] = line.dump() + "\n";
    });
    for (const std::string& l : lines) index += l;
  }
  write_text_file(dir / "index.jsonl", index);
  spdlog::info("label-gen: {} LiDAR sweeps, {} labelled frames -> {}", scans.size(), written, dir.string());
}

void run_dgm(const PipelineConfig& cfg, const RunOptions& opt) {
  const IsmModel model = chosen_model(cfg, opt);
  const Scenario s = simulated_scenario(opt);
  const FrameWindow& fr = cfg.frames;
  const fs::path in = ism_dir(opt, model);
  std::vector<std::vector<std::vector<Detection>>> radar;
  for (const SensorMount& m : s.sensors) radar.push_back(radar_frames(opt, m.id, fr));

  // Velocity channel rebuilt from the detections.
  auto load = [&](const std::string& stem, int k, std::span<const std::size_t> sensors) {
    const fs::path path = in / frame_file(stem, k);
    require_file(path, "run 'ism --model " + model_name(model) + "' first");
    CartesianGrid g = cartesian_grid_from(read_egrid(path));
    if (!(g.spec.width == cfg.cartesian.width && g.spec.height == cfg.cartesian.height)) {
      throw Error(ErrorCode::kGeometryMismatch, path.string() + " does not match grids.cartesian");
    }
    g.spec = cfg.cartesian;
    std::fill(g.vr_valid.begin(), g.vr_valid.end(), std::uint8_t{0});
    const double t = fr.time(k);
    g.timestamp = t;
    if (!cfg.dgm.use_doppler) return g;
    std::vector<VelocityMeasurement> vm;
    for (std::size_t si : sensors) {
      const auto v = velocity_measurements(radar[si][k], s.ego_motion(t), s.sensors[si].pose);
      vm.insert(vm.end(), v.begin(), v.end());
    }
    return inject_doppler(std::move(g), vm, cfg.dgm);
  };

  const fs::path dir = dgm_dir(opt, model);
  fs::create_directories(dir);
  Dgm dgm(cfg.cartesian, cfg.seed);
  std::vector<std::size_t> all(s.sensors.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (int k = 0; k < fr.count; ++k) {
    const double t = fr.time(k);
    if (k == 0) {
      dgm.set_timestamp(t);
    } else {
      dgm.predict(t - fr.time(k - 1), cfg.dgm, s.relative_motion(fr.time(k - 1), t));
    }
    if (cfg.sequential_fusion) {
      for (std::size_t si = 0; si < s.sensors.size(); ++si) {
        const std::size_t one[] = {si};
        dgm.update(load("cart_" + s.sensors[si].id, k, one), cfg.dgm);
      }
    } else {
      dgm.update(load("fused", k, all), cfg.dgm);
    }
    write_egrid(dir / frame_file("dgm", k), to_egrid(dgm));
  }
  spdlog::info("dgm: {} frames from {} -> {}", fr.count, in.string(), dir.string());
}

void run_eval(const PipelineConfig& cfg, const RunOptions& opt) {
  const FrameWindow& fr = cfg.frames;
  const fs::path sdir = sim_dir(opt);
  const fs::path dir = opt.out / "eval";
  int reports = 0;

  auto evaluate = [&](const std::string& name, const fs::path& in, const std::string& stem, bool dgm) {
    if (!fs::is_regular_file(in / frame_file(stem, 0))) return;
    std::vector<LabelImage> preds(fr.count), refs(fr.count);
    parallel_for(static_cast<std::size_t>(fr.count), opt.workers, [&](std::size_t k) {
      const int ki = static_cast<int>(k);
      const fs::path gt = sdir / frame_file("gt_cart", ki);
      require_file(gt, "run 'simulate' first");
      refs[k] = label_from(read_egrid(gt));
      const EgridFile f = read_egrid(in / frame_file(stem, ki));
      if (dgm) {
        const std::vector<DgmCell> cells = dgm_cells_from(f);
        LabelImage l(static_cast<int>(f.dim0), static_cast<int>(f.dim1));
        for (std::size_t i = 0; i < cells.size(); ++i) l.classes[i] = classify(dgm_to_measurement(cells[i]));
        preds[k] = std::move(l);
      } else {
        preds[k] = make_label(cartesian_grid_from(f));
      }
    });
    IouAccumulator pooled;
    FrameMeanIouAccumulator mean;
    CondProbAccumulator cond;
    for (int k = 0; k < fr.count; ++k) {
      pooled.add(preds[k], refs[k]);
      mean.add(preds[k], refs[k]);
      cond.add(preds[k], refs[k]);
    }
    const IouReport iou = cfg.frame_mean_iou ? mean.report() : pooled.report();
    const CondProbReport cp = cond.report();
    fs::create_directories(dir);
    nlohmann::json j{{"source", name},
                     {"frames", fr.count},
                     {"iou_mode", cfg.frame_mean_iou ? "frame_mean" : "pooled"},
                     {"iou", to_json(iou)},
                     {"conditional", to_json(cp)}};
    write_text_file(dir / (name + ".json"), j.dump(2) + "\n");
    write_text_file(dir / (name + ".txt"), "source: " + name + "\nframes: " + std::to_string(fr.count) +
                                               "\niou_mode: " + (cfg.frame_mean_iou ? "frame_mean" : "pooled") +
                                               "\n" + to_text(iou) + to_text(cp));
    spdlog::info("eval {}: mIoU {:.4f}", name, iou.miou.value_or(std::nan("")));
    ++reports;
  };

  for (IsmModel m : {IsmModel::kGeometric, IsmModel::kLearned}) {
    evaluate("ism_" + model_name(m), ism_dir(opt, m), "fused", false);
    evaluate("dgm_" + model_name(m), dgm_dir(opt, m), "dgm", true);
  }
  if (reports == 0) throw Error(ErrorCode::kIo, "nothing to evaluate under " + opt.out.string());
}

void run_render(const PipelineConfig& cfg, const RunOptions& opt) {
  const FrameWindow& fr = cfg.frames;
  const fs::path dir = opt.out / "render";
  struct Job {
    fs::path in;
    fs::path out;
    bool dgm;
  };
  std::vector<Job> jobs;
  for (IsmModel m : {IsmModel::kGeometric, IsmModel::kLearned}) {
    const std::string name = model_name(m);
    for (int k = 0; k < fr.count; ++k) {
      const fs::path fused = ism_dir(opt, m) / frame_file("fused", k);
      const fs::path dgm = dgm_dir(opt, m) / frame_file("dgm", k);
      auto ppm = [&](const std::string& stem) {
        fs::path p = dir / frame_file(stem, k);
        return p.replace_extension(".ppm");
      };
      if (fs::is_regular_file(fused)) jobs.push_back({fused, ppm("ism_" + name), false});
      if (fs::is_regular_file(dgm)) jobs.push_back({dgm, ppm("dgm_" + name), true});
    }
  }
  if (jobs.empty()) throw Error(ErrorCode::kIo, "nothing to render under " + opt.out.string());
  fs::create_directories(dir);
  parallel_for(jobs.size(), opt.workers, [&](std::size_t i) {
    const EgridFile f = read_egrid(jobs[i].in);
    const int w = static_cast<int>(f.dim1), h = static_cast<int>(f.dim0);
    write_ppm(jobs[i].out, jobs[i].dgm ? render_dgm(dgm_cells_from(f), w, h)
                                       : render_measurement(cartesian_grid_from(f), w, h));
  });
  spdlog::info("render: {} images -> {}", jobs.size(), dir.string());
}

}  // namespace evigrid::cli
