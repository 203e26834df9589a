#include "evigrid/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "evigrid/error.hpp"

namespace evigrid {
namespace {

void check_dims(const LabelImage& a, const LabelImage& b) {
  if (a.rows != b.rows || a.cols != b.cols || a.classes.size() != b.classes.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "label images differ in size");
  }
}

IouReport finish(const std::array<std::optional<double>, 3>& per_class) {
  IouReport r{per_class[0], per_class[1], per_class[2], std::nullopt};
  double sum = 0.0;
  int n = 0;
  for (const auto& v : per_class) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n > 0) r.miou = sum / n;
  return r;
}

std::array<std::array<std::uint64_t, 3>, 2> tally(const LabelImage& pred, const LabelImage& ref) {
  check_dims(pred, ref);
  std::array<std::array<std::uint64_t, 3>, 2> counts{};
  for (std::size_t i = 0; i < ref.classes.size(); ++i) {
    const auto c = static_cast<std::size_t>(ref.classes[i]);
    if (c < 2) ++counts[c][static_cast<std::size_t>(pred.classes[i])];
  }
  return counts;
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

nlohmann::json json_value(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

constexpr const char* kShort[] = {"F", "O", "U"};

}  // namespace

std::optional<double> CondProbReport::p(CellClass estimate, CellClass reference) const {
  const auto ref = static_cast<std::size_t>(reference);
  if (ref > 1 || !rows[ref]) return std::nullopt;
  return (*rows[ref])[static_cast<std::size_t>(estimate)];
}

IouReport class_iou(const LabelImage& pred, const LabelImage& ref) {
  IouAccumulator acc;
  acc.add(pred, ref);
  return acc.report();
}

void IouAccumulator::add(const LabelImage& pred, const LabelImage& ref) {
  check_dims(pred, ref);
  for (std::size_t i = 0; i < ref.classes.size(); ++i) {
    const auto p = static_cast<std::size_t>(pred.classes[i]);
    const auto r = static_cast<std::size_t>(ref.classes[i]);
    if (p == r) {
      ++intersection_[p];
      ++union_[p];
    } else {
      ++union_[p];
      ++union_[r];
    }
  }
}

IouReport IouAccumulator::report() const {
  std::array<std::optional<double>, 3> per_class;
  for (int c = 0; c < 3; ++c) {
    if (union_[c] > 0) per_class[c] = static_cast<double>(intersection_[c]) / static_cast<double>(union_[c]);
  }
  return finish(per_class);
}

void FrameMeanIouAccumulator::add(const LabelImage& pred, const LabelImage& ref) {
  const IouReport r = class_iou(pred, ref);
  const std::array<std::optional<double>, 3> v{r.iou_free, r.iou_occupied, r.iou_unknown};
  for (int c = 0; c < 3; ++c) {
    if (v[c]) {
      sum_[c] += *v[c];
      ++frames_[c];
    }
  }
}

IouReport FrameMeanIouAccumulator::report() const {
  std::array<std::optional<double>, 3> per_class;
  for (int c = 0; c < 3; ++c) {
    if (frames_[c] > 0) per_class[c] = sum_[c] / frames_[c];
  }
  return finish(per_class);
}

void CondProbAccumulator::add(const GridPlanes& pred, const LabelImage& ref) {
  if (pred.cell_count() != ref.classes.size()) throw Error(ErrorCode::kDimensionMismatch, "grid and label differ in size");
  for (std::size_t i = 0; i < ref.classes.size(); ++i) {
    const auto r = static_cast<std::size_t>(ref.classes[i]);
    if (r < 2) ++counts_[r][static_cast<std::size_t>(classify(pred.cell(i)))];
  }
}

void CondProbAccumulator::add(const LabelImage& pred, const LabelImage& ref) {
  const auto counts = tally(pred, ref);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 3; ++c) counts_[r][c] += counts[r][c];
  }
}

CondProbReport CondProbAccumulator::report() const {
  CondProbReport out;
  for (int r = 0; r < 2; ++r) {
    const std::uint64_t total = counts_[r][0] + counts_[r][1] + counts_[r][2];
    out.support[r] = total;
    if (total == 0) continue;
    std::array<double, 3> row{};
    for (int c = 0; c < 3; ++c) row[c] = static_cast<double>(counts_[r][c]) / static_cast<double>(total);
    out.rows[r] = row;
  }
  return out;
}

CondProbReport conditional_probs(std::span<const GridPlanes* const> preds, std::span<const LabelImage* const> refs) {
  if (preds.size() != refs.size()) throw Error(ErrorCode::kDimensionMismatch, "prediction and reference counts differ");
  CondProbAccumulator acc;
  for (std::size_t k = 0; k < preds.size(); ++k) acc.add(*preds[k], *refs[k]);
  return acc.report();
}

std::string to_text(const IouReport& r) {
  std::ostringstream out;
  out << "iou_free: " << fmt(r.iou_free) << "\n"
      << "iou_occupied: " << fmt(r.iou_occupied) << "\n"
      << "iou_unknown: " << fmt(r.iou_unknown) << "\n"
      << "miou: " << fmt(r.miou) << "\n";
  return out.str();
}

std::string to_text(const CondProbReport& r) {
  std::ostringstream out;
  for (int ref = 0; ref < 2; ++ref) {
    for (int est = 0; est < 3; ++est) {
      out << "p_" << kShort[est] << "_given_" << kShort[ref] << ": "
          << fmt(r.p(static_cast<CellClass>(est), static_cast<CellClass>(ref))) << "\n";
    }
    out << "support_" << kShort[ref] << ": " << r.support[ref] << "\n";
  }
  return out.str();
}

nlohmann::json to_json(const IouReport& r) {
  return {{"iou_free", json_value(r.iou_free)},
          {"iou_occupied", json_value(r.iou_occupied)},
          {"iou_unknown", json_value(r.iou_unknown)},
          {"miou", json_value(r.miou)}};
}

nlohmann::json to_json(const CondProbReport& r) {
  nlohmann::json j = nlohmann::json::object();
  for (int ref = 0; ref < 2; ++ref) {
    for (int est = 0; est < 3; ++est) {
      j[std::string("p_") + kShort[est] + "_given_" + kShort[ref]] =
          json_value(r.p(static_cast<CellClass>(est), static_cast<CellClass>(ref)));
    }
    j[std::string("support_") + kShort[ref]] = r.support[ref];
  }
  return j;
}

}  // namespace evigrid
