#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "evigrid/polar_grid.hpp"

namespace evigrid {

/// Per-class IoU; a class absent from both images is undefined (nullopt).
struct IouReport {
  std::optional<double> iou_free;
  std::optional<double> iou_occupied;
  std::optional<double> iou_unknown;
  std::optional<double> miou;  // mean of the defined classes
};

/// p(estimate | reference) with rows for reference FREE and OCCUPIED and
/// columns (FREE, OCCUPIED, UNKNOWN). A row without reference support is undefined.
struct CondProbReport {
  std::array<std::optional<std::array<double, 3>>, 2> rows;
  std::array<std::uint64_t, 2> support{0, 0};

  std::optional<double> p(CellClass estimate, CellClass reference) const;
};

IouReport class_iou(const LabelImage& pred, const LabelImage& ref);

/// Pooled counts across frames; `report()` divides once over all cells.
class IouAccumulator {
 public:
  void add(const LabelImage& pred, const LabelImage& ref);
  IouReport report() const;

 private:
  std::array<std::uint64_t, 3> intersection_{0, 0, 0};
  std::array<std::uint64_t, 3> union_{0, 0, 0};
};

/// Per-frame IoU averaged over frames (each class over frames where it is defined).
class FrameMeanIouAccumulator {
 public:
  void add(const LabelImage& pred, const LabelImage& ref);
  IouReport report() const;

 private:
  std::array<double, 3> sum_{0.0, 0.0, 0.0};
  std::array<int, 3> frames_{0, 0, 0};
};

class CondProbAccumulator {
 public:
  /// Reference UNKNOWN cells are skipped.
  void add(const GridPlanes& pred, const LabelImage& ref);
  void add(const LabelImage& pred, const LabelImage& ref);
  CondProbReport report() const;

 private:
  std::array<std::array<std::uint64_t, 3>, 2> counts_{};
};

CondProbReport conditional_probs(std::span<const GridPlanes* const> preds, std::span<const LabelImage* const> refs);

std::string to_text(const IouReport& r);
std::string to_text(const CondProbReport& r);
nlohmann::json to_json(const IouReport& r);
nlohmann::json to_json(const CondProbReport& r);

}  // namespace evigrid
