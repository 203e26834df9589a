#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "evigrid/polar_grid.hpp"

namespace evigrid {

enum class LayerKind : std::uint8_t {
  kConv3x3 = 0,
  kConv1x1 = 1,
  kDownsample2x = 2,  // 2x2 max pooling, stride 2
  kUpsample2x = 3,    // nearest neighbour
  kRelu = 4,
  kSoftmax3 = 5,
};

struct Layer {
  LayerKind kind = LayerKind::kRelu;
  std::uint32_t c_in = 0;
  std::uint32_t c_out = 0;
  std::vector<float> kernel;  // [c_out][c_in][k][k], conv layers only
  std::vector<float> bias;    // [c_out], conv layers only

  bool has_parameters() const { return kind == LayerKind::kConv3x3 || kind == LayerKind::kConv1x1; }
  std::size_t kernel_size() const;  // expected element count of `kernel`
};

/// Immutable after loading; safe to share between threads.
struct NetWeights {
  std::vector<Layer> layers;

  int downsample_count() const;
  /// Throws Error(kTopology) unless the chain is 1 -> ... -> softmax3.
  void validate() const;
};

/// Per-pixel class probabilities (free, occupied, unknown), CHW planes of rows x cols.
struct SoftmaxGrid {
  int rows = 0;
  int cols = 0;
  std::vector<float> probs;  // [3][rows][cols]

  float at(int cls, int r, int c) const {
    return probs[(static_cast<std::size_t>(cls) * rows + r) * cols + c];
  }
};

inline constexpr std::uint32_t kEnetVersion = 1;

NetWeights load_weights(const std::filesystem::path& path);
NetWeights parse_weights(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_weights(const NetWeights& net);
void save_weights(const std::filesystem::path& path, const NetWeights& net);

/// Forward pass on raw CHW floats; returns the output activation. Inputs
/// must be divisible by 2^downsample_count.
std::vector<float> forward(const NetWeights& net, std::span<const float> input, int rows, int cols);

/// Softmax output for a binary polar image. Images whose sides are not
/// multiples of 2^downsamples are zero-padded and the output cropped back.
SoftmaxGrid predict_softmax(const PolarImage& image, const NetWeights& net);

/// Softmax probabilities as (b_F, b_O, b_FO); velocity planes start invalid.
PolarGrid infer(const PolarImage& image, const NetWeights& net);

/// Class-averaged soft dice loss, 1 - (2I + eps) / (U + eps) per class.
double dice_loss(const SoftmaxGrid& pred, const LabelImage& label, double epsilon = 1.0);

/// Same loss on double-precision [3][rows][cols] probabilities.
double dice_loss(std::span<const double> probs, const LabelImage& label, double epsilon = 1.0);

/// Gradient of dice_loss with respect to the pre-softmax logits ([3][rows][cols]).
std::vector<double> dice_loss_grad_logits(std::span<const double> logits, const LabelImage& label, double epsilon);

/// Softmax over the class axis of [3][rows][cols] logits, in double precision.
SoftmaxGrid softmax_from_logits(std::span<const double> logits, int rows, int cols);

}  // namespace evigrid
