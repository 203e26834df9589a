#include "evigrid/learned_ism.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "byte_io.hpp"
#include "evigrid/error.hpp"
#include "evigrid/kernels.hpp"

namespace evigrid {

namespace {

constexpr char kMagic[4] = {'E', 'N', 'E', 'T'};

using detail::ByteReader;
using detail::put_f32;
using detail::put_u32;

int pad_to(int n, int multiple) { return (n + multiple - 1) / multiple * multiple; }

}  // namespace

std::size_t Layer::kernel_size() const {
  switch (kind) {
    case LayerKind::kConv3x3: return static_cast<std::size_t>(c_out) * c_in * 9;
    case LayerKind::kConv1x1: return static_cast<std::size_t>(c_out) * c_in;
    default: return 0;
  }
}

int NetWeights::downsample_count() const {
  return static_cast<int>(std::count_if(layers.begin(), layers.end(),
                                        [](const Layer& l) { return l.kind == LayerKind::kDownsample2x; }));
}

void NetWeights::validate() const {
  if (layers.empty()) throw Error(ErrorCode::kTopology, "network has no layers");
  if (layers.front().c_in != 1) throw Error(ErrorCode::kTopology, "first layer must take 1 input channel");
  std::uint32_t channels = 1;
  int scale = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (l.c_in != channels) {
      throw Error(ErrorCode::kTopology, "layer " + std::to_string(i) + " expects " + std::to_string(l.c_in) +
                                            " channels, previous layer produces " + std::to_string(channels));
    }
    if (!l.has_parameters() && l.c_in != l.c_out) {
      throw Error(ErrorCode::kTopology, "layer " + std::to_string(i) + " cannot change the channel count");
    }
    if (l.has_parameters() && (l.kernel.size() != l.kernel_size() || l.bias.size() != l.c_out)) {
      throw Error(ErrorCode::kTopology, "layer " + std::to_string(i) + " tensor sizes do not match its header");
    }
    if (l.kind == LayerKind::kSoftmax3 && (l.c_in != 3 || i + 1 != layers.size())) {
      throw Error(ErrorCode::kTopology, "softmax3 must be the last layer over 3 channels");
    }
    if (l.kind == LayerKind::kDownsample2x) ++scale;
    if (l.kind == LayerKind::kUpsample2x) --scale;
    if (scale < 0) throw Error(ErrorCode::kTopology, "upsampling above input resolution");
    channels = l.c_out;
  }
  if (layers.back().kind != LayerKind::kSoftmax3) throw Error(ErrorCode::kTopology, "network must end in softmax3");
  if (scale != 0) throw Error(ErrorCode::kTopology, "output resolution differs from the input");
}

NetWeights parse_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kBadMagic, "not an ENET file");
  }
  ByteReader in(bytes.subspan(4), "ENET");
  const std::uint32_t version = in.u32();
  if (version != kEnetVersion) throw Error(ErrorCode::kParse, "unsupported ENET version " + std::to_string(version));
  const std::uint32_t count = in.u32();
  NetWeights net;
  for (std::uint32_t i = 0; i < count; ++i) {
    Layer l;
    const std::uint8_t kind = in.u8();
    if (kind > static_cast<std::uint8_t>(LayerKind::kSoftmax3)) {
      throw Error(ErrorCode::kUnsupportedLayer, "layer kind " + std::to_string(kind));
    }
    l.kind = static_cast<LayerKind>(kind);
    l.c_in = in.u32();
    l.c_out = in.u32();
    if (l.has_parameters()) {
      in.f32s(l.kernel, l.kernel_size());
      in.f32s(l.bias, l.c_out);
    }
    net.layers.push_back(std::move(l));
  }
  if (!in.at_end()) throw Error(ErrorCode::kSizeMismatch, "trailing bytes after last layer");
  net.validate();
  return net;
}

NetWeights load_weights(const std::filesystem::path& path) {
  return parse_weights(detail::read_file(path.string()));
}

std::vector<std::uint8_t> serialize_weights(const NetWeights& net) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kEnetVersion);
  put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
  for (const Layer& l : net.layers) {
    out.push_back(static_cast<std::uint8_t>(l.kind));
    put_u32(out, l.c_in);
    put_u32(out, l.c_out);
    if (!l.has_parameters()) continue;
    for (float v : l.kernel) put_f32(out, v);
    for (float v : l.bias) put_f32(out, v);
  }
  return out;
}

void save_weights(const std::filesystem::path& path, const NetWeights& net) {
  detail::write_file_atomic(path.string(), serialize_weights(net));
}

std::vector<float> forward(const NetWeights& net, std::span<const float> input, int rows, int cols) {
  const int multiple = 1 << net.downsample_count();
  if (rows <= 0 || cols <= 0 || rows % multiple != 0 || cols % multiple != 0) {
    throw Error(ErrorCode::kDimensionMismatch, "input " + std::to_string(rows) + "x" + std::to_string(cols) +
                                                   " is not divisible by " + std::to_string(multiple));
  }
  if (input.size() != static_cast<std::size_t>(rows) * cols) {
    throw Error(ErrorCode::kDimensionMismatch, "input buffer does not match dimensions");
  }
  std::vector<float> cur(input.begin(), input.end());
  std::vector<float> next;
  int h = rows;
  int w = cols;
  for (const Layer& l : net.layers) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const kernels::ConvShape shape{static_cast<int>(l.c_in), static_cast<int>(l.c_out), h, w};
    switch (l.kind) {
      case LayerKind::kConv3x3:
        next.assign(plane * l.c_out, 0.0f);
        kernels::conv3x3(cur.data(), l.kernel.data(), l.bias.data(), shape, next.data());
        cur.swap(next);
        break;
      case LayerKind::kConv1x1:
        next.assign(plane * l.c_out, 0.0f);
        kernels::conv1x1(cur.data(), l.kernel.data(), l.bias.data(), shape, next.data());
        cur.swap(next);
        break;
      case LayerKind::kRelu:
        kernels::relu(cur);
        break;
      case LayerKind::kDownsample2x: {
        const int oh = h / 2;
        const int ow = w / 2;
        next.assign(static_cast<std::size_t>(oh) * ow * l.c_in, 0.0f);
        for (std::uint32_t c = 0; c < l.c_in; ++c) {
          const float* src = cur.data() + c * plane;
          float* dst = next.data() + static_cast<std::size_t>(c) * oh * ow;
          for (int y = 0; y < oh; ++y) {
            const float* r0 = src + static_cast<std::size_t>(2 * y) * w;
            const float* r1 = r0 + w;
            for (int x = 0; x < ow; ++x) {
              dst[static_cast<std::size_t>(y) * ow + x] =
                  std::max(std::max(r0[2 * x], r0[2 * x + 1]), std::max(r1[2 * x], r1[2 * x + 1]));
            }
          }
        }
        cur.swap(next);
        h = oh;
        w = ow;
        break;
      }
      case LayerKind::kUpsample2x: {
        const int oh = h * 2;
        const int ow = w * 2;
        next.assign(static_cast<std::size_t>(oh) * ow * l.c_in, 0.0f);
        for (std::uint32_t c = 0; c < l.c_in; ++c) {
          const float* src = cur.data() + c * plane;
          float* dst = next.data() + static_cast<std::size_t>(c) * oh * ow;
          for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
              dst[static_cast<std::size_t>(y) * ow + x] = src[static_cast<std::size_t>(y / 2) * w + x / 2];
            }
          }
        }
        cur.swap(next);
        h = oh;
        w = ow;
        break;
      }
      case LayerKind::kSoftmax3: {
        float* z0 = cur.data();
        float* z1 = z0 + plane;
        float* z2 = z1 + plane;
        for (std::size_t p = 0; p < plane; ++p) {
          const float m = std::max(z0[p], std::max(z1[p], z2[p]));
          const float e0 = std::exp(z0[p] - m);
          const float e1 = std::exp(z1[p] - m);
          const float e2 = std::exp(z2[p] - m);
          const float inv = 1.0f / (e0 + e1 + e2);
          z0[p] = e0 * inv;
          z1[p] = e1 * inv;
          z2[p] = e2 * inv;
        }
        break;
      }
    }
  }
  return cur;
}

SoftmaxGrid predict_softmax(const PolarImage& image, const NetWeights& net) {
  const int rows = image.spec.azimuth_bins;
  const int cols = image.spec.range_bins;
  const int multiple = 1 << net.downsample_count();
  const int prow = pad_to(rows, multiple);
  const int pcol = pad_to(cols, multiple);
  std::vector<float> input(static_cast<std::size_t>(prow) * pcol, 0.0f);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) input[static_cast<std::size_t>(r) * pcol + c] = image.at(r, c);
  }
  const std::vector<float> out = forward(net, input, prow, pcol);

  SoftmaxGrid grid{rows, cols, std::vector<float>(static_cast<std::size_t>(3) * rows * cols)};
  for (int k = 0; k < 3; ++k) {
    for (int r = 0; r < rows; ++r) {
      const float* src = out.data() + (static_cast<std::size_t>(k) * prow + r) * pcol;
      std::copy_n(src, cols, grid.probs.data() + (static_cast<std::size_t>(k) * rows + r) * cols);
    }
  }
  return grid;
}

PolarGrid infer(const PolarImage& image, const NetWeights& net) {
  const SoftmaxGrid soft = predict_softmax(image, net);
  PolarGrid grid(image.spec);
  for (int a = 0; a < soft.rows; ++a) {
    for (int r = 0; r < soft.cols; ++r) {
      const double pf = soft.at(0, a, r);
      const double po = soft.at(1, a, r);
      const double pu = soft.at(2, a, r);
      grid.set_cell(grid.index(a, r), normalized({pf, po, pu}));
    }
  }
  return grid;
}

namespace {

double dice_from_probs(std::span<const double> probs, const LabelImage& label, double epsilon) {
  const std::size_t n = label.classes.size();
  double loss = 0.0;
  for (int k = 0; k < 3; ++k) {
    double inter = 0.0;
    double psum = 0.0;
    double ysum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = probs[k * n + i];
      const double y = static_cast<int>(label.classes[i]) == k ? 1.0 : 0.0;
      inter += p * y;
      psum += p;
      ysum += y;
    }
    loss += 1.0 - (2.0 * inter + epsilon) / (psum + ysum + epsilon);
  }
  return loss / 3.0;
}

}  // namespace

double dice_loss(const SoftmaxGrid& pred, const LabelImage& label, double epsilon) {
  if (pred.rows != label.rows || pred.cols != label.cols) {
    throw Error(ErrorCode::kDimensionMismatch, "prediction and label sizes differ");
  }
  const std::vector<double> probs(pred.probs.begin(), pred.probs.end());
  return dice_from_probs(probs, label, epsilon);
}

SoftmaxGrid softmax_from_logits(std::span<const double> logits, int rows, int cols) {
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (logits.size() != 3 * n) throw Error(ErrorCode::kDimensionMismatch, "logit buffer size");
  SoftmaxGrid grid{rows, cols, std::vector<float>(3 * n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double m = std::max(logits[i], std::max(logits[n + i], logits[2 * n + i]));
    double e[3];
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += e[k] = std::exp(logits[k * n + i] - m);
    for (int k = 0; k < 3; ++k) grid.probs[k * n + i] = static_cast<float>(e[k] / s);
  }
  return grid;
}

std::vector<double> dice_loss_grad_logits(std::span<const double> logits, const LabelImage& label, double epsilon) {
  const std::size_t n = label.classes.size();
  if (logits.size() != 3 * n) throw Error(ErrorCode::kDimensionMismatch, "logit buffer size");
  std::vector<double> probs(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double m = std::max(logits[i], std::max(logits[n + i], logits[2 * n + i]));
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += probs[k * n + i] = std::exp(logits[k * n + i] - m);
    for (int k = 0; k < 3; ++k) probs[k * n + i] /= s;
  }
  // dL/dp for each class, then back through the softmax Jacobian.
  std::vector<double> dprob(3 * n);
  for (int k = 0; k < 3; ++k) {
    double inter = 0.0;
    double denom = epsilon;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = static_cast<int>(label.classes[i]) == k ? 1.0 : 0.0;
      inter += probs[k * n + i] * y;
      denom += probs[k * n + i] + y;
    }
    const double numer = 2.0 * inter + epsilon;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = static_cast<int>(label.classes[i]) == k ? 1.0 : 0.0;
      dprob[k * n + i] = -(2.0 * y * denom - numer) / (denom * denom) / 3.0;
    }
  }
  std::vector<double> grad(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int k = 0; k < 3; ++k) dot += probs[k * n + i] * dprob[k * n + i];
    for (int k = 0; k < 3; ++k) grad[k * n + i] = probs[k * n + i] * (dprob[k * n + i] - dot);
  }
  return grad;
}

double dice_loss(std::span<const double> probs, const LabelImage& label, double epsilon) {
  if (probs.size() != 3 * label.classes.size()) throw Error(ErrorCode::kDimensionMismatch, "probability buffer size");
  return dice_from_probs(probs, label, epsilon);
}

}  // namespace evigrid
