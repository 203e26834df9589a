#include <algorithm>
#include <vector>

#include "dempster_cell.hpp"
#include "evigrid/kernels.hpp"

namespace evigrid::kernels::scalar {

void dempster_combine(ConstMassPlanes a, ConstMassPlanes b, MassPlanes out) {
  const std::size_t n = out.free.size();
  for (std::size_t i = 0; i < n; ++i) {
    detail::dempster_cell(a.free[i], a.occupied[i], a.unknown[i], b.free[i], b.occupied[i], b.unknown[i],
                          out.free[i], out.occupied[i], out.unknown[i]);
  }
}

void conv3x3(const float* input, const float* kernel, const float* bias, ConvShape shape, float* output) {
  const int h = shape.height;
  const int w = shape.width;
  const int pw = w + 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t pplane = static_cast<std::size_t>(h + 2) * pw;

  std::vector<float> padded(pplane * shape.c_in, 0.0f);
  for (int c = 0; c < shape.c_in; ++c) {
    for (int y = 0; y < h; ++y) {
      std::copy_n(input + c * plane + static_cast<std::size_t>(y) * w, w,
                  padded.data() + c * pplane + static_cast<std::size_t>(y + 1) * pw + 1);
    }
  }

  for (int co = 0; co < shape.c_out; ++co) {
    float* out_plane = output + co * plane;
    for (int y = 0; y < h; ++y) {
      float* row = out_plane + static_cast<std::size_t>(y) * w;
      std::fill_n(row, w, bias[co]);
      for (int ci = 0; ci < shape.c_in; ++ci) {
        const float* k = kernel + (static_cast<std::size_t>(co) * shape.c_in + ci) * 9;
        const float* src = padded.data() + ci * pplane;
        for (int ky = 0; ky < 3; ++ky) {
          const float* in_row = src + static_cast<std::size_t>(y + ky) * pw;
          for (int kx = 0; kx < 3; ++kx) {
            const float wk = k[ky * 3 + kx];
            for (int x = 0; x < w; ++x) row[x] += wk * in_row[x + kx];
          }
        }
      }
    }
  }
}

void conv1x1(const float* input, const float* kernel, const float* bias, ConvShape shape, float* output) {
  const std::size_t plane = static_cast<std::size_t>(shape.height) * shape.width;
  for (int co = 0; co < shape.c_out; ++co) {
    float* out = output + co * plane;
    std::fill_n(out, plane, bias[co]);
    for (int ci = 0; ci < shape.c_in; ++ci) {
      const float wk = kernel[static_cast<std::size_t>(co) * shape.c_in + ci];
      const float* in = input + ci * plane;
      for (std::size_t p = 0; p < plane; ++p) out[p] += wk * in[p];
    }
  }
}

void relu(std::span<float> data) {
  for (float& v : data) v = std::max(v, 0.0f);
}

}  // namespace evigrid::kernels::scalar
