// Compiled with -mavx2 -mfma -ffp-contract=off; only reached through the
// dispatcher after a CPUID check.

#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "dempster_cell.hpp"
#include "evigrid/kernels.hpp"

namespace evigrid::kernels::avx2 {

void dempster_combine(ConstMassPlanes a, ConstMassPlanes b, MassPlanes out) {
  const std::size_t n = out.free.size();
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d af = _mm256_loadu_pd(a.free.data() + i);
    const __m256d ao = _mm256_loadu_pd(a.occupied.data() + i);
    const __m256d au = _mm256_loadu_pd(a.unknown.data() + i);
    const __m256d bf = _mm256_loadu_pd(b.free.data() + i);
    const __m256d bo = _mm256_loadu_pd(b.occupied.data() + i);
    const __m256d bu = _mm256_loadu_pd(b.unknown.data() + i);

    const __m256d conflict = _mm256_add_pd(_mm256_mul_pd(af, bo), _mm256_mul_pd(ao, bf));
    const __m256d norm = _mm256_sub_pd(one, conflict);
    const __m256d ok = _mm256_cmp_pd(norm, zero, _CMP_GT_OQ);

    __m256d f = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(af, bf), _mm256_mul_pd(af, bu)), _mm256_mul_pd(au, bf));
    __m256d o = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(ao, bo), _mm256_mul_pd(ao, bu)), _mm256_mul_pd(au, bo));
    __m256d u = _mm256_mul_pd(au, bu);
    f = _mm256_div_pd(f, norm);
    o = _mm256_div_pd(o, norm);
    u = _mm256_div_pd(u, norm);
    f = _mm256_min_pd(one, _mm256_max_pd(zero, f));
    o = _mm256_min_pd(one, _mm256_max_pd(zero, o));
    u = _mm256_min_pd(one, _mm256_max_pd(zero, u));
    const __m256d s = _mm256_add_pd(_mm256_add_pd(f, o), u);
    f = _mm256_div_pd(f, s);
    o = _mm256_div_pd(o, s);
    u = _mm256_max_pd(zero, _mm256_sub_pd(_mm256_sub_pd(one, f), o));

    _mm256_storeu_pd(out.free.data() + i, _mm256_blendv_pd(zero, f, ok));
    _mm256_storeu_pd(out.occupied.data() + i, _mm256_blendv_pd(zero, o, ok));
    _mm256_storeu_pd(out.unknown.data() + i, _mm256_blendv_pd(one, u, ok));
  }
  for (; i < n; ++i) {
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
          const __m256 w0 = _mm256_set1_ps(k[ky * 3 + 0]);
          const __m256 w1 = _mm256_set1_ps(k[ky * 3 + 1]);
          const __m256 w2 = _mm256_set1_ps(k[ky * 3 + 2]);
          int x = 0;
          for (; x + 8 <= w; x += 8) {
            __m256 acc = _mm256_loadu_ps(row + x);
            acc = _mm256_fmadd_ps(w0, _mm256_loadu_ps(in_row + x), acc);
            acc = _mm256_fmadd_ps(w1, _mm256_loadu_ps(in_row + x + 1), acc);
            acc = _mm256_fmadd_ps(w2, _mm256_loadu_ps(in_row + x + 2), acc);
            _mm256_storeu_ps(row + x, acc);
          }
          for (; x < w; ++x) {
            row[x] += k[ky * 3 + 0] * in_row[x];
            row[x] += k[ky * 3 + 1] * in_row[x + 1];
            row[x] += k[ky * 3 + 2] * in_row[x + 2];
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
      const __m256 wv = _mm256_set1_ps(wk);
      const float* in = input + ci * plane;
      std::size_t p = 0;
      for (; p + 8 <= plane; p += 8) {
        _mm256_storeu_ps(out + p, _mm256_fmadd_ps(wv, _mm256_loadu_ps(in + p), _mm256_loadu_ps(out + p)));
      }
      for (; p < plane; ++p) out[p] += wk * in[p];
    }
  }
}

void relu(std::span<float> data) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= data.size(); i += 8) {
    _mm256_storeu_ps(data.data() + i, _mm256_max_ps(zero, _mm256_loadu_ps(data.data() + i)));
  }
  for (; i < data.size(); ++i) data[i] = std::max(data[i], 0.0f);
}

}  // namespace evigrid::kernels::avx2
