#pragma once

// Data-parallel inner loops with a portable scalar reference and AVX2
// variants. Callers go through the dispatching entry points; the per-ISA
// namespaces are exposed so the equivalence tests can run both directly.

#include <cstddef>
#include <span>
#include <string_view>

namespace evigrid::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view name(Isa isa);

/// Best ISA supported by this CPU (AVX2 requires FMA as well).
Isa detected_isa();

/// ISA used by the dispatching entry points. Defaults to detected_isa(),
/// or scalar when EVIGRID_FORCE_SCALAR is set in the environment.
Isa active_isa();

/// Returns false (and leaves the selection unchanged) if `isa` is unsupported.
bool set_active_isa(Isa isa);

struct ConstMassPlanes {
  std::span<const double> free;
  std::span<const double> occupied;
  std::span<const double> unknown;
};

struct MassPlanes {
  std::span<double> free;
  std::span<double> occupied;
  std::span<double> unknown;
};

/// Conv weights as [c_out][c_in][k][k] plus bias[c_out].
struct ConvShape {
  int c_in = 0;
  int c_out = 0;
  int height = 0;
  int width = 0;
};

// Cell-wise Dempster combination on {F, O}; a fully conflicting pair yields the
// vacuous cell. `out` may alias either input.
void dempster_combine(ConstMassPlanes a, ConstMassPlanes b, MassPlanes out);

// 3x3 convolution, stride 1, zero "same" padding. Input/output are CHW.
void conv3x3(const float* input, const float* kernel, const float* bias, ConvShape shape, float* output);

// Pointwise convolution.
void conv1x1(const float* input, const float* kernel, const float* bias, ConvShape shape, float* output);

void relu(std::span<float> data);

namespace scalar {
void dempster_combine(ConstMassPlanes a, ConstMassPlanes b, MassPlanes out);
void conv3x3(const float* input, const float* kernel, const float* bias, ConvShape shape, float* output);
void conv1x1(const float* input, const float* kernel, const float* bias, ConvShape shape, float* output);
void relu(std::span<float> data);
}  // namespace scalar

namespace avx2 {
void dempster_combine(ConstMassPlanes a, ConstMassPlanes b, MassPlanes out);
void conv3x3(const float* input, const float* kernel, const float* bias, ConvShape shape, float* output);
void conv1x1(const float* input, const float* kernel, const float* bias, ConvShape shape, float* output);
void relu(std::span<float> data);
}  // namespace avx2

}  // namespace evigrid::kernels
