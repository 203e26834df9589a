#include <atomic>
#include <cstdlib>

#include "evigrid/kernels.hpp"

namespace evigrid::kernels {

#ifdef EVIGRID_NO_AVX2
// Non-x86 builds: the AVX2 entry points forward to the reference kernels.
namespace avx2 {
void dempster_combine(ConstMassPlanes a, ConstMassPlanes b, MassPlanes out) { scalar::dempster_combine(a, b, out); }
void conv3x3(const float* i, const float* k, const float* b, ConvShape s, float* o) { scalar::conv3x3(i, k, b, s, o); }
void conv1x1(const float* i, const float* k, const float* b, ConvShape s, float* o) { scalar::conv1x1(i, k, b, s, o); }
void relu(std::span<float> data) { scalar::relu(data); }
}  // namespace avx2
#endif

namespace {

bool cpu_has_avx2() {
#if !defined(EVIGRID_NO_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  if (std::getenv("EVIGRID_FORCE_SCALAR") != nullptr) return Isa::kScalar;
  return detected_isa();
}

std::atomic<Isa>& selected() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
  }
  return "unknown";
}

Isa detected_isa() {
  static const Isa isa = cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
  return isa;
}

Isa active_isa() { return selected().load(std::memory_order_relaxed); }

bool set_active_isa(Isa isa) {
  if (isa == Isa::kAvx2 && detected_isa() != Isa::kAvx2) return false;
  selected().store(isa, std::memory_order_relaxed);
  return true;
}

void dempster_combine(ConstMassPlanes a, ConstMassPlanes b, MassPlanes out) {
  if (active_isa() == Isa::kAvx2) return avx2::dempster_combine(a, b, out);
  scalar::dempster_combine(a, b, out);
}

void conv3x3(const float* input, const float* kernel, const float* bias, ConvShape shape, float* output) {
  if (active_isa() == Isa::kAvx2) return avx2::conv3x3(input, kernel, bias, shape, output);
  scalar::conv3x3(input, kernel, bias, shape, output);
}

void conv1x1(const float* input, const float* kernel, const float* bias, ConvShape shape, float* output) {
  if (active_isa() == Isa::kAvx2) return avx2::conv1x1(input, kernel, bias, shape, output);
  scalar::conv1x1(input, kernel, bias, shape, output);
}

void relu(std::span<float> data) {
  if (active_isa() == Isa::kAvx2) return avx2::relu(data);
  scalar::relu(data);
}

}  // namespace evigrid::kernels
