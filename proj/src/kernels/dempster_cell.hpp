#pragma once

#include <algorithm>

namespace evigrid::kernels::detail {

// Shared by the scalar kernel and the AVX2 remainder loop; the vector path
// performs the same operations in the same order so results are bit-identical.
inline void dempster_cell(double af, double ao, double au, double bf, double bo, double bu, double& of,
                          double& oo, double& ou) {
  const double norm = 1.0 - (af * bo + ao * bf);
  if (!(norm > 0.0)) {
    of = 0.0;
    oo = 0.0;
    ou = 1.0;
    return;
  }
  double f = (af * bf + af * bu + au * bf) / norm;
  double o = (ao * bo + ao * bu + au * bo) / norm;
  double u = (au * bu) / norm;
  f = std::min(std::max(f, 0.0), 1.0);
  o = std::min(std::max(o, 0.0), 1.0);
  u = std::min(std::max(u, 0.0), 1.0);
  const double s = f + o + u;
  f = f / s;
  o = o / s;
  u = 1.0 - f - o;
  of = f;
  oo = o;
  ou = std::max(u, 0.0);
}

}  // namespace evigrid::kernels::detail
