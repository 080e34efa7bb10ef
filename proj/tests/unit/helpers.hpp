#pragma once

#include "homoscale/system.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace homoscale::test {

// 1-D fast row b(x), unit noise, zero slow coupling; y is a dummy scalar.
inline MultiscaleSystem scalar_fast(std::function<double(double)> b, std::function<double(double)> H = nullptr) {
  MultiscaleSystem s;
  s.name = "scalar-fast";
  s.d = s.vartheta = s.m = 1;
  s.b.rows = 1;
  s.b.eval = [b](const double* x, const double*, double* o) { o[0] = b(x[0]); };
  s.c = CoefficientField::zeros(1, 1);
  s.sigma = CoefficientField::constant(Mat::Identity(1, 1));
  s.F = CoefficientField::zeros(1, 1);
  if (H) {
    s.H.rows = 1;
    s.H.eval = [H](const double* x, const double*, double* o) { o[0] = H(x[0]); };
  } else {
    s.H = CoefficientField::zeros(1, 1);
  }
  s.G = CoefficientField::zeros(1, 1);
  s.flags.nondegenerate_fast = true;
  finalize_system(s);
  return s;
}

inline MultiscaleSystem zero_system(int d, int vt) {
  MultiscaleSystem s;
  s.name = "zero";
  s.d = d;
  s.vartheta = vt;
  s.m = 1;
  s.b = CoefficientField::zeros(d, 1);
  s.c = CoefficientField::zeros(d, 1);
  s.sigma = CoefficientField::zeros(d, 1);
  s.F = CoefficientField::zeros(vt, 1);
  s.H = CoefficientField::zeros(vt, 1);
  s.G = CoefficientField::zeros(vt, 1);
  finalize_system(s);
  return s;
}

// Composite Simpson on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace homoscale::test
