#include "oscisep/kernels.hpp"

namespace oscisep::kernels::detail {

void rotate_drift_scalar(const TrigCoefficients& c, double* q, double* p, const double* g) {
  const std::size_t n = c.size();
  const double hh = c.half_h;
  for (std::size_t i = 0; i < n; ++i) {
    const double qi = q[i];
    const double pi = p[i];
    const double gi = g[i];
    const double cs = c.cos_hw[i];
    q[i] = (cs * qi + c.sin_hw_over_w[i] * pi) + c.half_h2_sinc[i] * gi;
    p[i] = (cs * pi - c.w_sin_hw[i] * qi) + (hh * cs) * gi;
  }
}

void kick_scalar(double* p, const double* g, double half_h, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) p[i] = p[i] + half_h * g[i];
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    l0 = l0 + a[i] * b[i];
    l1 = l1 + a[i + 1] * b[i + 1];
    l2 = l2 + a[i + 2] * b[i + 2];
    l3 = l3 + a[i + 3] * b[i + 3];
  }
  double s = (l0 + l1) + (l2 + l3);
  for (; i < n; ++i) s = s + a[i] * b[i];
  return s;
}

void scale_scalar(double* out, const double* x, double alpha, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

}  // namespace oscisep::kernels::detail
