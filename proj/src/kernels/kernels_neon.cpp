#include <arm_neon.h>

#include "oscisep/kernels.hpp"

namespace oscisep::kernels::detail {

// vmulq/vaddq only: vfmaq would round differently from the scalar kernel.
void rotate_drift_neon(const TrigCoefficients& c, double* q, double* p, const double* g) {
  const std::size_t n = c.size();
  const double* cs = c.cos_hw.data();
  const double* so = c.sin_hw_over_w.data();
  const double* ws = c.w_sin_hw.data();
  const double* k2 = c.half_h2_sinc.data();
  const float64x2_t hh = vdupq_n_f64(c.half_h);

  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t qi = vld1q_f64(q + i);
    const float64x2_t pi = vld1q_f64(p + i);
    const float64x2_t gi = vld1q_f64(g + i);
    const float64x2_t ci = vld1q_f64(cs + i);

    float64x2_t qn = vaddq_f64(vmulq_f64(ci, qi), vmulq_f64(vld1q_f64(so + i), pi));
    qn = vaddq_f64(qn, vmulq_f64(vld1q_f64(k2 + i), gi));

    float64x2_t pn = vsubq_f64(vmulq_f64(ci, pi), vmulq_f64(vld1q_f64(ws + i), qi));
    pn = vaddq_f64(pn, vmulq_f64(vmulq_f64(hh, ci), gi));

    vst1q_f64(q + i, qn);
    vst1q_f64(p + i, pn);
  }
  for (; i < n; ++i) {
    const double qi = q[i];
    const double pi = p[i];
    q[i] = (cs[i] * qi + so[i] * pi) + k2[i] * g[i];
    p[i] = (cs[i] * pi - ws[i] * qi) + (c.half_h * cs[i]) * g[i];
  }
}

void kick_neon(double* p, const double* g, double half_h, std::size_t n) {
  const float64x2_t hh = vdupq_n_f64(half_h);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(p + i, vaddq_f64(vld1q_f64(p + i), vmulq_f64(hh, vld1q_f64(g + i))));
  for (; i < n; ++i) p[i] = p[i] + half_h * g[i];
}

double dot_neon(const double* a, const double* b, std::size_t n) {
  // Lanes (0,1) and (2,3) of the four-lane order live in two registers.
  float64x2_t acc01 = vdupq_n_f64(0.0);
  float64x2_t acc23 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc01 = vaddq_f64(acc01, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    acc23 = vaddq_f64(acc23, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double s = (vgetq_lane_f64(acc01, 0) + vgetq_lane_f64(acc01, 1)) +
             (vgetq_lane_f64(acc23, 0) + vgetq_lane_f64(acc23, 1));
  for (; i < n; ++i) s = s + a[i] * b[i];
  return s;
}

void scale_neon(double* out, const double* x, double alpha, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

}  // namespace oscisep::kernels::detail
