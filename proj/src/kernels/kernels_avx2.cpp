// Compiled with -mavx2 (and without -mfma); only called after a runtime CPU check.
#include <immintrin.h>

#include "oscisep/kernels.hpp"

namespace oscisep::kernels::detail {

void rotate_drift_avx2(const TrigCoefficients& c, double* q, double* p, const double* g) {
  const std::size_t n = c.size();
  const double* cs = c.cos_hw.data();
  const double* so = c.sin_hw_over_w.data();
  const double* ws = c.w_sin_hw.data();
  const double* k2 = c.half_h2_sinc.data();
  const __m256d hh = _mm256_set1_pd(c.half_h);

  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d qi = _mm256_loadu_pd(q + i);
    const __m256d pi = _mm256_loadu_pd(p + i);
    const __m256d gi = _mm256_loadu_pd(g + i);
    const __m256d ci = _mm256_loadu_pd(cs + i);

    __m256d qn = _mm256_add_pd(_mm256_mul_pd(ci, qi), _mm256_mul_pd(_mm256_loadu_pd(so + i), pi));
    qn = _mm256_add_pd(qn, _mm256_mul_pd(_mm256_loadu_pd(k2 + i), gi));

    __m256d pn = _mm256_sub_pd(_mm256_mul_pd(ci, pi), _mm256_mul_pd(_mm256_loadu_pd(ws + i), qi));
    pn = _mm256_add_pd(pn, _mm256_mul_pd(_mm256_mul_pd(hh, ci), gi));

    _mm256_storeu_pd(q + i, qn);
    _mm256_storeu_pd(p + i, pn);
  }
  for (; i < n; ++i) {
    const double qi = q[i];
    const double pi = p[i];
    q[i] = (cs[i] * qi + so[i] * pi) + k2[i] * g[i];
    p[i] = (cs[i] * pi - ws[i] * qi) + (c.half_h * cs[i]) * g[i];
  }
}

void kick_avx2(double* p, const double* g, double half_h, std::size_t n) {
  const __m256d hh = _mm256_set1_pd(half_h);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(p + i, _mm256_add_pd(_mm256_loadu_pd(p + i), _mm256_mul_pd(hh, _mm256_loadu_pd(g + i))));
  for (; i < n; ++i) p[i] = p[i] + half_h * g[i];
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s = s + a[i] * b[i];
  return s;
}

void scale_avx2(double* out, const double* x, double alpha, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

}  // namespace oscisep::kernels::detail
