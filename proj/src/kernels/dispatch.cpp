#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "oscisep/kernels.hpp"

namespace oscisep::kernels {

std::string_view name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

TrigCoefficients make_trig_coefficients(std::span<const double> frequencies, double h) {
  TrigCoefficients c;
  const std::size_t n = frequencies.size();
  c.cos_hw.resize(n);
  c.sin_hw_over_w.resize(n);
  c.w_sin_hw.resize(n);
  c.half_h2_sinc.resize(n);
  c.half_h = 0.5 * h;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = frequencies[i];
    if (w == 0.0) {
      c.cos_hw[i] = 1.0;
      c.sin_hw_over_w[i] = h;
      c.w_sin_hw[i] = 0.0;
      c.half_h2_sinc[i] = 0.5 * h * h;
    } else {
      const double x = h * w;
      const double s = std::sin(x);
      c.cos_hw[i] = std::cos(x);
      c.sin_hw_over_w[i] = s / w;
      c.w_sin_hw[i] = w * s;
      c.half_h2_sinc[i] = 0.5 * h * h * (s / x);
    }
  }
  return c;
}

namespace {

const KernelTable kScalar{Isa::scalar, &detail::rotate_drift_scalar, &detail::kick_scalar, &detail::dot_scalar,
                          &detail::scale_scalar};
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable kAvx2{Isa::avx2, &detail::rotate_drift_avx2, &detail::kick_avx2, &detail::dot_avx2,
                        &detail::scale_avx2};
#endif
#if defined(__aarch64__)
const KernelTable kNeon{Isa::neon, &detail::rotate_drift_neon, &detail::kick_neon, &detail::dot_neon,
                        &detail::scale_neon};
#endif

const KernelTable& pick() {
  if (const char* forced = std::getenv("OSCISEP_ISA")) {
    const std::string f(forced);
    if (f == "scalar") return kScalar;
    if (f == "avx2" && available(Isa::avx2)) return table(Isa::avx2);
    if (f == "neon" && available(Isa::neon)) return table(Isa::neon);
  }
  if (available(Isa::avx2)) return table(Isa::avx2);
  if (available(Isa::neon)) return table(Isa::neon);
  return kScalar;
}

}  // namespace

bool available(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!available(isa)) throw std::runtime_error("kernel set '" + std::string(name(isa)) + "' is not available here");
  switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::avx2: return kAvx2;
#endif
#if defined(__aarch64__)
    case Isa::neon: return kNeon;
#endif
    default: return kScalar;
  }
}

const KernelTable& active() {
  static const KernelTable& chosen = pick();
  return chosen;
}

}  // namespace oscisep::kernels
