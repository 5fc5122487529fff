#pragma once

// Elementwise inner loops of the trigonometric step.
//
// Every variant computes exactly the same sequence of IEEE multiplies and adds per
// component (no fused multiply-add), so all variants are bitwise interchangeable.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace oscisep::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view name(Isa isa);

/// Per-component filter coefficients of one step of size h. Components with
/// frequency 0 take the limits cos -> 1, sin(hw)/w -> h, sinc -> 1.
struct TrigCoefficients {
  std::vector<double> cos_hw;
  std::vector<double> sin_hw_over_w;
  std::vector<double> w_sin_hw;
  std::vector<double> half_h2_sinc;
  double half_h = 0.0;

  std::size_t size() const { return cos_hw.size(); }
};

TrigCoefficients make_trig_coefficients(std::span<const double> frequencies, double h);

/// Rotation + drift part of the step, in place:
///   q' = cos q + sin/w p + h^2/2 sinc g
///   p' = -w sin q + cos p + h/2 cos g
using RotateDriftFn = void (*)(const TrigCoefficients& c, double* q, double* p, const double* g);

/// p += half_h * g
using KickFn = void (*)(double* p, const double* g, double half_h, std::size_t n);

/// Sum of a[i]*b[i] accumulated in four lanes (i mod 4) over the first 4*floor(n/4)
/// entries, combined as (l0 + l1) + (l2 + l3), then the tail added in order.
using DotFn = double (*)(const double* a, const double* b, std::size_t n);

/// out = alpha * x
using ScaleFn = void (*)(double* out, const double* x, double alpha, std::size_t n);

struct KernelTable {
  Isa isa;
  RotateDriftFn rotate_drift;
  KickFn kick;
  DotFn dot;
  ScaleFn scale;
};

bool available(Isa isa);

/// Table for a specific instruction set; throws if it is not available on this CPU/build.
const KernelTable& table(Isa isa);

/// Best available table, chosen once at first use. OSCISEP_ISA=scalar|avx2|neon overrides.
const KernelTable& active();

namespace detail {
void rotate_drift_scalar(const TrigCoefficients& c, double* q, double* p, const double* g);
void kick_scalar(double* p, const double* g, double half_h, std::size_t n);
double dot_scalar(const double* a, const double* b, std::size_t n);
void scale_scalar(double* out, const double* x, double alpha, std::size_t n);
#if defined(__x86_64__) || defined(_M_X64)
void rotate_drift_avx2(const TrigCoefficients& c, double* q, double* p, const double* g);
void kick_avx2(double* p, const double* g, double half_h, std::size_t n);
double dot_avx2(const double* a, const double* b, std::size_t n);
void scale_avx2(double* out, const double* x, double alpha, std::size_t n);
#endif
#if defined(__aarch64__)
void rotate_drift_neon(const TrigCoefficients& c, double* q, double* p, const double* g);
void kick_neon(double* p, const double* g, double half_h, std::size_t n);
double dot_neon(const double* a, const double* b, std::size_t n);
void scale_neon(double* out, const double* x, double alpha, std::size_t n);
#endif
}  // namespace detail

}  // namespace oscisep::kernels
