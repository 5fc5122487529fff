#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "oscisep/kernels.hpp"
#include "oscisep/model.hpp"

namespace oscisep {

/// Non-finite state during time stepping.
class BlowupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scheme { trigonometric, reference };

struct IntegratorConfig {
  double h = 0.0;
  Scheme scheme = Scheme::trigonometric;
  std::size_t record_stride = 1;
  bool record_states = false;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<EnergyBreakdown> energies;
  std::vector<PhaseState> states;  // empty unless IntegratorConfig::record_states
  std::optional<double> left_region_time;  // first time |q_0| > monitor_radius
  std::uint64_t steps = 0;
  PhaseState final_state;
};

/// One step of the symmetric trigonometric (Deuflhard) scheme. Negative h steps backwards.
PhaseState trig_step(const PhaseState& state, double h, const SystemConfig& config);

/// One step of the classical 4th-order Runge-Kutta method for the first-order system.
PhaseState rk4_step(const PhaseState& state, double h, const SystemConfig& config);

/// In-place trigonometric stepping with precomputed filters. The force at the current
/// positions is carried from one step to the next, so each step costs one gradient.
class TrigonometricStepper {
 public:
  TrigonometricStepper(const SystemConfig& config, double h,
                       const kernels::KernelTable& kernels = kernels::active());

  /// Must be called whenever q was changed from outside.
  void prepare(std::span<const double> q);
  void step(std::span<double> q, std::span<double> p);

  double h() const { return h_; }
  const kernels::KernelTable& kernels() const { return *kernels_; }

 private:
  const Potential* potential_;
  double h_;
  kernels::TrigCoefficients coeffs_;
  const kernels::KernelTable* kernels_;
  std::vector<double> force_;
};

/// Fixed-step march from t = 0 to t_end. Records at every record_stride-th step and at the end.
Trajectory integrate(const PhaseState& state0, double t_end, const IntegratorConfig& iconf,
                     const SystemConfig& config);

/// Oracle integrator: RK4 with step h_ref (default 0.001 * epsilon).
Trajectory reference_integrate(const PhaseState& state0, double t_end, const SystemConfig& config,
                               std::size_t record_stride = 1, double h_ref = 0.0);

/// Forward-only RK4 propagation to arbitrary increasing times, with steps no longer than h_max.
class ReferencePropagator {
 public:
  ReferencePropagator(const SystemConfig& config, PhaseState state0, double h_max = 0.0);
  const PhaseState& advance_to(double t);
  double time() const { return t_; }
  const PhaseState& state() const { return state_; }

 private:
  const SystemConfig* config_;
  PhaseState state_;
  double t_ = 0.0;
  double h_max_;
};

}  // namespace oscisep
