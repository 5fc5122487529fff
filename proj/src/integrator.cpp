#include "oscisep/integrator.hpp"

#include <cmath>
#include <sstream>

namespace oscisep {

namespace {

void require_state(const PhaseState& s, const SystemConfig& config) {
  s.p.require_layout(config.layout, "integrator(p)");
  s.q.require_layout(config.layout, "integrator(q)");
}

bool finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

double slow_radius_sq(std::span<const double> q, std::size_t d0) {
  double s = 0.0;
  for (std::size_t i = 0; i < d0; ++i) s += q[i] * q[i];
  return s;
}

[[noreturn]] void explode(double t) {
  std::ostringstream os;
  os << "energies explode: non-finite state at t = " << t;
  throw BlowupError(os.str());
}

std::uint64_t step_count(double t_end, double h) {
  if (!(t_end > 0.0)) throw std::invalid_argument("integrate: t_end must be positive");
  if (!(h > 0.0)) throw std::invalid_argument("integrate: step size must be positive");
  return static_cast<std::uint64_t>(std::ceil(t_end / h - 1e-9));
}

}  // namespace

TrigonometricStepper::TrigonometricStepper(const SystemConfig& config, double h, const kernels::KernelTable& kernels)
    : potential_(config.potential.get()),
      h_(h),
      coeffs_(kernels::make_trig_coefficients(config.component_frequencies(), h)),
      kernels_(&kernels),
      force_(config.layout.size(), 0.0) {}

void TrigonometricStepper::prepare(std::span<const double> q) {
  potential_->gradient(q, force_);
  for (double& f : force_) f = -f;
}

void TrigonometricStepper::step(std::span<double> q, std::span<double> p) {
  kernels_->rotate_drift(coeffs_, q.data(), p.data(), force_.data());
  prepare(q);
  kernels_->kick(p.data(), force_.data(), coeffs_.half_h, force_.size());
}

PhaseState trig_step(const PhaseState& state, double h, const SystemConfig& config) {
  require_state(state, config);
  PhaseState next = state;
  TrigonometricStepper stepper(config, h);
  stepper.prepare(next.q.flat());
  stepper.step(next.q.flat(), next.p.flat());
  return next;
}

PhaseState rk4_step(const PhaseState& s, double h, const SystemConfig& config) {
  require_state(s, config);
  const std::size_t n = s.q.size();
  auto eval = [&](const BlockVector& q) { return acceleration(q, config); };

  BlockVector q2 = s.q, q3 = s.q, q4 = s.q;
  const BlockVector a1 = eval(s.q);
  for (std::size_t i = 0; i < n; ++i) q2[i] = s.q[i] + 0.5 * h * s.p[i];
  const BlockVector a2 = eval(q2);
  std::vector<double> p2(n), p3(n);
  for (std::size_t i = 0; i < n; ++i) {
    p2[i] = s.p[i] + 0.5 * h * a1[i];
    q3[i] = s.q[i] + 0.5 * h * p2[i];
  }
  const BlockVector a3 = eval(q3);
  for (std::size_t i = 0; i < n; ++i) {
    p3[i] = s.p[i] + 0.5 * h * a2[i];
    q4[i] = s.q[i] + h * p3[i];
  }
  const BlockVector a4 = eval(q4);

  PhaseState next = s;
  for (std::size_t i = 0; i < n; ++i) {
    const double p4 = s.p[i] + h * a3[i];
    next.q[i] = s.q[i] + h / 6.0 * (s.p[i] + 2.0 * p2[i] + 2.0 * p3[i] + p4);
    next.p[i] = s.p[i] + h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
  }
  return next;
}

Trajectory integrate(const PhaseState& state0, double t_end, const IntegratorConfig& iconf,
                     const SystemConfig& config) {
  require_state(state0, config);
  if (iconf.record_stride == 0) throw std::invalid_argument("integrate: record_stride must be >= 1");
  if (iconf.scheme == Scheme::reference)
    return reference_integrate(state0, t_end, config, iconf.record_stride, iconf.h);

  const std::uint64_t steps = step_count(t_end, iconf.h);
  const std::size_t d0 = config.layout.dim(0);
  const double r2 = config.monitor_radius * config.monitor_radius;

  Trajectory traj;
  traj.steps = steps;
  PhaseState s = state0;
  auto q = s.q.flat();
  auto p = s.p.flat();
  if (!finite(q) || !finite(p)) explode(0.0);

  auto record = [&](std::uint64_t k) {
    const double t = static_cast<double>(k) * iconf.h;
    traj.times.push_back(t);
    traj.energies.push_back(energies(s.p, s.q, config));
    if (iconf.record_states) traj.states.push_back(s);
  };

  TrigonometricStepper stepper(config, iconf.h);
  stepper.prepare(q);
  bool flagged = slow_radius_sq(q, d0) > r2;
  if (flagged) traj.left_region_time = 0.0;
  record(0);

  for (std::uint64_t k = 1; k <= steps; ++k) {
    stepper.step(q, p);
    if (!flagged && slow_radius_sq(q, d0) > r2) {
      flagged = true;
      traj.left_region_time = static_cast<double>(k) * iconf.h;
    }
    const bool at_record = (k % iconf.record_stride == 0) || k == steps;
    if ((k & 1023u) == 0 || at_record) {
      if (!finite(q) || !finite(p)) explode(static_cast<double>(k) * iconf.h);
    }
    if (at_record) record(k);
  }
  traj.final_state = std::move(s);
  return traj;
}

Trajectory reference_integrate(const PhaseState& state0, double t_end, const SystemConfig& config,
                               std::size_t record_stride, double h_ref) {
  require_state(state0, config);
  if (record_stride == 0) throw std::invalid_argument("reference_integrate: record_stride must be >= 1");
  const double h_max = h_ref > 0.0 ? h_ref : 1e-3 * config.epsilon;
  const std::uint64_t steps = step_count(t_end, h_max);
  const double h = t_end / static_cast<double>(steps);
  const double r2 = config.monitor_radius * config.monitor_radius;

  Trajectory traj;
  traj.steps = steps;
  PhaseState s = state0;
  auto record = [&](std::uint64_t k) {
    traj.times.push_back(static_cast<double>(k) * h);
    traj.energies.push_back(energies(s.p, s.q, config));
    traj.states.push_back(s);
  };
  record(0);
  for (std::uint64_t k = 1; k <= steps; ++k) {
    s = rk4_step(s, h, config);
    if (!s.q.all_finite() || !s.p.all_finite()) explode(static_cast<double>(k) * h);
    if (!traj.left_region_time && slow_radius_sq(s.q.flat(), config.layout.dim(0)) > r2)
      traj.left_region_time = static_cast<double>(k) * h;
    if (k % record_stride == 0 || k == steps) record(k);
  }
  traj.final_state = std::move(s);
  return traj;
}

ReferencePropagator::ReferencePropagator(const SystemConfig& config, PhaseState state0, double h_max)
    : config_(&config), state_(std::move(state0)), h_max_(h_max > 0.0 ? h_max : 1e-3 * config.epsilon) {
  require_state(state_, config);
}

const PhaseState& ReferencePropagator::advance_to(double t) {
  if (t < t_) throw std::invalid_argument("ReferencePropagator: time must not decrease");
  const double span = t - t_;
  if (span > 0.0) {
    const auto steps = static_cast<std::uint64_t>(std::ceil(span / h_max_ - 1e-9));
    const double h = span / static_cast<double>(steps);
    for (std::uint64_t k = 0; k < steps; ++k) state_ = rk4_step(state_, h, *config_);
    if (!state_.q.all_finite() || !state_.p.all_finite()) explode(t);
  }
  t_ = t;
  return state_;
}

}  // namespace oscisep
