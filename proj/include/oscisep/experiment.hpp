#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "oscisep/integrator.hpp"
#include "oscisep/model.hpp"

namespace oscisep {

/// Malformed or out-of-range experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class PotentialKind { cubic, zero };

/// One run of the seven-oscillator test problem (or a variant of it).
///
/// Fast initial positions in `q0` are given in units of epsilon, frequencies as eps * omega_j,
/// so a config file does not change when only epsilon does.
struct ExperimentConfig {
  double epsilon = 0.01;
  double a = 0.5;
  bool a_is_epsilon = false;  // "a = epsilon" in the file
  PotentialKind potential = PotentialKind::cubic;
  std::vector<double> coupling;  // empty: (1, 1, 2, 3, 1, 1, 3)
  double slow_stiffness = 1.0;
  std::vector<double> frequencies;  // eps * omega_j; empty: the default ladder at this epsilon
  std::vector<double> q0{1.0, 0.3, 0.4, 0.7, -1.1, 0.4, -0.6, -0.7};
  std::vector<double> p0{-0.2, 0.6, 0.7, -0.9, -0.9, 0.4, -1.1, 0.8};
  double t_end = 100000.0;
  double dt_factor = 0.01;
  std::size_t record_samples = 10000;
  std::size_t record_stride = 0;  // 0: derived from record_samples
  int N = 1;
  double monitor_radius = 10.0;
  std::string out;
  std::size_t windows = 20;
  std::size_t degree = 48;

  double a_value() const { return a_is_epsilon ? epsilon : a; }
  double step() const { return dt_factor * epsilon; }
  std::uint64_t num_steps() const;
  std::size_t stride() const;
  /// eps * omega_j actually used.
  std::vector<double> scaled_frequencies() const;

  /// Throws ConfigError.
  void validate() const;
};

/// (1, 1+eps^2, 1+eps, 1+eps^(3/4), 1+eps^(2/3), 1+eps^(1/2), 2)
std::vector<double> default_scaled_frequencies(double epsilon);

/// Flat `key = value` text; `#` starts a comment. Unknown or repeated keys are errors.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

SystemConfig build_system(const ExperimentConfig& cfg);
PhaseState initial_state(const ExperimentConfig& cfg, const BlockLayout& layout);

struct DeviationRow {
  double epsilon = 0.0;
  double a = 0.0;
  double deviation = 0.0;  // max |H_omega(t) - H_omega(0)| over recorded samples
  double time_of_max = 0.0;
  std::uint64_t steps = 0;
  std::size_t samples = 0;
  double wall_seconds = 0.0;
  std::optional<double> left_region_time;
};

struct SimulationResult {
  DeviationRow row;
  Trajectory trajectory;
};

/// Max over samples of |H_omega - H_omega(first sample)| and where it occurs.
std::pair<double, double> max_deviation(const Trajectory& traj);

SimulationResult simulate(const ExperimentConfig& cfg);

/// Columns t, E_1..E_n, H_osc, H_slow, H_total with 17 significant digits.
void write_energies_csv(std::ostream& os, const Trajectory& traj);
void write_energies_csv(const std::string& path, const Trajectory& traj);

struct SweepFailure {
  double epsilon;
  std::string message;
};

struct SweepResult {
  std::vector<DeviationRow> rows;  // successful runs, in input order
  std::vector<SweepFailure> failures;
  std::optional<double> slope;  // least-squares log-log slope of deviation against epsilon
};

/// One simulate per epsilon on a worker pool. When cfg.out is set, each run writes
/// <out>/eps_<epsilon>/energies.csv.
SweepResult sweep(const ExperimentConfig& cfg, const std::vector<double>& epsilons, std::size_t threads = 0);

/// epsilon, a, deviation, time_of_max, steps, samples. No wall time, so identical inputs give identical bytes.
void write_sweep_csv(std::ostream& os, const SweepResult& result);

/// Least-squares slope of log y against log x. Needs two distinct x and positive values.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

nlohmann::json resonance_report(const ExperimentConfig& cfg);
std::string format_resonance_report(const nlohmann::json& report);

nlohmann::json mfe_diagnose(const ExperimentConfig& cfg, std::size_t windows, std::size_t threads = 0);
/// t, window, E, H_osc rows of the report's series.
void write_mfe_series_csv(std::ostream& os, const nlohmann::json& report);

/// "%.17g"
std::string format_double(double x);

}  // namespace oscisep
