#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "oscisep/block_vector.hpp"
#include "oscisep/chebyshev.hpp"
#include "oscisep/model.hpp"
#include "oscisep/resonance.hpp"

namespace oscisep {

struct MfeOptions {
  int N = 1;
  std::size_t degree = 48;
  int max_sweeps = 0;          // 0: min(ceil((N+1)/mu_eff), 2000)
  double target_defect = 0.0;  // 0: eps^(N+1)
  std::size_t stagnation_window = 5;
  double stagnation_ratio = 0.99;
  double divergence_factor = 10.0;
  std::size_t slow_substeps = 64;  // RK4 steps between consecutive nodes for the slow start
  // Coefficients below chop_tol * max are dropped after each fit; derivative terms would
  // otherwise amplify roundoff in the top degrees from sweep to sweep.
  double chop_tol = 1e-13;
};

/// Construction failed: growing defect, unavailable derivatives, or a vanishing divisor.
class MfeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MfeCase { slow, diagonal, explicit_update };

/// Everything about the expansion that does not depend on the window: the index set,
/// frequencies, case classification and the tuple tables of the modulation potential.
class MfeContext {
 public:
  MfeContext(SystemConfig system, ResonanceData resonance, MfeOptions options = {});

  const SystemConfig& system() const { return system_; }
  const ResonanceData& resonance() const { return resonance_; }
  const MfeOptions& options() const { return options_; }

  double epsilon() const { return system_.epsilon; }
  double alpha() const { return resonance_.gap.alpha; }
  /// Window length eps^alpha.
  double window() const { return window_; }
  std::size_t num_blocks() const { return system_.layout.num_blocks(); }
  std::size_t dim(std::size_t j) const { return system_.layout.dim(j); }

  const std::vector<MultiIndex>& modes() const { return resonance_.K_set; }
  std::size_t num_modes() const { return resonance_.K_set.size(); }
  std::optional<std::size_t> mode_index(const MultiIndex& k) const;
  std::size_t zero_mode() const { return zero_; }
  std::size_t negated(std::size_t i) const { return neg_[i]; }
  /// k_i . varpi
  double mode_frequency(std::size_t i) const { return freq_[i]; }
  /// Index of the representative of the class of the j-th unit vector (j >= 1).
  std::size_t diagonal_mode(std::size_t j) const { return kappa_.at(j); }

  MfeCase classify(std::size_t j, std::size_t i) const;
  /// +1 / -1 for the two diagonal modes of block j, 0 otherwise.
  int diagonal_sign(std::size_t j, std::size_t i) const;
  /// varpi_j^2 - (k_i . varpi)^2
  double divisor(std::size_t j, std::size_t i) const;
  /// 2 varpi_j theta_j - theta_j^2
  double shift(std::size_t j) const { return shift_.at(j); }

  int max_sweeps() const;
  double target_defect() const;

  /// One ordered tuple of modes in the modulation-potential sum, with the mode whose
  /// gradient it contributes to. slow_only terms only feed block 0 of the zero mode.
  struct Term {
    std::vector<std::size_t> modes;
    std::size_t target;
    double weight;
    bool slow_only;
  };
  const std::vector<Term>& terms() const { return terms_; }

 private:
  SystemConfig system_;
  ResonanceData resonance_;
  MfeOptions options_;
  double window_;
  std::size_t zero_ = 0;
  std::vector<std::size_t> neg_;
  std::vector<double> freq_;
  std::vector<std::size_t> kappa_;
  std::vector<double> shift_;
  std::vector<Term> terms_;
};

/// Coefficient functions z_j^k(tau), tau in [0,1], of one window starting at t0.
class ModulationSet {
 public:
  ModulationSet(std::shared_ptr<const MfeContext> ctx, double t0, PhaseState initial);

  const MfeContext& context() const { return *ctx_; }
  std::shared_ptr<const MfeContext> context_ptr() const { return ctx_; }
  double t0() const { return t0_; }
  /// Exact (p, q) at t0 that every iterate reproduces.
  const PhaseState& initial() const { return initial_; }

  ChebSeries& at(std::size_t j, std::size_t i) { return z_[i * ctx_->num_blocks() + j]; }
  const ChebSeries& at(std::size_t j, std::size_t i) const { return z_[i * ctx_->num_blocks() + j]; }

  /// max over nodes of |z_j^{-k} - conj(z_j^k)|
  double conjugate_symmetry_error() const;

 private:
  std::shared_ptr<const MfeContext> ctx_;
  double t0_;
  PhaseState initial_;
  std::vector<ChebSeries> z_;
};

/// Gradients of the modulation potential at one tau: entry i holds, in block j,
/// the partial derivative with respect to z_j^{-k_i}.
std::vector<ComplexBlockVector> modulation_potential_gradient(const ModulationSet& z, double tau);

/// The (j, k) entry of the above.
std::vector<cplx> modulation_potential_gradient(const ModulationSet& z, std::size_t j, const MultiIndex& k,
                                                double tau);

ModulationSet starting_iterate(std::shared_ptr<const MfeContext> ctx, const PhaseState& state0, double t0 = 0.0);

ModulationSet iterate(const ModulationSet& z);

struct DefectReport {
  std::vector<double> sup;  // per (i * num_blocks + j)
  double sup_max = 0.0;
  double lambda_c2 = 0.0;  // C^2 norm of Lambda (z_{m+1} - z_m)
  std::size_t sweeps = 0;
  std::string stop_reason;
  std::vector<double> history;      // sup defect of each iterate
  std::vector<double> c2_history;   // Lambda-scaled C^2 differences
};

/// Defect of z_m in the modulation equations, expressed through the next iterate.
DefectReport defect(const ModulationSet& z_m, const ModulationSet& z_m1);

/// Defect of z evaluated directly from the modulation equations, per (i * num_blocks + j).
std::vector<double> residual(const ModulationSet& z);

struct Construction {
  ModulationSet z;
  DefectReport report;
};

Construction construct(std::shared_ptr<const MfeContext> ctx, const PhaseState& state0, double t0 = 0.0);

struct Reconstruction {
  BlockVector q;
  BlockVector p;
  double max_imag = 0.0;
};

Reconstruction reconstruct(const ModulationSet& z, double t);

struct InvariantValue {
  double value = 0.0;
  double imag = 0.0;
};

InvariantValue almost_invariant(const ModulationSet& z, double t);

struct CoefficientSize {
  std::size_t j;
  MultiIndex k;
  double sup;
  double scaled;  // sup * omega_j on the diagonal, sup * |divisor| / eps^|k| elsewhere, sup for (0, 0)
};

std::vector<CoefficientSize> coefficient_sizes(const ModulationSet& z);

struct InvariantSeries {
  std::size_t window = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  double E_start = 0.0;
  double E_end = 0.0;
  double drift = 0.0;
  double jump = 0.0;  // |E_end - E_start of the next window|, 0 for the last window
  double H_start = 0.0;
  double H_end = 0.0;
  double max_E_minus_H = 0.0;
  double reconstruction_error = 0.0;
  double max_imag = 0.0;
  std::size_t sweeps = 0;
  double final_defect = 0.0;
  std::string stop_reason;
  std::vector<double> sample_times;
  std::vector<double> sample_E;
  std::vector<double> sample_H;
};

struct InvariantTrack {
  std::vector<InvariantSeries> windows;
  double sum_drifts = 0.0;
  double sum_jumps = 0.0;
  double max_drift = 0.0;
  double max_E_minus_H = 0.0;
  double total_deviation = 0.0;  // |E at the end of the last window - E at the start of the first|
};

struct TrackOptions {
  std::size_t samples_per_window = 8;
  std::size_t threads = 0;  // 0: hardware concurrency
  double reference_step = 0.0;  // 0: 0.001 * eps
};

/// Constructs one expansion per window [m eps^alpha, (m+1) eps^alpha] from the exact solution
/// (accurate reference integration) and records the almost-invariant against H_omega.
InvariantTrack track_invariant(std::shared_ptr<const MfeContext> ctx, const PhaseState& state0, std::size_t windows,
                               const TrackOptions& options = {});

}  // namespace oscisep
