#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "oscisep/block_vector.hpp"

namespace oscisep::kernels {
struct KernelTable;
}

namespace oscisep {

/// Dense real multilinear form on R^{d_{j_1}} x ... x R^{d_{j_m}}, row-major in the slots.
/// Evaluation extends to complex arguments by multilinearity.
class MultilinearForm {
 public:
  MultilinearForm() = default;
  MultilinearForm(std::vector<std::size_t> slot_dims, std::vector<double> entries);

  std::size_t order() const { return slot_dims_.size(); }
  const std::vector<std::size_t>& slot_dims() const { return slot_dims_; }
  std::span<const double> entries() const { return entries_; }

  double at(std::span<const std::size_t> index) const;
  cplx evaluate(std::span<const std::span<const cplx>> args) const;
  bool is_zero() const;

 private:
  std::vector<std::size_t> slot_dims_;
  std::vector<double> entries_;
};

/// Coupling potential U(q) with access to derivatives at arbitrary order.
///
/// Derivatives are exposed as contractions D^m U(base)[v_1, ..., v_m] with complex
/// full-space arguments; `derivative_form` builds the per-block tensor from them.
class Potential {
 public:
  virtual ~Potential() = default;

  virtual double value(const BlockVector& q) const = 0;

  /// Hot path used by the integrators: grad must have the same flat size as q.
  virtual void gradient(std::span<const double> q, std::span<double> grad) const = 0;

  /// Largest m for which `contract`/`contract_gradient` are available. Polynomials report
  /// an unbounded order because all higher forms vanish.
  virtual int max_derivative_order() const = 0;

  /// D^m U(base)[args...] with m = args.size() >= 1.
  virtual cplx contract(const BlockVector& base, std::span<const ComplexBlockVector* const> args) const = 0;

  /// The gradient of q -> D^m U(q)[args...] at base, i.e. D^{m+1} U(base)[., args...].
  /// m = 0 gives the ordinary gradient. `out` is overwritten.
  virtual void contract_gradient(const BlockVector& base, std::span<const ComplexBlockVector* const> args,
                                 ComplexBlockVector& out) const = 0;

  virtual std::string describe() const = 0;

  BlockVector gradient(const BlockVector& q) const;
  std::vector<double> gradient(const BlockVector& q, std::size_t j) const;

  /// Partial derivative d_{j_1} ... d_{j_m} U(base) as a multilinear form.
  MultilinearForm derivative_form(const BlockVector& base, std::span<const std::size_t> blocks) const;
};

enum class RidgeProfile { cubic, cosine };

/// U(q) = (k/2)|q_0|^2 + f(c . q) with f(s) = s^3 or f(s) = cos(s).
///
/// All derivative forms have closed form: D^m f(c.q)[v_1..v_m] = f^(m)(S) prod (c . v_i).
class RidgePotential final : public Potential {
 public:
  RidgePotential(BlockLayout layout, double slow_stiffness, std::vector<double> coefficients,
                 RidgeProfile profile = RidgeProfile::cubic);

  double value(const BlockVector& q) const override;
  void gradient(std::span<const double> q, std::span<double> grad) const override;
  using Potential::gradient;
  int max_derivative_order() const override { return std::numeric_limits<int>::max(); }
  cplx contract(const BlockVector& base, std::span<const ComplexBlockVector* const> args) const override;
  void contract_gradient(const BlockVector& base, std::span<const ComplexBlockVector* const> args,
                         ComplexBlockVector& out) const override;
  std::string describe() const override;

  const std::vector<double>& coefficients() const { return coeffs_; }
  double slow_stiffness() const { return slow_stiffness_; }

 private:
  double profile_derivative(double s, std::size_t m) const;
  double ridge(std::span<const double> q) const;
  cplx ridge(const ComplexBlockVector& v) const;

  BlockLayout layout_;
  std::size_t slow_dim_;
  double slow_stiffness_;
  std::vector<double> coeffs_;
  RidgeProfile profile_;
  const kernels::KernelTable* kernels_;
};

/// U == 0.
class ZeroPotential final : public Potential {
 public:
  explicit ZeroPotential(BlockLayout layout) : layout_(std::move(layout)) {}
  double value(const BlockVector&) const override { return 0.0; }
  void gradient(std::span<const double>, std::span<double> grad) const override;
  using Potential::gradient;
  int max_derivative_order() const override { return std::numeric_limits<int>::max(); }
  cplx contract(const BlockVector&, std::span<const ComplexBlockVector* const>) const override { return 0.0; }
  void contract_gradient(const BlockVector&, std::span<const ComplexBlockVector* const>,
                         ComplexBlockVector& out) const override;
  std::string describe() const override { return "zero"; }

 private:
  BlockLayout layout_;
};

/// U(q) = q_0^2/2 + (a q_0 + q_1 + q_2 + 2 q_3 + 3 q_4 + q_5 + q_6 + 3 q_7)^3 on scalar blocks.
std::shared_ptr<const Potential> example_potential(double a);

/// Coupling weights (1, 1, 2, 3, 1, 1, 3) of the fast blocks in the example potential.
const std::vector<double>& example_coupling();

/// Static description of the oscillatory system.
struct SystemConfig {
  BlockLayout layout;
  double epsilon = 0.0;
  std::vector<double> omega;  // omega_1..omega_n; omega_0 = 0 is implied
  std::shared_ptr<const Potential> potential;
  double monitor_radius = 10.0;

  std::size_t num_fast() const { return omega.size(); }
  /// omega_j with omega_0 = 0.
  double frequency(std::size_t j) const { return j == 0 ? 0.0 : omega.at(j - 1); }
  /// Per flat component frequency, used by the kernels.
  std::vector<double> component_frequencies() const;

  /// Throws std::invalid_argument on violated invariants.
  void validate() const;
};

struct EnergyBreakdown {
  std::vector<double> per_mode;  // E_1..E_n
  double oscillatory = 0.0;
  double slow = 0.0;
  double total = 0.0;
};

/// Block j: -omega_j^2 q_j - grad_j U(q).
BlockVector acceleration(const BlockVector& q, const SystemConfig& config);

EnergyBreakdown energies(const BlockVector& p, const BlockVector& q, const SystemConfig& config);

/// H_omega only (no potential evaluation).
double oscillatory_energy(const BlockVector& p, const BlockVector& q, const SystemConfig& config);

}  // namespace oscisep
