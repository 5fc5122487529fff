#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace oscisep {

/// Integer vector k in Z^n with cached l1 norm.
class MultiIndex {
 public:
  MultiIndex() = default;
  explicit MultiIndex(std::size_t n) : k_(n, 0) {}
  explicit MultiIndex(std::vector<int> k);
  MultiIndex(std::initializer_list<int> k) : MultiIndex(std::vector<int>(k)) {}

  /// j-th unit vector, j = 1..n.
  static MultiIndex unit(std::size_t n, std::size_t j);

  std::size_t size() const { return k_.size(); }
  int operator[](std::size_t i) const { return k_[i]; }
  const std::vector<int>& components() const { return k_; }
  int norm() const { return norm_; }
  bool is_zero() const { return norm_ == 0; }

  double dot(std::span<const double> w) const;

  MultiIndex operator-() const;
  MultiIndex operator+(const MultiIndex& o) const;
  MultiIndex operator-(const MultiIndex& o) const;

  bool operator==(const MultiIndex& o) const { return k_ == o.k_; }
  std::strong_ordering operator<=>(const MultiIndex& o) const { return k_ <=> o.k_; }

  std::string str() const;

 private:
  std::vector<int> k_;
  int norm_ = 0;
};

struct MultiIndexHash {
  std::size_t operator()(const MultiIndex& k) const;
};

/// All k in Z^n with |k| <= r, in lexicographic order.
std::vector<MultiIndex> enumerate_multi_indices(std::size_t n, int r);

struct GapResult {
  double alpha = 0.0;
  double mu = 0.0;
  std::size_t M_count = 0;
  std::vector<double> occupied;  // log_{1/eps} |k.omega| over |k| <= N+1, k.omega != 0
  // Largest interval around [alpha, alpha + mu] free of occupied values.
  double band_lo = 0.0;
  double band_hi = 0.0;

  double mu_eff() const { return band_hi - alpha; }
};

GapResult find_gap(std::span<const double> omega, double epsilon, int N);

/// {k : |k.omega| <= eps^-alpha, |k| <= N+1}. Lexicographic order, contains 0.
std::vector<MultiIndex> almost_resonant_set(std::span<const double> omega, double epsilon, double alpha, int N);

struct FrequencyModification {
  std::vector<MultiIndex> basis;
  std::vector<double> theta;
  std::vector<double> varpi;
};

/// Minimal Euclidean-norm theta with k.(omega + theta) = 0 on a maximal independent subset of R.
FrequencyModification modify_frequencies(std::span<const MultiIndex> R, std::span<const double> omega);

/// Sublattice of Z^n generated by a set of integer vectors, kept in row echelon form.
class IntegerModule {
 public:
  IntegerModule() = default;
  IntegerModule(std::size_t n, std::span<const MultiIndex> generators);

  std::size_t dimension() const { return n_; }
  std::size_t rank() const { return rows_.size(); }
  const std::vector<std::vector<std::int64_t>>& echelon_rows() const { return rows_; }
  const std::vector<std::size_t>& pivots() const { return pivots_; }

  bool contains(const MultiIndex& k) const;

  /// Canonical coset representative: pivot entries reduced into [0, pivot).
  std::vector<std::int64_t> reduce(const MultiIndex& k) const;

  bool equivalent(const MultiIndex& a, const MultiIndex& b) const { return contains(a - b); }

 private:
  std::size_t n_ = 0;
  std::vector<std::vector<std::int64_t>> rows_;
  std::vector<std::size_t> pivots_;
};

/// Thrown when a class modulo the module equals its own negative without containing 0,
/// so no negation-closed choice of minimal representatives exists.
class RepresentativeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minimal-norm representatives of the classes of {|k| <= N} modulo the module, negation-closed.
std::vector<MultiIndex> representatives(const IntegerModule& module, std::size_t n, int N);

struct ResonanceData {
  double epsilon = 0.0;
  int N = 1;
  std::vector<double> omega;  // omega_1..omega_n
  GapResult gap;
  std::vector<MultiIndex> R;
  std::vector<MultiIndex> basis;
  std::vector<double> theta;  // theta_1..theta_n
  std::vector<double> varpi;  // varpi_1..varpi_n
  IntegerModule module;
  std::vector<MultiIndex> K_set;
  double theta_norm_scaled = 0.0;

  std::size_t num_fast() const { return omega.size(); }
  /// Index 0 gives 0.
  double varpi_of(std::size_t j) const { return j == 0 ? 0.0 : varpi.at(j - 1); }
  double theta_of(std::size_t j) const { return j == 0 ? 0.0 : theta.at(j - 1); }
  double k_dot_varpi(const MultiIndex& k) const { return k.dot(varpi); }
  bool in_module(const MultiIndex& k) const { return module.contains(k); }
};

ResonanceData build_resonance(std::span<const double> omega, double epsilon, int N);

struct ResonanceChecks {
  bool gap_empty = false;
  double max_resonant_residual = 0.0;  // max over R of |k.varpi|
  double residual_tolerance = 0.0;     // 1e-8 / eps
  double min_nonresonant_ratio = 0.0;  // min over |k| <= N+1, k not in M of |k.varpi| / (eps^{-alpha-mu}/2)
  double theta_norm_scaled = 0.0;

  bool resonant_ok() const { return max_resonant_residual <= residual_tolerance; }
  bool nonresonant_ok() const { return min_nonresonant_ratio >= 1.0; }
  bool theta_ok() const { return theta_norm_scaled <= 10.0; }
  bool all() const { return gap_empty && resonant_ok() && nonresonant_ok() && theta_ok(); }
};

ResonanceChecks check_resonance(const ResonanceData& data);

}  // namespace oscisep
