#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "oscisep/block_vector.hpp"

namespace oscisep {

/// Complex vector-valued Chebyshev series on tau in [0, 1] (x = 2 tau - 1).
/// Coefficients are stored degree-major: coeff(i, c) is the degree-i coefficient of component c.
class ChebSeries {
 public:
  ChebSeries() = default;
  /// Zero series of the given degree and dimension.
  ChebSeries(std::size_t degree, std::size_t dim);

  /// Lobatto nodes tau_i = (1 - cos(pi i / D)) / 2, i = 0..D, ascending.
  static std::vector<double> nodes(std::size_t degree);

  /// Interpolant through values at nodes(degree); values[i * dim + c].
  static ChebSeries fit(std::size_t degree, std::size_t dim, std::span<const cplx> values);

  static ChebSeries constant(std::size_t degree, std::span<const cplx> value);

  std::size_t degree() const { return degree_; }
  std::size_t dim() const { return dim_; }
  cplx coeff(std::size_t i, std::size_t c) const { return coeffs_[i * dim_ + c]; }
  cplx& coeff(std::size_t i, std::size_t c) { return coeffs_[i * dim_ + c]; }

  void evaluate(double tau, std::span<cplx> out) const;
  std::vector<cplx> operator()(double tau) const;

  /// Values at nodes(degree()), node-major.
  std::vector<cplx> node_values() const;

  /// d/dtau, same degree (top coefficient zero).
  ChebSeries derivative() const;
  /// Antiderivative vanishing at tau = 0; degree grows by one.
  ChebSeries antiderivative() const;
  /// Zeroes every degree above the last one whose largest coefficient exceeds rel_tol * max_abs_coeff().
  ChebSeries chopped(double rel_tol) const;
  /// Highest degree with a nonzero coefficient.
  std::size_t effective_degree() const;
  /// Drops or zero-pads coefficients.
  ChebSeries with_degree(std::size_t degree) const;

  /// max |coefficient| over the top 10% of degrees divided by the overall max (0 for the zero series).
  double tail_ratio() const;
  double max_abs_coeff() const;

  ChebSeries conj() const;
  ChebSeries& operator+=(const ChebSeries& o);
  ChebSeries& operator-=(const ChebSeries& o);
  ChebSeries& operator*=(cplx s);
  friend ChebSeries operator+(ChebSeries a, const ChebSeries& b) { return a += b; }
  friend ChebSeries operator-(ChebSeries a, const ChebSeries& b) { return a -= b; }
  friend ChebSeries operator*(cplx s, ChebSeries a) { return a *= s; }

 private:
  void require_same_shape(const ChebSeries& o) const;

  std::size_t degree_ = 0;
  std::size_t dim_ = 0;
  std::vector<cplx> coeffs_;
};

}  // namespace oscisep
