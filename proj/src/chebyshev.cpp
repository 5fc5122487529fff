#include "oscisep/chebyshev.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace oscisep {

namespace {

// cos(pi * r / D) for r = 0..2D-1; entries (k*m mod 2D) cover all products needed.
const std::vector<double>& cos_table(std::size_t degree) {
  thread_local std::map<std::size_t, std::vector<double>> cache;
  auto it = cache.find(degree);
  if (it != cache.end()) return it->second;
  std::vector<double> t(2 * degree);
  for (std::size_t r = 0; r < 2 * degree; ++r) t[r] = std::cos(std::numbers::pi * static_cast<double>(r) / degree);
  return cache.emplace(degree, std::move(t)).first->second;
}

}  // namespace

ChebSeries::ChebSeries(std::size_t degree, std::size_t dim)
    : degree_(degree), dim_(dim), coeffs_((degree + 1) * dim, cplx(0.0, 0.0)) {}

std::vector<double> ChebSeries::nodes(std::size_t degree) {
  if (degree == 0) throw std::invalid_argument("ChebSeries::nodes: degree must be >= 1");
  std::vector<double> t(degree + 1);
  for (std::size_t i = 0; i <= degree; ++i)
    t[i] = 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(degree)));
  t[0] = 0.0;
  t[degree] = 1.0;
  return t;
}

ChebSeries ChebSeries::fit(std::size_t degree, std::size_t dim, std::span<const cplx> values) {
  if (degree == 0) throw std::invalid_argument("ChebSeries::fit: degree must be >= 1");
  if (values.size() != (degree + 1) * dim) throw std::invalid_argument("ChebSeries::fit: wrong number of values");
  const auto& ct = cos_table(degree);
  const std::size_t D = degree;
  ChebSeries s(D, dim);
  for (std::size_t k = 0; k <= D; ++k) {
    for (std::size_t m = 0; m <= D; ++m) {
      // node index i = D - m sits at x = cos(pi m / D)
      const double w = (m == 0 || m == D) ? 0.5 : 1.0;
      const double c = w * ct[(k * m) % (2 * D)];
      const cplx* v = values.data() + (D - m) * dim;
      for (std::size_t d = 0; d < dim; ++d) s.coeff(k, d) += c * v[d];
    }
    const double scale = (k == 0 || k == D) ? 1.0 / D : 2.0 / D;
    for (std::size_t d = 0; d < dim; ++d) s.coeff(k, d) *= scale;
  }
  return s;
}

ChebSeries ChebSeries::constant(std::size_t degree, std::span<const cplx> value) {
  ChebSeries s(degree, value.size());
  for (std::size_t d = 0; d < value.size(); ++d) s.coeff(0, d) = value[d];
  return s;
}

void ChebSeries::evaluate(double tau, std::span<cplx> out) const {
  if (out.size() != dim_) throw std::invalid_argument("ChebSeries::evaluate: output size mismatch");
  const double x = 2.0 * tau - 1.0;
  for (std::size_t d = 0; d < dim_; ++d) {
    cplx b1 = 0.0, b2 = 0.0;
    for (std::size_t k = degree_; k >= 1; --k) {
      const cplx b0 = coeff(k, d) + 2.0 * x * b1 - b2;
      b2 = b1;
      b1 = b0;
    }
    out[d] = coeff(0, d) + x * b1 - b2;
  }
}

std::vector<cplx> ChebSeries::operator()(double tau) const {
  std::vector<cplx> v(dim_);
  evaluate(tau, v);
  return v;
}

std::vector<cplx> ChebSeries::node_values() const {
  const std::size_t D = degree_;
  const auto& ct = cos_table(D);
  std::vector<cplx> v((D + 1) * dim_, cplx(0.0, 0.0));
  for (std::size_t m = 0; m <= D; ++m) {
    cplx* out = v.data() + (D - m) * dim_;
    for (std::size_t k = 0; k <= D; ++k) {
      const double c = ct[(k * m) % (2 * D)];
      for (std::size_t d = 0; d < dim_; ++d) out[d] += c * coeff(k, d);
    }
  }
  return v;
}

ChebSeries ChebSeries::derivative() const {
  const std::size_t D = degree_;
  ChebSeries r(D, dim_);
  if (D == 0) return r;
  for (std::size_t d = 0; d < dim_; ++d) {
    cplx next2 = 0.0;                                  // c'_{k+1}
    cplx next1 = 2.0 * static_cast<double>(D) * coeff(D, d);  // c'_{D-1}
    r.coeff(D - 1, d) = next1;
    for (std::size_t k = D - 1; k >= 1; --k) {
      const cplx c = next2 + 2.0 * static_cast<double>(k) * coeff(k, d);  // c'_{k-1}
      r.coeff(k - 1, d) = c;
      next2 = next1;
      next1 = c;
    }
    r.coeff(0, d) *= 0.5;
    for (std::size_t k = 0; k < D; ++k) r.coeff(k, d) *= 2.0;
  }
  return r;
}

ChebSeries ChebSeries::antiderivative() const {
  const std::size_t D = degree_;
  ChebSeries r(D + 1, dim_);
  for (std::size_t d = 0; d < dim_; ++d) {
    auto c = [&](std::size_t k) -> cplx {
      if (k > D) return 0.0;
      return k == 0 ? 2.0 * coeff(0, d) : coeff(k, d);
    };
    cplx at_minus_one = 0.0;
    for (std::size_t k = 1; k <= D + 1; ++k) {
      const cplx b = 0.5 * (c(k - 1) - c(k + 1)) / (2.0 * static_cast<double>(k));
      r.coeff(k, d) = b;
      at_minus_one += (k % 2 == 0) ? b : -b;
    }
    r.coeff(0, d) = -at_minus_one;
  }
  return r;
}

ChebSeries ChebSeries::with_degree(std::size_t degree) const {
  ChebSeries r(degree, dim_);
  for (std::size_t k = 0; k <= std::min(degree, degree_); ++k)
    for (std::size_t d = 0; d < dim_; ++d) r.coeff(k, d) = coeff(k, d);
  return r;
}

ChebSeries ChebSeries::chopped(double rel_tol) const {
  ChebSeries r(*this);
  const double floor = rel_tol * max_abs_coeff();
  std::size_t keep = 0;
  for (std::size_t k = 0; k <= degree_; ++k)
    for (std::size_t d = 0; d < dim_; ++d)
      if (std::abs(coeff(k, d)) > floor) keep = k;
  for (std::size_t k = keep + 1; k <= degree_; ++k)
    for (std::size_t d = 0; d < dim_; ++d) r.coeff(k, d) = 0.0;
  return r;
}

std::size_t ChebSeries::effective_degree() const {
  std::size_t deg = 0;
  for (std::size_t k = 0; k <= degree_; ++k)
    for (std::size_t d = 0; d < dim_; ++d)
      if (coeff(k, d) != cplx(0.0, 0.0)) deg = k;
  return deg;
}

double ChebSeries::max_abs_coeff() const {
  double m = 0.0;
  for (const auto& c : coeffs_) m = std::max(m, std::abs(c));
  return m;
}

double ChebSeries::tail_ratio() const {
  const double top = max_abs_coeff();
  if (top == 0.0) return 0.0;
  const std::size_t count = std::max<std::size_t>(1, (degree_ + 1) / 10);
  double tail = 0.0;
  for (std::size_t k = degree_ + 1 - count; k <= degree_; ++k)
    for (std::size_t d = 0; d < dim_; ++d) tail = std::max(tail, std::abs(coeff(k, d)));
  return tail / top;
}

ChebSeries ChebSeries::conj() const {
  ChebSeries r(*this);
  for (auto& c : r.coeffs_) c = std::conj(c);
  return r;
}

void ChebSeries::require_same_shape(const ChebSeries& o) const {
  if (o.degree_ != degree_ || o.dim_ != dim_) throw std::invalid_argument("ChebSeries: shape mismatch");
}

ChebSeries& ChebSeries::operator+=(const ChebSeries& o) {
  require_same_shape(o);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
  return *this;
}

ChebSeries& ChebSeries::operator-=(const ChebSeries& o) {
  require_same_shape(o);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
  return *this;
}

ChebSeries& ChebSeries::operator*=(cplx s) {
  for (auto& c : coeffs_) c *= s;
  return *this;
}

}  // namespace oscisep
