#include "oscisep/resonance.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

namespace oscisep {

MultiIndex::MultiIndex(std::vector<int> k) : k_(std::move(k)) {
  for (int v : k_) norm_ += std::abs(v);
}

MultiIndex MultiIndex::unit(std::size_t n, std::size_t j) {
  if (j == 0 || j > n) throw std::out_of_range("MultiIndex::unit: j must be in 1..n");
  std::vector<int> k(n, 0);
  k[j - 1] = 1;
  return MultiIndex(std::move(k));
}

double MultiIndex::dot(std::span<const double> w) const {
  if (w.size() != k_.size()) throw std::invalid_argument("MultiIndex::dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < k_.size(); ++i)
    if (k_[i] != 0) s += k_[i] * w[i];
  return s;
}

MultiIndex MultiIndex::operator-() const {
  std::vector<int> r(k_);
  for (int& v : r) v = -v;
  return MultiIndex(std::move(r));
}

MultiIndex MultiIndex::operator+(const MultiIndex& o) const {
  if (o.size() != size()) throw std::invalid_argument("MultiIndex: length mismatch");
  std::vector<int> r(k_);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += o.k_[i];
  return MultiIndex(std::move(r));
}

MultiIndex MultiIndex::operator-(const MultiIndex& o) const { return *this + (-o); }

std::string MultiIndex::str() const {
  std::string s = "(";
  for (std::size_t i = 0; i < k_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(k_[i]);
  }
  return s + ")";
}

std::size_t MultiIndexHash::operator()(const MultiIndex& k) const {
  std::size_t h = k.size();
  for (int v : k.components()) h ^= std::hash<int>{}(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

std::vector<MultiIndex> enumerate_multi_indices(std::size_t n, int r) {
  if (n == 0) throw std::invalid_argument("enumerate_multi_indices: n must be >= 1");
  if (r < 0) throw std::invalid_argument("enumerate_multi_indices: r must be >= 0");
  std::vector<MultiIndex> out;
  std::vector<int> k(n, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
    if (i == n) {
      out.emplace_back(k);
      return;
    }
    for (int v = -left; v <= left; ++v) {
      k[i] = v;
      rec(i + 1, left - std::abs(v));
    }
    k[i] = 0;
  };
  rec(0, r);
  return out;
}

GapResult find_gap(std::span<const double> omega, double epsilon, int N) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("find_gap: epsilon must lie in (0, 1)");
  if (N < 0) throw std::invalid_argument("find_gap: N must be >= 0");
  const auto ks = enumerate_multi_indices(omega.size(), N + 1);
  GapResult g;
  g.M_count = ks.size();
  g.mu = 1.0 / (4.0 * static_cast<double>(g.M_count) + 4.0);
  const double log_inv_eps = std::log(1.0 / epsilon);
  for (const auto& k : ks) {
    const double v = std::abs(k.dot(omega));
    if (v == 0.0) continue;
    g.occupied.push_back(std::log(v) / log_inv_eps);
  }
  std::sort(g.occupied.begin(), g.occupied.end());

  auto empty = [&](double lo, double hi) {
    auto it = std::lower_bound(g.occupied.begin(), g.occupied.end(), lo);
    return it == g.occupied.end() || *it > hi;
  };
  bool found = false;
  for (std::size_t i = 1;; ++i) {
    const double lo = static_cast<double>(i) * g.mu;
    const double hi = lo + g.mu;
    if (hi > 0.25 + 1e-15) break;
    if (empty(lo, hi)) {
      g.alpha = lo;
      found = true;
      break;
    }
  }
  if (!found) throw std::logic_error("find_gap: no free slot in [mu, 1/4]");

  auto above = std::upper_bound(g.occupied.begin(), g.occupied.end(), g.alpha + g.mu);
  g.band_hi = above == g.occupied.end() ? 1.0 : *above;
  auto below = std::lower_bound(g.occupied.begin(), g.occupied.end(), g.alpha);
  g.band_lo = below == g.occupied.begin() ? 0.0 : std::max(0.0, *std::prev(below));
  return g;
}

std::vector<MultiIndex> almost_resonant_set(std::span<const double> omega, double epsilon, double alpha, int N) {
  const double bound = std::pow(epsilon, -alpha);
  std::vector<MultiIndex> R;
  for (auto& k : enumerate_multi_indices(omega.size(), N + 1))
    if (std::abs(k.dot(omega)) <= bound) R.push_back(std::move(k));
  return R;
}

FrequencyModification modify_frequencies(std::span<const MultiIndex> R, std::span<const double> omega) {
  const std::size_t n = omega.size();
  FrequencyModification out;
  std::vector<Eigen::VectorXd> ortho;
  for (const auto& k : R) {
    if (k.is_zero()) continue;
    if (k.size() != n) throw std::invalid_argument("modify_frequencies: multi-index length mismatch");
    Eigen::VectorXd v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = k[i];
    const double scale = v.norm();
    for (const auto& u : ortho) v -= u.dot(v) * u;
    if (v.norm() > 1e-9 * scale) {
      ortho.push_back(v / v.norm());
      out.basis.push_back(k);
    }
  }

  out.theta.assign(n, 0.0);
  if (!out.basis.empty()) {
    const auto d = static_cast<Eigen::Index>(out.basis.size());
    Eigen::MatrixXd B(d, static_cast<Eigen::Index>(n));
    Eigen::VectorXd rhs(d);
    for (Eigen::Index r = 0; r < d; ++r) {
      for (std::size_t i = 0; i < n; ++i) B(r, static_cast<Eigen::Index>(i)) = out.basis[r][i];
      rhs[r] = -out.basis[r].dot(omega);
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(B);
    if (cod.rank() != d) throw std::logic_error("modify_frequencies: selected basis is rank deficient");
    const Eigen::VectorXd theta = cod.solve(rhs);
    for (std::size_t i = 0; i < n; ++i) out.theta[i] = theta[static_cast<Eigen::Index>(i)];
  }
  out.varpi.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.varpi[i] = omega[i] + out.theta[i];
  return out;
}

namespace {

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("IntegerModule: 64-bit overflow");
  return r;
}

std::int64_t checked_sub(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_sub_overflow(a, b, &r)) throw std::overflow_error("IntegerModule: 64-bit overflow");
  return r;
}

// row -= q * other
void axpy_row(std::vector<std::int64_t>& row, const std::vector<std::int64_t>& other, std::int64_t q) {
  if (q == 0) return;
  for (std::size_t i = 0; i < row.size(); ++i) row[i] = checked_sub(row[i], checked_mul(q, other[i]));
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

IntegerModule::IntegerModule(std::size_t n, std::span<const MultiIndex> generators) : n_(n) {
  std::vector<std::vector<std::int64_t>> rows;
  for (const auto& g : generators) {
    if (g.size() != n) throw std::invalid_argument("IntegerModule: generator length mismatch");
    if (g.is_zero()) continue;
    rows.emplace_back(g.components().begin(), g.components().end());
  }

  std::size_t r = 0;
  for (std::size_t c = 0; c < n && r < rows.size(); ++c) {
    // Euclid on column c among rows r..end until a single nonzero entry remains.
    for (;;) {
      std::size_t best = rows.size();
      for (std::size_t i = r; i < rows.size(); ++i)
        if (rows[i][c] != 0 && (best == rows.size() || std::abs(rows[i][c]) < std::abs(rows[best][c]))) best = i;
      if (best == rows.size()) break;
      bool others = false;
      for (std::size_t i = r; i < rows.size(); ++i) {
        if (i == best || rows[i][c] == 0) continue;
        axpy_row(rows[i], rows[best], rows[i][c] / rows[best][c]);
        others = others || rows[i][c] != 0;
      }
      if (!others) {
        std::swap(rows[r], rows[best]);
        break;
      }
    }
    if (rows[r][c] == 0) continue;
    if (rows[r][c] < 0)
      for (auto& v : rows[r]) v = -v;
    for (std::size_t i = 0; i < r; ++i) axpy_row(rows[i], rows[r], floor_div(rows[i][c], rows[r][c]));
    pivots_.push_back(c);
    ++r;
  }
  rows.resize(r);
  rows_ = std::move(rows);
}

std::vector<std::int64_t> IntegerModule::reduce(const MultiIndex& k) const {
  if (k.size() != n_) throw std::invalid_argument("IntegerModule::reduce: length mismatch");
  std::vector<std::int64_t> v(k.components().begin(), k.components().end());
  for (std::size_t i = 0; i < rows_.size(); ++i) axpy_row(v, rows_[i], floor_div(v[pivots_[i]], rows_[i][pivots_[i]]));
  return v;
}

bool IntegerModule::contains(const MultiIndex& k) const {
  const auto v = reduce(k);
  return std::all_of(v.begin(), v.end(), [](std::int64_t x) { return x == 0; });
}

std::vector<MultiIndex> representatives(const IntegerModule& module, std::size_t n, int N) {
  std::map<std::vector<std::int64_t>, MultiIndex> best;  // coset key -> current representative
  for (auto& k : enumerate_multi_indices(n, N)) {
    auto key = module.reduce(k);
    auto it = best.find(key);
    if (it == best.end()) {
      best.emplace(std::move(key), std::move(k));
    } else if (k.norm() < it->second.norm() || (k.norm() == it->second.norm() && k > it->second)) {
      it->second = std::move(k);
    }
  }

  // Pair each class with its negative so that rep(-C) = -rep(C).
  std::map<std::vector<std::int64_t>, MultiIndex> chosen;
  std::vector<MultiIndex> order;
  for (const auto& [key, rep] : best) order.push_back(rep);
  std::sort(order.begin(), order.end(), [](const MultiIndex& a, const MultiIndex& b) {
    return a.norm() != b.norm() ? a.norm() < b.norm() : a > b;
  });
  for (const auto& rep : order) {
    const auto key = module.reduce(rep);
    if (chosen.count(key)) continue;
    const auto neg_key = module.reduce(-rep);
    if (neg_key == key) {
      if (!module.contains(rep))
        throw RepresentativeError("representatives: class of " + rep.str() +
                                  " equals its own negative but does not contain 0");
      chosen.emplace(key, MultiIndex(n));
      continue;
    }
    chosen.emplace(key, rep);
    chosen.emplace(neg_key, -rep);
  }

  std::vector<MultiIndex> out;
  for (auto& [key, rep] : chosen) out.push_back(rep);
  std::sort(out.begin(), out.end(), [](const MultiIndex& a, const MultiIndex& b) {
    return a.norm() != b.norm() ? a.norm() < b.norm() : a > b;
  });
  return out;
}

ResonanceData build_resonance(std::span<const double> omega, double epsilon, int N) {
  ResonanceData d;
  d.epsilon = epsilon;
  d.N = N;
  d.omega.assign(omega.begin(), omega.end());
  d.gap = find_gap(omega, epsilon, N);
  d.R = almost_resonant_set(omega, epsilon, d.gap.alpha, N);
  auto mod = modify_frequencies(d.R, omega);
  d.basis = std::move(mod.basis);
  d.theta = std::move(mod.theta);
  d.varpi = std::move(mod.varpi);
  d.module = IntegerModule(omega.size(), d.R);
  d.K_set = representatives(d.module, omega.size(), N);
  double t2 = 0.0;
  for (double t : d.theta) t2 += t * t;
  d.theta_norm_scaled = std::sqrt(t2) * std::pow(epsilon, d.gap.alpha);
  return d;
}

ResonanceChecks check_resonance(const ResonanceData& data) {
  ResonanceChecks c;
  const double eps = data.epsilon;
  const double alpha = data.gap.alpha;
  const double mu = data.gap.mu;
  const auto all = enumerate_multi_indices(data.num_fast(), data.N + 1);

  // (i) recompute the log-values rather than trusting the stored list
  c.gap_empty = true;
  for (const auto& k : all) {
    const double v = std::abs(k.dot(data.omega));
    if (v == 0.0) continue;
    const double a = std::log(v) / std::log(1.0 / eps);
    if (a >= alpha && a <= alpha + mu) c.gap_empty = false;
  }

  c.residual_tolerance = 1e-8 / eps;
  for (const auto& k : data.R) c.max_resonant_residual = std::max(c.max_resonant_residual, std::abs(data.k_dot_varpi(k)));

  const double lower = 0.5 * std::pow(eps, -alpha - mu);
  c.min_nonresonant_ratio = std::numeric_limits<double>::infinity();
  for (const auto& k : all) {
    if (data.in_module(k)) continue;
    c.min_nonresonant_ratio = std::min(c.min_nonresonant_ratio, std::abs(data.k_dot_varpi(k)) / lower);
  }
  c.theta_norm_scaled = data.theta_norm_scaled;
  return c;
}

}  // namespace oscisep
