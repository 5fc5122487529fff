#include "oscisep/mfe.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include "oscisep/integrator.hpp"

namespace oscisep {

namespace {

double factorial(int m) {
  double f = 1.0;
  for (int i = 2; i <= m; ++i) f *= i;
  return f;
}

double vec_abs(std::span<const cplx> v) {
  double s = 0.0;
  for (const auto& x : v) s += std::norm(x);
  return std::sqrt(s);
}

}  // namespace

MfeContext::MfeContext(SystemConfig system, ResonanceData resonance, MfeOptions options)
    : system_(std::move(system)), resonance_(std::move(resonance)), options_(options) {
  system_.validate();
  if (options_.N < 0) throw std::invalid_argument("MfeContext: N must be >= 0");
  if (options_.N != resonance_.N) throw std::invalid_argument("MfeContext: resonance data built for a different N");
  if (options_.degree < 4) throw std::invalid_argument("MfeContext: Chebyshev degree must be >= 4");
  if (resonance_.num_fast() != system_.num_fast())
    throw std::invalid_argument("MfeContext: resonance data and system disagree on n");
  if (system_.potential->max_derivative_order() < options_.N + 2)
    throw MfeError("MfeContext: potential provides derivatives up to order " +
                   std::to_string(system_.potential->max_derivative_order()) + ", need " +
                   std::to_string(options_.N + 2));

  window_ = std::pow(system_.epsilon, alpha());
  const auto& K = resonance_.K_set;
  const std::size_t n = system_.num_fast();

  std::map<MultiIndex, std::size_t> index;
  for (std::size_t i = 0; i < K.size(); ++i) index.emplace(K[i], i);
  auto zero_it = index.find(MultiIndex(n));
  if (zero_it == index.end()) throw std::logic_error("MfeContext: representatives do not contain 0");
  zero_ = zero_it->second;
  neg_.resize(K.size());
  freq_.resize(K.size());
  for (std::size_t i = 0; i < K.size(); ++i) {
    auto it = index.find(-K[i]);
    if (it == index.end()) throw std::logic_error("MfeContext: representatives not closed under negation");
    neg_[i] = it->second;
    freq_[i] = resonance_.k_dot_varpi(K[i]);
  }

  // class key -> representative index
  std::map<std::vector<std::int64_t>, std::size_t> class_of;
  for (std::size_t i = 0; i < K.size(); ++i) class_of.emplace(resonance_.module.reduce(K[i]), i);

  kappa_.assign(n + 1, 0);
  shift_.assign(n + 1, 0.0);
  for (std::size_t j = 1; j <= n; ++j) {
    auto it = class_of.find(resonance_.module.reduce(MultiIndex::unit(n, j)));
    if (it == class_of.end()) throw std::logic_error("MfeContext: no representative for a unit vector");
    kappa_[j] = it->second;
    const double vp = resonance_.varpi_of(j);
    const double th = resonance_.theta_of(j);
    shift_[j] = 2.0 * vp * th - th * th;
  }

  for (std::size_t j = 0; j <= n; ++j)
    for (std::size_t i = 0; i < K.size(); ++i)
      if (classify(j, i) == MfeCase::explicit_update && divisor(j, i) == 0.0)
        throw MfeError("MfeContext: vanishing divisor for block " + std::to_string(j) + ", k = " + K[i].str());

  // Ordered tuples of modes; the sum's class picks the target.
  const int N = options_.N;
  std::vector<std::size_t> tuple;
  std::function<void(int, int, const MultiIndex&)> rec = [&](int m, int depth, const MultiIndex& sum) {
    if (depth == m) {
      const double w = 1.0 / factorial(m);
      if (m <= N) {
        auto it = class_of.find(resonance_.module.reduce(sum));
        if (it != class_of.end()) terms_.push_back({tuple, it->second, w, false});
      } else if (resonance_.module.contains(sum)) {
        terms_.push_back({tuple, zero_, w, true});
      }
      return;
    }
    for (std::size_t i = 0; i < K.size(); ++i) {
      tuple.push_back(i);
      rec(m, depth + 1, sum + K[i]);
      tuple.pop_back();
    }
  };
  for (int m = 0; m <= N + 1; ++m) rec(m, 0, MultiIndex(n));
}

std::optional<std::size_t> MfeContext::mode_index(const MultiIndex& k) const {
  const auto& K = resonance_.K_set;
  for (std::size_t i = 0; i < K.size(); ++i)
    if (K[i] == k) return i;
  return std::nullopt;
}

MfeCase MfeContext::classify(std::size_t j, std::size_t i) const {
  if (j == 0) return i == zero_ ? MfeCase::slow : MfeCase::explicit_update;
  if (i == kappa_[j] || i == neg_[kappa_[j]]) return MfeCase::diagonal;
  return MfeCase::explicit_update;
}

int MfeContext::diagonal_sign(std::size_t j, std::size_t i) const {
  if (j == 0) return 0;
  if (i == kappa_[j]) return 1;
  if (i == neg_[kappa_[j]]) return -1;
  return 0;
}

double MfeContext::divisor(std::size_t j, std::size_t i) const {
  const double vp = resonance_.varpi_of(j);
  return vp * vp - freq_[i] * freq_[i];
}

int MfeContext::max_sweeps() const {
  if (options_.max_sweeps > 0) return options_.max_sweeps;
  const double mu_eff = resonance_.gap.mu_eff();
  const double budget = std::ceil((options_.N + 1) / mu_eff);
  return static_cast<int>(std::min(budget, 2000.0));
}

double MfeContext::target_defect() const {
  if (options_.target_defect > 0.0) return options_.target_defect;
  return std::pow(epsilon(), options_.N + 1);
}

ModulationSet::ModulationSet(std::shared_ptr<const MfeContext> ctx, double t0, PhaseState initial)
    : ctx_(std::move(ctx)), t0_(t0), initial_(std::move(initial)) {
  const std::size_t nb = ctx_->num_blocks();
  z_.reserve(nb * ctx_->num_modes());
  for (std::size_t i = 0; i < ctx_->num_modes(); ++i)
    for (std::size_t j = 0; j < nb; ++j) z_.emplace_back(ctx_->options().degree, ctx_->dim(j));
}

double ModulationSet::conjugate_symmetry_error() const {
  double err = 0.0;
  for (std::size_t i = 0; i < ctx_->num_modes(); ++i) {
    const std::size_t ni = ctx_->negated(i);
    for (std::size_t j = 0; j < ctx_->num_blocks(); ++j) {
      const auto a = at(j, i).node_values();
      const auto b = at(j, ni).node_values();
      for (std::size_t r = 0; r < a.size(); ++r) err = std::max(err, std::abs(a[r] - std::conj(b[r])));
    }
  }
  return err;
}

namespace {

// Node values of z, dz/dtau and d^2z/dtau^2 for every (j, i).
struct NodeData {
  std::size_t nodes = 0;
  std::vector<std::vector<cplx>> v, d1, d2;  // index i * nb + j, node-major
};

NodeData node_data(const ModulationSet& z) {
  const auto& ctx = z.context();
  const std::size_t nb = ctx.num_blocks();
  NodeData nd;
  nd.nodes = ctx.options().degree + 1;
  const std::size_t count = nb * ctx.num_modes();
  nd.v.resize(count);
  nd.d1.resize(count);
  nd.d2.resize(count);
  for (std::size_t i = 0; i < ctx.num_modes(); ++i)
    for (std::size_t j = 0; j < nb; ++j) {
      const auto& s = z.at(j, i);
      const auto ds = s.derivative();
      nd.v[i * nb + j] = s.node_values();
      nd.d1[i * nb + j] = ds.node_values();
      nd.d2[i * nb + j] = ds.derivative().node_values();
    }
  return nd;
}

// Gradient of the modulation potential given the values of all z at one point.
// value(j, i) returns the span of z_j^{k_i}.
std::vector<ComplexBlockVector> gradient_from_values(const MfeContext& ctx,
                                                     const std::function<std::span<const cplx>(std::size_t, std::size_t)>& value) {
  const auto& layout = ctx.system().layout;
  const std::size_t nb = ctx.num_blocks();
  const std::size_t nm = ctx.num_modes();

  BlockVector base(layout);
  {
    auto z00 = value(0, ctx.zero_mode());
    for (std::size_t c = 0; c < z00.size(); ++c) base.block(0)[c] = z00[c].real();
  }
  std::vector<ComplexBlockVector> Z(nm, ComplexBlockVector(layout));
  for (std::size_t i = 0; i < nm; ++i)
    for (std::size_t j = 0; j < nb; ++j) {
      if (j == 0 && i == ctx.zero_mode()) continue;
      auto src = value(j, i);
      std::copy(src.begin(), src.end(), Z[i].block(j).begin());
    }

  std::vector<ComplexBlockVector> F(nm, ComplexBlockVector(layout));
  ComplexBlockVector out(layout);
  std::vector<const ComplexBlockVector*> args;
  const auto& U = *ctx.system().potential;
  for (const auto& term : ctx.terms()) {
    args.clear();
    for (std::size_t i : term.modes) args.push_back(&Z[i]);
    U.contract_gradient(base, args, out);
    auto& dst = F[term.target];
    const std::size_t end = term.slow_only ? layout.dim(0) : layout.size();
    for (std::size_t r = 0; r < end; ++r) dst[r] += term.weight * out[r];
  }
  return F;
}

std::vector<std::vector<ComplexBlockVector>> gradient_at_nodes(const MfeContext& ctx, const NodeData& nd) {
  const std::size_t nb = ctx.num_blocks();
  std::vector<std::vector<ComplexBlockVector>> F(nd.nodes);
  for (std::size_t r = 0; r < nd.nodes; ++r) {
    F[r] = gradient_from_values(ctx, [&](std::size_t j, std::size_t i) {
      const std::size_t d = ctx.dim(j);
      return std::span<const cplx>(nd.v[i * nb + j].data() + r * d, d);
    });
  }
  return F;
}

std::vector<cplx> eval_vec(const ChebSeries& s, double tau) { return s(tau); }

}  // namespace

std::vector<ComplexBlockVector> modulation_potential_gradient(const ModulationSet& z, double tau) {
  const auto& ctx = z.context();
  const std::size_t nb = ctx.num_blocks();
  std::vector<std::vector<cplx>> vals(nb * ctx.num_modes());
  for (std::size_t i = 0; i < ctx.num_modes(); ++i)
    for (std::size_t j = 0; j < nb; ++j) vals[i * nb + j] = eval_vec(z.at(j, i), tau);
  return gradient_from_values(ctx, [&](std::size_t j, std::size_t i) {
    return std::span<const cplx>(vals[i * nb + j]);
  });
}

std::vector<cplx> modulation_potential_gradient(const ModulationSet& z, std::size_t j, const MultiIndex& k,
                                                double tau) {
  const auto idx = z.context().mode_index(k);
  if (!idx) throw std::invalid_argument("modulation_potential_gradient: " + k.str() + " is not a representative");
  const auto F = modulation_potential_gradient(z, tau);
  auto b = F[*idx].block(j);
  return {b.begin(), b.end()};
}

ModulationSet starting_iterate(std::shared_ptr<const MfeContext> ctx_ptr, const PhaseState& state0, double t0) {
  const auto& ctx = *ctx_ptr;
  const auto& sys = ctx.system();
  state0.q.require_layout(sys.layout, "starting_iterate(q)");
  state0.p.require_layout(sys.layout, "starting_iterate(p)");
  ModulationSet z(ctx_ptr, t0, state0);
  const std::size_t D = ctx.options().degree;
  const auto tau = ChebSeries::nodes(D);
  const double L = ctx.window();

  // Slow subsystem y'' = -grad_0 U(y, 0, ..., 0) by RK4 through the node times.
  const std::size_t d0 = sys.layout.dim(0);
  BlockVector qfull(sys.layout);
  std::vector<double> grad(sys.layout.size());
  auto accel = [&](const std::vector<double>& y, std::vector<double>& a) {
    std::copy(y.begin(), y.end(), qfull.block(0).begin());
    sys.potential->gradient(qfull.flat(), grad);
    for (std::size_t c = 0; c < d0; ++c) a[c] = -grad[c];
  };
  std::vector<double> y(state0.q.block(0).begin(), state0.q.block(0).end());
  std::vector<double> v(state0.p.block(0).begin(), state0.p.block(0).end());
  std::vector<cplx> samples((D + 1) * d0);
  std::vector<double> k1y(d0), k1v(d0), k2y(d0), k2v(d0), k3y(d0), k3v(d0), k4y(d0), k4v(d0), tmp(d0), a(d0);
  for (std::size_t r = 0; r <= D; ++r) {
    if (r > 0) {
      const double h = L * (tau[r] - tau[r - 1]) / static_cast<double>(ctx.options().slow_substeps);
      for (std::size_t s = 0; s < ctx.options().slow_substeps; ++s) {
        accel(y, a);
        k1y = v;
        k1v = a;
        for (std::size_t c = 0; c < d0; ++c) tmp[c] = y[c] + 0.5 * h * k1y[c];
        accel(tmp, a);
        for (std::size_t c = 0; c < d0; ++c) k2y[c] = v[c] + 0.5 * h * k1v[c];
        k2v = a;
        for (std::size_t c = 0; c < d0; ++c) tmp[c] = y[c] + 0.5 * h * k2y[c];
        accel(tmp, a);
        for (std::size_t c = 0; c < d0; ++c) k3y[c] = v[c] + 0.5 * h * k2v[c];
        k3v = a;
        for (std::size_t c = 0; c < d0; ++c) tmp[c] = y[c] + h * k3y[c];
        accel(tmp, a);
        for (std::size_t c = 0; c < d0; ++c) k4y[c] = v[c] + h * k3v[c];
        k4v = a;
        for (std::size_t c = 0; c < d0; ++c) {
          y[c] += h / 6.0 * (k1y[c] + 2.0 * k2y[c] + 2.0 * k3y[c] + k4y[c]);
          v[c] += h / 6.0 * (k1v[c] + 2.0 * k2v[c] + 2.0 * k3v[c] + k4v[c]);
        }
      }
      for (std::size_t c = 0; c < d0; ++c)
        if (!std::isfinite(y[c]) || !std::isfinite(v[c])) throw MfeError("starting_iterate: slow subsystem blew up");
    }
    for (std::size_t c = 0; c < d0; ++c) samples[r * d0 + c] = y[c];
  }
  {
    // Pin value and slope at tau = 0 exactly: add a + b tau with tau = (T_0 + T_1) / 2.
    auto slow = ChebSeries::fit(D, d0, samples);
    if (ctx.options().chop_tol > 0.0) slow = slow.chopped(ctx.options().chop_tol);
    const auto v0 = slow(0.0);
    const auto dv0 = slow.derivative()(0.0);
    for (std::size_t c = 0; c < d0; ++c) {
      const cplx a = state0.q.block(0)[c] - v0[c];
      const cplx b = L * state0.p.block(0)[c] - dv0[c];
      slow.coeff(0, c) += a + 0.5 * b;
      slow.coeff(1, c) += 0.5 * b;
    }
    z.at(0, ctx.zero_mode()) = std::move(slow);
  }

  for (std::size_t j = 1; j < ctx.num_blocks(); ++j) {
    const std::size_t ip = ctx.diagonal_mode(j);
    const std::size_t im = ctx.negated(ip);
    const double w = ctx.mode_frequency(ip);
    const std::size_t d = ctx.dim(j);
    std::vector<cplx> ap(d), am(d);
    for (std::size_t c = 0; c < d; ++c) {
      const double qj = state0.q.block(j)[c];
      const double pj = state0.p.block(j)[c];
      ap[c] = 0.5 * cplx(qj, -pj / w);
      am[c] = 0.5 * cplx(qj, pj / w);
    }
    z.at(j, ip) = ChebSeries::constant(D, ap);
    z.at(j, im) = ChebSeries::constant(D, am);
  }
  return z;
}

ModulationSet iterate(const ModulationSet& zm) {
  const auto& ctx = zm.context();
  const std::size_t nb = ctx.num_blocks();
  const std::size_t nm = ctx.num_modes();
  const std::size_t D = ctx.options().degree;
  const double ea = ctx.window();  // eps^alpha
  const double inv_ea = 1.0 / ea;
  const auto tau = ChebSeries::nodes(D);

  const NodeData nd = node_data(zm);
  const auto F = gradient_at_nodes(ctx, nd);
  auto Fval = [&](std::size_t r, std::size_t j, std::size_t i) { return F[r][i].block(j); };

  ModulationSet z(zm.context_ptr(), zm.t0(), zm.initial());
  const double chop_tol = ctx.options().chop_tol;
  auto chop = [&](ChebSeries s) { return chop_tol > 0.0 ? s.chopped(chop_tol) : s; };

  // Case 3: explicit update.
  for (std::size_t i = 0; i < nm; ++i) {
    const double f = ctx.mode_frequency(i);
    for (std::size_t j = 0; j < nb; ++j) {
      if (ctx.classify(j, i) != MfeCase::explicit_update) continue;
      const std::size_t d = ctx.dim(j);
      const double div = ctx.divisor(j, i);
      const double c = ctx.shift(j);
      const auto& v = nd.v[i * nb + j];
      const auto& v1 = nd.d1[i * nb + j];
      const auto& v2 = nd.d2[i * nb + j];
      std::vector<cplx> out(nd.nodes * d);
      for (std::size_t r = 0; r < nd.nodes; ++r) {
        auto Fr = Fval(r, j, i);
        for (std::size_t e = 0; e < d; ++e) {
          const std::size_t q = r * d + e;
          out[q] = (c * v[q] - Fr[e] - cplx(0.0, 2.0 * f * inv_ea) * v1[q] - inv_ea * inv_ea * v2[q]) / div;
        }
      }
      z.at(j, i) = chop(ChebSeries::fit(D, d, out));
    }
  }

  // Contribution of the explicitly updated functions to q_j(0) and p_j(0).
  auto explicit_sums = [&](std::size_t j, std::vector<cplx>& Qs, std::vector<cplx>& Ps, std::size_t skip1,
                           std::size_t skip2) {
    const std::size_t d = ctx.dim(j);
    Qs.assign(d, 0.0);
    Ps.assign(d, 0.0);
    for (std::size_t i = 0; i < nm; ++i) {
      if (i == skip1 || i == skip2) continue;
      const auto& s = z.at(j, i);
      const auto v0 = s(0.0);
      const auto d0 = s.derivative()(0.0);
      const double f = ctx.mode_frequency(i);
      for (std::size_t e = 0; e < d; ++e) {
        Qs[e] += v0[e];
        Ps[e] += inv_ea * d0[e] + cplx(0.0, f) * v0[e];
      }
    }
  };

  const PhaseState& target = zm.initial();

  // Case 2: first-order equations on the diagonal.
  for (std::size_t j = 1; j < nb; ++j) {
    const std::size_t ip = ctx.diagonal_mode(j);
    const std::size_t im = ctx.negated(ip);
    const std::size_t d = ctx.dim(j);
    const double nu = ctx.mode_frequency(ip);
    const double c = ctx.shift(j);

    std::vector<cplx> Rp(nd.nodes * d), Rm(nd.nodes * d);
    for (std::size_t r = 0; r < nd.nodes; ++r) {
      auto Fp = Fval(r, j, ip);
      auto Fm = Fval(r, j, im);
      for (std::size_t e = 0; e < d; ++e) {
        Rp[r * d + e] = Fp[e] + inv_ea * inv_ea * nd.d2[ip * nb + j][r * d + e];
        Rm[r * d + e] = Fm[e] + inv_ea * inv_ea * nd.d2[im * nb + j][r * d + e];
      }
    }

    std::vector<cplx> Qs, Ps;
    explicit_sums(j, Qs, Ps, ip, im);
    const cplx two_i_nu(0.0, 2.0 * nu);
    const cplx gain = cplx(0.0, 1.0) * (2.0 * nu * nu - c) / (2.0 * nu);
    std::vector<cplx> a0(d), b0(d);
    for (std::size_t e = 0; e < d; ++e) {
      const cplx Q = target.q.block(j)[e] - Qs[e];
      const cplx P = target.p.block(j)[e] - Ps[e];
      const cplx diff = (P + (Rp[e] - Rm[e]) / two_i_nu) / gain;
      a0[e] = 0.5 * (Q + diff);
      b0[e] = 0.5 * (Q - diff);
    }

    // z' = lambda z + g with lambda = eps^a c / (s 2 i nu), g = -eps^a R / (s 2 i nu)
    auto solve = [&](int sign, const std::vector<cplx>& R, const std::vector<cplx>& z0) {
      const cplx den = static_cast<double>(sign) * two_i_nu;
      const cplx lambda = ea * c / den;
      std::vector<cplx> g(nd.nodes * d);
      for (std::size_t r = 0; r < nd.nodes; ++r) {
        const cplx damp = std::exp(-lambda * tau[r]);
        for (std::size_t e = 0; e < d; ++e) g[r * d + e] = damp * (-ea * R[r * d + e] / den);
      }
      const auto G = ChebSeries::fit(D, d, g).antiderivative();
      std::vector<cplx> out(nd.nodes * d);
      std::vector<cplx> Gr(d);
      for (std::size_t r = 0; r < nd.nodes; ++r) {
        G.evaluate(tau[r], Gr);
        const cplx grow = std::exp(lambda * tau[r]);
        for (std::size_t e = 0; e < d; ++e) out[r * d + e] = grow * (z0[e] + Gr[e]);
      }
      return chop(ChebSeries::fit(D, d, out));
    };
    z.at(j, ip) = solve(+1, Rp, a0);
    z.at(j, im) = solve(-1, Rm, b0);
  }

  // Case 1: slow second-order equation.
  {
    const std::size_t i0 = ctx.zero_mode();
    const std::size_t d = ctx.dim(0);
    std::vector<cplx> Qs, Ps;
    explicit_sums(0, Qs, Ps, i0, i0);
    std::vector<cplx> acc(nd.nodes * d);
    for (std::size_t r = 0; r < nd.nodes; ++r) {
      auto F0 = Fval(r, 0, i0);
      for (std::size_t e = 0; e < d; ++e) acc[r * d + e] = -ea * ea * F0[e];
    }
    auto vel = chop(ChebSeries::fit(D, d, acc)).antiderivative().with_degree(D);
    for (std::size_t e = 0; e < d; ++e) vel.coeff(0, e) += ea * (target.p.block(0)[e] - Ps[e]);
    auto pos = vel.antiderivative().with_degree(D);
    for (std::size_t e = 0; e < d; ++e) pos.coeff(0, e) += target.q.block(0)[e] - Qs[e];
    z.at(0, i0) = pos;
  }
  return z;
}

DefectReport defect(const ModulationSet& zm, const ModulationSet& zm1) {
  const auto& ctx = zm.context();
  const std::size_t nb = ctx.num_blocks();
  const std::size_t nm = ctx.num_modes();
  const double inv_ea = 1.0 / ctx.window();

  DefectReport rep;
  rep.sup.assign(nb * nm, 0.0);
  const std::size_t nodes = ctx.options().degree + 1;
  std::vector<double> c2(3 * nodes, 0.0);  // sum over (j, k) of |d^l v| per node and l

  for (std::size_t i = 0; i < nm; ++i) {
    const double f = ctx.mode_frequency(i);
    for (std::size_t j = 0; j < nb; ++j) {
      const std::size_t d = ctx.dim(j);
      const ChebSeries diff = zm1.at(j, i) - zm.at(j, i);
      const ChebSeries d1 = diff.derivative();
      const ChebSeries d2 = d1.derivative();
      const auto v0 = diff.node_values();
      const auto v1 = d1.node_values();
      const auto v2 = d2.node_values();

      cplx lam;
      std::vector<cplx> delta(nodes * d);
      switch (ctx.classify(j, i)) {
        case MfeCase::slow:
          lam = inv_ea * inv_ea;
          for (std::size_t q = 0; q < delta.size(); ++q) delta[q] = -inv_ea * inv_ea * v2[q];
          break;
        case MfeCase::diagonal: {
          const double s = ctx.diagonal_sign(j, i);
          lam = cplx(0.0, 2.0 * std::abs(f) * inv_ea);
          for (std::size_t q = 0; q < delta.size(); ++q)
            delta[q] = cplx(0.0, -2.0 * s * std::abs(f) * inv_ea) * v1[q] + ctx.shift(j) * v0[q];
          break;
        }
        case MfeCase::explicit_update:
          lam = ctx.divisor(j, i);
          for (std::size_t q = 0; q < delta.size(); ++q) delta[q] = -ctx.divisor(j, i) * v0[q];
          break;
      }
      (void)f;
      double sup = 0.0;
      for (std::size_t r = 0; r < nodes; ++r) {
        sup = std::max(sup, vec_abs({delta.data() + r * d, d}));
        c2[3 * r + 0] += std::abs(lam) * vec_abs({v0.data() + r * d, d});
        c2[3 * r + 1] += std::abs(lam) * vec_abs({v1.data() + r * d, d});
        c2[3 * r + 2] += std::abs(lam) * vec_abs({v2.data() + r * d, d});
      }
      rep.sup[i * nb + j] = sup;
      rep.sup_max = std::max(rep.sup_max, sup);
    }
  }
  rep.lambda_c2 = *std::max_element(c2.begin(), c2.end());
  return rep;
}

std::vector<double> residual(const ModulationSet& z) {
  const auto& ctx = z.context();
  const std::size_t nb = ctx.num_blocks();
  const double inv_ea = 1.0 / ctx.window();
  const NodeData nd = node_data(z);
  const auto F = gradient_at_nodes(ctx, nd);
  std::vector<double> out(nb * ctx.num_modes(), 0.0);
  for (std::size_t i = 0; i < ctx.num_modes(); ++i) {
    const double f = ctx.mode_frequency(i);
    for (std::size_t j = 0; j < nb; ++j) {
      const std::size_t d = ctx.dim(j);
      const double vp = ctx.resonance().varpi_of(j);
      // On the diagonal varpi_j^2 - f^2 is roundoff; drop it as the iteration does.
      const double lin = ctx.classify(j, i) == MfeCase::diagonal ? 0.0 : vp * vp - f * f;
      const auto& v = nd.v[i * nb + j];
      const auto& v1 = nd.d1[i * nb + j];
      const auto& v2 = nd.d2[i * nb + j];
      std::vector<cplx> res(d);
      for (std::size_t r = 0; r < nd.nodes; ++r) {
        auto Fr = F[r][i].block(j);
        for (std::size_t e = 0; e < d; ++e) {
          const std::size_t q = r * d + e;
          res[e] = lin * v[q] + cplx(0.0, 2.0 * f * inv_ea) * v1[q] + inv_ea * inv_ea * v2[q] - ctx.shift(j) * v[q] +
                   Fr[e];
        }
        out[i * nb + j] = std::max(out[i * nb + j], vec_abs(res));
      }
    }
  }
  return out;
}

Construction construct(std::shared_ptr<const MfeContext> ctx_ptr, const PhaseState& state0, double t0) {
  const auto& ctx = *ctx_ptr;
  const auto& opt = ctx.options();
  const int max_sweeps = ctx.max_sweeps();
  const double target = ctx.target_defect();

  // The iteration is asymptotic: once the defect has passed its minimum it grows again,
  // so the best iterate seen is kept and returned.
  ModulationSet z = starting_iterate(ctx_ptr, state0, t0);
  std::optional<ModulationSet> best_z;
  DefectReport best;
  std::vector<double> history, c2_history;
  double first = 0.0;
  std::size_t since_best = 0;
  std::string reason = "sweep budget reached";

  for (int s = 0; s < max_sweeps; ++s) {
    ModulationSet next = iterate(z);
    DefectReport rep = defect(z, next);
    history.push_back(rep.sup_max);
    c2_history.push_back(rep.lambda_c2);
    if (!std::isfinite(rep.sup_max)) {
      if (!best_z || best.sup_max >= first) throw MfeError("construct: non-finite defect at sweep " + std::to_string(s));
      reason = "defect minimum passed";
      break;
    }
    if (s == 0) first = rep.sup_max;
    rep.sweeps = static_cast<std::size_t>(s);
    if (!best_z || rep.sup_max < best.sup_max) {
      since_best = (best_z && rep.sup_max > opt.stagnation_ratio * best.sup_max) ? since_best + 1 : 0;
      best = rep;
      best_z = z;
    } else {
      ++since_best;
    }
    if (best.sup_max <= target) {
      reason = "target defect reached";
      break;
    }
    if (rep.sup_max > opt.divergence_factor * best.sup_max) {
      if (best.sup_max >= first)
        throw MfeError("construct: defect grew from " + std::to_string(first) + " to " + std::to_string(rep.sup_max) +
                       " after " + std::to_string(s) + " sweeps without improving");
      reason = "defect minimum passed";
      break;
    }
    if (since_best >= opt.stagnation_window) {
      reason = "defect stagnated";
      break;
    }
    z = std::move(next);
  }
  if (!best_z) throw MfeError("construct: no sweep was performed");
  best.stop_reason = reason;
  best.history = std::move(history);
  best.c2_history = std::move(c2_history);
  return {std::move(*best_z), std::move(best)};
}

Reconstruction reconstruct(const ModulationSet& z, double t) {
  const auto& ctx = z.context();
  const double L = ctx.window();
  const double s = t - z.t0();
  const double tau = s / L;
  if (tau < -1e-12 || tau > 1.0 + 1e-12) throw std::out_of_range("reconstruct: time outside the window");
  const std::size_t nb = ctx.num_blocks();
  Reconstruction r{BlockVector(ctx.system().layout), BlockVector(ctx.system().layout), 0.0};
  std::vector<cplx> qs(ctx.system().layout.size()), ps(ctx.system().layout.size());
  for (std::size_t i = 0; i < ctx.num_modes(); ++i) {
    const double f = ctx.mode_frequency(i);
    const cplx rot = std::polar(1.0, f * s);
    for (std::size_t j = 0; j < nb; ++j) {
      const auto& series = z.at(j, i);
      const auto v = series(tau);
      const auto dv = series.derivative()(tau);
      const std::size_t off = ctx.system().layout.offset(j);
      for (std::size_t e = 0; e < v.size(); ++e) {
        qs[off + e] += rot * v[e];
        ps[off + e] += rot * (dv[e] / L + cplx(0.0, f) * v[e]);
      }
    }
  }
  double scale = 1.0;
  for (std::size_t c = 0; c < qs.size(); ++c) {
    r.q[c] = qs[c].real();
    r.p[c] = ps[c].real();
    scale = std::max({scale, std::abs(qs[c]), std::abs(ps[c])});
    r.max_imag = std::max({r.max_imag, std::abs(qs[c].imag()), std::abs(ps[c].imag())});
  }
  r.max_imag /= scale;
  return r;
}

InvariantValue almost_invariant(const ModulationSet& z, double t) {
  const auto& ctx = z.context();
  const double L = ctx.window();
  const double s = t - z.t0();
  const double tau = s / L;
  if (tau < -1e-12 || tau > 1.0 + 1e-12) throw std::out_of_range("almost_invariant: time outside the window");
  const std::size_t nb = ctx.num_blocks();
  const std::size_t nm = ctx.num_modes();
  std::vector<std::vector<cplx>> y(nm * nb), yd(nm * nb);
  for (std::size_t i = 0; i < nm; ++i) {
    const double f = ctx.mode_frequency(i);
    const cplx rot = std::polar(1.0, f * s);
    for (std::size_t j = 0; j < nb; ++j) {
      const auto v = z.at(j, i)(tau);
      const auto dv = z.at(j, i).derivative()(tau);
      auto& yy = y[i * nb + j];
      auto& dd = yd[i * nb + j];
      yy.resize(v.size());
      dd.resize(v.size());
      for (std::size_t e = 0; e < v.size(); ++e) {
        yy[e] = rot * v[e];
        dd[e] = rot * (dv[e] / L + cplx(0.0, f) * v[e]);
      }
    }
  }
  cplx E = 0.0;
  for (std::size_t i = 0; i < nm; ++i) {
    const double f = ctx.mode_frequency(i);
    if (f == 0.0) continue;
    const std::size_t ni = ctx.negated(i);
    for (std::size_t j = 0; j < nb; ++j) {
      cplx dot = 0.0;
      for (std::size_t e = 0; e < y[i * nb + j].size(); ++e) dot += y[ni * nb + j][e] * yd[i * nb + j][e];
      E += f * dot;
    }
  }
  E *= cplx(0.0, -1.0);
  return {E.real(), E.imag()};
}

std::vector<CoefficientSize> coefficient_sizes(const ModulationSet& z) {
  const auto& ctx = z.context();
  std::vector<CoefficientSize> out;
  for (std::size_t i = 0; i < ctx.num_modes(); ++i)
    for (std::size_t j = 0; j < ctx.num_blocks(); ++j) {
      const auto vals = z.at(j, i).node_values();
      const std::size_t d = ctx.dim(j);
      double sup = 0.0;
      for (std::size_t r = 0; r * d < vals.size(); ++r) sup = std::max(sup, vec_abs({vals.data() + r * d, d}));
      double scaled = sup;
      switch (ctx.classify(j, i)) {
        case MfeCase::slow: break;
        case MfeCase::diagonal: scaled = sup * ctx.system().frequency(j); break;
        case MfeCase::explicit_update:
          scaled = sup * std::abs(ctx.divisor(j, i)) / std::pow(ctx.epsilon(), ctx.modes()[i].norm());
          break;
      }
      out.push_back({j, ctx.modes()[i], sup, scaled});
    }
  return out;
}

InvariantTrack track_invariant(std::shared_ptr<const MfeContext> ctx_ptr, const PhaseState& state0,
                               std::size_t windows, const TrackOptions& options) {
  if (windows == 0) throw std::invalid_argument("track_invariant: at least one window is required");
  if (options.samples_per_window == 0) throw std::invalid_argument("track_invariant: samples_per_window must be >= 1");
  const auto& ctx = *ctx_ptr;
  const auto& sys = ctx.system();
  const double L = ctx.window();
  const std::size_t S = options.samples_per_window;

  // Exact solution at the sample times of every window (shared end points).
  std::vector<std::vector<PhaseState>> states(windows);
  std::vector<std::vector<double>> times(windows);
  ReferencePropagator prop(sys, state0, options.reference_step);
  for (std::size_t m = 0; m < windows; ++m) {
    for (std::size_t s = 0; s <= S; ++s) {
      // same expression on both sides of a window boundary, so shared end points coincide
      const double t = L * (static_cast<double>(m * S + s) / static_cast<double>(S));
      times[m].push_back(t);
      states[m].push_back(prop.advance_to(t));
    }
  }

  std::vector<InvariantSeries> out(windows);
  std::vector<std::exception_ptr> errors(windows);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t m = next.fetch_add(1);
      if (m >= windows) return;
      try {
        auto built = construct(ctx_ptr, states[m][0], times[m][0]);
        auto& w = out[m];
        w.window = m;
        w.t_start = times[m].front();
        w.t_end = times[m].back();
        w.sweeps = built.report.sweeps;
        w.final_defect = built.report.sup_max;
        w.stop_reason = built.report.stop_reason;
        for (std::size_t s = 0; s <= S; ++s) {
          const double t = times[m][s];
          const auto& st = states[m][s];
          const auto E = almost_invariant(built.z, t);
          const double H = oscillatory_energy(st.p, st.q, sys);
          w.sample_times.push_back(t);
          w.sample_E.push_back(E.value);
          w.sample_H.push_back(H);
          w.max_E_minus_H = std::max(w.max_E_minus_H, std::abs(E.value - H));
          w.max_imag = std::max(w.max_imag, std::abs(E.imag) / std::max(1.0, std::abs(E.value)));
          const auto rec = reconstruct(built.z, t);
          double err = 0.0;
          for (std::size_t j = 0; j < sys.layout.num_blocks(); ++j) {
            const double wj = sys.frequency(j);
            double e2 = 0.0;
            for (std::size_t c = 0; c < sys.layout.dim(j); ++c) {
              const std::size_t k = sys.layout.offset(j) + c;
              const double r = rec.q[k] - st.q[k];
              const double rd = rec.p[k] - st.p[k];
              e2 += wj * wj * r * r + rd * rd;
            }
            err = std::max(err, std::sqrt(e2));
          }
          w.reconstruction_error = std::max(w.reconstruction_error, err);
        }
        w.E_start = w.sample_E.front();
        w.E_end = w.sample_E.back();
        w.drift = std::abs(w.E_end - w.E_start);
        w.H_start = w.sample_H.front();
        w.H_end = w.sample_H.back();
      } catch (...) {
        errors[m] = std::current_exception();
      }
    }
  };
  std::size_t nthreads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  nthreads = std::min(nthreads, windows);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t m = 0; m < windows; ++m) {
    if (!errors[m]) continue;
    try {
      std::rethrow_exception(errors[m]);
    } catch (const std::exception& e) {
      throw MfeError("window " + std::to_string(m) + ": " + e.what());
    }
  }

  InvariantTrack track;
  for (std::size_t m = 0; m < windows; ++m) {
    if (m + 1 < windows) out[m].jump = std::abs(out[m].E_end - out[m + 1].E_start);
    track.sum_drifts += out[m].drift;
    track.sum_jumps += out[m].jump;
    track.max_drift = std::max(track.max_drift, out[m].drift);
    track.max_E_minus_H = std::max(track.max_E_minus_H, out[m].max_E_minus_H);
  }
  track.total_deviation = std::abs(out.back().E_end - out.front().E_start);
  track.windows = std::move(out);
  return track;
}

}  // namespace oscisep
