#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "oscisep/model.hpp"

using namespace oscisep;

namespace {

// Independent scalar oracle for the seven-oscillator potential.
struct CubicOracle {
  double a;
  std::array<double, 8> c() const { return {a, 1, 1, 2, 3, 1, 1, 3}; }
  double ridge(const std::vector<double>& q) const {
    double s = 0.0;
    for (int i = 0; i < 8; ++i) s += c()[i] * q[i];
    return s;
  }
  double value(const std::vector<double>& q) const {
    const double s = ridge(q);
    return 0.5 * q[0] * q[0] + s * s * s;
  }
  std::vector<double> gradient(const std::vector<double>& q) const {
    const double s = ridge(q);
    std::vector<double> g(8);
    for (int i = 0; i < 8; ++i) g[i] = 3.0 * s * s * c()[i];
    g[0] += q[0];
    return g;
  }
};

SystemConfig example_system(double eps, double a) {
  std::vector<double> w = {1, 1 + eps * eps, 1 + eps, 1 + std::pow(eps, 0.75), 1 + std::pow(eps, 2.0 / 3.0),
                           1 + std::sqrt(eps), 2};
  for (auto& x : w) x /= eps;
  return SystemConfig{BlockLayout::scalar_blocks(7), eps, w, example_potential(a)};
}

std::vector<double> initial_q(double e) { return {1, 0.3 * e, 0.4 * e, 0.7 * e, -1.1 * e, 0.4 * e, -0.6 * e, -0.7 * e}; }
std::vector<double> initial_p() { return {-0.2, 0.6, 0.7, -0.9, -0.9, 0.4, -1.1, 0.8}; }

}  // namespace

TEST_CASE("block layout and vectors") {
  BlockLayout l({2, 1, 3});
  CHECK(l.size() == 6);
  CHECK(l.offset(2) == 3);
  CHECK(l.num_fast() == 2);
  CHECK_THROWS_AS(BlockLayout(std::vector<std::size_t>{}), DimensionError);
  CHECK_THROWS_AS(BlockLayout({1, 0}), DimensionError);
  CHECK_THROWS_AS(BlockVector(l, {1.0, 2.0}), DimensionError);
  BlockVector v(l, {1, 2, 3, 4, 5, 6});
  CHECK(v.block(2)[0] == 4);
  CHECK(v.block_norm(0) == doctest::Approx(std::sqrt(5.0)));
  v[5] = NAN;
  CHECK_FALSE(v.all_finite());
}

TEST_CASE("example potential against the scalar oracle") {
  for (double a : {0.5, 0.01, -1.3}) {
    auto U = example_potential(a);
    CubicOracle o{a};
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> q(8);
      for (auto& x : q) x = u(rng);
      BlockVector qb(BlockLayout::scalar_blocks(7), q);
      CHECK(U->value(qb) == doctest::Approx(o.value(q)).epsilon(1e-13));
      const auto g = U->gradient(qb);
      const auto go = o.gradient(q);
      for (int i = 0; i < 8; ++i) CHECK(g[i] == doctest::Approx(go[i]).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("documented potential value at the initial positions") {
  const double e = 0.005;
  auto U = example_potential(0.5);
  BlockVector q(BlockLayout::scalar_blocks(7), initial_q(e));
  // S = 0.5 - 3.5 eps
  const double S = 0.5 - 3.5 * e;
  CHECK(S == doctest::Approx(0.4825));
  CHECK(U->value(q) == doctest::Approx(0.5 + S * S * S).epsilon(1e-14));
  CHECK(U->value(q) == doctest::Approx(0.612329).epsilon(1e-6));
  CHECK(U->value(BlockVector(BlockLayout::scalar_blocks(7))) == 0.0);
}

TEST_CASE("gradient matches central differences") {
  auto U = example_potential(0.5);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-0.35, 0.35);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    BlockVector q(BlockLayout::scalar_blocks(7));
    for (std::size_t i = 0; i < 8; ++i) q[i] = u(rng);
    const auto g = U->gradient(q);
    for (std::size_t i = 0; i < 8; ++i) {
      auto qp = q, qm = q;
      qp[i] += h;
      qm[i] -= h;
      const double fd = (U->value(qp) - U->value(qm)) / (2 * h);
      CHECK(std::abs(fd - g[i]) <= 1e-6 * std::max(1.0, std::abs(g[i])));
    }
  }
}

TEST_CASE("derivative forms match directional finite differences") {
  auto U = example_potential(0.7);
  const auto L = BlockLayout::scalar_blocks(7);
  BlockVector base(L);
  base[0] = 0.4;  // slow-only base point
  std::vector<double> e{0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.6, -0.1};
  auto f = [&](double s) {
    BlockVector q = base;
    for (std::size_t i = 0; i < 8; ++i) q[i] += s * e[i];
    return U->value(q);
  };
  const double h = 1e-3;
  const double d1 = (f(h) - f(-h)) / (2 * h);
  const double d2 = (f(h) - 2 * f(0) + f(-h)) / (h * h);
  const double d3 = (f(2 * h) - 2 * f(h) + 2 * f(-h) - f(-2 * h)) / (2 * h * h * h);

  auto contract_all = [&](std::size_t m) {
    // sum over block tuples of form(e_{j1}, ..., e_{jm})
    double total = 0.0;
    std::vector<std::size_t> idx(m, 0);
    for (;;) {
      const auto form = U->derivative_form(base, idx);
      std::vector<std::vector<cplx>> store(m);
      std::vector<std::span<const cplx>> args;
      for (std::size_t s = 0; s < m; ++s) store[s] = {cplx(e[idx[s]], 0.0)};
      for (std::size_t s = 0; s < m; ++s) args.emplace_back(store[s]);
      total += form.evaluate(args).real();
      std::size_t s = 0;
      while (s < m && ++idx[s] == 8) idx[s++] = 0;
      if (s == m) break;
    }
    return total;
  };
  CHECK(contract_all(1) == doctest::Approx(d1).epsilon(1e-4));
  CHECK(contract_all(2) == doctest::Approx(d2).epsilon(1e-4));
  CHECK(contract_all(3) == doctest::Approx(d3).epsilon(1e-4));

  const std::size_t four[] = {1, 2, 3, 4};
  CHECK(U->derivative_form(base, four).is_zero());
  const std::size_t none[] = {0};
  CHECK_THROWS(U->derivative_form(base, std::span<const std::size_t>(none, 0)));
}

TEST_CASE("derivative forms are symmetric") {
  auto U = example_potential(0.5);
  BlockVector base(BlockLayout::scalar_blocks(7));
  base[0] = -0.3;
  const std::size_t ab[] = {2, 4};
  const std::size_t ba[] = {4, 2};
  const std::size_t i00[] = {0, 0};
  const auto f1 = U->derivative_form(base, ab);
  const auto f2 = U->derivative_form(base, ba);
  CHECK(f1.at(i00) == f2.at(i00));
  // 6 S c_2 c_4 with S = a q_0
  CHECK(f1.at(i00) == doctest::Approx(6 * (0.5 * -0.3) * 1 * 3));
}

TEST_CASE("energies") {
  const double e = 0.005;
  auto sys = example_system(e, 0.5);
  BlockVector p(sys.layout, initial_p()), q(sys.layout, initial_q(e));
  const auto E = energies(p, q, sys);
  // closed form E_j = (p_j^2 + (omega_j q_j)^2) / 2
  const auto qv = initial_q(e);
  const auto pv = initial_p();
  double sum = 0.0;
  for (int j = 1; j <= 7; ++j) {
    const double ej = 0.5 * (pv[j] * pv[j] + sys.omega[j - 1] * sys.omega[j - 1] * qv[j] * qv[j]);
    CHECK(std::abs(E.per_mode[j - 1] - ej) <= 1e-12);
    sum += ej;
  }
  CHECK(E.oscillatory == doctest::Approx(sum).epsilon(1e-15));
  CHECK(E.slow == doctest::Approx(0.5 * 0.04 + sys.potential->value(q)).epsilon(1e-15));
  CHECK(E.total == doctest::Approx(E.oscillatory + E.slow).epsilon(1e-15));
  CHECK(oscillatory_energy(p, q, sys) == E.oscillatory);

  // H is even in p
  BlockVector pm = p;
  for (std::size_t i = 0; i < pm.size(); ++i) pm[i] = -pm[i];
  CHECK(energies(pm, q, sys).total == E.total);

  BlockVector z(sys.layout);
  const auto E0 = energies(z, z, sys);
  CHECK(E0.total == 0.0);
  CHECK(E0.oscillatory == 0.0);

  SystemConfig one{BlockLayout::scalar_blocks(1), 0.1, {10.0}, std::make_shared<ZeroPotential>(BlockLayout::scalar_blocks(1))};
  BlockVector q1(one.layout, {0.0, 0.1}), p1(one.layout);
  CHECK(energies(p1, q1, one).per_mode[0] == doctest::Approx(0.5));
}

TEST_CASE("acceleration") {
  const double e = 0.01;
  auto sys = example_system(e, 0.5);
  BlockVector q0(sys.layout);
  const auto a0 = acceleration(q0, sys);
  for (std::size_t i = 0; i < a0.size(); ++i) CHECK(a0[i] == 0.0);

  BlockVector q(sys.layout, initial_q(e));
  const auto a = acceleration(q, sys);
  const auto g = CubicOracle{0.5}.gradient(initial_q(e));
  CHECK(a[0] == doctest::Approx(-g[0]).epsilon(1e-13));
  for (int j = 1; j <= 7; ++j)
    CHECK(a[j] == doctest::Approx(-sys.omega[j - 1] * sys.omega[j - 1] * q[j] - g[j]).epsilon(1e-13));

  SystemConfig free = sys;
  free.potential = std::make_shared<ZeroPotential>(sys.layout);
  const auto af = acceleration(q, free);
  CHECK(af[0] == 0.0);
  for (int j = 1; j <= 7; ++j) CHECK(af[j] == -sys.omega[j - 1] * sys.omega[j - 1] * q[j]);

  BlockVector wrong(BlockLayout::scalar_blocks(3));
  CHECK_THROWS_AS(acceleration(wrong, sys), DimensionError);
}

TEST_CASE("system validation") {
  auto sys = example_system(0.01, 0.5);
  CHECK_NOTHROW(sys.validate());
  auto bad = sys;
  bad.epsilon = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = sys;
  bad.omega[2] = 10.0;  // below 1/eps
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = sys;
  bad.monitor_radius = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = sys;
  bad.potential.reset();
  CHECK_THROWS(bad.validate());
  CHECK_THROWS_AS(RidgePotential(BlockLayout::scalar_blocks(2), 1.0, {1.0, 2.0}), DimensionError);
}

TEST_CASE("cosine ridge profile gradient") {
  const auto L = BlockLayout({2, 1});
  RidgePotential U(L, 0.5, {0.3, -0.2, 1.1}, RidgeProfile::cosine);
  BlockVector q(L, {0.2, 0.4, -0.3});
  const double s = 0.3 * 0.2 - 0.2 * 0.4 + 1.1 * -0.3;
  CHECK(U.value(q) == doctest::Approx(0.25 * (0.04 + 0.16) + std::cos(s)));
  const auto g = U.gradient(q);
  CHECK(g[2] == doctest::Approx(-std::sin(s) * 1.1));
  CHECK(g[0] == doctest::Approx(0.5 * 0.2 - std::sin(s) * 0.3));
}
