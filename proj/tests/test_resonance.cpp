#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "oscisep/resonance.hpp"

using namespace oscisep;

namespace {

std::vector<double> ladder(double e) {
  std::vector<double> w = {1, 1 + e * e, 1 + e, 1 + std::pow(e, 0.75), 1 + std::pow(e, 2.0 / 3.0), 1 + std::sqrt(e), 2};
  for (auto& x : w) x /= e;
  return w;
}

// Brute-force count of k in Z^n with |k|_1 <= r.
std::size_t lattice_ball(int n, int r) {
  if (n == 0) return 1;
  std::size_t total = 0;
  for (int c = -r; c <= r; ++c) total += lattice_ball(n - 1, r - std::abs(c));
  return total;
}

bool contains_index(const std::vector<MultiIndex>& v, const MultiIndex& k) {
  return std::find(v.begin(), v.end(), k) != v.end();
}

}  // namespace

TEST_CASE("multi-index basics") {
  MultiIndex k{2, -1, 0};
  CHECK(k.norm() == 3);
  CHECK((-k).components() == std::vector<int>{-2, 1, 0});
  CHECK((k + MultiIndex{1, 1, 1}).norm() == 4);
  CHECK(MultiIndex::unit(3, 2) == MultiIndex{0, 1, 0});
  CHECK_THROWS(MultiIndex::unit(3, 0));
  CHECK_THROWS(MultiIndex::unit(3, 4));
  CHECK_THROWS(k + MultiIndex{1, 2});
  const double w[] = {1.0, 2.0, 3.0};
  CHECK(k.dot(w) == 0.0);
  CHECK(k.str() == "(2,-1,0)");
  CHECK(MultiIndex(4).is_zero());
  MultiIndexHash h;
  CHECK(h(k) == h(MultiIndex{2, -1, 0}));
}

TEST_CASE("enumeration counts and order") {
  for (int n = 1; n <= 7; ++n)
    for (int r = 0; r <= 3; ++r) CHECK(enumerate_multi_indices(n, r).size() == lattice_ball(n, r));
  const auto all = enumerate_multi_indices(3, 2);
  CHECK(std::is_sorted(all.begin(), all.end()));
  CHECK(std::set<MultiIndex>(all.begin(), all.end()).size() == all.size());
  CHECK(enumerate_multi_indices(7, 2).size() == 113);
}

TEST_CASE("single oscillator gap") {
  const double e = 0.01;
  const std::vector<double> w{1.0 / e};
  const auto g = find_gap(w, e, 1);
  CHECK(g.M_count == 5);
  CHECK(g.mu == doctest::Approx(1.0 / 24.0));
  CHECK(g.alpha == doctest::Approx(1.0 / 24.0));
  const auto d = build_resonance(w, e, 1);
  CHECK(d.R.size() == 1);
  CHECK(d.theta[0] == 0.0);
  CHECK(d.K_set.size() == 3);
}

TEST_CASE("two nearly equal frequencies") {
  const double e = 0.01;
  const std::vector<double> w{1.0 / e, (1.0 + e * e) / e};
  const auto d = build_resonance(w, e, 1);
  CHECK(d.gap.M_count == 13);
  CHECK(d.gap.mu == doctest::Approx(1.0 / 56.0));
  CHECK(contains_index(d.R, MultiIndex{1, -1}));
  CHECK(contains_index(d.R, MultiIndex{-1, 1}));
  CHECK(contains_index(d.R, MultiIndex{0, 0}));
  CHECK(d.R.size() == 3);
  // minimal-norm correction: theta = (e/2, -e/2)
  CHECK(d.theta[0] == doctest::Approx(e / 2).epsilon(1e-9));
  CHECK(d.theta[1] == doctest::Approx(-e / 2).epsilon(1e-9));
  CHECK(d.varpi[0] == doctest::Approx(d.varpi[1]).epsilon(1e-14));
  CHECK(d.K_set.size() == 3);
  CHECK(contains_index(d.K_set, MultiIndex{0, 0}));
  CHECK(contains_index(d.K_set, MultiIndex{1, 0}));
  CHECK(contains_index(d.K_set, MultiIndex{-1, 0}));
  CHECK(d.in_module(MultiIndex{2, -2}));
  CHECK_FALSE(d.in_module(MultiIndex{1, 0}));
}

TEST_CASE("gap is free of log-values (brute force)") {
  for (double e : {0.02, 0.01, 0.005}) {
    const auto w = ladder(e);
    const auto g = find_gap(w, e, 1);
    CHECK(g.M_count == 113);
    CHECK(g.mu == doctest::Approx(1.0 / 456.0));
    for (const auto& k : enumerate_multi_indices(7, 2)) {
      const double kw = std::abs(k.dot(w));
      if (kw == 0.0) continue;
      const double lv = std::log(kw) / std::log(1.0 / e);
      CHECK_FALSE((lv >= g.alpha && lv <= g.alpha + g.mu));
    }
  }
}

TEST_CASE("resonance structure of the seven-oscillator ladder") {
  const double e = 0.005;
  const auto d = build_resonance(ladder(e), e, 1);
  CHECK(d.gap.alpha == doctest::Approx(1.0 / 456.0));
  CHECK(d.R.size() == 7);
  for (const auto& k : {MultiIndex{1, -1, 0, 0, 0, 0, 0}, MultiIndex{1, 0, -1, 0, 0, 0, 0},
                        MultiIndex{0, 1, -1, 0, 0, 0, 0}})
    CHECK(contains_index(d.R, k));
  // 2 omega_1 = omega_7 exactly, but |2e_1 - e_7| = 3 is beyond the order-1 search
  CHECK_FALSE(contains_index(d.R, MultiIndex{2, 0, 0, 0, 0, 0, -1}));
  CHECK(d.theta[0] == doctest::Approx(0.335).epsilon(1e-3));
  CHECK(d.theta[1] == doctest::Approx(0.33).epsilon(1e-3));
  CHECK(d.theta[2] == doctest::Approx(-0.665).epsilon(1e-3));
  for (int j = 3; j < 7; ++j) CHECK(d.theta[j] == 0.0);
  CHECK(d.K_set.size() == 11);
  for (int j : {1, 4, 5, 6, 7}) {
    CHECK(contains_index(d.K_set, MultiIndex::unit(7, j)));
    CHECK(contains_index(d.K_set, -MultiIndex::unit(7, j)));
  }
  CHECK(d.theta_norm_scaled == doctest::Approx(0.80).epsilon(0.02));
}

TEST_CASE("second order sees the exact 2:1 resonance") {
  const double e = 0.005;
  const auto d = build_resonance(ladder(e), e, 2);
  CHECK(contains_index(d.R, MultiIndex{2, 0, 0, 0, 0, 0, -1}));
  CHECK(d.in_module(MultiIndex{2, 0, 0, 0, 0, 0, -1}));
  CHECK(d.k_dot_varpi(MultiIndex{2, 0, 0, 0, 0, 0, -1}) == doctest::Approx(0.0).scale(1.0 / e * 1e-10));
}

TEST_CASE("resonance checks") {
  const double ratios[] = {2.01, 2.90, 4.08};
  const double eps[] = {0.02, 0.01, 0.005};
  for (int i = 0; i < 3; ++i) {
    const auto d = build_resonance(ladder(eps[i]), eps[i], 1);
    const auto c = check_resonance(d);
    CHECK(c.gap_empty);
    CHECK(c.resonant_ok());
    CHECK(c.nonresonant_ok());
    CHECK(c.theta_ok());
    CHECK(c.all());
    CHECK(c.min_nonresonant_ratio == doctest::Approx(ratios[i]).epsilon(0.01));

    // independent recomputation of the non-resonance bound
    const double bound = 0.5 * std::pow(eps[i], -d.gap.alpha - d.gap.mu);
    for (const auto& k : enumerate_multi_indices(7, 2)) {
      if (d.in_module(k)) {
        CHECK(std::abs(d.k_dot_varpi(k)) <= 1e-8 / eps[i]);
      } else {
        CHECK(std::abs(d.k_dot_varpi(k)) >= bound);
      }
    }
  }
}

TEST_CASE("generic frequencies are non-resonant") {
  const double e = 0.01;
  const std::vector<double> w{1.0 / e, 1.37 / e, 1.81 / e};
  const auto d = build_resonance(w, e, 1);
  REQUIRE(d.R.size() == 1);
  CHECK(d.R[0].is_zero());
  for (double t : d.theta) CHECK(t == 0.0);
  CHECK(d.K_set.size() == lattice_ball(3, 1));
  CHECK(d.module.rank() == 0);
}

TEST_CASE("integer module membership against a closed form") {
  // generated by (2,0,1) and (0,3,-1): k is a member iff k1 = 2a, k2 = 3b, k3 = a - b
  const std::vector<MultiIndex> gens{MultiIndex{2, 0, 1}, MultiIndex{0, 3, -1}};
  IntegerModule m(3, gens);
  CHECK(m.rank() == 2);
  for (const auto& k : enumerate_multi_indices(3, 6)) {
    const bool member = k[0] % 2 == 0 && k[1] % 3 == 0 && k[2] == k[0] / 2 - k[1] / 3;
    CHECK(m.contains(k) == member);
  }
  // redundant generators do not change the module
  IntegerModule m2(3, std::vector<MultiIndex>{MultiIndex{2, 0, 1}, MultiIndex{0, 3, -1}, MultiIndex{2, 3, 0},
                                              MultiIndex{4, -3, 3}});
  CHECK(m2.rank() == 2);
  for (const auto& k : enumerate_multi_indices(3, 4)) CHECK(m2.contains(k) == m.contains(k));
}

TEST_CASE("coset reduction is canonical") {
  IntegerModule m(3, std::vector<MultiIndex>{MultiIndex{2, 0, 1}, MultiIndex{0, 3, -1}});
  const auto all = enumerate_multi_indices(3, 3);
  for (const auto& a : all)
    for (const auto& b : all) CHECK((m.reduce(a) == m.reduce(b)) == m.equivalent(a, b));
  CHECK_THROWS(m.contains(MultiIndex{1, 2}));
}

TEST_CASE("representatives") {
  IntegerModule m(2, std::vector<MultiIndex>{MultiIndex{1, -1}});
  const auto reps = representatives(m, 2, 1);
  CHECK(reps.size() == 3);
  CHECK(reps[0].is_zero());
  for (const auto& r : reps) CHECK(contains_index(reps, -r));

  IntegerModule trivial(3, std::vector<MultiIndex>{});
  CHECK(representatives(trivial, 3, 2).size() == lattice_ball(3, 2));

  // e1 equals -e1 modulo 2 e1, so no negation-closed choice exists
  IntegerModule torsion(1, std::vector<MultiIndex>{MultiIndex{2}});
  CHECK_THROWS_AS(representatives(torsion, 1, 1), RepresentativeError);
}

TEST_CASE("minimal-norm frequency modification") {
  const std::vector<double> w{10.0, 10.3, 20.1};
  const std::vector<MultiIndex> R{MultiIndex{0, 0, 0}, MultiIndex{1, -1, 0}, MultiIndex{2, 0, -1},
                                  MultiIndex{-1, 1, 0}, MultiIndex{1, 1, -1}};
  const auto f = modify_frequencies(R, w);
  CHECK(f.basis.size() == 2);
  for (const auto& k : R) CHECK(std::abs(k.dot(f.varpi)) < 1e-12);
  // theta solves B theta = -B w with minimal norm: theta lies in the row space of B
  // rows (1,-1,0), (2,0,-1): check orthogonality of theta to their cross product (1,1,2)
  CHECK(std::abs(f.theta[0] + f.theta[1] + 2 * f.theta[2]) < 1e-12);
}
