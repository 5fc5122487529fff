#pragma once

#include <cmath>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "oscisep/mfe.hpp"

namespace oscisep::testing {


inline std::vector<double> ladder(double e) {
  std::vector<double> w = {1, 1 + e * e, 1 + e, 1 + std::pow(e, 0.75), 1 + std::pow(e, 2.0 / 3.0), 1 + std::sqrt(e), 2};
  for (auto& x : w) x /= e;
  return w;
}

inline PhaseState example_state(double e) {
  const auto L = BlockLayout::scalar_blocks(7);
  return {BlockVector(L, {-0.2, 0.6, 0.7, -0.9, -0.9, 0.4, -1.1, 0.8}),
          BlockVector(L, {1, 0.3 * e, 0.4 * e, 0.7 * e, -1.1 * e, 0.4 * e, -0.6 * e, -0.7 * e})};
}

// Modulation potential evaluated straight from its defining sum, truncated at order N+1:
// U(z_0^0) + sum_m 1/m! sum over ordered tuples ((j_l, k_l)) != (0, 0) with sum k_l in the module
// of D^m U(z_0^0, 0, ..., 0)[z_{j_1}^{k_1}, ..., z_{j_m}^{k_m}].
inline cplx modulation_potential_oracle(const ModulationSet& z, double tau) {
  const auto& ctx = z.context();
  const auto& sys = ctx.system();
  const std::size_t nb = ctx.num_blocks();
  const std::size_t nm = ctx.num_modes();
  BlockVector base(sys.layout);
  const auto z00 = z.at(0, ctx.zero_mode())(tau);
  for (std::size_t c = 0; c < sys.layout.dim(0); ++c) base[c] = z00[c].real();

  std::vector<std::pair<std::size_t, std::size_t>> slots;  // (j, mode)
  for (std::size_t i = 0; i < nm; ++i)
    for (std::size_t j = 0; j < nb; ++j)
      if (!(j == 0 && i == ctx.zero_mode())) slots.emplace_back(j, i);
  std::map<std::pair<std::size_t, std::size_t>, std::vector<cplx>> values;
  for (auto s : slots) values[s] = z.at(s.first, s.second)(tau);

  std::map<std::vector<std::size_t>, MultilinearForm> forms;
  auto form = [&](const std::vector<std::size_t>& blocks) -> const MultilinearForm& {
    auto it = forms.find(blocks);
    if (it == forms.end()) it = forms.emplace(blocks, sys.potential->derivative_form(base, blocks)).first;
    return it->second;
  };

  cplx total = sys.potential->value(base);
  const int N = ctx.options().N;
  double fact = 1.0;
  for (int m = 1; m <= N + 1; ++m) {
    fact *= m;
    std::vector<std::size_t> pick(m, 0);
    for (;;) {
      MultiIndex sum(ctx.modes().front().size());
      std::vector<std::size_t> blocks;
      std::vector<std::span<const cplx>> args;
      for (int l = 0; l < m; ++l) {
        const auto s = slots[pick[l]];
        sum = sum + ctx.modes()[s.second];
        blocks.push_back(s.first);
        args.emplace_back(values[s]);
      }
      if (ctx.resonance().in_module(sum)) total += form(blocks).evaluate(args) / fact;
      int l = 0;
      while (l < m && ++pick[l] == slots.size()) pick[l++] = 0;
      if (l == m) break;
    }
  }
  return total;
}

// Random constant coefficients with z^{-k} = conj(z^k).
inline ModulationSet random_set(std::shared_ptr<const MfeContext> ctx, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  ModulationSet z = starting_iterate(ctx, example_state(ctx->epsilon()));
  const std::size_t D = ctx->options().degree;
  for (std::size_t i = 0; i < ctx->num_modes(); ++i) {
    const std::size_t ni = ctx->negated(i);
    if (ni < i) continue;
    for (std::size_t j = 0; j < ctx->num_blocks(); ++j) {
      if (j == 0 && i == ctx->zero_mode()) continue;
      cplx v(u(rng), i == ni ? 0.0 : u(rng));
      std::vector<cplx> a{v}, b{std::conj(v)};
      z.at(j, i) = ChebSeries::constant(D, a);
      z.at(j, ni) = ChebSeries::constant(D, b);
    }
  }
  return z;
}

}  // namespace oscisep::testing
