// Acceptance run: one PASS/FAIL line per criterion, with the measured numbers.
// Exit status is 0 once every selected criterion has been evaluated; --strict makes any FAIL fatal.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <string>

#include "mfe_oracle.hpp"
#include "oscisep/experiment.hpp"

using namespace oscisep;
using namespace oscisep::testing;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& name, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("%s [%d] %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool within(double measured, double expected, double rel) { return std::abs(measured - expected) <= rel * expected; }

void initial_energies() {
  ExperimentConfig cfg;
  cfg.epsilon = 0.005;
  const auto sys = build_system(cfg);
  const auto s = initial_state(cfg, sys.layout);
  const auto E = energies(s.p, s.q, sys);
  const auto w = ladder(0.005);
  const double rounded[] = {0.22, 0.32, 0.65, 1.05, 0.17, 0.82, 1.3};
  double closed_err = 0.0, rounded_err = 0.0;
  std::string vals;
  for (int j = 0; j < 7; ++j) {
    const double q = s.q[j + 1], p = s.p[j + 1];
    const double exact = 0.5 * (p * p + w[j] * w[j] * q * q);
    closed_err = std::max(closed_err, std::abs(E.per_mode[j] - exact));
    rounded_err = std::max(rounded_err, std::abs(E.per_mode[j] - rounded[j]));
    vals += fmt("%s%.4f", j ? " " : "", E.per_mode[j]);
  }
  report(1, closed_err <= 1e-12 && rounded_err <= 0.03, "initial energies at eps=0.005",
         fmt("E=(%s) closed-form err %.1e, max diff to rounded values %.3f", vals.c_str(), closed_err, rounded_err));
}

const std::vector<double> kEps{0.02, 0.01, 0.005};

SweepResult deviation_sweep(bool a_is_eps) {
  ExperimentConfig cfg;
  cfg.a = 0.5;
  cfg.a_is_epsilon = a_is_eps;
  return sweep(cfg, kEps, 0);
}

void deviation_table(int id, bool a_is_eps, const std::vector<double>& expected) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = deviation_sweep(a_is_eps);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string name = a_is_eps ? "deviation table a=eps" : "deviation table a=0.5";
  if (!r.failures.empty() || r.rows.size() != kEps.size()) {
    report(id, false, name, r.failures.empty() ? "missing rows" : r.failures.front().message);
    return;
  }
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < kEps.size(); ++i) {
    const double d = r.rows[i].deviation;
    const bool hit = within(d, expected[i], 0.15);
    ok = ok && hit;
    detail += fmt("eps=%g: %.3e vs %.3e (%+.1f%%)%s; ", kEps[i], d, expected[i], 100 * (d / expected[i] - 1),
                  hit ? "" : " OUT");
  }
  if (a_is_eps) {
    const double slope = *r.slope;
    const bool s_ok = slope >= 0.9 && slope <= 1.3;
    ok = ok && s_ok;
    detail += fmt("slope %.3f (need [0.9, 1.3])%s; ", slope, s_ok ? "" : " OUT");
  }
  detail += fmt("%.0f s", secs);
  report(id, ok, name, detail);
}

void step_doubling() {
  double dev[2];
  const double factors[] = {0.01, 0.02};
  for (int i = 0; i < 2; ++i) {
    ExperimentConfig cfg;
    cfg.epsilon = 0.01;
    cfg.a = 0.5;
    cfg.t_end = 1e4;
    cfg.dt_factor = factors[i];
    dev[i] = simulate(cfg).row.deviation;
  }
  const double rel = std::abs(dev[1] - dev[0]) / dev[0];
  report(4, rel <= 0.05, "step doubling a=0.5 eps=0.01 t=1e4",
         fmt("h=0.01eps: %.4e, h=0.02eps: %.4e, relative difference %.2f%%", dev[0], dev[1], 100 * rel));
}

void resonance_identities() {
  bool ok = true;
  std::string detail;
  for (double e : kEps) {
    const auto w = ladder(e);
    const auto d = build_resonance(w, e, 1);
    const double a = d.gap.alpha, mu = d.gap.mu;
    const double L = std::log(1.0 / e);
    // recomputed here from the frequencies and the module, not taken from the checks struct
    bool gap = true, res = true, nonres = true;
    double max_res = 0.0, min_ratio = INFINITY;
    for (const auto& k : enumerate_multi_indices(7, 2)) {
      const double kw = std::abs(k.dot(w));
      if (kw != 0.0) {
        const double lv = std::log(kw) / L;
        if (lv >= a && lv <= a + mu) gap = false;
      }
      const double kv = std::abs(d.k_dot_varpi(k));
      if (d.in_module(k)) {
        max_res = std::max(max_res, kv);
      } else {
        min_ratio = std::min(min_ratio, kv / (0.5 * std::pow(e, -a - mu)));
      }
    }
    for (const auto& k : d.R) res = res && std::abs(d.k_dot_varpi(k)) <= 1e-8 / e;
    nonres = min_ratio >= 1.0;
    double tn = 0.0;
    for (double t : d.theta) tn += t * t;
    const double theta_scaled = std::sqrt(tn) * std::pow(e, a);
    const bool th = theta_scaled <= 10.0;
    ok = ok && gap && res && nonres && th;
    detail += fmt("eps=%g: gap %s, max|k.varpi| on M %.1e, min ratio %.2f, |theta|eps^a %.3f; ", e,
                  gap ? "empty" : "OCCUPIED", max_res, min_ratio, theta_scaled);
  }
  report(5, ok, "resonance identities N=1", detail);
}

std::shared_ptr<const MfeContext> example_context(double e) {
  const auto w = ladder(e);
  SystemConfig sys{BlockLayout::scalar_blocks(7), e, w, example_potential(e)};
  return std::make_shared<const MfeContext>(sys, build_resonance(w, e, 1), MfeOptions{});
}

void mfe_suite() {
  const std::vector<double> eps{0.02, 0.01};
  std::vector<double> recon, drift;
  bool defect_ok = true, invariants_ok = true;
  std::string d_defect, d_inv;
  double worst_sym = 0.0, worst_imag = 0.0;
  for (double e : eps) {
    const auto ctx = example_context(e);
    const auto s0 = example_state(e);
    const auto c = construct(ctx, s0);
    const bool hit = c.report.sup_max <= 10 * e * e;
    defect_ok = defect_ok && hit;
    d_defect += fmt("eps=%g: %.3e vs %.1e after %zu sweeps (%s)%s; ", e, c.report.sup_max, 10 * e * e,
                    c.report.sweeps, c.report.stop_reason.c_str(), hit ? "" : " OUT");
    worst_sym = std::max(worst_sym, c.z.conjugate_symmetry_error());

    TrackOptions to;
    to.threads = 0;
    const auto tr = track_invariant(ctx, s0, 3, to);
    double r = 0.0;
    for (const auto& w : tr.windows) {
      r = std::max(r, w.reconstruction_error);
      worst_imag = std::max(worst_imag, w.max_imag);
    }
    recon.push_back(r);
    drift.push_back(tr.max_drift);
    for (int s = 0; s <= 16; ++s) {
      const double t = ctx->window() * s / 16.0;
      worst_imag = std::max(worst_imag, std::abs(almost_invariant(c.z, t).imag));
      worst_imag = std::max(worst_imag, reconstruct(c.z, t).max_imag);
    }
  }
  invariants_ok = worst_sym <= 1e-10 && worst_imag <= 1e-10;
  const double s_recon = loglog_slope(eps, recon), s_drift = loglog_slope(eps, drift);

  // gradient of the modulation potential against central differences of its defining sum
  double worst_fd = 0.0;
  for (double e : eps) {
    const auto ctx = example_context(e);
    const auto z = random_set(ctx, 17);
    const double eta = 1e-6, tau = 0.35;
    for (std::size_t i = 0; i < ctx->num_modes(); ++i)
      for (std::size_t j = 0; j < ctx->num_blocks(); ++j) {
        const auto g = modulation_potential_gradient(z, j, ctx->modes()[i], tau)[0];
        const std::size_t var = ctx->negated(i);
        const bool slow = j == 0 && var == ctx->zero_mode();
        const cplx dirs[] = {cplx(1.0, 0.0), cplx(0.0, 1.0)};
        for (int d = 0; d < (slow ? 1 : 2); ++d) {
          auto zp = z, zm = z;
          zp.at(j, var).coeff(0, 0) += eta * dirs[d];
          zm.at(j, var).coeff(0, 0) -= eta * dirs[d];
          const cplx fd = (modulation_potential_oracle(zp, tau) - modulation_potential_oracle(zm, tau)) / (2 * eta);
          worst_fd = std::max(worst_fd, std::abs(fd - g * dirs[d]) / std::max(1.0, std::abs(g)));
        }
      }
  }

  // U = 0: the free oscillation is an exact expansion
  const std::vector<double> wg{1.0 / 0.01, 1.37 / 0.01, 1.81 / 0.01};
  const auto Lg = BlockLayout::scalar_blocks(3);
  SystemConfig free_sys{Lg, 0.01, wg, std::make_shared<ZeroPotential>(Lg)};
  const auto free_ctx = std::make_shared<const MfeContext>(free_sys, build_resonance(wg, 0.01, 1), MfeOptions{});
  const PhaseState fs{BlockVector(Lg, {0.2, 0.6, 0.7, -0.9}), BlockVector(Lg, {1.0, 0.003, 0.004, 0.007})};
  const auto fc = construct(free_ctx, fs);
  TrackOptions to1;
  to1.threads = 0;
  const auto ft = track_invariant(free_ctx, fs, 3, to1);
  const bool fixed_ok = fc.report.sup_max <= 1e-12 && ft.sum_drifts + ft.sum_jumps <= 1e-12;

  report(6, defect_ok && s_recon >= 1.5 && s_drift >= 1.5 && worst_fd <= 1e-6 && invariants_ok && fixed_ok,
         "MFE property suite eps in {0.02, 0.01}",
         d_defect +
             fmt("reconstruction error %.3e / %.3e slope %.2f; max drift %.3e / %.3e slope %.2f; "
                 "grad FD rel err %.1e; conj symmetry %.1e, imag parts %.1e; U=0 defect %.1e drift+jumps %.1e",
                 recon[0], recon[1], s_recon, drift[0], drift[1], s_drift, worst_fd, worst_sym, worst_imag,
                 fc.report.sup_max, ft.sum_drifts + ft.sum_jumps));
}

void invariant_vs_energy() {
  const double e = 0.01;
  const auto ctx = example_context(e);
  TrackOptions to;
  to.threads = 0;
  const auto tr = track_invariant(ctx, example_state(e), 20, to);
  const double budget = 10 * std::pow(e, 2);  // ten times the per-window drift budget eps^(N+1)
  const double total = tr.sum_jumps + tr.sum_drifts;
  report(7, tr.max_E_minus_H <= 0.5 && total <= budget, "almost-invariant over 20 windows eps=0.01",
         fmt("max|E-H| %.3e (need <= 0.5); jumps %.3e + drifts %.3e = %.3e vs %.1e; max drift %.2e; "
             "|E_end - E_0| %.3e",
             tr.max_E_minus_H, tr.sum_jumps, tr.sum_drifts, total, budget, tr.max_drift, tr.total_deviation));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance run"};
  bool strict = false;
  std::vector<int> only;
  app.add_flag("--strict", strict, "nonzero exit status when any criterion fails");
  app.add_option("--only", only, "criteria to run (1-7)")->delimiter(',')->check(CLI::Range(1, 7));
  CLI11_PARSE(app, argc, argv);
  const std::set<int> sel = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7} : std::set<int>(only.begin(), only.end());

  try {
    if (sel.count(1)) initial_energies();
    if (sel.count(5)) resonance_identities();
    if (sel.count(6)) mfe_suite();
    if (sel.count(7)) invariant_vs_energy();
    if (sel.count(4)) step_doubling();
    if (sel.count(2)) deviation_table(2, false, {4.56e-1, 1.85e-1, 9.54e-2});
    if (sel.count(3)) deviation_table(3, true, {3.95e-2, 1.41e-2, 4.81e-3});
  } catch (const std::exception& ex) {
    std::printf("ERROR %s\n", ex.what());
    return 3;
  }
  std::printf("acceptance: %zu evaluated, %d failed\n", sel.size(), failures);
  return strict && failures > 0 ? 1 : 0;
}
