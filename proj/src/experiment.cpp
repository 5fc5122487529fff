#include "oscisep/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "oscisep/mfe.hpp"
#include "oscisep/resonance.hpp"

namespace oscisep {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Value {
  std::string raw;
  std::size_t line;

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("line " + std::to_string(line) + ": " + key + ": " + what);
  }

  double number(const std::string& key) const {
    double x = 0.0;
    const char* b = raw.data();
    const char* e = raw.data() + raw.size();
    auto [ptr, ec] = std::from_chars(b, e, x);
    if (ec != std::errc() || ptr != e) fail(key, "expected a number, got '" + raw + "'");
    if (!std::isfinite(x)) fail(key, "value must be finite");
    return x;
  }

  std::size_t count(const std::string& key) const {
    long long x = 0;
    const char* b = raw.data();
    const char* e = raw.data() + raw.size();
    auto [ptr, ec] = std::from_chars(b, e, x);
    if (ec != std::errc() || ptr != e) {
      // allow 1e5 style for large counts
      const double d = number(key);
      if (d < 0 || d != std::floor(d) || d > 1e15) fail(key, "expected a non-negative integer");
      return static_cast<std::size_t>(d);
    }
    if (x < 0) fail(key, "expected a non-negative integer");
    return static_cast<std::size_t>(x);
  }

  std::vector<double> list(const std::string& key) const {
    if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') fail(key, "expected a bracketed list");
    std::vector<double> out;
    std::string_view body = trim(std::string_view(raw).substr(1, raw.size() - 2));
    if (body.empty()) return out;
    std::size_t pos = 0;
    while (pos <= body.size()) {
      const auto comma = body.find(',', pos);
      const auto item = trim(body.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
      if (item.empty()) fail(key, "empty list entry");
      out.push_back(Value{std::string(item), line}.number(key));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    return out;
  }

  std::string text() const {
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') return raw.substr(1, raw.size() - 2);
    return raw;
  }
};

void ensure_all_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw ConfigError(std::string(what) + ": entries must be finite");
}

}  // namespace

std::vector<double> default_scaled_frequencies(double e) {
  return {1.0, 1.0 + e * e, 1.0 + e, 1.0 + std::pow(e, 0.75), 1.0 + std::pow(e, 2.0 / 3.0), 1.0 + std::sqrt(e), 2.0};
}

std::uint64_t ExperimentConfig::num_steps() const {
  return static_cast<std::uint64_t>(std::ceil(t_end / step() - 1e-9));
}

std::size_t ExperimentConfig::stride() const {
  if (record_stride) return record_stride;
  const std::uint64_t steps = num_steps();
  const std::uint64_t samples = std::max<std::uint64_t>(1, record_samples);
  return static_cast<std::size_t>(std::max<std::uint64_t>(1, steps / samples));
}

std::vector<double> ExperimentConfig::scaled_frequencies() const {
  return frequencies.empty() ? default_scaled_frequencies(epsilon) : frequencies;
}

void ExperimentConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
  if (!(dt_factor > 0.0) || !std::isfinite(dt_factor)) throw ConfigError("dt_factor must be positive");
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ConfigError("t_end must be positive");
  if (!std::isfinite(a)) throw ConfigError("a must be finite");
  if (!(monitor_radius > 0.0)) throw ConfigError("monitor_radius must be positive");
  if (!(slow_stiffness >= 0.0) || !std::isfinite(slow_stiffness)) throw ConfigError("slow_stiffness must be >= 0");
  if (N < 1) throw ConfigError("N must be >= 1");
  if (degree < 4) throw ConfigError("degree must be >= 4");
  if (record_samples == 0 && record_stride == 0) throw ConfigError("record_samples must be >= 1");
  const auto f = scaled_frequencies();
  if (f.empty()) throw ConfigError("frequencies: at least one fast oscillator is required");
  ensure_all_finite(f, "frequencies");
  for (double x : f)
    if (x < 1.0) throw ConfigError("frequencies: eps * omega_j must be >= 1");
  const std::size_t n = f.size();
  if (q0.size() != n + 1) throw ConfigError("q0: expected " + std::to_string(n + 1) + " entries");
  if (p0.size() != n + 1) throw ConfigError("p0: expected " + std::to_string(n + 1) + " entries");
  ensure_all_finite(q0, "q0");
  ensure_all_finite(p0, "p0");
  if (potential == PotentialKind::cubic) {
    const std::size_t nc = coupling.empty() ? example_coupling().size() : coupling.size();
    if (nc != n) throw ConfigError("coupling: expected " + std::to_string(n) + " entries");
    ensure_all_finite(coupling, "coupling");
  }
}

ExperimentConfig parse_config(std::string_view text) {
  std::map<std::string, Value> kv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    // a '#' inside a quoted string is kept
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string val(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": missing key");
    if (val.empty()) throw ConfigError("line " + std::to_string(line_no) + ": " + key + ": missing value");
    if (!kv.emplace(key, Value{val, line_no}).second)
      throw ConfigError("line " + std::to_string(line_no) + ": " + key + ": repeated key");
  }

  ExperimentConfig cfg;
  for (const auto& [key, v] : kv) {
    if (key == "epsilon") {
      cfg.epsilon = v.number(key);
    } else if (key == "a") {
      if (v.raw == "epsilon") {
        cfg.a_is_epsilon = true;
      } else {
        cfg.a = v.number(key);
        cfg.a_is_epsilon = false;
      }
    } else if (key == "potential") {
      const auto s = v.text();
      if (s == "cubic") cfg.potential = PotentialKind::cubic;
      else if (s == "zero") cfg.potential = PotentialKind::zero;
      else v.fail(key, "expected cubic or zero");
    } else if (key == "coupling") {
      cfg.coupling = v.list(key);
    } else if (key == "slow_stiffness") {
      cfg.slow_stiffness = v.number(key);
    } else if (key == "frequencies") {
      if (v.raw == "default") cfg.frequencies.clear();
      else cfg.frequencies = v.list(key);
    } else if (key == "q0") {
      cfg.q0 = v.list(key);
    } else if (key == "p0") {
      cfg.p0 = v.list(key);
    } else if (key == "t_end") {
      cfg.t_end = v.number(key);
    } else if (key == "dt_factor") {
      cfg.dt_factor = v.number(key);
    } else if (key == "record_samples") {
      cfg.record_samples = v.count(key);
    } else if (key == "record_stride") {
      cfg.record_stride = v.count(key);
    } else if (key == "N") {
      const auto n = v.count(key);
      if (n > 8) v.fail(key, "orders above 8 are not supported");
      cfg.N = static_cast<int>(n);
    } else if (key == "monitor_radius") {
      cfg.monitor_radius = v.number(key);
    } else if (key == "out") {
      cfg.out = v.text();
    } else if (key == "windows") {
      cfg.windows = v.count(key);
    } else if (key == "degree") {
      cfg.degree = v.count(key);
    } else {
      v.fail(key, "unknown key");
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

SystemConfig build_system(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto f = cfg.scaled_frequencies();
  const std::size_t n = f.size();
  SystemConfig sys;
  sys.layout = BlockLayout::scalar_blocks(n);
  sys.epsilon = cfg.epsilon;
  sys.omega.resize(n);
  for (std::size_t j = 0; j < n; ++j) sys.omega[j] = f[j] / cfg.epsilon;
  sys.monitor_radius = cfg.monitor_radius;
  if (cfg.potential == PotentialKind::zero) {
    sys.potential = std::make_shared<ZeroPotential>(sys.layout);
  } else {
    std::vector<double> c{cfg.a_value()};
    const auto& fast = cfg.coupling.empty() ? example_coupling() : cfg.coupling;
    c.insert(c.end(), fast.begin(), fast.end());
    sys.potential = std::make_shared<RidgePotential>(sys.layout, cfg.slow_stiffness, std::move(c));
  }
  sys.validate();
  return sys;
}

PhaseState initial_state(const ExperimentConfig& cfg, const BlockLayout& layout) {
  if (cfg.q0.size() != layout.size() || cfg.p0.size() != layout.size())
    throw ConfigError("initial data does not match the number of oscillators");
  std::vector<double> q = cfg.q0;
  for (std::size_t i = 1; i < q.size(); ++i) q[i] *= cfg.epsilon;
  return PhaseState{BlockVector(layout, cfg.p0), BlockVector(layout, std::move(q))};
}

std::pair<double, double> max_deviation(const Trajectory& traj) {
  if (traj.energies.empty()) return {0.0, 0.0};
  const double h0 = traj.energies.front().oscillatory;
  double dev = 0.0, at = traj.times.front();
  for (std::size_t i = 0; i < traj.energies.size(); ++i) {
    const double d = std::abs(traj.energies[i].oscillatory - h0);
    if (d > dev) {
      dev = d;
      at = traj.times[i];
    }
  }
  return {dev, at};
}

SimulationResult simulate(const ExperimentConfig& cfg) {
  const auto sys = build_system(cfg);
  const auto s0 = initial_state(cfg, sys.layout);
  IntegratorConfig ic;
  ic.h = cfg.step();
  ic.record_stride = cfg.stride();
  const auto start = std::chrono::steady_clock::now();
  SimulationResult r;
  r.trajectory = integrate(s0, cfg.t_end, ic, sys);
  r.row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.row.epsilon = cfg.epsilon;
  r.row.a = cfg.a_value();
  std::tie(r.row.deviation, r.row.time_of_max) = max_deviation(r.trajectory);
  r.row.steps = r.trajectory.steps;
  r.row.samples = r.trajectory.times.size();
  r.row.left_region_time = r.trajectory.left_region_time;
  return r;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_energies_csv(std::ostream& os, const Trajectory& traj) {
  const std::size_t n = traj.energies.empty() ? 0 : traj.energies.front().per_mode.size();
  os << "t";
  for (std::size_t j = 1; j <= n; ++j) os << ",E_" << j;
  os << ",H_osc,H_slow,H_total\n";
  std::string line;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const auto& e = traj.energies[i];
    line = format_double(traj.times[i]);
    for (double x : e.per_mode) line += "," + format_double(x);
    line += "," + format_double(e.oscillatory) + "," + format_double(e.slow) + "," + format_double(e.total) + "\n";
    os << line;
  }
}

void write_energies_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  write_energies_csv(os, traj);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need two or more points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y[i]) - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("loglog_slope: x values must not all coincide");
  return sxy / sxx;
}

SweepResult sweep(const ExperimentConfig& cfg, const std::vector<double>& epsilons, std::size_t threads) {
  if (epsilons.size() < 2) throw ConfigError("sweep: at least two epsilon values are required");
  std::vector<ExperimentConfig> runs;
  for (double e : epsilons) {
    ExperimentConfig c = cfg;
    c.epsilon = e;
    c.validate();
    runs.push_back(std::move(c));
  }
  std::vector<std::optional<DeviationRow>> rows(runs.size());
  std::vector<std::string> errors(runs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= runs.size()) return;
      try {
        auto r = simulate(runs[i]);
        if (!cfg.out.empty()) {
          char name[64];
          std::snprintf(name, sizeof name, "eps_%g", runs[i].epsilon);
          // repeated epsilons get their own directory
          std::filesystem::path dir = std::filesystem::path(cfg.out) / name;
          if (std::count(epsilons.begin(), epsilons.begin() + static_cast<std::ptrdiff_t>(i), epsilons[i]) > 0)
            dir += "_" + std::to_string(i);
          std::filesystem::create_directories(dir);
          write_energies_csv((dir / "energies.csv").string(), r.trajectory);
        }
        rows[i] = r.row;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::size_t nthreads = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  nthreads = std::min(nthreads, runs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SweepResult res;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (rows[i]) {
      res.rows.push_back(*rows[i]);
      if (rows[i]->deviation > 0.0) {
        xs.push_back(rows[i]->epsilon);
        ys.push_back(rows[i]->deviation);
      }
    } else {
      res.failures.push_back({runs[i].epsilon, errors[i]});
    }
  }
  const bool distinct = xs.size() >= 2 && std::adjacent_find(xs.begin(), xs.end(), std::not_equal_to<>()) != xs.end();
  if (distinct) res.slope = loglog_slope(xs, ys);
  return res;
}

void write_sweep_csv(std::ostream& os, const SweepResult& result) {
  os << "epsilon,a,deviation,time_of_max,steps,samples\n";
  for (const auto& r : result.rows)
    os << format_double(r.epsilon) << ',' << format_double(r.a) << ',' << format_double(r.deviation) << ','
       << format_double(r.time_of_max) << ',' << r.steps << ',' << r.samples << '\n';
}

namespace {

nlohmann::json index_list(const std::vector<MultiIndex>& ks) {
  auto arr = nlohmann::json::array();
  for (const auto& k : ks) arr.push_back(k.components());
  return arr;
}

}  // namespace

nlohmann::json resonance_report(const ExperimentConfig& cfg) {
  const auto sys = build_system(cfg);
  const auto data = build_resonance(sys.omega, cfg.epsilon, cfg.N);
  const auto checks = check_resonance(data);
  nlohmann::json j;
  j["epsilon"] = cfg.epsilon;
  j["N"] = cfg.N;
  j["n"] = data.num_fast();
  j["omega"] = data.omega;
  j["M"] = data.gap.M_count;
  j["alpha"] = data.gap.alpha;
  j["mu"] = data.gap.mu;
  j["gap_band"] = {data.gap.band_lo, data.gap.band_hi};
  j["R"] = index_list(data.R);
  j["basis"] = index_list(data.basis);
  j["theta"] = data.theta;
  j["varpi"] = data.varpi;
  j["K"] = index_list(data.K_set);
  j["theta_norm_scaled"] = data.theta_norm_scaled;
  j["checks"] = {{"gap_empty", checks.gap_empty},
                 {"max_resonant_residual", checks.max_resonant_residual},
                 {"residual_tolerance", checks.residual_tolerance},
                 {"resonant_ok", checks.resonant_ok()},
                 {"min_nonresonant_ratio", checks.min_nonresonant_ratio},
                 {"nonresonant_ok", checks.nonresonant_ok()},
                 {"theta_ok", checks.theta_ok()},
                 {"all", checks.all()}};
  return j;
}

std::string format_resonance_report(const nlohmann::json& r) {
  std::ostringstream os;
  auto idx = [](const nlohmann::json& k) {
    std::string s = "(";
    for (std::size_t i = 0; i < k.size(); ++i) s += (i ? "," : "") + std::to_string(k[i].get<int>());
    return s + ")";
  };
  auto vec = [](const nlohmann::json& v) {
    std::string s = "(";
    for (std::size_t i = 0; i < v.size(); ++i) {
      char b[32];
      std::snprintf(b, sizeof b, "%s%.10g", i ? ", " : "", v[i].get<double>());
      s += b;
    }
    return s + ")";
  };
  os << "epsilon " << r["epsilon"].get<double>() << ", N " << r["N"].get<int>() << ", n " << r["n"].get<int>() << "\n";
  os << "M " << r["M"].get<std::size_t>() << "  alpha " << r["alpha"].get<double>() << "  mu " << r["mu"].get<double>()
     << "  empty band [" << r["gap_band"][0].get<double>() << ", " << r["gap_band"][1].get<double>() << "]\n";
  os << "R (" << r["R"].size() << "):";
  for (const auto& k : r["R"]) os << ' ' << idx(k);
  os << "\nbasis:";
  for (const auto& k : r["basis"]) os << ' ' << idx(k);
  os << "\ntheta " << vec(r["theta"]) << "\nvarpi " << vec(r["varpi"]) << "\n";
  os << "K (" << r["K"].size() << "):";
  for (const auto& k : r["K"]) os << ' ' << idx(k);
  const auto& c = r["checks"];
  auto mark = [](bool ok) { return ok ? "ok" : "FAILED"; };
  os << "\ngap empty: " << mark(c["gap_empty"].get<bool>()) << "\n";
  os << "exact resonance: max |k.varpi| = " << c["max_resonant_residual"].get<double>() << " (tolerance "
     << c["residual_tolerance"].get<double>() << ") " << mark(c["resonant_ok"].get<bool>()) << "\n";
  os << "non-resonance: min ratio " << c["min_nonresonant_ratio"].get<double>() << " "
     << mark(c["nonresonant_ok"].get<bool>()) << "\n";
  os << "|theta| eps^alpha = " << r["theta_norm_scaled"].get<double>() << " " << mark(c["theta_ok"].get<bool>()) << "\n";
  return os.str();
}

nlohmann::json mfe_diagnose(const ExperimentConfig& cfg, std::size_t windows, std::size_t threads) {
  if (windows == 0) throw ConfigError("mfe: windows must be >= 1");
  auto sys = build_system(cfg);
  const auto s0 = initial_state(cfg, sys.layout);
  auto data = build_resonance(sys.omega, cfg.epsilon, cfg.N);
  MfeOptions opts;
  opts.N = cfg.N;
  opts.degree = cfg.degree;
  auto ctx = std::make_shared<const MfeContext>(sys, std::move(data), opts);

  const auto first = construct(ctx, s0, 0.0);
  TrackOptions topts;
  topts.threads = threads;
  const auto track = track_invariant(ctx, s0, windows, topts);

  nlohmann::json j;
  j["epsilon"] = cfg.epsilon;
  j["a"] = cfg.a_value();
  j["N"] = cfg.N;
  j["degree"] = cfg.degree;
  j["alpha"] = ctx->alpha();
  j["window_length"] = ctx->window();
  j["modes"] = index_list(ctx->modes());
  j["target_defect"] = ctx->target_defect();
  j["max_sweeps"] = ctx->max_sweeps();
  j["first_window"] = {{"sweeps", first.report.sweeps},
                       {"stop_reason", first.report.stop_reason},
                       {"defect", first.report.sup_max},
                       {"lambda_c2", first.report.lambda_c2},
                       {"defect_history", first.report.history},
                       {"c2_history", first.report.c2_history}};
  auto coeffs = nlohmann::json::array();
  for (const auto& c : coefficient_sizes(first.z))
    coeffs.push_back({{"j", c.j}, {"k", c.k.components()}, {"sup", c.sup}, {"scaled", c.scaled}});
  j["coefficients"] = coeffs;

  auto wins = nlohmann::json::array();
  auto series = nlohmann::json::array();
  for (const auto& w : track.windows) {
    wins.push_back({{"window", w.window},
                    {"t_start", w.t_start},
                    {"t_end", w.t_end},
                    {"E_start", w.E_start},
                    {"E_end", w.E_end},
                    {"drift", w.drift},
                    {"jump", w.jump},
                    {"H_start", w.H_start},
                    {"H_end", w.H_end},
                    {"max_E_minus_H", w.max_E_minus_H},
                    {"reconstruction_error", w.reconstruction_error},
                    {"max_imag", w.max_imag},
                    {"sweeps", w.sweeps},
                    {"defect", w.final_defect},
                    {"stop_reason", w.stop_reason}});
    for (std::size_t s = 0; s < w.sample_times.size(); ++s)
      series.push_back({{"t", w.sample_times[s]}, {"window", w.window}, {"E", w.sample_E[s]}, {"H", w.sample_H[s]}});
  }
  j["windows"] = wins;
  j["series"] = series;
  j["summary"] = {{"sum_drifts", track.sum_drifts},
                  {"sum_jumps", track.sum_jumps},
                  {"max_drift", track.max_drift},
                  {"max_E_minus_H", track.max_E_minus_H},
                  {"total_deviation", track.total_deviation},
                  {"triangle_bound_holds", track.total_deviation <= track.sum_drifts + track.sum_jumps + 1e-14}};
  return j;
}

void write_mfe_series_csv(std::ostream& os, const nlohmann::json& report) {
  os << "t,window,E,H_osc\n";
  for (const auto& s : report.at("series"))
    os << format_double(s["t"].get<double>()) << ',' << s["window"].get<std::size_t>() << ','
       << format_double(s["E"].get<double>()) << ',' << format_double(s["H"].get<double>()) << '\n';
}

}  // namespace oscisep
