// oscisep: simulate, sweep, resonance and mfe subcommands.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "oscisep/experiment.hpp"
#include "oscisep/integrator.hpp"
#include "oscisep/mfe.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kNumerical = 2;

struct Overrides {
  std::optional<double> epsilon;
  std::optional<std::string> a;
  std::optional<double> tmax;
  std::optional<double> dt_factor;
  std::optional<std::string> out;
  std::optional<int> order;
};

oscisep::ExperimentConfig load(const std::string& path, const Overrides& o) {
  auto cfg = path.empty() ? oscisep::ExperimentConfig{} : oscisep::load_config(path);
  if (o.epsilon) cfg.epsilon = *o.epsilon;
  if (o.a) {
    if (*o.a == "epsilon") {
      cfg.a_is_epsilon = true;
    } else {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(*o.a, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != o.a->size()) throw oscisep::ConfigError("--a: expected a number or 'epsilon'");
      cfg.a = v;
      cfg.a_is_epsilon = false;
    }
  }
  if (o.tmax) cfg.t_end = *o.tmax;
  if (o.dt_factor) cfg.dt_factor = *o.dt_factor;
  if (o.out) cfg.out = *o.out;
  if (o.order) {
    if (*o.order < 1) throw oscisep::ConfigError("--order must be >= 1");
    cfg.N = *o.order;
  }
  cfg.validate();
  return cfg;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << content;
}

std::vector<double> parse_epsilons(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) throw oscisep::ConfigError("--epsilons: bad entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiscale oscillator laboratory"};
  app.require_subcommand(1);
  std::string config;
  Overrides ov;
  std::size_t threads = 0;

  auto* sim = app.add_subcommand("simulate", "Integrate one configuration and report the H_osc deviation");
  sim->add_option("--config", config, "Config file");
  sim->add_option("--epsilon", ov.epsilon);
  sim->add_option("--a", ov.a, "Number or 'epsilon'");
  sim->add_option("--tmax", ov.tmax);
  sim->add_option("--dt-factor", ov.dt_factor);
  sim->add_option("--out", ov.out, "Output directory for energies.csv");

  auto* sw = app.add_subcommand("sweep", "Deviation table over several epsilon values");
  std::string eps_list;
  std::string table_path;
  sw->add_option("--config", config);
  sw->add_option("--epsilons", eps_list, "Comma separated")->required();
  sw->add_option("--a", ov.a);
  sw->add_option("--tmax", ov.tmax);
  sw->add_option("--dt-factor", ov.dt_factor);
  sw->add_option("--out", ov.out, "Per-run energies go to OUT/eps_<value>/");
  sw->add_option("--table", table_path, "Write the table here instead of stdout");
  sw->add_option("--threads", threads);

  auto* res = app.add_subcommand("resonance", "Gap, resonant set, modified frequencies and checks");
  bool json_out = false;
  res->add_option("--config", config);
  res->add_option("--epsilon", ov.epsilon);
  res->add_option("--order", ov.order);
  res->add_flag("--json", json_out);

  auto* mfe = app.add_subcommand("mfe", "Modulated expansion diagnostics over consecutive windows");
  std::optional<std::size_t> windows;
  std::string csv_path;
  mfe->add_option("--config", config);
  mfe->add_option("--epsilon", ov.epsilon);
  mfe->add_option("--a", ov.a);
  mfe->add_option("--order", ov.order);
  mfe->add_option("--windows", windows);
  mfe->add_option("--out", ov.out, "Write the JSON report here instead of stdout");
  mfe->add_option("--csv", csv_path, "E and H_osc series");
  mfe->add_option("--threads", threads);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    const auto cfg = load(config, ov);
    if (sim->parsed()) {
      const auto r = oscisep::simulate(cfg);
      if (!cfg.out.empty()) {
        std::filesystem::create_directories(cfg.out);
        oscisep::write_energies_csv((std::filesystem::path(cfg.out) / "energies.csv").string(), r.trajectory);
      }
      std::printf("epsilon = %g, a = %g, h = %g, steps = %llu, samples = %zu\n", cfg.epsilon, cfg.a_value(), cfg.step(),
                  static_cast<unsigned long long>(r.row.steps), r.row.samples);
      std::printf("initial energies:");
      for (double e : r.trajectory.energies.front().per_mode) std::printf(" %.3f", e);
      std::printf("\nmaximal deviation of H_osc on [0, %g]: %.3e at t = %.6g\n", cfg.t_end, r.row.deviation,
                  r.row.time_of_max);
      if (r.row.left_region_time) std::printf("warning: |q_0| exceeded %g at t = %g\n", cfg.monitor_radius, *r.row.left_region_time);
      std::printf("wall time %.2f s\n", r.row.wall_seconds);
    } else if (sw->parsed()) {
      const auto r = oscisep::sweep(cfg, parse_epsilons(eps_list), threads);
      std::ostringstream table;
      oscisep::write_sweep_csv(table, r);
      if (table_path.empty()) std::cout << table.str();
      else write_file(table_path, table.str());
      if (r.slope) std::fprintf(stderr, "log-log slope of deviation vs epsilon: %.4f\n", *r.slope);
      for (const auto& f : r.failures) std::fprintf(stderr, "epsilon %g failed: %s\n", f.epsilon, f.message.c_str());
      if (!r.failures.empty()) {
        bool blowup = false;
        for (const auto& f : r.failures) blowup |= f.message.find("explode") != std::string::npos;
        return blowup ? kNumerical : kValidation;
      }
    } else if (res->parsed()) {
      const auto r = oscisep::resonance_report(cfg);
      if (json_out) std::cout << r.dump(2) << "\n";
      else std::cout << oscisep::format_resonance_report(r);
    } else if (mfe->parsed()) {
      const auto r = oscisep::mfe_diagnose(cfg, windows ? *windows : cfg.windows, threads);
      if (!cfg.out.empty()) write_file(cfg.out, r.dump(2) + "\n");
      else std::cout << r.dump(2) << "\n";
      if (!csv_path.empty()) {
        std::ostringstream os;
        oscisep::write_mfe_series_csv(os, r);
        write_file(csv_path, os.str());
      }
    }
  } catch (const oscisep::BlowupError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumerical;
  } catch (const oscisep::MfeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  }
  return kOk;
}
