#include "oscisep/model.hpp"

#include "oscisep/kernels.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace oscisep {

MultilinearForm::MultilinearForm(std::vector<std::size_t> slot_dims, std::vector<double> entries)
    : slot_dims_(std::move(slot_dims)), entries_(std::move(entries)) {
  std::size_t count = 1;
  for (std::size_t d : slot_dims_) count *= d;
  if (count != entries_.size()) throw DimensionError("MultilinearForm: entry count does not match slot dimensions");
}

double MultilinearForm::at(std::span<const std::size_t> index) const {
  if (index.size() != slot_dims_.size()) throw DimensionError("MultilinearForm::at: wrong index arity");
  std::size_t flat = 0;
  for (std::size_t s = 0; s < index.size(); ++s) flat = flat * slot_dims_[s] + index[s];
  return entries_.at(flat);
}

cplx MultilinearForm::evaluate(std::span<const std::span<const cplx>> args) const {
  if (args.size() != slot_dims_.size()) throw DimensionError("MultilinearForm::evaluate: wrong number of arguments");
  for (std::size_t s = 0; s < args.size(); ++s)
    if (args[s].size() != slot_dims_[s]) throw DimensionError("MultilinearForm::evaluate: argument dimension");
  if (slot_dims_.empty()) return entries_.empty() ? 0.0 : entries_[0];

  cplx total = 0.0;
  std::vector<std::size_t> idx(slot_dims_.size(), 0);
  for (std::size_t flat = 0; flat < entries_.size(); ++flat) {
    if (entries_[flat] != 0.0) {
      cplx term = entries_[flat];
      for (std::size_t s = 0; s < idx.size(); ++s) term *= args[s][idx[s]];
      total += term;
    }
    for (std::size_t s = idx.size(); s-- > 0;) {
      if (++idx[s] < slot_dims_[s]) break;
      idx[s] = 0;
    }
  }
  return total;
}

bool MultilinearForm::is_zero() const {
  for (double e : entries_)
    if (e != 0.0) return false;
  return true;
}

BlockVector Potential::gradient(const BlockVector& q) const {
  BlockVector g(q.layout());
  gradient(q.flat(), g.flat());
  return g;
}

std::vector<double> Potential::gradient(const BlockVector& q, std::size_t j) const {
  BlockVector g = gradient(q);
  auto b = g.block(j);
  return {b.begin(), b.end()};
}

MultilinearForm Potential::derivative_form(const BlockVector& base, std::span<const std::size_t> blocks) const {
  const std::size_t m = blocks.size();
  if (m == 0) throw std::invalid_argument("derivative_form: order must be >= 1");
  if (static_cast<long long>(m) > max_derivative_order())
    throw std::domain_error("derivative_form: order " + std::to_string(m) + " not available from " + describe());

  const BlockLayout& layout = base.layout();
  std::vector<std::size_t> dims;
  std::size_t count = 1;
  for (std::size_t j : blocks) {
    dims.push_back(layout.dim(j));
    count *= layout.dim(j);
  }

  std::vector<ComplexBlockVector> units(m, ComplexBlockVector(layout));
  std::vector<const ComplexBlockVector*> ptrs;
  for (auto& u : units) ptrs.push_back(&u);

  std::vector<double> entries(count);
  std::vector<std::size_t> idx(m, 0);
  for (std::size_t flat = 0; flat < count; ++flat) {
    for (std::size_t s = 0; s < m; ++s) {
      std::fill(units[s].flat().begin(), units[s].flat().end(), cplx{});
      units[s].block(blocks[s])[idx[s]] = 1.0;
    }
    entries[flat] = contract(base, ptrs).real();
    for (std::size_t s = m; s-- > 0;) {
      if (++idx[s] < dims[s]) break;
      idx[s] = 0;
    }
  }
  return MultilinearForm(std::move(dims), std::move(entries));
}

RidgePotential::RidgePotential(BlockLayout layout, double slow_stiffness, std::vector<double> coefficients,
                               RidgeProfile profile)
    : layout_(std::move(layout)),
      slow_dim_(layout_.dim(0)),
      slow_stiffness_(slow_stiffness),
      coeffs_(std::move(coefficients)),
      profile_(profile),
      kernels_(&kernels::active()) {
  if (coeffs_.size() != layout_.size())
    throw DimensionError("RidgePotential: need one coefficient per component (" + std::to_string(layout_.size()) + ")");
}

double RidgePotential::profile_derivative(double s, std::size_t m) const {
  switch (profile_) {
    case RidgeProfile::cubic:
      switch (m) {
        case 0: return s * s * s;
        case 1: return 3.0 * s * s;
        case 2: return 6.0 * s;
        case 3: return 6.0;
        default: return 0.0;
      }
    case RidgeProfile::cosine:
      switch (m % 4) {
        case 0: return std::cos(s);
        case 1: return -std::sin(s);
        case 2: return -std::cos(s);
        default: return std::sin(s);
      }
  }
  return 0.0;
}

double RidgePotential::ridge(std::span<const double> q) const {
  return kernels_->dot(coeffs_.data(), q.data(), q.size());
}

cplx RidgePotential::ridge(const ComplexBlockVector& v) const {
  cplx s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += coeffs_[i] * v[i];
  return s;
}

double RidgePotential::value(const BlockVector& q) const {
  q.require_layout(layout_, "RidgePotential::value");
  double slow = 0.0;
  for (double x : q.block(0)) slow += x * x;
  return 0.5 * slow_stiffness_ * slow + profile_derivative(ridge(q.flat()), 0);
}

void RidgePotential::gradient(std::span<const double> q, std::span<double> grad) const {
  const auto& k = *kernels_;
  const double s = k.dot(coeffs_.data(), q.data(), q.size());
  const double fp = profile_ == RidgeProfile::cubic ? 3.0 * s * s : -std::sin(s);
  k.scale(grad.data(), coeffs_.data(), fp, q.size());
  for (std::size_t i = 0; i < slow_dim_; ++i) grad[i] += slow_stiffness_ * q[i];
}

cplx RidgePotential::contract(const BlockVector& base, std::span<const ComplexBlockVector* const> args) const {
  const std::size_t m = args.size();
  if (m == 0) throw std::invalid_argument("RidgePotential::contract: need at least one argument");
  cplx prod = profile_derivative(ridge(base.flat()), m);
  for (const auto* v : args) prod *= ridge(*v);
  if (m == 1) {
    auto q0 = base.block(0);
    auto v0 = args[0]->block(0);
    for (std::size_t i = 0; i < q0.size(); ++i) prod += slow_stiffness_ * q0[i] * v0[i];
  } else if (m == 2) {
    auto v0 = args[0]->block(0);
    auto w0 = args[1]->block(0);
    for (std::size_t i = 0; i < v0.size(); ++i) prod += slow_stiffness_ * v0[i] * w0[i];
  }
  return prod;
}

void RidgePotential::contract_gradient(const BlockVector& base, std::span<const ComplexBlockVector* const> args,
                                       ComplexBlockVector& out) const {
  const std::size_t m = args.size();
  cplx scale = profile_derivative(ridge(base.flat()), m + 1);
  for (const auto* v : args) scale *= ridge(*v);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * coeffs_[i];
  auto out0 = out.block(0);
  if (m == 0) {
    auto q0 = base.block(0);
    for (std::size_t i = 0; i < q0.size(); ++i) out0[i] += slow_stiffness_ * q0[i];
  } else if (m == 1) {
    auto v0 = args[0]->block(0);
    for (std::size_t i = 0; i < v0.size(); ++i) out0[i] += slow_stiffness_ * v0[i];
  }
}

std::string RidgePotential::describe() const {
  std::ostringstream os;
  os << "ridge(" << (profile_ == RidgeProfile::cubic ? "cubic" : "cosine") << ", k=" << slow_stiffness_ << ")";
  return os.str();
}

void ZeroPotential::gradient(std::span<const double>, std::span<double> grad) const {
  std::fill(grad.begin(), grad.end(), 0.0);
}

void ZeroPotential::contract_gradient(const BlockVector&, std::span<const ComplexBlockVector* const>,
                                      ComplexBlockVector& out) const {
  std::fill(out.flat().begin(), out.flat().end(), cplx{});
}

const std::vector<double>& example_coupling() {
  static const std::vector<double> c{1.0, 1.0, 2.0, 3.0, 1.0, 1.0, 3.0};
  return c;
}

std::shared_ptr<const Potential> example_potential(double a) {
  std::vector<double> coeffs{a};
  coeffs.insert(coeffs.end(), example_coupling().begin(), example_coupling().end());
  return std::make_shared<RidgePotential>(BlockLayout::scalar_blocks(7), 1.0, std::move(coeffs));
}

std::vector<double> SystemConfig::component_frequencies() const {
  std::vector<double> w(layout.size(), 0.0);
  for (std::size_t j = 1; j < layout.num_blocks(); ++j)
    for (std::size_t i = 0; i < layout.dim(j); ++i) w[layout.offset(j) + i] = frequency(j);
  return w;
}

void SystemConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("SystemConfig: epsilon must lie in (0, 1)");
  if (layout.num_blocks() != omega.size() + 1)
    throw DimensionError("SystemConfig: need one frequency per fast block");
  for (std::size_t j = 0; j < omega.size(); ++j) {
    // Frequencies derived as (eps*omega)/eps may land one ulp below 1/eps.
    if (!(omega[j] * epsilon >= 1.0 - 1e-12))
      throw std::invalid_argument("SystemConfig: omega_" + std::to_string(j + 1) + " is below 1/epsilon");
  }
  if (!(monitor_radius > 0.0)) throw std::invalid_argument("SystemConfig: monitor_radius must be positive");
  if (!potential) throw std::invalid_argument("SystemConfig: missing potential");
}

BlockVector acceleration(const BlockVector& q, const SystemConfig& config) {
  q.require_layout(config.layout, "acceleration");
  BlockVector a = config.potential->gradient(q);
  for (std::size_t j = 0; j < config.layout.num_blocks(); ++j) {
    const double w2 = config.frequency(j) * config.frequency(j);
    auto qj = q.block(j);
    auto aj = a.block(j);
    for (std::size_t i = 0; i < qj.size(); ++i) aj[i] = -w2 * qj[i] - aj[i];
  }
  return a;
}

double oscillatory_energy(const BlockVector& p, const BlockVector& q, const SystemConfig& config) {
  p.require_layout(config.layout, "oscillatory_energy(p)");
  q.require_layout(config.layout, "oscillatory_energy(q)");
  double h = 0.0;
  for (std::size_t j = 1; j < config.layout.num_blocks(); ++j) {
    const double w = config.frequency(j);
    double e = 0.0;
    auto pj = p.block(j);
    auto qj = q.block(j);
    for (std::size_t i = 0; i < pj.size(); ++i) e += pj[i] * pj[i] + (w * qj[i]) * (w * qj[i]);
    h += 0.5 * e;
  }
  return h;
}

EnergyBreakdown energies(const BlockVector& p, const BlockVector& q, const SystemConfig& config) {
  p.require_layout(config.layout, "energies(p)");
  q.require_layout(config.layout, "energies(q)");
  EnergyBreakdown e;
  e.per_mode.reserve(config.num_fast());
  for (std::size_t j = 1; j < config.layout.num_blocks(); ++j) {
    const double w = config.frequency(j);
    double s = 0.0;
    auto pj = p.block(j);
    auto qj = q.block(j);
    for (std::size_t i = 0; i < pj.size(); ++i) s += pj[i] * pj[i] + (w * qj[i]) * (w * qj[i]);
    e.per_mode.push_back(0.5 * s);
    e.oscillatory += 0.5 * s;
  }
  double kinetic = 0.0;
  for (double x : p.block(0)) kinetic += x * x;
  e.slow = 0.5 * kinetic + config.potential->value(q);
  e.total = e.oscillatory + e.slow;
  return e;
}

}  // namespace oscisep
