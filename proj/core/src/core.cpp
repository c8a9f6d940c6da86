#include "optoent/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "optoent/error.hpp"

namespace optoent {

namespace {

bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }

struct Scattering {
  double a_minus;
  double a_plus;
  double chi_plus_sq;   // |chi_C[+omega_m]|^2
  double chi_minus_sq;  // |chi_C[-omega_m]|^2
};

Scattering scattering(const SystemParams& p) {
  const double chi_p = std::norm(cavity_susceptibility(p, p.omega_m));
  const double chi_m = std::norm(cavity_susceptibility(p, -p.omega_m));
  const double a2 = p.alpha_mag * p.alpha_mag;
  return {p.kappa * a2 * chi_p, p.kappa * a2 * chi_m, chi_p, chi_m};
}

double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace

Bath Bath::from_temperature(double kelvin) {
  if (!(std::isfinite(kelvin) && kelvin >= 0.0)) {
    fail_config("invalid bath", "temperature must be finite and >= 0");
  }
  return Bath(true, kelvin);
}

Bath Bath::from_occupancy(double n_th) {
  if (!(std::isfinite(n_th) && n_th >= 0.0)) {
    fail_config("invalid bath", "n_th must be finite and >= 0");
  }
  return Bath(false, n_th);
}

double Bath::occupancy(double omega_m) const {
  if (!by_temperature_) return value_;
  return kBoltzmann * value_ / (kHbar * omega_m);
}

double Bath::temperature(double omega_m) const {
  if (by_temperature_) return value_;
  return value_ * kHbar * omega_m / kBoltzmann;
}

Bath make_bath(std::optional<double> temperature_kelvin, std::optional<double> n_th) {
  if (temperature_kelvin && n_th) {
    fail_config("invalid bath", "give either a temperature or n_th, not both");
  }
  if (temperature_kelvin) return Bath::from_temperature(*temperature_kelvin);
  if (n_th) return Bath::from_occupancy(*n_th);
  fail_config("invalid bath", "neither a temperature nor n_th was given");
}

std::optional<double> SystemParams::carrier_amplitude() const {
  if (abar_mag) return abar_mag;
  if (bare_coupling && *bare_coupling > 0.0) return alpha_mag / *bare_coupling;
  return std::nullopt;
}

void validate(const SystemParams& p) {
  if (!finite_positive(p.omega_m)) fail_config("invalid params", "omega_m must be > 0");
  if (!finite_positive(p.gamma)) fail_config("invalid params", "gamma must be > 0");
  if (!finite_positive(p.kappa)) fail_config("invalid params", "kappa must be > 0");
  if (!finite_positive(p.kappa_r)) fail_config("invalid params", "kappa_r must be > 0");
  if (p.kappa_r > p.kappa * (1.0 + 1e-12)) {
    fail_config("invalid params", "kappa_r must not exceed kappa");
  }
  if (!(std::isfinite(p.alpha_mag) && p.alpha_mag >= 0.0)) {
    fail_config("invalid params", "|alpha| must be finite and >= 0");
  }
  if (!std::isfinite(p.detuning)) fail_config("invalid params", "detuning must be finite");
  if (p.omega_eff && !finite_positive(*p.omega_eff)) {
    fail_config("invalid params", "omega_eff override must be > 0");
  }
  if (p.abar_mag && !(std::isfinite(*p.abar_mag) && *p.abar_mag >= 0.0)) {
    fail_config("invalid params", "|abar| must be finite and >= 0");
  }
  if (p.bare_coupling && !finite_positive(*p.bare_coupling)) {
    fail_config("invalid params", "g x_zpf must be > 0");
  }
}

std::complex<double> cavity_susceptibility(const SystemParams& p, double omega) {
  return 1.0 / std::complex<double>(0.5 * p.kappa, -(omega + p.detuning));
}

std::complex<double> mechanical_susceptibility(double gamma_eff, double omega_eff, double omega) {
  return 1.0 / std::complex<double>(0.5 * gamma_eff, -(omega - omega_eff));
}

DerivedParams derive(const SystemParams& p) {
  validate(p);
  const Scattering s = scattering(p);

  DerivedParams d;
  d.omega_m = p.omega_m;
  d.omega_eff = p.effective_frequency();
  d.gamma = p.gamma;
  d.n_th = p.n_th();
  d.kappa = p.kappa;
  d.kappa_r = p.kappa_r;

  d.a_minus = s.a_minus;
  d.a_plus = s.a_plus;
  d.gamma_opt = s.a_minus - s.a_plus;

  const bool coupled = p.alpha_mag > 0.0;
  if (coupled && !(d.gamma_opt > 0.0)) {
    std::ostringstream os;
    os << "optical damping " << d.gamma_opt << " rad/s is not positive (detuning " << p.detuning
       << " rad/s)";
    fail_numerical("heating regime", os.str());
  }
  if (!coupled && s.chi_plus_sq <= s.chi_minus_sq) {
    fail_numerical("heating regime", "detuning does not favour anti-Stokes scattering");
  }

  d.gamma_eff = p.gamma + d.gamma_opt;
  // a_plus / gamma_opt does not depend on |alpha|, so evaluate it from the
  // susceptibilities to keep it defined at zero coupling.
  d.n_opt = s.chi_minus_sq / (s.chi_plus_sq - s.chi_minus_sq);
  d.n_m = (p.gamma * d.n_th + d.gamma_opt * d.n_opt) / d.gamma_eff;

  const double a2 = p.alpha_mag * p.alpha_mag;
  d.f_r = p.kappa_r * a2 * s.chi_minus_sq * (d.n_m + 1.0);
  d.f_b = p.kappa_r * a2 * s.chi_plus_sq * d.n_m;
  if (auto abar = p.carrier_amplitude()) d.f_c = p.kappa_r * (*abar) * (*abar);

  if (p.alpha_mag > 0.1 * p.kappa) {
    d.warnings.push_back("weak-coupling assumption |alpha| << kappa is not satisfied");
  }
  if (std::abs(p.detuning + p.omega_m) > 1e-9 * p.omega_m) {
    d.warnings.push_back("detuning differs from -omega_m");
  }
  return d;
}

OccupancyBreakdown occupancy_regime(const SystemParams& p) {
  const Scattering s = scattering(p);
  const double gamma_opt = s.a_minus - s.a_plus;
  const double gamma_eff = p.gamma + gamma_opt;
  const double n_th = p.n_th();
  const double n_opt = s.chi_minus_sq / (s.chi_plus_sq - s.chi_minus_sq);

  OccupancyBreakdown b;
  b.bath_part = p.gamma * n_th / gamma_eff;
  b.backaction_part = gamma_opt * n_opt / gamma_eff;
  b.exact = b.bath_part + b.backaction_part;
  b.optical_limit = gamma_opt > 0.0 ? (p.gamma / gamma_opt) * n_th + n_opt
                                    : std::numeric_limits<double>::infinity();
  b.bath_limit = n_th + (gamma_opt / p.gamma) * n_opt;
  if (gamma_opt > 10.0 * p.gamma) {
    b.regime = CoolingRegime::optical_dominated;
  } else if (p.gamma > 10.0 * gamma_opt) {
    b.regime = CoolingRegime::bath_dominated;
  } else {
    b.regime = CoolingRegime::intermediate;
  }
  return b;
}

std::string to_string(CoolingRegime r) {
  switch (r) {
    case CoolingRegime::optical_dominated:
      return "optical-dominated";
    case CoolingRegime::bath_dominated:
      return "bath-dominated";
    case CoolingRegime::intermediate:
      return "intermediate";
  }
  return "unknown";
}

DerivedParams derive_pair(const TwoCavityParams& p) {
  DerivedParams d1 = derive(p.cavity1);
  const DerivedParams d2 = derive(p.cavity2);

  const std::pair<const char*, std::pair<double, double>> checks[] = {
      {"kappa", {p.cavity1.kappa, p.cavity2.kappa}},
      {"kappa_r", {p.cavity1.kappa_r, p.cavity2.kappa_r}},
      {"|alpha|", {p.cavity1.alpha_mag, p.cavity2.alpha_mag}},
      {"gamma_eff", {d1.gamma_eff, d2.gamma_eff}},
      {"n_m", {d1.n_m, d2.n_m}},
      {"f_r", {d1.f_r, d2.f_r}},
      {"f_b", {d1.f_b, d2.f_b}},
  };
  for (const auto& [name, values] : checks) {
    if (rel_diff(values.first, values.second) > 0.01) {
      std::ostringstream os;
      os << name << " differs by more than 1% between the cavities (" << values.first << " vs "
         << values.second << ")";
      fail_config("asymmetric setup", os.str());
    }
  }
  if (!std::isfinite(p.delta) || !std::isfinite(p.phi)) {
    fail_config("invalid params", "delta and phi must be finite");
  }
  const double scale = std::min(p.cavity1.kappa, p.cavity1.omega_m);
  if (std::abs(p.delta) > 0.1 * scale) {
    d1.warnings.push_back("|delta| is not small compared with kappa and omega_m");
  }
  for (const auto& w : d2.warnings) {
    if (std::find(d1.warnings.begin(), d1.warnings.end(), w) == d1.warnings.end()) {
      d1.warnings.push_back(w);
    }
  }
  return d1;
}

SystemParams paper_preset() {
  SystemParams p;
  p.omega_m = kTwoPi * 2.0e6;
  p.gamma = p.omega_m / 2.0e7;
  p.kappa = kTwoPi * 1.0e6;
  p.kappa_r = p.kappa;
  p.alpha_mag = kTwoPi * 1.0e4;
  p.detuning = -p.omega_m;
  p.bath = Bath::from_temperature(0.020);
  return p;
}

SystemParams desk_preset(double n_m, double omega_m, double bath_share) {
  if (!(n_m > 0.0 && std::isfinite(n_m))) fail_config("invalid params", "desk n_m must be > 0");
  if (!(omega_m > 0.0)) fail_config("invalid params", "desk omega_m must be > 0");
  if (!(bath_share > 0.0 && bath_share < 1.0)) {
    fail_config("invalid params", "desk bath_share must lie in (0, 1)");
  }
  SystemParams p;
  p.omega_m = omega_m;
  p.gamma = bath_share;
  // n_opt = (kappa / 4 omega_m)^2 = n_m, so both contributions carry n_m.
  p.kappa = 4.0 * omega_m * std::sqrt(n_m);
  p.kappa_r = p.kappa;
  p.detuning = -omega_m;
  p.bath = Bath::from_occupancy(n_m);
  const double k2 = 0.25 * p.kappa * p.kappa;
  const double ratio = k2 / (k2 + 4.0 * omega_m * omega_m);  // a_plus / a_minus
  const double gamma_opt = 1.0 - bath_share;
  const double a_minus = gamma_opt / (1.0 - ratio);
  p.alpha_mag = std::sqrt(a_minus * p.kappa / 4.0);
  return p;
}

}  // namespace optoent
