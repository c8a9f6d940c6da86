#include "optoent/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "optoent/error.hpp"

namespace optoent {

std::string to_string(Detector d) {
  switch (d) {
    case Detector::A:
      return "A";
    case Detector::B:
      return "B";
    case Detector::single:
      return "S";
  }
  return "?";
}

std::string to_string(Color c) { return c == Color::red ? "red" : "blue"; }

std::string to_string(const DetectorTag& t) { return to_string(t.detector) + "_" + to_string(t.color); }

namespace analytic {

namespace {

using cd = std::complex<double>;

void require_tau(double tau) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) fail_config("invalid tau", "tau must be finite and >= 0");
}

TauValue flagged(double tau, double value, const SidebandModel& m) {
  return {value, tau < m.validity_start()};
}

// ((n + 1) / n) e^{-gamma tau}, the conditional excess of a blue photon.
double blue_excess(double tau, const SidebandModel& m) {
  if (!(m.n_m > 0.0)) {
    fail_numerical("undefined", "blue-after-red correlation diverges at n_m = 0");
  }
  return (m.n_m + 1.0) / m.n_m * std::exp(-m.gamma_eff * tau);
}

double lorentzian(double omega, double center, double width, double weight) {
  const double x = omega - center;
  return width / (0.25 * width * width + x * x) * weight;
}

}  // namespace

SidebandModel SidebandModel::from(const DerivedParams& d, double lambda) {
  SidebandModel m;
  m.n_m = d.n_m;
  m.gamma_eff = d.gamma_eff;
  m.kappa = d.kappa;
  m.lambda = lambda;
  return m;
}

SidebandModel SidebandModel::from(const TwoCavityParams& p, const DerivedParams& d, double lambda) {
  SidebandModel m = from(d, lambda);
  m.delta = p.delta;
  m.phi = p.phi;
  return m;
}

double SidebandModel::validity_start() const {
  double inv = 0.0;
  if (kappa > 0.0) inv = std::max(inv, 1.0 / kappa);
  if (lambda > 0.0) inv = std::max(inv, 1.0 / lambda);
  return 10.0 * inv;
}

TauValue g2_single_same(double tau, const SidebandModel& m) {
  require_tau(tau);
  return flagged(tau, 1.0 + std::exp(-m.gamma_eff * tau), m);
}

TauValue g2_single_same(double tau, const DerivedParams& d) {
  return g2_single_same(tau, SidebandModel::from(d));
}

TauValue g2_single_cross(double tau, CrossDirection dir, const SidebandModel& m) {
  require_tau(tau);
  if (dir == CrossDirection::blue_given_red) return flagged(tau, 1.0 + blue_excess(tau, m), m);
  const double excess = m.n_m / (m.n_m + 1.0) * std::exp(-m.gamma_eff * tau);
  return flagged(tau, 1.0 + excess, m);
}

TauValue g2_single_cross(double tau, CrossDirection dir, const DerivedParams& d) {
  return g2_single_cross(tau, dir, SidebandModel::from(d));
}

TauValue g2_two_cavity(double tau, DetectorTag from, DetectorTag to, const SidebandModel& m) {
  require_tau(tau);
  const bool from_ok = from.color == Color::red && from.detector != Detector::single;
  const bool to_ok = to.color == Color::blue && to.detector != Detector::single;
  if (!from_ok || !to_ok) {
    fail_config("unsupported pair",
                "two-cavity correlations need a red A/B tag followed by a blue A/B tag, got " +
                    to_string(from) + " -> " + to_string(to));
  }
  // Conditioning on B_r is the A_r expression with phi -> phi + pi/2.
  const double phase =
      0.5 * m.delta * tau + m.phi + (from.detector == Detector::B ? 0.5 * kPi : 0.0);
  const double c = std::cos(phase);
  const double s = std::sin(phase);
  const double weight = to.detector == Detector::A ? c * c : s * s;
  return flagged(tau, 1.0 + blue_excess(tau, m) * weight, m);
}

TauValue g2_two_cavity(double tau, DetectorTag from, DetectorTag to, const TwoCavityParams& p,
                       const DerivedParams& d) {
  return g2_two_cavity(tau, from, to, SidebandModel::from(p, d));
}

double witness_from_g2(double g2_aa, double g2_ba, double tolerance) {
  const double diff = g2_aa - g2_ba;
  if (!(std::abs(diff) >= tolerance)) {
    std::ostringstream os;
    os << "g2 values " << g2_aa << " and " << g2_ba << " are indistinguishable";
    fail_numerical("degenerate", os.str());
  }
  return 4.0 * (g2_aa + g2_ba - 1.0) / (diff * diff);
}

TauValue witness_rm(double tau, const SidebandModel& m) {
  require_tau(tau);
  const double c = std::cos(m.delta * tau + 2.0 * m.phi);
  const double c2 = c * c;
  if (c2 < kBlindSpotTolerance) {
    std::ostringstream os;
    os << "cos^2(delta tau + 2 phi) = " << c2 << " at tau = " << tau;
    fail_numerical("blind spot", os.str());
  }
  const double n = m.n_m;
  const double e = std::exp(-m.gamma_eff * tau);
  const double value = 4.0 * n * (n + (n + 1.0) * e) / ((n + 1.0) * (n + 1.0) * e * e * c2);
  return flagged(tau, value, m);
}

TauValue witness_rm(double tau, const TwoCavityParams& p, const DerivedParams& d) {
  return witness_rm(tau, SidebandModel::from(p, d));
}

double witness_threshold_occupancy() { return (2.0 * std::sqrt(2.0) - 1.0) / 7.0; }

ViolationBoundary violation_boundary(double n_m, double gamma_eff) {
  const double n_max = witness_threshold_occupancy();
  if (!(n_m < n_max)) {
    std::ostringstream os;
    os << "n_m = " << n_m << " is not below " << n_max;
    fail_numerical("no violation possible", os.str());
  }
  if (!(gamma_eff > 0.0)) fail_config("invalid params", "gamma_eff must be > 0");
  if (n_m <= 0.0) return {n_max, std::numeric_limits<double>::infinity()};
  const double arg = (std::sqrt(2.0) - 1.0) * (n_m + 1.0) / (2.0 * n_m);
  // At the threshold the argument is exactly 1; clamp rounding below it.
  return {n_max, std::max(0.0, std::log(arg)) / gamma_eff};
}

ViolationBoundary violation_boundary(const DerivedParams& d) {
  return violation_boundary(d.n_m, d.gamma_eff);
}

double classical_ratio(double tau, const SidebandModel& m) {
  const double a = g2_two_cavity(tau, {Detector::A, Color::red}, {Detector::A, Color::blue}, m).value;
  const double b = g2_two_cavity(tau, {Detector::A, Color::red}, {Detector::B, Color::blue}, m).value;
  return a / (a + b);
}

double classical_ratio_crossover(const SidebandModel& m) {
  // Ratio > 2/3  <=>  X (cos^2 phi - 2 sin^2 phi) > 1 with X the blue excess.
  const double c = std::cos(m.phi);
  const double s = std::sin(m.phi);
  const double weight = c * c - 2.0 * s * s;
  if (weight <= 0.0 || !(m.n_m > 0.0)) return 0.0;
  const double arg = (m.n_m + 1.0) / m.n_m * weight;
  return arg > 1.0 ? std::log(arg) / m.gamma_eff : 0.0;
}

SpectrumTerms output_spectrum(double omega, const DerivedParams& d, double laser_linewidth,
                              double r_suppress) {
  SpectrumTerms s;
  s.red = lorentzian(omega, d.omega_eff, d.gamma_eff, d.f_r);
  s.blue = lorentzian(omega, -d.omega_eff, d.gamma_eff, d.f_b);
  if (d.f_c && laser_linewidth > 0.0) {
    s.carrier = lorentzian(omega, 0.0, laser_linewidth, r_suppress * (*d.f_c));
    s.carrier_included = true;
  }
  s.total = s.carrier + s.red + s.blue;
  return s;
}

SidebandCorrelator sideband_cross_correlator(double tau, const SystemParams& p,
                                             const DerivedParams& d, double vartheta) {
  require_tau(tau);
  // alpha is taken real and positive; its phase is a global convention.
  const cd chi_p = std::conj(cavity_susceptibility(p, p.omega_m));
  const cd chi_m = std::conj(cavity_susceptibility(p, -p.omega_m));
  const double a2 = p.alpha_mag * p.alpha_mag;
  const cd decay = std::exp(cd(-0.5 * d.gamma_eff, d.omega_eff) * tau);
  SidebandCorrelator out;
  out.anomalous = -p.kappa_r * a2 * std::exp(cd(0.0, -vartheta)) * chi_p * chi_m * (d.n_m + 1.0) * decay;
  out.normal = 0.0;
  out.vartheta = vartheta;
  out.extrapolated = tau < 10.0 / p.kappa;
  return out;
}

std::complex<double> filter_rho(double omega, const FilterChainParams& fc) {
  const double w = omega + fc.capital_delta1;
  return cd(fc.mu * fc.delta1, w) / cd(0.5 * fc.mu, -w);
}

std::complex<double> filter_blue(double omega, const FilterChainParams& fc, double omega_m) {
  const double lam_l = fc.lambda * (0.5 + fc.delta2);
  const double lam_r = fc.lambda * (0.5 - fc.delta2);
  return std::sqrt(lam_l * lam_r) / cd(0.5 * fc.lambda, -(omega - omega_m)) * filter_rho(omega, fc);
}

std::complex<double> filter_red(double omega, const FilterChainParams& fc, double omega_m) {
  const double lam_l = fc.lambda * (0.5 + fc.delta2);
  const double lam_r = fc.lambda * (0.5 - fc.delta2);
  const cd reflect_blue = cd(fc.lambda * fc.delta2, omega - omega_m) /
                          cd(0.5 * fc.lambda, -(omega - omega_m));
  return std::sqrt(lam_l * lam_r) / cd(0.5 * fc.lambda, -(omega + omega_m)) * reflect_blue *
         filter_rho(omega, fc);
}

namespace {

// Composite Simpson in u with omega = scale sinh(u), which resolves a narrow
// peak at the origin and the broad shoulders with one grid.
template <class F>
double integrate_sinh(F f, double scale, double half_width, int panels = 40000) {
  const double u_max = std::asinh(half_width / scale);
  const double h = 2.0 * u_max / panels;
  double acc = 0.0;
  for (int k = 0; k <= panels; ++k) {
    const double u = -u_max + k * h;
    const double w = (k == 0 || k == panels) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    acc += w * f(scale * std::sinh(u)) * scale * std::cosh(u);
  }
  return acc * h / 3.0;
}

}  // namespace

FilterChainReport filter_chain(const FilterChainParams& fc, const DerivedParams& d, int grid_points) {
  if (!(fc.mu > 0.0 && fc.lambda > 0.0 && fc.gamma_laser >= 0.0)) {
    fail_config("invalid filter", "mu and lambda must be > 0 and the laser linewidth >= 0");
  }
  if (!(fc.r_suppress > 0.0 && fc.r_suppress <= 1.0)) {
    fail_config("invalid filter", "R must lie in (0, 1]");
  }
  if (!(std::abs(fc.delta2) < 0.5)) fail_config("invalid filter", "|delta2| must be below 1/2");
  if (grid_points < 2) fail_config("invalid filter", "grid needs at least two points");

  const double wm = d.omega_m;
  FilterChainReport r;
  if (!(fc.gamma_laser < 0.1 * fc.mu && fc.mu < 0.1 * wm)) {
    r.warnings.push_back("expected laser linewidth << mu << omega_m");
  }
  if (!(d.gamma_eff < 0.1 * fc.lambda && fc.lambda < 0.1 * wm)) {
    r.warnings.push_back("expected gamma_eff << lambda << omega_m");
  }
  if (!(std::abs(fc.capital_delta1) < 0.1 * fc.mu)) {
    r.warnings.push_back("expected filter-cavity detuning << mu");
  }

  r.omega.resize(grid_points);
  r.f_blue.resize(grid_points);
  r.f_red.resize(grid_points);
  for (int k = 0; k < grid_points; ++k) {
    const double w = -2.0 * wm + 4.0 * wm * k / (grid_points - 1);
    r.omega[k] = w;
    r.f_blue[k] = filter_blue(w, fc, wm);
    r.f_red[k] = filter_red(w, fc, wm);
  }

  const double lam_l = fc.lambda * (0.5 + fc.delta2);
  const double lam_r = fc.lambda * (0.5 - fc.delta2);
  r.leakage_ratio = lam_l * lam_r / (wm * wm) *
                    (fc.gamma_laser / fc.mu + 4.0 * fc.delta1 * fc.delta1) * fc.r_suppress;

  // Blue light sits at -omega in the spectrum, so the blue output is
  // |F_b[-omega]|^2 S[omega]. Only the carrier peak region is integrated.
  if (fc.gamma_laser > 0.0) {
    auto carrier = [&](double w) {
      return std::norm(filter_blue(-w, fc, wm)) *
             lorentzian(w, 0.0, fc.gamma_laser, fc.r_suppress) / kTwoPi;
    };
    r.leakage_ratio_numeric = integrate_sinh(carrier, 0.5 * fc.gamma_laser, 0.5 * wm);
  } else {
    r.leakage_ratio_numeric = lam_l * lam_r / (wm * wm) * 4.0 * fc.delta1 * fc.delta1 * fc.r_suppress;
  }

  auto blue_line = [&](double w) {
    return std::norm(filter_blue(-w, fc, wm)) * lorentzian(w, -d.omega_eff, d.gamma_eff, 1.0) / kTwoPi;
  };
  auto red_line = [&](double w) {
    return std::norm(filter_red(-w, fc, wm)) * lorentzian(w, d.omega_eff, d.gamma_eff, 1.0) / kTwoPi;
  };
  const double window = 0.5 * wm;
  r.blue_transmission = integrate_sinh([&](double x) { return blue_line(x - d.omega_eff); },
                                       0.5 * d.gamma_eff, window);
  r.red_transmission = integrate_sinh([&](double x) { return red_line(x + d.omega_eff); },
                                      0.5 * d.gamma_eff, window);

  if (d.f_c && *d.f_c > 0.0) {
    r.fb_over_fc = d.f_b / *d.f_c;
    if (r.leakage_ratio > 0.0) r.fb_over_fcb = *r.fb_over_fc / r.leakage_ratio;
  }
  return r;
}

double concurrence(double p00, double p11, std::complex<double> q) {
  const double prod = std::max(0.0, p00 * p11);
  return std::max(2.0 * (std::abs(q) - std::sqrt(prod)), 0.0);
}

WitnessMap witness_map(int n_tau, int n_occupancy, double tau_extent, double n_extent) {
  if (n_tau < 2 || n_occupancy < 2 || !(tau_extent > 0.0) || !(n_extent > 0.0)) {
    fail_config("invalid grid", "witness map needs at least 2x2 points and positive extents");
  }
  WitnessMap map;
  map.scaled_tau.resize(n_tau);
  map.n_m.resize(n_occupancy);
  for (int i = 0; i < n_tau; ++i) map.scaled_tau[i] = tau_extent * i / (n_tau - 1);
  for (int j = 0; j < n_occupancy; ++j) map.n_m[j] = n_extent * j / (n_occupancy - 1);
  map.values.resize(static_cast<std::size_t>(n_tau) * n_occupancy);
  for (int j = 0; j < n_occupancy; ++j) {
    SidebandModel m;
    m.n_m = map.n_m[j];
    m.gamma_eff = 1.0;
    for (int i = 0; i < n_tau; ++i) {
      double value = 1.0;
      if (m.n_m > 0.0) value = std::max(0.0, 1.0 - witness_rm(map.scaled_tau[i], m).value);
      map.values[static_cast<std::size_t>(j) * n_tau + i] = value;
    }
  }
  const double n_max = witness_threshold_occupancy();
  const int samples = 400;
  for (int k = 0; k <= samples; ++k) {
    // Dense near n = 0 where the boundary runs off to large tau.
    const double n = n_max * std::pow(static_cast<double>(k) / samples, 2.0);
    if (n <= 0.0) continue;
    const double t = n >= n_max ? 0.0 : violation_boundary(n, 1.0).tau_max;
    if (t <= tau_extent) map.boundary.emplace_back(t, n);
  }
  return map;
}

}  // namespace analytic
}  // namespace optoent
