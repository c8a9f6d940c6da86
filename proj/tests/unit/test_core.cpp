#include <cmath>
#include <random>

#include "doctest.h"
#include "optoent/core.hpp"
#include "optoent/error.hpp"

using namespace optoent;
using doctest::Approx;

namespace {

SystemParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SystemParams p;
  p.omega_m = kTwoPi * (0.5 + 5.0 * u(rng)) * 1e6;
  p.gamma = p.omega_m * std::pow(10.0, -4.0 - 4.0 * u(rng));
  p.kappa = p.omega_m * (0.1 + 1.5 * u(rng));
  p.kappa_r = p.kappa * (0.2 + 0.8 * u(rng));
  p.alpha_mag = p.kappa * 0.02 * u(rng);
  p.detuning = -p.omega_m * (0.6 + 0.8 * u(rng));
  p.bath = Bath::from_occupancy(500.0 * u(rng));
  return p;
}

void expect_error(auto&& fn, const char* code) {
  try {
    fn();
    FAIL("expected error " << code);
  } catch (const Error& e) {
    CHECK(e.code() == code);
  }
}

}  // namespace

TEST_CASE("cavity susceptibility at the sidebands") {
  SystemParams p = paper_preset();
  const auto at_plus = cavity_susceptibility(p, p.omega_m);
  CHECK(at_plus.real() == Approx(2.0 / p.kappa).epsilon(1e-14));
  CHECK(at_plus.imag() == Approx(0.0));
  const auto at_minus = cavity_susceptibility(p, -p.omega_m);
  const auto expect = 1.0 / std::complex<double>(0.5 * p.kappa, 2.0 * p.omega_m);
  CHECK(std::abs(at_minus - expect) < 1e-14 * std::abs(expect));
  // 16.25 / 0.25 for kappa / 2pi = 1 MHz, omega_m / 2pi = 2 MHz
  CHECK(std::norm(at_plus) / std::norm(at_minus) == Approx(65.0).epsilon(1e-12));
}

TEST_CASE("mechanical susceptibility is a unit-area Lorentzian") {
  const double g = 3.0;
  const double w0 = 40.0;
  CHECK(mechanical_susceptibility(g, w0, w0).real() == Approx(2.0 / g));
  const double peak = std::norm(mechanical_susceptibility(g, w0, w0));
  CHECK(std::norm(mechanical_susceptibility(g, w0, w0 + g / 2)) == Approx(peak / 2));
  CHECK(std::norm(mechanical_susceptibility(g, w0, w0 - g / 2)) == Approx(peak / 2));
}

TEST_CASE("Lorentzian quadrature reproduces the exponential correlator") {
  // omega = w0 + (g/2) tan(theta) turns g |chi|^2 d omega / 2pi into d theta / pi.
  const double g = 2.0;
  const double w0 = 25.0;
  const int n = 400000;
  for (double tau : {0.0, 1.0 / g, 3.0 / g}) {
    std::complex<double> sum = 0.0;
    const double h = kPi / n;
    for (int k = 0; k < n; ++k) {
      const double th = -kPi / 2 + (k + 0.5) * h;
      const double w = w0 + 0.5 * g * std::tan(th);
      const double jac = 0.5 * g / (std::cos(th) * std::cos(th));
      sum += g * std::norm(mechanical_susceptibility(g, w0, w)) * std::polar(1.0, w * tau) * jac * h / kTwoPi;
    }
    const auto expect = std::exp(std::complex<double>(-g / 2, w0) * tau);
    // the oscillating tail converges only as 1 / n
    CHECK(std::abs(sum - expect) < 1e-4);
  }
}

TEST_CASE("paper preset reproduces the quoted cooling numbers") {
  const DerivedParams d = derive(paper_preset());
  CHECK(d.n_m == Approx(0.068).epsilon(0.001 / 0.068));
  CHECK(d.n_opt == Approx(0.016).epsilon(0.0005 / 0.016));
  CHECK(d.gamma_eff / kTwoPi == Approx(400.0).epsilon(0.05));
  CHECK(d.f_r == Approx(41.0).epsilon(1.0 / 41.0));
  CHECK(d.f_b == Approx(172.0).epsilon(2.0 / 172.0));
  CHECK(d.warnings.empty());
}

TEST_CASE("zero coupling leaves the bath untouched") {
  SystemParams p = paper_preset();
  p.alpha_mag = 0.0;
  const DerivedParams d = derive(p);
  CHECK(d.gamma_opt == 0.0);
  CHECK(d.n_m == Approx(d.n_th).epsilon(1e-14));
  CHECK(d.f_r == 0.0);
  CHECK(d.f_b == 0.0);
}

TEST_CASE("derived identities hold over random parameters") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    SystemParams p = random_params(rng);
    DerivedParams d;
    try {
      d = derive(p);
    } catch (const Error& e) {
      CHECK(e.code() == std::string("heating regime"));
      continue;
    }
    const double lhs = d.n_m * (d.gamma + d.gamma_opt);
    const double rhs = d.gamma * d.n_th + d.gamma_opt * d.n_opt;
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(rhs));
    CHECK(d.n_opt == Approx(d.a_plus / d.gamma_opt).epsilon(1e-12));
    if (d.f_b > 0.0) {
      const double ratio = d.n_opt * (d.n_m + 1.0) / ((d.n_opt + 1.0) * d.n_m);
      CHECK(d.f_r / d.f_b == Approx(ratio).epsilon(1e-12));
      CHECK(d.f_b == Approx(d.eta_esc() * d.a_minus * d.n_m).epsilon(1e-12));
      CHECK(d.f_r == Approx(d.eta_esc() * d.a_plus * (d.n_m + 1.0)).epsilon(1e-12));
    }
    p.detuning = -p.omega_m;
    const DerivedParams r = derive(p);
    const double target = std::pow(p.kappa / (4.0 * p.omega_m), 2);
    CHECK(std::abs(r.n_opt - target) <= 1e-12 * target);
  }
}

TEST_CASE("occupancy breakdown") {
  SUBCASE("paper parameters") {
    const SystemParams p = paper_preset();
    const auto b = occupancy_regime(p);
    CHECK(p.n_th() == Approx(208.0).epsilon(0.01));
    CHECK(b.bath_part == Approx(0.053).epsilon(0.02));
    CHECK(b.backaction_part == Approx(0.016).epsilon(0.03));
    CHECK(b.exact == Approx(b.bath_part + b.backaction_part));
  }
  SUBCASE("no optical damping") {
    SystemParams p = paper_preset();
    p.alpha_mag = 0.0;
    const auto b = occupancy_regime(p);
    CHECK(b.exact == Approx(p.n_th()).epsilon(1e-14));
    CHECK(b.regime == CoolingRegime::bath_dominated);
  }
  SUBCASE("cold bath, weak damping") {
    SystemParams p = paper_preset();
    p.bath = Bath::from_occupancy(0.0);
    p.gamma = 1e3 * kTwoPi * 400.0;
    const DerivedParams d = derive(p);
    const auto b = occupancy_regime(p);
    CHECK(b.regime == CoolingRegime::bath_dominated);
    CHECK(b.exact == Approx(d.gamma_opt / d.gamma * d.n_opt).epsilon(2e-3));
  }
}

TEST_CASE("bath temperature and occupancy") {
  const double w = kTwoPi * 2e6;
  const Bath t = Bath::from_temperature(0.02);
  CHECK(t.occupancy(w) == Approx(kBoltzmann * 0.02 / (kHbar * w)));
  CHECK(Bath::from_occupancy(t.occupancy(w)).temperature(w) == Approx(0.02));
  // The classical occupancy overshoots Bose-Einstein by about x/2, x = hbar w / k T.
  const double be = 1.0 / std::expm1(kHbar * w / (kBoltzmann * 0.02));
  const double rel = t.occupancy(w) / be - 1.0;
  CHECK(rel > 0.0);
  CHECK(rel < 3e-3);
  expect_error([] { make_bath(0.02, 3.0); }, "invalid bath");
  expect_error([] { make_bath(std::nullopt, std::nullopt); }, "invalid bath");
  expect_error([] { Bath::from_occupancy(-1.0); }, "invalid bath");
}

TEST_CASE("input validation and regime errors") {
  SystemParams p = paper_preset();
  p.kappa_r = 2.0 * p.kappa;
  expect_error([&] { derive(p); }, "invalid params");
  p = paper_preset();
  p.detuning = +p.omega_m;
  expect_error([&] { derive(p); }, "heating regime");
  try {
    derive(p);
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::numerical);
    CHECK(e.exit_code() == 3);
  }
}

TEST_CASE("pair checks") {
  TwoCavityParams tp{paper_preset(), paper_preset(), 0.0, 0.0};
  CHECK_NOTHROW(derive_pair(tp));
  tp.cavity2.kappa *= 1.05;
  expect_error([&] { derive_pair(tp); }, "asymmetric setup");
  tp.cavity2 = tp.cavity1;
  tp.delta = 0.5 * tp.cavity1.kappa;
  const DerivedParams d = derive_pair(tp);
  CHECK_FALSE(d.warnings.empty());
}

TEST_CASE("desk preset is in units of gamma_eff") {
  for (double n : {0.05, 0.1, 0.3}) {
    const DerivedParams d = derive(desk_preset(n));
    CHECK(d.gamma_eff == Approx(1.0).epsilon(1e-12));
    CHECK(d.n_m == Approx(n).epsilon(1e-12));
    CHECK(d.omega_eff == Approx(50.0));
  }
}
