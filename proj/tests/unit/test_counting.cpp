#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "optoent/analytic.hpp"
#include "optoent/counting.hpp"
#include "optoent/ensemble.hpp"
#include "optoent/error.hpp"
#include "optoent/rng.hpp"

using namespace optoent;
using namespace optoent::counting;
using doctest::Approx;

namespace {

const DetectorTag kAr{Detector::A, Color::red};
const DetectorTag kAb{Detector::A, Color::blue};
const DetectorTag kBr{Detector::B, Color::red};
const DetectorTag kBb{Detector::B, Color::blue};
const DetectorTag kSr{Detector::single, Color::red};
const DetectorTag kSb{Detector::single, Color::blue};

ClickRecord poisson(std::vector<std::pair<DetectorTag, double>> rates, double duration, std::uint64_t seed) {
  Engine rng = make_engine(seed);
  ClickRecord rec;
  rec.duration = duration;
  rec.seed = seed;
  for (const auto& [tag, rate] : rates) {
    std::exponential_distribution<double> wait(rate);
    for (double t = wait(rng); t < duration; t += wait(rng)) rec.events.push_back({t, tag});
  }
  std::sort(rec.events.begin(), rec.events.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  return rec;
}

double bin_average(auto&& f, double lo, double hi) {
  double acc = 0.0;
  for (int j = 0; j < 100; ++j) acc += f(lo + (hi - lo) * (j + 0.5) / 100);
  return acc / 100;
}

std::vector<ClickRecord> single_cavity(double n, std::size_t records, double duration, std::uint64_t seed) {
  const DerivedParams d = derive(desk_preset(n));
  // thermal top-level weight (n / (n + 1))^N kept well under the 1% guard
  int n_max = 5;
  while (std::pow(n / (n + 1.0), n_max) > 3e-3) ++n_max;
  const auto set = trajectory::build_single_channels(d, n_max, 1.0);
  return trajectory::simulate_records(set, records, duration, 20.0, seed);
}

std::vector<ClickRecord> two_cavity(double n, double delta, double phi, std::size_t records, double duration,
                                    std::uint64_t seed) {
  const SystemParams sp = desk_preset(n);
  const TwoCavityParams p{sp, sp, delta, phi};
  const auto set = trajectory::build_channels(p, derive_pair(p), n < 0.2 ? 5 : 6);
  return trajectory::simulate_records(set, records, duration, 20.0, seed);
}

std::string error_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST_CASE("independent Poisson streams are uncorrelated") {
  const ClickRecord rec = poisson({{kSr, 3.0}, {kSb, 5.0}}, 2e4, 1);
  const auto e = estimate_g2(rec, kSr, kSb, 2.0, 0.1);
  REQUIRE(e.tau.size() == 20);
  CHECK(e.tau.front() == Approx(0.05));
  double chi2 = 0.0;
  for (std::size_t k = 0; k < e.tau.size(); ++k) {
    CHECK(e.defined[k]);
    CHECK(e.std_errors[k] > 0.0);
    chi2 += std::pow((e.values[k] - 1.0) / e.std_errors[k], 2);
  }
  // 20 dof: the 0.1% quantile is about 45.
  CHECK(chi2 < 45.0);
  // Block bootstrap agrees with Poisson errors for Poisson light.
  const ClickRecord recs[] = {rec};
  const auto b = estimate_g2(recs, kSr, kSb, 2.0, 0.1, BootstrapOptions{300, 200.0, 3});
  REQUIRE(b.bootstrap_errors.size() == b.tau.size());
  for (std::size_t k = 0; k < b.tau.size(); ++k) {
    CHECK(b.bootstrap_errors[k] == Approx(b.std_errors[k]).epsilon(0.25));
    CHECK(b.values[k] == e.values[k]);
  }
}

TEST_CASE("worker count does not change the counts") {
  const ClickRecord rec = poisson({{kSr, 40.0}, {kSb, 40.0}}, 3000.0, 2);
  const auto a = estimate_g2(rec, kSr, kSb, 1.0, 0.05, 1);
  const auto b = estimate_g2(rec, kSr, kSb, 1.0, 0.05, 4);
  CHECK(a.counts == b.counts);
  CHECK(a.n_from == b.n_from);
}

TEST_CASE("error scales as one over root duration") {
  std::vector<double> lt, ls;
  for (double T : {1e2, 1e3, 1e4, 1e5}) {
    const auto e = estimate_g2(poisson({{kSr, 2.0}, {kSb, 2.0}}, T, 9), kSr, kSb, 1.0, 0.5);
    lt.push_back(std::log(T));
    ls.push_back(std::log(0.5 * (e.std_errors[0] + e.std_errors[1])));
  }
  const double slope = (ls.back() - ls.front()) / (lt.back() - lt.front());
  CHECK(slope == Approx(-0.5).epsilon(0.1));
}

TEST_CASE("binning") {
  const ClickRecord rec = poisson({{kSr, 20.0}, {kSb, 20.0}}, 5000.0, 4);
  const auto coarse = estimate_g2(rec, kSr, kSb, 1.0, 0.05);
  const auto fine = estimate_g2(rec, kSr, kSb, 1.0, 0.025);
  double rms = 0.0;
  for (std::size_t k = 0; k < coarse.tau.size(); ++k) {
    CHECK(0.5 * (fine.values[2 * k] + fine.values[2 * k + 1]) == Approx(coarse.values[k]).epsilon(1e-12));
    for (std::size_t j : {2 * k, 2 * k + 1}) rms += std::pow((fine.values[j] - coarse.values[k]) / fine.std_errors[j], 2);
  }
  CHECK(std::sqrt(rms / fine.tau.size()) < 1.0);
  CHECK(error_code([&] { estimate_g2(rec, kSr, kSb, 0.01, 0.05); }) == "invalid binning");
  CHECK(error_code([&] { estimate_g2(rec, kSr, kAb, 1.0, 0.05); }) == "empty channel");
  ClickRecord empty;
  empty.duration = 100.0;
  try {
    estimate_g2(empty, kSr, kSb, 1.0, 0.05);
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::statistical);
    CHECK(e.exit_code() == 4);
  }
}

TEST_CASE("single-cavity correlations against the closed forms") {
  const double n = 0.1;
  const auto recs = single_cavity(n, 4, 5000.0, 21);
  const analytic::SidebandModel m = analytic::SidebandModel::from(derive(desk_preset(n)));
  const double bin = 0.25;
  auto check = [&](DetectorTag from, DetectorTag to, auto&& model) {
    const auto e = estimate_g2(recs, from, to, 2.5, bin, BootstrapOptions{200, 10.0, 5});
    for (std::size_t k = 0; k < e.tau.size(); ++k) {
      const double expect = bin_average(model, k * bin, (k + 1) * bin);
      const double sigma = std::max(e.std_errors[k], e.bootstrap_errors[k]);
      CHECK(std::abs(e.values[k] - expect) < 3.0 * sigma);
    }
  };
  check(kSr, kSr, [&](double t) { return analytic::g2_single_same(t, m).value; });
  check(kSb, kSb, [&](double t) { return analytic::g2_single_same(t, m).value; });
  check(kSr, kSb, [&](double t) { return 1.0 + 11.0 * std::exp(-t); });
}

TEST_CASE("time-reversal asymmetry of the cross correlations") {
  const double n = 0.3;
  const auto recs = single_cavity(n, 4, 5000.0, 22);
  const auto br = estimate_g2(recs, kSr, kSb, 1.0, 1.0);
  const auto rb = estimate_g2(recs, kSb, kSr, 1.0, 1.0);
  const double xb = br.values[0] - 1.0;
  const double xr = rb.values[0] - 1.0;
  const double ratio = xb / xr;
  const double se = ratio * std::hypot(br.std_errors[0] / xb, rb.std_errors[0] / xr);
  CHECK(br.values[0] > rb.values[0]);
  CHECK(std::abs(ratio - std::pow((n + 1.0) / n, 2)) < 3.0 * se);
}

TEST_CASE("witness from a two-cavity run") {
  SUBCASE("n = 0.1 violates below the boundary") {
    const auto recs = two_cavity(0.1, 0.0, 0.0, 4, 10000.0, 31);
    const auto w = estimate_witness(recs, 1.5, 0.25, WitnessOptions{200, 10.0, 1});
    const double bound = std::log((std::sqrt(2.0) - 1.0) * 1.1 / 0.2);
    CHECK(bound == Approx(0.824).epsilon(1e-3));
    int below = 0;
    for (std::size_t k = 0; k < w.tau.size(); ++k) {
      if (w.tau[k] + 0.125 > bound) continue;
      CHECK(w.values[k] < 1.0);
      if (w.tau[k] < 0.5) CHECK(w.values[k] + 3.0 * w.std_errors[k] < 1.0);
      ++below;
      CHECK(w.bootstrap_errors[k] > 0.0);
    }
    CHECK(below >= 2);
    std::ostringstream os;
    write_csv(os, w);
    CHECK(os.str().rfind("tau,value,std_error,counts,bootstrap_error,degenerate\n", 0) == 0);
    CHECK(to_json(w)["quantity"] == "witness");
  }
  SUBCASE("n = 0.5 never violates") {
    const auto recs = two_cavity(0.5, 0.0, 0.0, 2, 3000.0, 32);
    const auto w = estimate_witness(recs, 2.0, 0.25, WitnessOptions{0, 0.0, 1});
    for (std::size_t k = 0; k < w.tau.size(); ++k) {
      if (!w.defined[k]) continue;
      CHECK(w.values[k] + 3.0 * w.std_errors[k] > 1.0);
    }
  }
  SUBCASE("trigger must be a red A/B tag") {
    const auto recs = two_cavity(0.1, 0.0, 0.0, 1, 200.0, 33);
    WitnessOptions o;
    o.trigger = kAb;
    CHECK(error_code([&] { estimate_witness(recs, 1.0, 0.25, o); }) == "invalid trigger");
  }
}

TEST_CASE("witness needs the beam splitter") {
  // Two independent cavities read out directly: A sees cavity 1, B sees cavity 2.
  // g2_{A_b|A_r} then carries the full single-cavity excess and the Eq.-(7)
  // bound reports 4 (1 + X) / X^2, which is below 1 for large X even though the
  // oscillators are uncorrelated. The witness presumes detectors behind the splitter.
  auto a = single_cavity(0.1, 1, 20000.0, 41).front();
  auto b = single_cavity(0.1, 1, 20000.0, 42).front();
  for (auto& e : a.events) e.tag.detector = Detector::A;
  for (auto& e : b.events) e.tag.detector = Detector::B;
  ClickRecord merged = a;
  merged.events.insert(merged.events.end(), b.events.begin(), b.events.end());
  std::sort(merged.events.begin(), merged.events.end(), [](const auto& x, const auto& y) { return x.time < y.time; });
  const ClickRecord recs[] = {merged};
  const auto gb = estimate_g2(recs, kAr, kBb, 1.0, 0.25);
  for (std::size_t k = 0; k < gb.tau.size(); ++k) CHECK(std::abs(gb.values[k] - 1.0) < 3.0 * gb.std_errors[k]);
  const auto w = estimate_witness(recs, 1.0, 0.25, WitnessOptions{0, 0.0, 1});
  const double x = 11.0 * std::exp(-w.tau[0]);
  CHECK(std::abs(w.values[0] - 4.0 * (1.0 + x) / (x * x)) < 3.0 * w.std_errors[0]);
}

TEST_CASE("first blue after red") {
  SUBCASE("near the ground state the next blue goes to A") {
    const auto recs = two_cavity(0.01, 0.0, 0.0, 4, 20000.0, 51);
    const auto f = first_blue_after_red(recs, 1.0, 0.25);
    CHECK(f.n_triggers > 50);
    CHECK(f.p_a[0] > 0.9);
  }
  SUBCASE("beating at delta = 5") {
    const double delta = 5.0;
    const auto recs = two_cavity(0.1, delta, 0.0, 4, 10000.0, 52);
    const auto f = first_blue_after_red(recs, kPi / delta * 1.2, 0.1 * kPi / delta);
    // cos^2(delta tau / 2) peaks near zero delay and vanishes at tau = pi / delta.
    CHECK(f.p_a[0] > f.p_a[9] + 3.0 * std::hypot(f.p_a_se[0], f.p_a_se[9]));
    CHECK(f.p_a[9] < 0.5);
  }
  SUBCASE("uncorrelated streams split evenly") {
    const ClickRecord rec = poisson({{kAr, 5.0}, {kAb, 3.0}, {kBb, 3.0}}, 4000.0, 53);
    const auto f = first_blue_after_red(rec, 1.0, 0.1);
    CHECK(std::abs(f.p_a_overall - 0.5) < 3.0 * f.p_a_overall_se);
    CHECK(f.n_truncated <= f.n_triggers);
    const double integral = std::accumulate(f.density.begin(), f.density.end(), 0.0) * 0.1;
    CHECK(integral == Approx(1.0 - std::exp(-6.0)).epsilon(0.03));
  }
  SUBCASE("trailing triggers are flagged") {
    ClickRecord rec;
    rec.duration = 10.0;
    rec.events = {{1.0, kAb}, {2.0, kAr}};
    const auto f = first_blue_after_red(rec, 1.0, 0.5);
    CHECK(f.n_truncated == 1);
  }
}

TEST_CASE("classical inequalities") {
  SUBCASE("n = 0.1 violates Cauchy-Schwarz at short delay") {
    const auto recs = single_cavity(0.1, 4, 5000.0, 61);
    const auto cross = estimate_g2(recs, kSr, kSb, 2.0, 0.1);
    const auto rr = estimate_g2(recs, kSr, kSr, 2.0, 0.1);
    const auto bb = estimate_g2(recs, kSb, kSb, 2.0, 0.1);
    const auto r = classical_tests({&cross, &rr, &bb, nullptr, nullptr, 3.0});
    CHECK(r.cs_violated);
    CHECK(r.cauchy_schwarz.front().violated);
    CHECK(r.g2_rr0 == Approx(2.0).epsilon(0.15));
    // The violation ends near gamma tau = ln 11.
    for (const auto& p : r.cauchy_schwarz) {
      if (p.tau > std::log(11.0) + 0.3) CHECK_FALSE(p.violated);
    }
  }
  SUBCASE("n = 2 still violates at short delay, not beyond ln 1.5") {
    const auto recs = single_cavity(2.0, 4, 4000.0, 62);
    const auto cross = estimate_g2(recs, kSr, kSb, 1.5, 0.1);
    const auto rr = estimate_g2(recs, kSr, kSr, 1.5, 0.1);
    const auto bb = estimate_g2(recs, kSb, kSb, 1.5, 0.1);
    const auto r = classical_tests({&cross, &rr, &bb, nullptr, nullptr, 3.0});
    CHECK(r.cauchy_schwarz.front().lhs > r.cauchy_schwarz.front().rhs);
    for (const auto& p : r.cauchy_schwarz) {
      if (p.tau > std::log(1.5) + 0.3) CHECK_FALSE(p.violated);
    }
  }
  SUBCASE("thermal light alone never violates") {
    const auto recs = single_cavity(0.1, 4, 4000.0, 63);
    const auto rr = estimate_g2(recs, kSr, kSr, 2.0, 0.1);
    const auto bb = estimate_g2(recs, kSb, kSb, 2.0, 0.1);
    const auto r = classical_tests({&rr, &rr, &bb, nullptr, nullptr, 3.0});
    CHECK_FALSE(r.cs_violated);
  }
  SUBCASE("two-cavity ratio bound") {
    const auto recs = two_cavity(0.1, 0.0, 0.0, 4, 5000.0, 64);
    const auto aa = estimate_g2(recs, kAr, kAb, 1.0, 0.25);
    const auto ba = estimate_g2(recs, kAr, kBb, 1.0, 0.25);
    const auto r = classical_tests({nullptr, nullptr, nullptr, &aa, &ba, 3.0});
    CHECK(r.ratio_violated);
    CHECK(to_json(r)["ratio_bound"]["violated"] == true);
  }
}

TEST_CASE("csv and json output") {
  const ClickRecord rec = poisson({{kBr, 10.0}, {kBb, 10.0}}, 500.0, 71);
  const auto e = estimate_g2(rec, kBr, kBb, 0.5, 0.25);
  std::ostringstream os;
  write_csv(os, e);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "tau,value,std_error,counts");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 2);
  const auto j = to_json(e);
  CHECK(j["from"] == "B_red");
  CHECK(j["bins"].size() == 2);
  CHECK_FALSE(j["bins"][0].contains("bootstrap_error"));
}
