#include <cmath>
#include <numeric>

#include "doctest.h"
#include "optoent/counting.hpp"
#include "optoent/ensemble.hpp"
#include "optoent/error.hpp"
#include "optoent/trajectory.hpp"

using namespace optoent;
using namespace optoent::trajectory;
using doctest::Approx;

namespace {

const DetectorTag kAr{Detector::A, Color::red};
const DetectorTag kAb{Detector::A, Color::blue};
const DetectorTag kSr{Detector::single, Color::red};
const DetectorTag kSb{Detector::single, Color::blue};

TwoCavityParams pair_params(double n, double delta = 0.0, double phi = 0.0) {
  const SystemParams sp = desk_preset(n);
  return {sp, sp, delta, phi};
}

Eigen::MatrixXcd dense(const SparseOp& op) { return Eigen::MatrixXcd(op); }

const JumpChannel& channel(const ChannelSet& set, const std::string& tag) {
  for (const auto& ch : set.channels) {
    if (ch.tag == tag) return ch;
  }
  FAIL("no channel " << tag);
  throw;
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

TEST_CASE("channel rates reproduce the steady occupancy") {
  for (double n : {0.05, 0.1, 0.3}) {
    const TwoCavityParams p = pair_params(n);
    const DerivedParams d = derive_pair(p);
    const ChannelSet set = build_channels(p, d, 5);
    // Fixed point of the birth-death chain: up / down = n / (n + 1).
    const double up = d.gamma * d.n_th + d.a_plus;
    const double down = d.gamma * (d.n_th + 1.0) + d.a_minus;
    CHECK(up / down == Approx(d.n_m / (d.n_m + 1.0)).epsilon(1e-12));
    CHECK(implied_occupancy(set, 0) == Approx(d.n_m).epsilon(1e-12));
    CHECK(implied_occupancy(set, 1) == Approx(d.n_m).epsilon(1e-12));
  }
}

TEST_CASE("beam splitter channels") {
  const TwoCavityParams p = pair_params(0.1);
  const DerivedParams d = derive_pair(p);
  const ChannelSet set = build_channels(p, d, 4, 1.0);
  const Eigen::MatrixXcd a = dense(channel(set, "A_blue").op);
  const Eigen::MatrixXcd b = dense(channel(set, "B_blue").op);
  const Eigen::MatrixXcd sum = a - cplx(0.0, 1.0) * b;
  const Eigen::MatrixXcd c1 = dense(set.space.lower(0));
  const Eigen::MatrixXcd c2 = dense(set.space.lower(1));
  // Only c2 survives, with weight 2 sqrt(a_minus / 2).
  CHECK((sum - cplx(0.0, 2.0 * std::sqrt(d.a_minus / 2.0)) * c2).norm() < 1e-12);
  CHECK(std::abs((c1.adjoint() * sum).trace()) < 1e-12);
  CHECK(set.channels.size() == 8u);  // 4 observed + thermal up/down per oscillator
}

TEST_CASE("Hermitian part is delta n2") {
  const TwoCavityParams p0 = pair_params(0.1);
  const ChannelSet s0 = build_channels(p0, derive_pair(p0), 4);
  CHECK(s0.hamiltonian.norm() == 0.0);
  CHECK(s0.diagonal());
  const TwoCavityParams p1 = pair_params(0.1, 3.0);
  const ChannelSet s1 = build_channels(p1, derive_pair(p1), 4);
  CHECK((dense(s1.hamiltonian) - 3.0 * dense(s1.space.number(1))).norm() < 1e-12);
}

TEST_CASE("observed/unobserved split leaves the dissipator alone") {
  const TwoCavityParams p = pair_params(0.1, 1.0, 0.3);
  const DerivedParams d = derive_pair(p);
  const Eigen::MatrixXcd ref = dense(build_channels(p, d, 4, 1.0).decay);
  for (double eta : {0.3, 0.7}) {
    const ChannelSet set = build_channels(p, d, 4, eta);
    CHECK((dense(set.decay) - ref).norm() < 1e-12 * ref.norm());
  }
  CHECK(error_code([&] { build_channels(p, d, 2); }) == "invalid truncation");
  CHECK(error_code([&] { build_channels(p, d, 4, 1.5); }) == "invalid params");
}

TEST_CASE("free rotation without dissipation") {
  ChannelSet set;
  set.space = FockSpace(2, 3);
  set.delta = 2.0;
  set.hamiltonian = 2.0 * set.space.number(1);
  set.decay = SparseOp(set.space.dim(), set.space.dim());
  JointState s = JointState::vacuum(set.space);
  s.amplitudes.setZero();
  s.amplitudes[set.space.index(1, 0)] = 1.0 / std::sqrt(2.0);
  s.amplitudes[set.space.index(0, 1)] = 1.0 / std::sqrt(2.0);
  EvolveOptions o;
  o.dt = 0.01;
  o.check_truncation = false;
  const auto r = evolve(set, s, 1.3, 1, o);
  CHECK(r.record.events.empty());
  CHECK(r.jumps == 0);
  const cplx q = r.final_state.coherence();
  CHECK(std::abs(q) == Approx(0.5));
  CHECK(std::arg(q) == Approx(2.0 * 1.3).epsilon(1e-9));
}

TEST_CASE("seed determinism") {
  const TwoCavityParams p = pair_params(0.1, 5.0, 0.2);
  const ChannelSet set = build_channels(p, derive_pair(p), 5);
  const auto a = evolve(set, JointState::vacuum(set.space), 500.0, 77);
  const auto b = evolve(set, JointState::vacuum(set.space), 500.0, 77);
  REQUIRE(a.record.events.size() == b.record.events.size());
  CHECK_FALSE(a.record.events.empty());
  for (std::size_t i = 0; i < a.record.events.size(); ++i) {
    CHECK(a.record.events[i].time == b.record.events[i].time);
    CHECK(a.record.events[i].tag == b.record.events[i].tag);
  }
  CHECK(a.final_state.amplitudes == b.final_state.amplitudes);
  a.record.check_ordering();
  // Worker count does not change the ensemble output.
  const auto r1 = simulate_records(set, 3, 200.0, 10.0, 5, {}, 1);
  const auto r2 = simulate_records(set, 3, 200.0, 10.0, 5, {}, 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(r1[k].events.size() == r2[k].events.size());
}

TEST_CASE("unconditioned moments relax to the thermal state") {
  const TwoCavityParams p = pair_params(0.3, 2.0, 0.4);
  const DerivedParams d = derive_pair(p);
  const ChannelSet set = build_channels(p, d, 6);
  const auto m = ensemble_moments(set, JointState::vacuum(set.space), {20.0, 25.0}, 400, 31);
  for (const auto& pt : m) {
    CHECK(std::abs(pt.n1 - d.n_m) < 3.0 * pt.n1_se);
    CHECK(std::abs(pt.n2 - d.n_m) < 3.0 * pt.n2_se);
    CHECK(std::abs(pt.coherence.real()) < 3.0 * pt.coherence_re_se);
    CHECK(std::abs(pt.coherence.imag()) < 3.0 * pt.coherence_im_se);
  }
}

TEST_CASE("click fluxes") {
  const DerivedParams d = derive(desk_preset(0.1));
  const ChannelSet set = build_single_channels(d, 5, 1.0);
  const auto recs = simulate_records(set, 8, 4000.0, 20.0, 91);
  std::vector<double> ratio;
  double blue = 0.0;
  double time = 0.0;
  for (const auto& r : recs) {
    ratio.push_back(static_cast<double>(r.count(kSb)) / static_cast<double>(r.count(kSr)));
    blue += static_cast<double>(r.count(kSb));
    time += r.duration;
  }
  const double mean = std::accumulate(ratio.begin(), ratio.end(), 0.0) / ratio.size();
  double var = 0.0;
  for (double x : ratio) var += (x - mean) * (x - mean);
  const double se = std::sqrt(var / (ratio.size() - 1) / ratio.size());
  const double expect = d.a_minus * d.n_m / (d.a_plus * (d.n_m + 1.0));
  CHECK(std::abs(mean - expect) < 3.0 * se);
  CHECK(blue / time == Approx(d.a_minus * d.n_m).epsilon(0.05));
}

TEST_CASE("split invariance of click rates") {
  const DerivedParams d = derive(desk_preset(0.1));
  double rate_full = 0.0;
  for (double eta : {1.0, 0.7, 0.3}) {
    const ChannelSet set = build_single_channels(d, 5, eta);
    const auto recs = simulate_records(set, 4, 3000.0, 20.0, 17);
    double clicks = 0.0;
    double time = 0.0;
    for (const auto& r : recs) {
      clicks += static_cast<double>(r.events.size());
      time += r.duration;
    }
    const double rate = clicks / time;
    if (eta == 1.0) rate_full = rate;
    // Bunching inflates the Poisson spread; 5% covers it at these counts.
    CHECK(rate / rate_full == Approx(eta).epsilon(0.05));
  }
}

TEST_CASE("truncation convergence of g2") {
  const TwoCavityParams p = pair_params(0.3);
  const DerivedParams d = derive_pair(p);
  std::vector<counting::CorrelationEstimate> est;
  for (int n_max : {4, 6}) {
    const ChannelSet set = build_channels(p, d, n_max);
    EvolveOptions o;
    o.dt = 0.02 / build_channels(p, d, 6).max_rate;  // same grid for both truncations
    o.truncation_tolerance = 0.05;
    const auto recs = simulate_records(set, 2, 8000.0, 20.0, 404, o);
    est.push_back(counting::estimate_g2(recs, kAr, kAb, 2.0, 0.25));
  }
  for (std::size_t k = 0; k < est[0].tau.size(); ++k) {
    const double sigma = std::hypot(est[0].std_errors[k], est[1].std_errors[k]);
    CHECK(std::abs(est[0].values[k] - est[1].values[k]) < 3.0 * sigma);
  }
}

TEST_CASE("truncation guard") {
  const TwoCavityParams p = pair_params(0.3);
  const DerivedParams d = derive_pair(p);
  const ChannelSet set = build_channels(p, d, 3);
  EvolveOptions o;
  o.truncation_tolerance = 1e-6;
  CHECK(error_code([&] { evolve(set, JointState::vacuum(set.space), 200.0, 3, o); }) == "truncation exceeded");
}

TEST_CASE("conditional state after a red click") {
  SUBCASE("near the ground state the click heralds a Bell state") {
    const TwoCavityParams p = pair_params(0.01);
    const ChannelSet set = build_channels(p, derive_pair(p), 4);
    ConditionalOptions o;
    o.record_duration = 6000.0;
    o.tau_grid = {0.0, 0.2};
    const auto r = conditional_after_red(set, o, 12);
    CHECK(r.n_clicks >= 100);
    CHECK(r.points.front().concurrence > 0.9);
    CHECK(r.points.front().p01 + r.points.front().p10 == Approx(1.0).epsilon(0.05));
  }
  SUBCASE("coherence decays with fixed phase at delta = 0") {
    const TwoCavityParams p = pair_params(0.1, 0.0, 0.3);
    const ChannelSet set = build_channels(p, derive_pair(p), 5);
    ConditionalOptions o;
    o.record_duration = 4000.0;
    for (double t = 0.0; t <= 2.01; t += 0.5) o.tau_grid.push_back(t);
    const auto r = conditional_after_red(set, o, 13);
    const double phase0 = std::arg(r.points.front().q);
    for (std::size_t k = 0; k < r.points.size(); ++k) {
      const auto& pt = r.points[k];
      // the phase noise grows as |q| decays
      const double tol = 0.03 * std::abs(r.points.front().q) / std::abs(pt.q);
      CHECK(std::abs(std::remainder(std::arg(pt.q) - phase0, kTwoPi)) < tol);
      if (k > 0) CHECK(std::abs(pt.q) < std::abs(r.points[k - 1].q));
      CHECK(std::abs(pt.q) <= std::sqrt(pt.p01 * pt.p10) + 1e-12);
      CHECK(pt.p00 + pt.p01 + pt.p10 + pt.p11 + pt.remainder == Approx(1.0).epsilon(1e-9));
    }
  }
  SUBCASE("too few clicks") {
    const TwoCavityParams p = pair_params(0.1);
    const ChannelSet set = build_channels(p, derive_pair(p), 4);
    ConditionalOptions o;
    o.n_records = 1;
    o.record_duration = 20.0;
    o.tau_grid = {0.0};
    o.min_clicks = 1000;
    CHECK(error_code([&] { conditional_after_red(set, o, 1); }) == "insufficient clicks");
  }
}
