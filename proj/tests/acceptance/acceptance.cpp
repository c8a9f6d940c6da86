// One line per acceptance criterion; exit status is nonzero if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "master_equation.hpp"
#include "optoent/analytic.hpp"
#include "optoent/counting.hpp"
#include "optoent/ensemble.hpp"
#include "optoent/error.hpp"
#include "optoent/heterodyne.hpp"

using namespace optoent;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

bool within(double x, double target, double tol) { return std::abs(x - target) <= tol; }

const DetectorTag kAr{Detector::A, Color::red};
const DetectorTag kAb{Detector::A, Color::blue};
const DetectorTag kBb{Detector::B, Color::blue};
const DetectorTag kSr{Detector::single, Color::red};
const DetectorTag kSb{Detector::single, Color::blue};

// 1. Paper preset numbers.
Outcome paper_numbers() {
  const SystemParams p = paper_preset();
  const DerivedParams d = derive(p);
  const double gamma_khz = d.gamma_eff / kTwoPi / 1e3;
  const double tau_ms = analytic::violation_boundary(d).tau_max * 1e3;
  const bool ok = within(d.n_m, 0.068, 0.001) && within(d.n_opt, 0.016, 0.0005) &&
                  within(gamma_khz, 0.4, 0.02) && within(d.f_r, 41.0, 1.0) && within(d.f_b, 172.0, 2.0) &&
                  within(tau_ms, 0.47, 0.01);
  return {ok, format("n_M=%.4f n_opt=%.5f gamma/2pi=%.4f kHz f_r=%.2f/s f_b=%.2f/s tau_max=%.4f ms", d.n_m,
                     d.n_opt, gamma_khz, d.f_r, d.f_b, tau_ms)};
}

// 2. Witness threshold and the g2 route to the witness.
Outcome witness_threshold() {
  const double n0 = analytic::witness_threshold_occupancy();
  // R_m(0) = 1 exactly at the threshold occupancy.
  analytic::SidebandModel at{n0, 1.0, 0.0, 0.0};
  const double r0 = analytic::witness_rm(0.0, at).value;
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> un(0.01, 0.5), ut(0.0, 4.0), ud(-5.0, 5.0), up(0.0, kTwoPi);
  double worst = 0.0;
  int draws = 0;
  while (draws < 100) {
    analytic::SidebandModel m{un(rng), 1.0, ud(rng), up(rng)};
    const double tau = ut(rng);
    try {
      const double aa = analytic::g2_two_cavity(tau, kAr, kAb, m).value;
      const double ba = analytic::g2_two_cavity(tau, kAr, kBb, m).value;
      const double direct = analytic::witness_rm(tau, m).value;
      const double via = analytic::witness_from_g2(aa, ba);
      worst = std::max(worst, std::abs(via - direct) / std::max(1.0, std::abs(direct)));
      ++draws;
    } catch (const Error&) {
      // blind spot or degenerate draw; redraw
    }
  }
  const bool ok = std::round(n0 * 100.0) / 100.0 == 0.26 && std::abs(r0 - 1.0) < 1e-12 && worst <= 1e-10;
  return {ok, format("threshold n_M=%.6f (R_m(0)-1=%.1e); max |witness_from_g2 - R_m| over 100 draws = %.2e",
                     n0, r0 - 1.0, worst)};
}

// 3. Filter-chain budget at the worked-example settings.
Outcome filter_budget() {
  SystemParams p = paper_preset();
  p.bare_coupling = kTwoPi * 100.0;
  // Bath chosen so that n_M = 0.1 as in the flux example.
  const DerivedParams d0 = derive(p);
  const double n_th = (0.1 * d0.gamma_eff - d0.gamma_opt * d0.n_opt) / d0.gamma;
  p.bath = Bath::from_occupancy(n_th);
  const DerivedParams d = derive(p);

  analytic::FilterChainParams fc;
  fc.mu = kTwoPi * 1e4;
  fc.lambda = kTwoPi * 1e4;
  fc.gamma_laser = kTwoPi * 100.0;
  fc.delta1 = std::sqrt(0.005) / 2.0;  // 4 delta1^2 = 0.005
  fc.r_suppress = 1e-3;
  const auto rep = analytic::filter_chain(fc, d);
  const double leak = rep.leakage_ratio;
  const double fb_fc = rep.fb_over_fc.value_or(0.0);
  const double fb_fcb = rep.fb_over_fcb.value_or(0.0);
  const bool ok = leak >= 0.3e-10 && leak <= 3e-10 && fb_fcb >= 30.0 && fb_fcb <= 300.0 && fb_fc >= 0.3e-8 &&
                  fb_fc <= 3e-8;
  return {ok, format("n_M=%.3f f_c^(b)/f_c=%.3e (quadrature %.3e) f_b/f_c^(b)=%.1f f_b/f_c=%.3e", d.n_m, leak,
                     rep.leakage_ratio_numeric, fb_fcb, fb_fc)};
}

// Bin average of a closed form over (k bin, (k+1) bin].
double bin_average(const std::function<double(double)>& f, std::size_t k, double bin) {
  const int m = 200;
  double s = 0.0;
  for (int i = 0; i < m; ++i) s += f((static_cast<double>(k) + (i + 0.5) / m) * bin);
  return s / m;
}

// 4. Click statistics against the two-cavity closed forms.
Outcome trajectory_vs_analytic() {
  const double bin = 0.2;
  const double tau_max = 3.0;
  int bins_checked = 0;
  int bins_failed = 0;
  int poisson_failed = 0;
  double worst = 0.0;
  double chi2 = 0.0;
  std::uint64_t min_clicks = ~0ULL;
  std::string crossing;
  bool crossing_ok = true;
  std::uint64_t seed = 4000;
  for (double n : {0.1, 0.3}) {
    for (double delta : {0.0, 5.0}) {
      for (double phi : {0.0, kPi / 4.0}) {
        const SystemParams sp = desk_preset(n);
        const TwoCavityParams p{sp, sp, delta, phi};
        const DerivedParams d = derive_pair(p);
        const auto channels = trajectory::build_channels(p, d, 5);
        const auto records = trajectory::simulate_records(channels, 4, n < 0.2 ? 37500.0 : 15000.0, 20.0, ++seed);
        std::uint64_t clicks = 0;
        for (const auto& r : records) clicks += r.events.size();
        min_clicks = std::min(min_clicks, clicks);
        const auto m = analytic::SidebandModel::from(p, d);
        for (DetectorTag to : {kAb, kBb}) {
          // Trigger clicks bunch on the 1 / gamma_eff scale, so Poisson errors are too small;
          // the block bootstrap over 10 / gamma_eff segments sets the tolerance.
          const counting::BootstrapOptions bo{400, 10.0 / d.gamma_eff, seed};
          const auto est = counting::estimate_g2(records, kAr, to, tau_max, bin, bo);
          for (std::size_t k = 0; k < est.tau.size(); ++k) {
            if (est.counts[k] < 100) continue;
            const double expect =
                bin_average([&](double t) { return analytic::g2_two_cavity(t, kAr, to, m).value; }, k, bin);
            const double sigma = std::max(est.std_errors[k], est.bootstrap_errors[k]);
            const double z = std::abs(est.values[k] - expect) / sigma;
            worst = std::max(worst, z);
            chi2 += z * z;
            ++bins_checked;
            if (z > 3.0) ++bins_failed;
            if (std::abs(est.values[k] - expect) > 3.0 * est.std_errors[k]) ++poisson_failed;
          }
        }
        if (delta == 0.0 && phi == 0.0) {
          const auto w = counting::estimate_witness(records, tau_max, bin);
          const double target = std::log((std::sqrt(2.0) - 1.0) * (n + 1.0) / (2.0 * n));
          if (target > 0.0) {
            double found = -1.0;
            for (std::size_t k = 0; k + 1 < w.tau.size(); ++k) {
              if (w.values[k] < 1.0 && w.values[k + 1] >= 1.0) {
                found = w.tau[k] + (1.0 - w.values[k]) / (w.values[k + 1] - w.values[k]) * bin;
                break;
              }
            }
            crossing_ok = crossing_ok && found >= 0.0 && std::abs(found - target) <= 0.15;
            crossing += format(" n=%.1f R_m=1 at %.3f (expect %.3f);", n, found, target);
          } else {
            // No violation expected: R_m must not sit significantly below 1 anywhere.
            bool none = true;
            for (std::size_t k = 0; k < w.tau.size(); ++k) {
              if (w.defined[k] && !w.degenerate[k] && w.values[k] + 3.0 * w.std_errors[k] < 1.0) none = false;
            }
            crossing_ok = crossing_ok && none;
            crossing += format(" n=%.1f no crossing expected, %s;", n, none ? "none seen" : "spurious violation");
          }
        }
      }
    }
  }
  const bool ok = bins_failed == 0 && crossing_ok && min_clicks >= 50000;
  // Every bin must pass on its own, so even an exact model misses somewhere in 240 bins
  // about half the time; chi2 and the expected miss count put a failure in context.
  return {ok, format("%d bins over 8 settings, %d beyond 3 sigma bootstrap (max %.2f, chi2/bins %.2f, %.2f misses "
                     "expected by chance; %d beyond 3 sigma Poisson), min clicks %llu;%s",
                     bins_checked, bins_failed, worst, chi2 / bins_checked, 0.0027 * bins_checked, poisson_failed,
                     static_cast<unsigned long long>(min_clicks), crossing.c_str())};
}

// 5. Conditional concurrence and separability ratio.
Outcome conditional_concurrence() {
  const double n = 0.05;
  const SystemParams sp = desk_preset(n);
  const TwoCavityParams p{sp, sp, 0.0, 0.0};
  const DerivedParams d = derive_pair(p);
  const auto channels = trajectory::build_channels(p, d, 5);
  const double bound = analytic::violation_boundary(d).tau_max;
  trajectory::ConditionalOptions opts;
  for (double t = 0.0; t <= 2.0001; t += 0.1) opts.tau_grid.push_back(t);
  opts.record_duration = 1e5;
  const auto res = trajectory::conditional_after_red(channels, opts, 5005);
  const auto& first = res.points.front();
  bool ratio_ok = true;
  double worst_upper = 0.0;
  for (const auto& pt : res.points) {
    if (pt.tau >= bound) continue;
    const double upper = pt.ratio + 3.0 * pt.ratio_se;
    worst_upper = std::max(worst_upper, upper);
    if (!(upper < 1.0)) ratio_ok = false;
  }
  const bool ok = first.concurrence >= 0.8 && ratio_ok;
  return {ok, format("C(0+)=%.4f+-%.4f from %zu clicks; max(ratio+3sigma) for gamma tau < %.3f is %.3f",
                     first.concurrence, first.concurrence_se, res.n_clicks, bound, worst_upper)};
}

// 6. Heterodyne pipeline.
Outcome heterodyne_pipeline() {
  const DerivedParams d = derive(desk_preset(0.1));
  const double lambda = 8.0;
  const double dt = 1e-3;
  const double duration = 1e4;
  std::vector<double> grid;
  for (double t = 0.75; t <= 3.0001; t += 0.25) grid.push_back(t);
  auto classical = [&](double t) { return 1.0 + std::exp(-d.gamma_eff * t); };

  // (a) surrogate
  std::vector<heterodyne::SidebandCurrents> sur;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto rec = heterodyne::synthesize_surrogate(d, duration, dt, 6100 + k);
    sur.push_back(heterodyne::filter_sidebands(rec, lambda, {heterodyne::FilterShape::gaussian, 0.0, k}));
  }
  heterodyne::ReconstructOptions ro;
  ro.tau_grid = grid;
  const auto rs = heterodyne::reconstruct_g2(sur, ro);
  double worst_a = 0.0;
  for (const auto& e : rs.estimates) {
    for (std::size_t l = 0; l < e.tau.size(); ++l) {
      worst_a = std::max(worst_a, std::abs(e.values[l] - classical(e.tau[l])) / e.std_errors[l]);
    }
  }
  const bool a_ok = worst_a <= 3.0;

  // (b) state diffusion, blue after red
  std::vector<heterodyne::SidebandCurrents> qs;
  heterodyne::QsdOptions qo;
  qo.duration = duration;
  qo.dt = dt;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto res = heterodyne::unravel_qsd_single(d, qo, 6200 + k);
    qs.push_back(heterodyne::filter_sidebands(res.records.front(), lambda, {heterodyne::FilterShape::gaussian, 0.0, k}));
  }
  ro.pairs = {{kSr, kSb}};
  const auto rq = heterodyne::reconstruct_g2(qs, ro);
  const auto& br = rq.find(kSr, kSb);
  double worst_b = 0.0;
  for (std::size_t l = 0; l < br.tau.size(); ++l) {
    const double expect = 1.0 + (d.n_m + 1.0) / d.n_m * std::exp(-d.gamma_eff * br.tau[l]);
    worst_b = std::max(worst_b, std::abs(br.values[l] - expect) / br.std_errors[l]);
  }
  const bool b_ok = worst_b <= 3.0;

  // (c) per-detector gain and global phase; two surrogate records act as A and B.
  std::vector<heterodyne::HeterodyneRecord> pair;
  for (std::size_t k = 0; k < 2; ++k) {
    auto rec = heterodyne::synthesize_surrogate(d, 2000.0, dt, 6300 + k);
    rec.detector = k == 0 ? Detector::A : Detector::B;
    pair.push_back(std::move(rec));
  }
  auto reconstruct = [&](double gain, double phase) {
    std::vector<heterodyne::SidebandCurrents> cur;
    for (std::size_t k = 0; k < 2; ++k) {
      auto rec = pair[k];
      if (k == 0) {
        for (auto& s : rec.samples) s *= gain * std::polar(1.0, phase);
      }
      cur.push_back(heterodyne::filter_sidebands(rec, lambda));
    }
    heterodyne::ReconstructOptions o;
    o.tau_grid = grid;
    return heterodyne::reconstruct_g2(cur, o);
  };
  const auto base = reconstruct(1.0, 0.0);
  double worst_c = 0.0;
  for (const auto& [gain, phase] : {std::pair{2.7, 0.0}, std::pair{1.0, 1.234}, std::pair{0.31, -2.5}}) {
    const auto other = reconstruct(gain, phase);
    for (std::size_t e = 0; e < base.estimates.size(); ++e) {
      for (std::size_t l = 0; l < grid.size(); ++l) {
        const double a = base.estimates[e].values[l];
        const double b = other.estimates[e].values[l];
        worst_c = std::max(worst_c, std::abs(a - b) / std::abs(a));
      }
    }
  }
  const bool c_ok = worst_c <= 1e-12;
  return {a_ok && b_ok && c_ok,
          format("(a) surrogate max |g2 - (1+e^-t)|/sigma = %.2f; (b) state diffusion blue|red max z = %.2f "
                 "(g2(%.2f)=%.2f+-%.2f); (c) gain/phase max rel change %.1e",
                 worst_a, worst_b, br.tau.front(), br.values.front(), br.std_errors.front(), worst_c)};
}

// 7. Trajectory ensemble against the dense master equation.
Outcome oracle_equivalence() {
  const int n_max = 3;
  const SystemParams sp = desk_preset(0.1);
  const TwoCavityParams p{sp, sp, 2.0, 0.0};
  const DerivedParams d = derive_pair(p);
  const auto channels = trajectory::build_channels(p, d, n_max);
  oracle::MasterEquation me(oracle::Rates::from(d, p.delta), n_max);

  const FockSpace space(2, n_max);
  JointState init = JointState::vacuum(space);
  init.amplitudes.setZero();
  init.amplitudes[space.index(1, 0)] = 1.0 / std::sqrt(2.0);
  init.amplitudes[space.index(0, 1)] = 1.0 / std::sqrt(2.0);
  oracle::Matrix rho = me.pure(init.amplitudes);

  std::vector<double> times;
  for (double t = 0.0; t <= 3.0001; t += 0.25) times.push_back(t);
  trajectory::EvolveOptions eo;
  eo.check_truncation = false;  // same truncated model on both sides
  const auto moments = trajectory::ensemble_moments(channels, init, times, 200000, 7007, eo);
  double worst_occ = 0.0;
  double worst_coh = 0.0;
  double prev = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    me.evolve(rho, times[k] - prev, 1e-3);
    prev = times[k];
    const auto& mp = moments[k];
    worst_occ = std::max({worst_occ, std::abs(mp.n1 - me.n1(rho)) / me.n1(rho),
                          std::abs(mp.n2 - me.n2(rho)) / me.n2(rho)});
    const cplx c = me.coherence(rho);
    if (mp.coherence_re_se > 0.0) worst_coh = std::max(worst_coh, std::abs(mp.coherence.real() - c.real()) / mp.coherence_re_se);
    if (mp.coherence_im_se > 0.0) worst_coh = std::max(worst_coh, std::abs(mp.coherence.imag() - c.imag()) / mp.coherence_im_se);
  }
  const bool ok = worst_occ <= 0.01 && worst_coh <= 3.0;
  return {ok, format("N_max=3, 2e5 trajectories: max relative occupancy error %.4f, max coherence z %.2f",
                     worst_occ, worst_coh)};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc == 3 && std::strcmp(argv[1], "--only") == 0) only = std::atoi(argv[2]);
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
      {"paper-number reproduction", paper_numbers},
      {"witness threshold", witness_threshold},
      {"filter-chain budget", filter_budget},
      {"trajectory vs analytic", trajectory_vs_analytic},
      {"conditional concurrence", conditional_concurrence},
      {"heterodyne pipeline", heterodyne_pipeline},
      {"oracle equivalence", oracle_equivalence},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && only != static_cast<int>(i + 1)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %zu %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, secs,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
