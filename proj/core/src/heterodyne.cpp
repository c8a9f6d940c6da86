#include "optoent/heterodyne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "fft.hpp"
#include "optoent/ensemble.hpp"
#include "optoent/error.hpp"
#include "optoent/rng.hpp"

namespace optoent::heterodyne {

namespace {

constexpr double kLn2 = 0.69314718055994530942;
// Filtered shot noise stays correlated as exp(-lambda^2 tau^2 / 4); beyond
// 6 / lambda that is below 1.3e-4 of the noise bandwidth.
constexpr double kMinLagScale = 6.0;

// Raised-cosine half width with the Gaussian noise bandwidth lambda / (2 sqrt pi).
double raised_cosine_width(double lambda) { return 4.0 * std::sqrt(kPi) * lambda / 3.0; }

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

std::string to_string(FilterShape s) {
  return s == FilterShape::gaussian ? "gaussian" : "raised-cosine";
}

double SidebandFilter::response(double omega, Color c) const {
  const double x = omega - centre(c);
  if (shape == FilterShape::gaussian) return std::exp(-x * x / (2.0 * lambda * lambda));
  const double w = raised_cosine_width(lambda);
  if (std::abs(x) >= w) return 0.0;
  const double cs = std::cos(0.5 * kPi * x / w);
  return cs * cs;
}

cplx SidebandFilter::power_continued(cplx x) const {
  if (shape == FilterShape::gaussian) return std::exp(-x * x / (lambda * lambda));
  const cplx cs = std::cos(0.5 * kPi * x / raised_cosine_width(lambda));
  return cs * cs * cs * cs;
}

double SidebandFilter::noise_bandwidth() const { return lambda / (2.0 * std::sqrt(kPi)); }

double SidebandFilter::half_support() const {
  if (shape == FilterShape::gaussian) return lambda * std::sqrt(2.0 * std::log(1e8));
  return raised_cosine_width(lambda);
}

double Periodogram::omega(std::size_t k) const {
  const std::size_t n = power.size();
  return k < (n + 1) / 2 ? static_cast<double>(k) * d_omega
                         : (static_cast<double>(k) - static_cast<double>(n)) * d_omega;
}

namespace {

std::vector<cplx> transform(const HeterodyneRecord& rec) {
  std::vector<cplx> x = rec.samples;
  detail::dft_inplace(x, +1);
  for (auto& v : x) v *= rec.dt;
  return x;
}

Periodogram periodogram_from(const std::vector<cplx>& x, double duration) {
  Periodogram pg;
  pg.d_omega = kTwoPi / duration;
  pg.power.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) pg.power[k] = std::norm(x[k]) / duration;
  return pg;
}

double median_of(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

void require_record(const HeterodyneRecord& rec) {
  if (!(rec.dt > 0.0) || rec.samples.size() < 16) {
    fail_config("invalid record", "heterodyne record needs dt > 0 and at least 16 samples");
  }
}

}  // namespace

Periodogram periodogram(const HeterodyneRecord& rec) {
  require_record(rec);
  return periodogram_from(transform(rec), rec.duration());
}

FloorFit fit_noise_floor(const Periodogram& pg, double omega_m, double lambda) {
  const double guard = 5.0 * lambda;
  const double split = 0.5 * pg.d_omega * static_cast<double>(pg.power.size() / 2);
  std::vector<double> inner;
  std::vector<double> outer;
  for (std::size_t k = 0; k < pg.power.size(); ++k) {
    const double w = pg.omega(k);
    if (std::abs(w) < guard || std::abs(w - omega_m) < guard || std::abs(w + omega_m) < guard) continue;
    (std::abs(w) < split ? inner : outer).push_back(pg.power[k]);
  }
  const std::size_t used = inner.size() + outer.size();
  if (used < 200 || inner.size() < 50 || outer.size() < 50) {
    fail_statistical("floor fit failed", "only " + std::to_string(used) + " bins lie outside the sideband guards");
  }
  std::vector<double> all;
  all.reserve(used);
  all.insert(all.end(), inner.begin(), inner.end());
  all.insert(all.end(), outer.begin(), outer.end());
  FloorFit fit;
  fit.bins_used = used;
  fit.level = median_of(std::move(all)) / kLn2;
  fit.lower_half = median_of(std::move(inner)) / kLn2;
  fit.upper_half = median_of(std::move(outer)) / kLn2;
  if (!(fit.level > 0.0) || std::abs(fit.lower_half - fit.upper_half) > 0.1 * fit.level) {
    fail_statistical("floor fit failed", "periodogram has no flat plateau (inner " + fmt(fit.lower_half) +
                                             ", outer " + fmt(fit.upper_half) + ")");
  }
  return fit;
}

HeterodyneRecord synthesize_surrogate(const DerivedParams& d, double duration, double dt,
                                      std::uint64_t seed) {
  const double w = d.omega_eff;
  if (!(dt > 0.0) || !(dt < 0.1 / w)) fail_config("invalid params", "surrogate needs dt < 0.1 / omega_m");
  if (!(duration > 0.0)) fail_config("invalid params", "duration must be positive");
  const auto n = static_cast<std::size_t>(std::llround(duration / dt));

  HeterodyneRecord rec;
  rec.dt = dt;
  rec.omega_m = w;
  rec.seed = seed;
  rec.params = {{"source", "surrogate"},  {"f_r", fmt(d.f_r)},         {"f_b", fmt(d.f_b)},
                {"n_m", fmt(d.n_m)},        {"gamma_eff", fmt(d.gamma_eff)}, {"omega_m", fmt(w)}};
  rec.samples.resize(n);

  Engine rng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  auto draw = [&] { return cplx(normal(rng), normal(rng)); };

  const double decay = std::exp(-0.5 * d.gamma_eff * dt);
  const double kick = std::sqrt(d.n_m * (1.0 - decay * decay));
  const double gain_r = d.n_m > 0.0 ? std::sqrt(d.f_r / d.n_m) : 0.0;
  const double gain_b = d.n_m > 0.0 ? std::sqrt(d.f_b / d.n_m) : 0.0;
  const double white = 1.0 / std::sqrt(dt);
  cplx c = std::sqrt(d.n_m) * draw();
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    const cplx rot = std::polar(1.0, w * t);
    rec.samples[k] = gain_r * std::conj(c) * rot + gain_b * c * std::conj(rot) + white * draw();
    c = decay * c + kick * draw();
  }
  return rec;
}

cplx SidebandCurrents::current(Color c, std::size_t m) const {
  const double t = static_cast<double>(m) * dt_env;
  return std::polar(1.0, -carrier(c) * t) * envelope(c)[m];
}

SidebandCurrents filter_sidebands(const HeterodyneRecord& rec, double lambda, const FilterOptions& options) {
  require_record(rec);
  if (!(lambda > 0.0) || !(rec.omega_m > 0.0)) {
    fail_config("invalid params", "filtering needs lambda > 0 and a positive sideband offset");
  }
  SidebandCurrents out;
  out.detector = rec.detector;
  out.trial = options.trial;
  out.filter = SidebandFilter{options.shape, lambda, rec.omega_m};
  const SidebandFilter& f = out.filter;

  const double nyquist = kPi / rec.dt;
  if (rec.omega_m + 6.0 * lambda > nyquist) {
    fail_numerical("aliasing", "omega_m + 6 lambda = " + fmt(rec.omega_m + 6.0 * lambda) +
                                   " exceeds the Nyquist frequency " + fmt(nyquist));
  }
  if (f.response(0.0, Color::blue) > 1e-8) {
    fail_numerical("carrier leakage", "filter response at the carrier is " + fmt(f.response(0.0, Color::blue)));
  }
  if (lambda > 0.2 * rec.omega_m) out.warnings.push_back("lambda is not small against omega_m");

  const std::size_t n = rec.samples.size();
  const double duration = rec.duration();
  const std::vector<cplx> x = transform(rec);
  const Periodogram pg = periodogram_from(x, duration);
  out.floor = fit_noise_floor(pg, rec.omega_m, lambda);

  const double env_dt = options.envelope_dt > 0.0 ? options.envelope_dt : 0.25 / lambda;
  const double band = 2.0 * f.half_support() / pg.d_omega + 1.0;
  std::size_t nd = detail::fast_size(static_cast<std::size_t>(std::ceil(std::max(band, duration / env_dt))));
  nd = std::min(nd, n);
  out.dt_env = duration / static_cast<double>(nd);

  for (Color c : {Color::red, Color::blue}) {
    const auto kc = static_cast<long long>(std::llround(f.centre(c) / pg.d_omega));
    const double carrier = static_cast<double>(kc) * pg.d_omega;
    std::vector<cplx> e(nd);
    double nb = 0.0;
    double wsum = 0.0;
    const auto half = static_cast<long long>(nd / 2);
    const auto nn = static_cast<long long>(n);
    for (long long j = -half; j < static_cast<long long>(nd) - half; ++j) {
      const auto k = static_cast<std::size_t>(((kc + j) % nn + nn) % nn);
      const double g = f.response(pg.omega(k), c);
      e[static_cast<std::size_t>((j + static_cast<long long>(nd)) % static_cast<long long>(nd))] = g * x[k];
      nb += g * g;
      wsum += g * g * (pg.power[k] - out.floor.level);
    }
    detail::dft_inplace(e, -1);
    for (auto& v : e) v /= duration;
    if (c == Color::red) {
      out.env_red = std::move(e);
      out.carrier_red = carrier;
      out.nb_red = nb / duration;
      out.w_red = wsum / duration;
    } else {
      out.env_blue = std::move(e);
      out.carrier_blue = carrier;
      out.nb_blue = nb / duration;
      out.w_blue = wsum / duration;
    }
  }
  return out;
}

const counting::CorrelationEstimate& Reconstruction::find(DetectorTag from, DetectorTag to) const {
  for (const auto& e : estimates) {
    if (e.from == from && e.to == to) return e;
  }
  fail_config("unsupported pair", to_string(to) + "|" + to_string(from) + " was not reconstructed");
}

namespace {

struct Channel {
  Detector detector;
  Color color;
};

// Sums over one time block of one trial.
struct BlockSums {
  std::vector<double> w;        // per channel key: sum(|i|^2 - floor nb)
  std::vector<cplx> lam;        // per pair and lag
  std::vector<cplx> gam;
  std::vector<double> samples;  // per channel key
  std::vector<double> products; // per pair and lag
};

std::size_t channel_key(Detector d, Color c) {
  return static_cast<std::size_t>(d) * 2 + (c == Color::blue ? 1 : 0);
}

// T = int |F|^2 L(x) dx / 2 pi for a unit-area Lorentzian of FWHM gamma,
// using x = (gamma/2) tan u.
double filtered_transmission(const SidebandFilter& f, double gamma) {
  const int m = 20000;
  const double a = -0.5 * kPi;
  const double h = kPi / m;
  double s = 0.0;
  for (int k = 0; k <= m; ++k) {
    const double u = a + k * h;
    double v = 0.0;
    if (k != 0 && k != m) v = f.power_continued(cplx(0.5 * gamma * std::tan(u), 0.0)).real();
    s += v * (k == 0 || k == m ? 1.0 : (k % 2 ? 4.0 : 2.0));
  }
  return s * h / 3.0 / kPi;
}

}  // namespace

Reconstruction reconstruct_g2(std::span<const SidebandCurrents> currents, const ReconstructOptions& options) {
  if (currents.empty()) fail_config("empty channel", "no sideband currents given");
  if (options.tau_grid.empty()) fail_config("invalid binning", "tau grid is empty");
  const SidebandCurrents& ref = currents.front();
  const std::size_t nd = ref.env_red.size();
  for (const auto& c : currents) {
    if (c.env_red.size() != nd || c.env_blue.size() != nd || c.dt_env != ref.dt_env ||
        c.filter.lambda != ref.filter.lambda || c.filter.shape != ref.filter.shape ||
        c.filter.omega_m != ref.filter.omega_m) {
      fail_config("incompatible currents", "all currents must share length, sampling and filter");
    }
  }

  // trial -> detector -> current
  std::map<std::size_t, std::map<Detector, const SidebandCurrents*>> trials;
  for (const auto& c : currents) {
    auto& slot = trials[c.trial][c.detector];
    if (slot != nullptr) fail_config("incompatible currents", "duplicate detector within a trial");
    slot = &c;
  }
  std::vector<Detector> detectors;
  for (const auto& [det, cur] : trials.begin()->second) detectors.push_back(det);
  for (const auto& [t, dets] : trials) {
    if (dets.size() != detectors.size()) fail_config("incompatible currents", "trials cover different detectors");
  }

  std::vector<std::pair<DetectorTag, DetectorTag>> pairs = options.pairs;
  if (pairs.empty()) {
    for (Detector a : detectors)
      for (Color ca : {Color::red, Color::blue})
        for (Detector b : detectors)
          for (Color cb : {Color::red, Color::blue}) pairs.push_back({{a, ca}, {b, cb}});
  }
  for (const auto& [from, to] : pairs) {
    if (!trials.begin()->second.count(from.detector) || !trials.begin()->second.count(to.detector)) {
      fail_config("unsupported pair", to_string(to) + "|" + to_string(from) + " needs a missing detector");
    }
  }
  // Same-colour pairs feed the decay fit.
  const std::size_t n_requested = pairs.size();
  const bool fit_decay = options.tail_correction && !options.gamma_eff_hint;
  if (fit_decay) {
    for (Color c : {Color::red, Color::blue})
      for (Detector a : detectors)
        for (Detector b : detectors) {
          const std::pair<DetectorTag, DetectorTag> p{{a, c}, {b, c}};
          if (std::find(pairs.begin(), pairs.end(), p) == pairs.end()) pairs.push_back(p);
        }
  }

  std::vector<std::size_t> lags;
  for (double tau : options.tau_grid) {
    if (!(tau >= 0.0)) fail_config("invalid binning", "tau values must be non-negative");
    lags.push_back(static_cast<std::size_t>(std::llround(tau / ref.dt_env)) % nd);
  }
  const std::size_t n_lag = lags.size();
  const std::size_t n_pair = pairs.size();
  const std::size_t blocks = std::max<std::size_t>(2, std::min(options.blocks_per_trial, nd));

  // Per trial: modulated currents, then block sums.
  std::vector<BlockSums> all_blocks;
  for (const auto& [trial, dets] : trials) {
    std::map<std::size_t, std::vector<cplx>> mod;
    for (const auto& [det, cur] : dets) {
      for (Color c : {Color::red, Color::blue}) {
        std::vector<cplx> v(nd);
        for (std::size_t m = 0; m < nd; ++m) v[m] = cur->current(c, m);
        mod[channel_key(det, c)] = std::move(v);
      }
    }
    std::vector<BlockSums> local(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
      local[b].w.assign(6, 0.0);
      local[b].samples.assign(6, 0.0);
      local[b].lam.assign(n_pair * n_lag, cplx(0.0));
      local[b].gam.assign(n_pair * n_lag, cplx(0.0));
      local[b].products.assign(n_pair * n_lag, 0.0);
    }
    auto block_range = [&](std::size_t b) {
      return std::pair<std::size_t, std::size_t>{b * nd / blocks, (b + 1) * nd / blocks};
    };
    for (const auto& [det, cur] : dets) {
      for (Color c : {Color::red, Color::blue}) {
        const std::size_t key = channel_key(det, c);
        const double offset = cur->floor.level * cur->bandwidth(c);
        const auto& v = mod[key];
        for (std::size_t b = 0; b < blocks; ++b) {
          const auto [lo, hi] = block_range(b);
          double s = 0.0;
          for (std::size_t m = lo; m < hi; ++m) s += std::norm(v[m]) - offset;
          local[b].w[key] += s;
          local[b].samples[key] += static_cast<double>(hi - lo);
        }
      }
    }
    parallel_for(
        n_pair * n_lag,
        [&](std::size_t task) {
          const std::size_t p = task / n_lag;
          const std::size_t l = task % n_lag;
          const auto& vi = mod[channel_key(pairs[p].first.detector, pairs[p].first.color)];
          const auto& vj = mod[channel_key(pairs[p].second.detector, pairs[p].second.color)];
          const std::size_t lag = lags[l];
          for (std::size_t b = 0; b < blocks; ++b) {
            const auto [lo, hi] = block_range(b);
            cplx lam(0.0);
            cplx gam(0.0);
            for (std::size_t m = lo; m < hi; ++m) {
              std::size_t q = m + lag;
              if (q >= nd) q -= nd;
              const cplx a = std::conj(vi[m]);
              lam += a * vj[q];
              gam += a * std::conj(vj[q]);
            }
            local[b].lam[task] = lam;
            local[b].gam[task] = gam;
            local[b].products[task] = static_cast<double>(hi - lo);
          }
        },
        options.workers);
    for (auto& b : local) all_blocks.push_back(std::move(b));
  }

  // Totals and leave-one-out sums.
  BlockSums total = all_blocks.front();
  for (std::size_t b = 1; b < all_blocks.size(); ++b) {
    const auto& s = all_blocks[b];
    for (std::size_t k = 0; k < 6; ++k) {
      total.w[k] += s.w[k];
      total.samples[k] += s.samples[k];
    }
    for (std::size_t k = 0; k < n_pair * n_lag; ++k) {
      total.lam[k] += s.lam[k];
      total.gam[k] += s.gam[k];
      total.products[k] += s.products[k];
    }
  }

  Reconstruction out;
  const double dt_env = ref.dt_env;
  std::vector<double> tau(n_lag);
  for (std::size_t l = 0; l < n_lag; ++l) tau[l] = static_cast<double>(lags[l]) * dt_env;

  auto pooled_lambda = [&](const BlockSums& s, std::size_t p, std::size_t l) {
    return s.lam[p * n_lag + l] / s.products[p * n_lag + l];
  };

  double gamma = options.gamma_eff_hint.value_or(0.0);
  if (fit_decay) {
    // sum over same-colour pairs of |Lambda|^2 decays as exp(-gamma tau)
    std::vector<std::pair<double, double>> pts;
    for (std::size_t l = 0; l < n_lag; ++l) {
      if (tau[l] < kMinLagScale / ref.filter.lambda) continue;
      // Normalized by W_i W_j so that per-detector gains drop out.
      auto term = [&](std::size_t p) {
        const std::size_t ki = channel_key(pairs[p].first.detector, pairs[p].first.color);
        const std::size_t kj = channel_key(pairs[p].second.detector, pairs[p].second.color);
        const double wiwj = (total.w[ki] / total.samples[ki]) * (total.w[kj] / total.samples[kj]);
        return wiwj > 0.0 ? std::norm(pooled_lambda(total, p, l)) / wiwj : 0.0;
      };
      double s = 0.0;
      for (std::size_t p = n_requested; p < n_pair; ++p) s += term(p);
      for (std::size_t p = 0; p < n_requested; ++p) {
        if (pairs[p].first.color == pairs[p].second.color) s += term(p);
      }
      pts.emplace_back(tau[l], s);
    }
    std::sort(pts.begin(), pts.end());
    std::vector<std::pair<double, double>> used;
    for (const auto& [t, s] : pts) {
      if (!(s > 0.0)) break;
      if (!used.empty() && s < std::exp(-2.0) * used.front().second) break;
      used.emplace_back(t, std::log(s));
    }
    if (used.size() >= 3) {
      double mt = 0.0;
      double my = 0.0;
      for (const auto& [t, y] : used) {
        mt += t;
        my += y;
      }
      mt /= static_cast<double>(used.size());
      my /= static_cast<double>(used.size());
      double sxy = 0.0;
      double sxx = 0.0;
      for (const auto& [t, y] : used) {
        sxy += (t - mt) * (y - my);
        sxx += (t - mt) * (t - mt);
      }
      if (sxx > 0.0 && sxy < 0.0) gamma = -sxy / sxx;
    }
    if (!(gamma > 0.0)) out.warnings.push_back("decay fit failed; no finite-filter correction applied");
  }
  out.gamma_eff = gamma;
  if (options.tail_correction && gamma > 0.0) {
    const double pole = ref.filter.power_continued(cplx(0.0, -0.5 * gamma)).real();
    out.tail_factor = pole / filtered_transmission(ref.filter, gamma);
    if (gamma > 0.2 * ref.filter.lambda) out.warnings.push_back("lambda is not large against gamma_eff");
  }
  if (tau.front() < kMinLagScale / ref.filter.lambda) out.warnings.push_back("tau grid starts inside the filter response");

  const double tail2 = out.tail_factor * out.tail_factor;
  auto g2_of = [&](const BlockSums& s, std::size_t p, std::size_t l) {
    const std::size_t ki = channel_key(pairs[p].first.detector, pairs[p].first.color);
    const std::size_t kj = channel_key(pairs[p].second.detector, pairs[p].second.color);
    const double wi = s.w[ki] / s.samples[ki];
    const double wj = s.w[kj] / s.samples[kj];
    const std::size_t k = p * n_lag + l;
    const double num = std::norm(s.lam[k] / s.products[k]) + std::norm(s.gam[k] / s.products[k]);
    return 1.0 + num / (wi * wj * tail2);
  };

  const std::size_t nb = all_blocks.size();
  const double duration = static_cast<double>(trials.size() * nd) * dt_env;
  for (std::size_t p = 0; p < n_requested; ++p) {
    counting::CorrelationEstimate e;
    e.quantity = "g2";
    e.from = pairs[p].first;
    e.to = pairs[p].second;
    e.bin_width = dt_env;
    e.tau = tau;
    e.duration = duration;
    const std::size_t ki = channel_key(e.from.detector, e.from.color);
    const std::size_t kj = channel_key(e.to.detector, e.to.color);
    const bool usable = total.w[ki] > 0.0 && total.w[kj] > 0.0;
    for (std::size_t l = 0; l < n_lag; ++l) {
      e.counts.push_back(static_cast<std::uint64_t>(total.products[p * n_lag + l]));
      if (!usable) {
        e.values.push_back(std::numeric_limits<double>::quiet_NaN());
        e.std_errors.push_back(std::numeric_limits<double>::quiet_NaN());
        e.defined.push_back(0);
        continue;
      }
      const double full = g2_of(total, p, l);
      std::vector<double> loo(nb);
      for (std::size_t b = 0; b < nb; ++b) {
        BlockSums s;
        s.w = total.w;
        s.samples = total.samples;
        const auto& blk = all_blocks[b];
        for (std::size_t k = 0; k < 6; ++k) {
          s.w[k] -= blk.w[k];
          s.samples[k] -= blk.samples[k];
        }
        const std::size_t k = p * n_lag + l;
        s.lam.assign(n_pair * n_lag, cplx(0.0));
        s.gam.assign(n_pair * n_lag, cplx(0.0));
        s.products.assign(n_pair * n_lag, 1.0);
        s.lam[k] = total.lam[k] - blk.lam[k];
        s.gam[k] = total.gam[k] - blk.gam[k];
        s.products[k] = total.products[k] - blk.products[k];
        loo[b] = g2_of(s, p, l);
      }
      const double mean = std::accumulate(loo.begin(), loo.end(), 0.0) / static_cast<double>(nb);
      double var = 0.0;
      for (double v : loo) var += (v - mean) * (v - mean);
      var *= static_cast<double>(nb - 1) / static_cast<double>(nb);
      e.values.push_back(full);
      e.std_errors.push_back(std::sqrt(var));
      e.defined.push_back(std::isfinite(full) ? 1 : 0);
    }
    out.estimates.push_back(std::move(e));
  }
  return out;
}

}  // namespace optoent::heterodyne
