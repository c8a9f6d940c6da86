#include "optoent/counting.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <ostream>
#include <sstream>

#include "optoent/ensemble.hpp"
#include "optoent/error.hpp"
#include "optoent/rng.hpp"

namespace optoent::counting {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_binning(double tau_max, double bin) {
  if (!(bin > 0.0) || !(tau_max >= bin)) {
    fail_config("invalid binning", "need bin > 0 and tau_max >= bin");
  }
}

std::size_t bin_count(double tau_max, double bin) {
  return static_cast<std::size_t>(std::llround(std::max(1.0, std::floor(tau_max / bin + 1e-9))));
}

// Ordered pairs (t_from < t_to <= t_from + K bin) for conditioning events in
// [lo, hi]. Conditioning events are split into segments counted
// independently; every segment searches the full target list, so pairs that
// straddle a segment boundary are still found and the merge is exact.
std::vector<std::uint64_t> count_pairs(const std::vector<double>& from, const std::vector<double>& to,
                                       double lo, double hi, double bin, std::size_t k_bins,
                                       unsigned workers, std::uint64_t& n_used) {
  const auto first = std::lower_bound(from.begin(), from.end(), lo);
  const auto last = std::upper_bound(from.begin(), from.end(), hi);
  const std::size_t n = static_cast<std::size_t>(last - first);
  n_used = n;
  const std::size_t seg_size = 1 << 15;
  const std::size_t n_seg = std::max<std::size_t>(1, (n + seg_size - 1) / seg_size);
  std::vector<std::vector<std::uint64_t>> partial(n_seg, std::vector<std::uint64_t>(k_bins, 0));
  const double span = bin * static_cast<double>(k_bins);
  parallel_for(
      n_seg,
      [&](std::size_t s) {
        auto& hist = partial[s];
        const auto b = first + static_cast<std::ptrdiff_t>(s * seg_size);
        const auto e = first + static_cast<std::ptrdiff_t>(std::min(n, (s + 1) * seg_size));
        for (auto it = b; it != e; ++it) {
          const double t0 = *it;
          for (auto jt = std::upper_bound(to.begin(), to.end(), t0); jt != to.end(); ++jt) {
            const double d = *jt - t0;
            if (d > span) break;
            auto k = static_cast<std::size_t>(std::ceil(d / bin)) - 1;
            if (k >= k_bins) k = k_bins - 1;
            ++hist[k];
          }
        }
      },
      workers);
  std::vector<std::uint64_t> out(k_bins, 0);
  for (const auto& h : partial) {
    for (std::size_t k = 0; k < k_bins; ++k) out[k] += h[k];
  }
  return out;
}

struct PooledCounts {
  std::vector<std::uint64_t> pairs;
  std::uint64_t n_from = 0;
  std::uint64_t n_to = 0;
  std::uint64_t n_from_all = 0;
  double duration = 0.0;
};

PooledCounts pool(std::span<const ClickRecord> records, DetectorTag from, DetectorTag to, double tau_max,
                  double bin, unsigned workers) {
  const std::size_t k_bins = bin_count(tau_max, bin);
  PooledCounts p;
  p.pairs.assign(k_bins, 0);
  for (const auto& rec : records) {
    const std::vector<double> tf = rec.times(from);
    const std::vector<double> tt = rec.times(to);
    p.n_from_all += tf.size();
    p.n_to += tt.size();
    p.duration += rec.duration;
    std::uint64_t used = 0;
    const auto c = count_pairs(tf, tt, rec.start_time, rec.end_time() - tau_max, bin, k_bins, workers, used);
    for (std::size_t k = 0; k < k_bins; ++k) p.pairs[k] += c[k];
    p.n_from += used;
  }
  return p;
}

CorrelationEstimate make_g2(const PooledCounts& p, DetectorTag from, DetectorTag to, double bin) {
  CorrelationEstimate e;
  e.from = from;
  e.to = to;
  e.bin_width = bin;
  e.n_from = p.n_from;
  e.n_to = p.n_to;
  e.duration = p.duration;
  const double rate_to = static_cast<double>(p.n_to) / p.duration;
  const double norm = static_cast<double>(p.n_from) * bin * rate_to;
  for (std::size_t k = 0; k < p.pairs.size(); ++k) {
    const double c = static_cast<double>(p.pairs[k]);
    e.tau.push_back((static_cast<double>(k) + 0.5) * bin);
    e.counts.push_back(p.pairs[k]);
    e.values.push_back(norm > 0.0 ? c / norm : kNaN);
    e.std_errors.push_back(norm > 0.0 ? std::sqrt(std::max(c, 1.0)) / norm : kNaN);
    e.defined.push_back(p.pairs[k] > 0 ? 1 : 0);
  }
  return e;
}

double witness_or_nan(double a, double b) {
  if (!std::isfinite(a) || !std::isfinite(b) || a == b) return kNaN;
  return 4.0 * (a + b - 1.0) / ((a - b) * (a - b));
}

}  // namespace

CorrelationEstimate estimate_g2(std::span<const ClickRecord> records, DetectorTag from, DetectorTag to,
                                double tau_max, double bin, unsigned workers) {
  check_binning(tau_max, bin);
  if (records.empty()) fail_statistical("empty channel", "no records supplied");
  for (const auto& r : records) {
    if (!(r.duration > tau_max)) fail_config("invalid binning", "record shorter than tau_max");
  }
  const PooledCounts p = pool(records, from, to, tau_max, bin, workers);
  if (p.n_from_all == 0) fail_statistical("empty channel", "no " + to_string(from) + " events");
  if (p.n_to == 0) fail_statistical("empty channel", "no " + to_string(to) + " events");
  if (p.n_from == 0) {
    fail_statistical("insufficient clicks", "no " + to_string(from) + " event leaves a full delay window");
  }
  return make_g2(p, from, to, bin);
}

CorrelationEstimate estimate_g2(const ClickRecord& record, DetectorTag from, DetectorTag to, double tau_max,
                                double bin, unsigned workers) {
  return estimate_g2(std::span<const ClickRecord>(&record, 1), from, to, tau_max, bin, workers);
}

namespace {

// Per-segment pair histograms for the block bootstrap; one histogram per target tag.
struct Block {
  std::vector<std::vector<std::uint64_t>> pairs;
  std::vector<std::uint64_t> n_to;
  std::uint64_t n_from = 0;
  double length = 0.0;
};

std::vector<Block> make_blocks(const ClickRecord& rec, DetectorTag trig, const std::vector<DetectorTag>& targets,
                               double tau_max, double bin, std::size_t k_bins, double block_length) {
  const auto n_blocks = static_cast<std::size_t>(std::max(1.0, std::floor(rec.duration / block_length)));
  const double len = rec.duration / static_cast<double>(n_blocks);
  std::vector<Block> blocks(n_blocks);
  for (auto& b : blocks) {
    b.pairs.assign(targets.size(), std::vector<std::uint64_t>(k_bins, 0));
    b.n_to.assign(targets.size(), 0);
    b.length = len;
  }
  auto block_of = [&](double t) {
    auto i = static_cast<std::size_t>((t - rec.start_time) / len);
    return std::min(i, n_blocks - 1);
  };
  const std::vector<double> tf = rec.times(trig);
  std::vector<std::vector<double>> tt;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    tt.push_back(rec.times(targets[j]));
    for (double t : tt.back()) ++blocks[block_of(t)].n_to[j];
  }
  const double hi = rec.end_time() - tau_max;
  const double span = bin * static_cast<double>(k_bins);
  for (double t0 : tf) {
    if (t0 > hi) break;
    Block& blk = blocks[block_of(t0)];
    ++blk.n_from;
    for (std::size_t j = 0; j < targets.size(); ++j) {
      for (auto jt = std::upper_bound(tt[j].begin(), tt[j].end(), t0); jt != tt[j].end(); ++jt) {
        const double d = *jt - t0;
        if (d > span) break;
        auto k = static_cast<std::size_t>(std::ceil(d / bin)) - 1;
        if (k >= k_bins) k = k_bins - 1;
        ++blk.pairs[j][k];
      }
    }
  }
  return blocks;
}

// Resamples blocks with replacement and returns the spread of stat(g2 per target, bin).
std::vector<double> bootstrap_spread(std::span<const ClickRecord> records, DetectorTag trig,
                                     const std::vector<DetectorTag>& targets, double tau_max, double bin,
                                     std::size_t k_bins, const BootstrapOptions& opt,
                                     const std::function<double(const std::vector<double>&)>& stat) {
  std::vector<double> out(k_bins, kNaN);
  if (opt.resamples == 0) return out;
  double total_duration = 0.0;
  for (const auto& r : records) total_duration += r.duration;
  const double block_length = opt.block_length > 0.0 ? opt.block_length : total_duration / 50.0;
  std::vector<Block> blocks;
  for (const auto& rec : records) {
    auto b = make_blocks(rec, trig, targets, tau_max, bin, k_bins, block_length);
    blocks.insert(blocks.end(), std::make_move_iterator(b.begin()), std::make_move_iterator(b.end()));
  }
  const std::size_t nt = targets.size();
  Engine rng = make_engine(opt.seed);
  std::uniform_int_distribution<std::size_t> pick(0, blocks.size() - 1);
  std::vector<double> sum(k_bins, 0.0), sumsq(k_bins, 0.0), n_ok(k_bins, 0.0);
  std::vector<std::vector<double>> c(nt, std::vector<double>(k_bins));
  std::vector<double> n_to(nt), g(nt);
  for (std::size_t rep = 0; rep < opt.resamples; ++rep) {
    for (auto& v : c) std::fill(v.begin(), v.end(), 0.0);
    std::fill(n_to.begin(), n_to.end(), 0.0);
    double nf = 0.0, len = 0.0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const Block& blk = blocks[pick(rng)];
      for (std::size_t j = 0; j < nt; ++j) {
        for (std::size_t k = 0; k < k_bins; ++k) c[j][k] += static_cast<double>(blk.pairs[j][k]);
        n_to[j] += static_cast<double>(blk.n_to[j]);
      }
      nf += static_cast<double>(blk.n_from);
      len += blk.length;
    }
    if (nf <= 0.0 || std::any_of(n_to.begin(), n_to.end(), [](double x) { return x <= 0.0; })) continue;
    for (std::size_t k = 0; k < k_bins; ++k) {
      for (std::size_t j = 0; j < nt; ++j) g[j] = c[j][k] / (nf * bin * n_to[j] / len);
      const double r = stat(g);
      if (!std::isfinite(r)) continue;
      sum[k] += r;
      sumsq[k] += r * r;
      n_ok[k] += 1.0;
    }
  }
  for (std::size_t k = 0; k < k_bins; ++k) {
    if (n_ok[k] < 2.0) continue;
    const double mean = sum[k] / n_ok[k];
    out[k] = std::sqrt(std::max(0.0, (sumsq[k] / n_ok[k] - mean * mean) * n_ok[k] / (n_ok[k] - 1.0)));
  }
  return out;
}

}  // namespace

CorrelationEstimate estimate_g2(std::span<const ClickRecord> records, DetectorTag from, DetectorTag to,
                                double tau_max, double bin, const BootstrapOptions& bootstrap, unsigned workers) {
  CorrelationEstimate e = estimate_g2(records, from, to, tau_max, bin, workers);
  e.bootstrap_errors = bootstrap_spread(records, from, {to}, tau_max, bin, e.tau.size(), bootstrap,
                                        [](const std::vector<double>& g) { return g[0]; });
  return e;
}

CorrelationEstimate estimate_witness(std::span<const ClickRecord> records, double tau_max, double bin,
                                     const WitnessOptions& options) {
  if (options.trigger.color != Color::red || options.trigger.detector == Detector::single) {
    fail_config("invalid trigger", "witness needs a red A or B trigger");
  }
  const DetectorTag ta{Detector::A, Color::blue};
  const DetectorTag tb{Detector::B, Color::blue};
  const CorrelationEstimate ga = estimate_g2(records, options.trigger, ta, tau_max, bin);
  const CorrelationEstimate gb = estimate_g2(records, options.trigger, tb, tau_max, bin);

  CorrelationEstimate w;
  w.quantity = "witness";
  w.from = options.trigger;
  w.to = ta;
  w.bin_width = bin;
  w.tau = ga.tau;
  w.n_from = ga.n_from;
  w.n_to = ga.n_to + gb.n_to;
  w.duration = ga.duration;
  const std::size_t k_bins = ga.tau.size();
  for (std::size_t k = 0; k < k_bins; ++k) {
    const double a = ga.values[k];
    const double b = gb.values[k];
    const double sa = ga.std_errors[k];
    const double sb = gb.std_errors[k];
    const double diff = a - b;
    const double r = witness_or_nan(a, b);
    const double s = a + b - 1.0;
    const double da = 4.0 / (diff * diff) - 8.0 * s / (diff * diff * diff);
    const double db = 4.0 / (diff * diff) + 8.0 * s / (diff * diff * diff);
    w.values.push_back(r);
    w.std_errors.push_back(std::isfinite(r) ? std::hypot(da * sa, db * sb) : kNaN);
    w.counts.push_back(ga.counts[k] + gb.counts[k]);
    w.defined.push_back(std::isfinite(r) && ga.defined[k] ? 1 : 0);
    w.degenerate.push_back(!(std::abs(diff) >= 2.0 * std::hypot(sa, sb)) ? 1 : 0);
  }

  w.bootstrap_errors = bootstrap_spread(
      records, options.trigger, {ta, tb}, tau_max, bin, k_bins,
      {options.bootstrap_resamples, options.block_length, options.seed},
      [](const std::vector<double>& g) { return witness_or_nan(g[0], g[1]); });
  return w;
}

FirstBlueAfterRed first_blue_after_red(std::span<const ClickRecord> records, double tau_max, double bin,
                                       DetectorTag trigger) {
  check_binning(tau_max, bin);
  const std::size_t k_bins = bin_count(tau_max, bin);
  FirstBlueAfterRed f;
  f.total.assign(k_bins, 0);
  f.at_a.assign(k_bins, 0);
  std::uint64_t overall_a = 0, overall = 0;
  bool any_trigger = false, any_blue = false;
  for (const auto& rec : records) {
    std::vector<const ClickEvent*> waiting;
    for (const auto& e : rec.events) {
      if (e.tag == trigger) {
        waiting.push_back(&e);
        any_trigger = true;
        continue;
      }
      if (e.tag.color != Color::blue || e.tag.detector == Detector::single) continue;
      any_blue = true;
      for (const ClickEvent* t : waiting) {
        const double d = e.time - t->time;
        ++f.n_triggers;
        ++overall;
        if (e.tag.detector == Detector::A) ++overall_a;
        if (d <= static_cast<double>(k_bins) * bin) {
          auto k = static_cast<std::size_t>(std::ceil(d / bin)) - 1;
          k = std::min(k, k_bins - 1);
          ++f.total[k];
          if (e.tag.detector == Detector::A) ++f.at_a[k];
        }
      }
      waiting.clear();
    }
    f.n_triggers += waiting.size();
    f.n_truncated += waiting.size();
  }
  if (!any_trigger) fail_statistical("empty channel", "no " + to_string(trigger) + " events");
  if (!any_blue) fail_statistical("empty channel", "no blue A/B events");
  const double used = static_cast<double>(f.n_triggers - f.n_truncated);
  for (std::size_t k = 0; k < k_bins; ++k) {
    f.tau.push_back((static_cast<double>(k) + 0.5) * bin);
    const double n = static_cast<double>(f.total[k]);
    const double p = n > 0.0 ? static_cast<double>(f.at_a[k]) / n : kNaN;
    f.p_a.push_back(p);
    f.p_a_se.push_back(n > 0.0 ? std::sqrt(std::max(p * (1.0 - p), 0.25 / n) / n) : kNaN);
    f.density.push_back(used > 0.0 ? n / (used * bin) : kNaN);
  }
  if (overall > 0) {
    const double n = static_cast<double>(overall);
    f.p_a_overall = static_cast<double>(overall_a) / n;
    f.p_a_overall_se = std::sqrt(std::max(f.p_a_overall * (1.0 - f.p_a_overall), 0.25 / n) / n);
  }
  return f;
}

FirstBlueAfterRed first_blue_after_red(const ClickRecord& record, double tau_max, double bin,
                                       DetectorTag trigger) {
  return first_blue_after_red(std::span<const ClickRecord>(&record, 1), tau_max, bin, trigger);
}

std::pair<double, double> extrapolate_zero(const CorrelationEstimate& e) {
  if (e.values.size() < 2) fail_statistical("insufficient clicks", "need two bins to extrapolate to zero");
  const double v = 1.5 * e.values[0] - 0.5 * e.values[1];
  const double s = std::sqrt(2.25 * e.std_errors[0] * e.std_errors[0] + 0.25 * e.std_errors[1] * e.std_errors[1]);
  return {v, s};
}

ClassicalReport classical_tests(const ClassicalInputs& in) {
  ClassicalReport r;
  const double thr = in.threshold_sigma;
  if (in.cross && in.red_same && in.blue_same) {
    const auto [rr, srr] = extrapolate_zero(*in.red_same);
    const auto [bb, sbb] = extrapolate_zero(*in.blue_same);
    r.g2_rr0 = rr;
    r.g2_rr0_se = srr;
    r.g2_bb0 = bb;
    r.g2_bb0_se = sbb;
    const double rhs = rr * bb;
    const double srhs = std::hypot(srr * bb, sbb * rr);
    for (std::size_t k = 0; k < in.cross->values.size(); ++k) {
      const double g = in.cross->values[k];
      if (!std::isfinite(g)) continue;
      InequalityPoint p;
      p.tau = in.cross->tau[k];
      p.lhs = g * g;
      p.rhs = rhs;
      p.sigma = std::hypot(2.0 * g * in.cross->std_errors[k], srhs);
      p.significance = (p.lhs - p.rhs) / p.sigma;
      p.violated = p.significance > thr;
      r.max_cs_significance = std::max(r.max_cs_significance, p.significance);
      r.cs_violated = r.cs_violated || p.violated;
      r.cauchy_schwarz.push_back(p);
    }
  }
  if (in.same_detector && in.other_detector) {
    const auto& a = *in.same_detector;
    const auto& b = *in.other_detector;
    for (std::size_t k = 0; k < std::min(a.values.size(), b.values.size()); ++k) {
      const double ga = a.values[k];
      const double gb = b.values[k];
      if (!std::isfinite(ga) || !std::isfinite(gb) || ga + gb <= 0.0) continue;
      const double s = ga + gb;
      InequalityPoint p;
      p.tau = a.tau[k];
      p.lhs = ga / s;
      p.rhs = 2.0 / 3.0;
      p.sigma = std::hypot(gb / (s * s) * a.std_errors[k], ga / (s * s) * b.std_errors[k]);
      p.significance = (p.lhs - p.rhs) / p.sigma;
      p.violated = p.significance > thr;
      r.max_ratio_significance = std::max(r.max_ratio_significance, p.significance);
      r.ratio_violated = r.ratio_violated || p.violated;
      r.ratio_bound.push_back(p);
    }
  }
  return r;
}

namespace {

std::string fmt(double x) {
  if (!std::isfinite(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

nlohmann::json number_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); }

}  // namespace

void write_csv(std::ostream& os, const CorrelationEstimate& e) {
  const bool witness = e.quantity == "witness";
  const bool boot = e.bootstrap_errors.size() == e.tau.size() && !e.tau.empty();
  os << "tau,value,std_error,counts";
  if (boot) os << ",bootstrap_error";
  if (witness) os << ",degenerate";
  os << '\n';
  for (std::size_t k = 0; k < e.tau.size(); ++k) {
    os << fmt(e.tau[k]) << ',' << fmt(e.values[k]) << ',' << fmt(e.std_errors[k]) << ',' << e.counts[k];
    if (boot) os << ',' << fmt(e.bootstrap_errors[k]);
    if (witness) os << ',' << (e.degenerate[k] ? 1 : 0);
    os << '\n';
  }
}

nlohmann::json to_json(const CorrelationEstimate& e) {
  nlohmann::json j;
  j["quantity"] = e.quantity;
  j["from"] = to_string(e.from);
  j["to"] = to_string(e.to);
  j["bin_width"] = e.bin_width;
  j["n_from"] = e.n_from;
  j["n_to"] = e.n_to;
  j["duration"] = e.duration;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < e.tau.size(); ++k) {
    nlohmann::json row = {{"tau", e.tau[k]},
                          {"value", number_or_null(e.values[k])},
                          {"std_error", number_or_null(e.std_errors[k])},
                          {"counts", e.counts[k]}};
    if (k < e.bootstrap_errors.size()) row["bootstrap_error"] = number_or_null(e.bootstrap_errors[k]);
    if (e.quantity == "witness") row["degenerate"] = e.degenerate[k] != 0;
    rows.push_back(row);
  }
  j["bins"] = rows;
  return j;
}

nlohmann::json to_json(const FirstBlueAfterRed& f) {
  nlohmann::json j;
  j["n_triggers"] = f.n_triggers;
  j["n_truncated"] = f.n_truncated;
  j["tail_truncated"] = f.n_truncated > 0;
  j["p_a_overall"] = f.p_a_overall;
  j["p_a_overall_se"] = f.p_a_overall_se;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < f.tau.size(); ++k) {
    rows.push_back({{"tau", f.tau[k]},
                    {"total", f.total[k]},
                    {"at_a", f.at_a[k]},
                    {"p_a", number_or_null(f.p_a[k])},
                    {"p_a_se", number_or_null(f.p_a_se[k])},
                    {"density", number_or_null(f.density[k])}});
  }
  j["bins"] = rows;
  return j;
}

nlohmann::json to_json(const ClassicalReport& r) {
  auto points = [](const std::vector<InequalityPoint>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : v) {
      a.push_back({{"tau", p.tau},
                   {"lhs", p.lhs},
                   {"rhs", p.rhs},
                   {"sigma", p.sigma},
                   {"significance", p.significance},
                   {"violated", p.violated}});
    }
    return a;
  };
  return {{"cauchy_schwarz",
           {{"violated", r.cs_violated},
            {"max_significance", r.max_cs_significance},
            {"g2_rr0", r.g2_rr0},
            {"g2_bb0", r.g2_bb0},
            {"points", points(r.cauchy_schwarz)}}},
          {"ratio_bound",
           {{"violated", r.ratio_violated},
            {"max_significance", r.max_ratio_significance},
            {"points", points(r.ratio_bound)}}}};
}

}  // namespace optoent::counting
