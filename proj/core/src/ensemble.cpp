#include "optoent/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "optoent/error.hpp"

namespace optoent {

unsigned default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned workers) {
  if (n == 0) return;
  if (workers == 0) workers = default_workers();
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace trajectory {

std::vector<ClickRecord> simulate_records(const ChannelSet& channels, std::size_t n_records,
                                          double duration, double burn_in, std::uint64_t root_seed,
                                          const EvolveOptions& options, unsigned workers) {
  if (!(duration > 0.0) || !(burn_in >= 0.0)) {
    fail_config("invalid duration", "duration must be > 0 and burn-in >= 0");
  }
  std::vector<ClickRecord> out(n_records);
  parallel_for(
      n_records,
      [&](std::size_t k) {
        const std::uint64_t seed = derive_seed(root_seed, k);
        Trajectory tr(channels, JointState::vacuum(channels.space), seed, options);
        if (burn_in > 0.0) tr.advance_to(burn_in);
        ClickRecord rec;
        rec.start_time = burn_in;
        rec.duration = duration;
        rec.seed = seed;
        tr.advance_to(burn_in + duration, nullptr, &rec);
        if (options.check_truncation) {
          check_truncation(tr.top_level_weight(), options.truncation_tolerance, "record");
        }
        out[k] = std::move(rec);
      },
      workers);
  return out;
}

namespace {

struct MomentSums {
  std::vector<double> n1, n1sq, n2, n2sq, qre, qresq, qim, qimsq, top;
  explicit MomentSums(std::size_t m)
      : n1(m), n1sq(m), n2(m), n2sq(m), qre(m), qresq(m), qim(m), qimsq(m), top(m) {}
};

double standard_error(double sum, double sumsq, double n) {
  if (n < 2.0) return 0.0;
  const double mean = sum / n;
  const double var = std::max(0.0, (sumsq / n - mean * mean) * n / (n - 1.0));
  return std::sqrt(var / n);
}

}  // namespace

std::vector<MomentPoint> ensemble_moments(const ChannelSet& channels, const JointState& initial,
                                          const std::vector<double>& times, std::size_t n_trajectories,
                                          std::uint64_t root_seed, const EvolveOptions& options,
                                          unsigned workers) {
  if (!std::is_sorted(times.begin(), times.end()) || (!times.empty() && times.front() < initial.time)) {
    fail_config("invalid grid", "sample times must be sorted and not precede the initial state");
  }
  if (n_trajectories == 0) fail_config("invalid ensemble", "need at least one trajectory");
  const std::size_t chunk = 256;
  const std::size_t n_tasks = (n_trajectories + chunk - 1) / chunk;
  const std::size_t m = times.size();
  std::vector<MomentSums> partial(n_tasks, MomentSums(m));
  const FockSpace& sp = channels.space;
  const SparseOp c1 = sp.lower(0);
  const SparseOp c2 = sp.oscillators() == 2 ? sp.lower(1) : sp.lower(0);

  parallel_for(
      n_tasks,
      [&](std::size_t task) {
        MomentSums& acc = partial[task];
        const std::size_t begin = task * chunk;
        const std::size_t end = std::min(n_trajectories, begin + chunk);
        for (std::size_t i = begin; i < end; ++i) {
          Trajectory tr(channels, initial, derive_seed(root_seed, i), options);
          for (std::size_t k = 0; k < m; ++k) {
            tr.advance_to(times[k]);
            const JointState s = tr.state();
            const double a = s.mean_occupation(0);
            const double b = sp.oscillators() == 2 ? s.mean_occupation(1) : 0.0;
            const cplx q = sp.oscillators() == 2 ? cplx((c2 * s.amplitudes).dot(c1 * s.amplitudes)) : 0.0;
            acc.n1[k] += a;
            acc.n1sq[k] += a * a;
            acc.n2[k] += b;
            acc.n2sq[k] += b * b;
            acc.qre[k] += q.real();
            acc.qresq[k] += q.real() * q.real();
            acc.qim[k] += q.imag();
            acc.qimsq[k] += q.imag() * q.imag();
            acc.top[k] += s.top_population();
          }
        }
      },
      workers);

  MomentSums total(m);
  for (const auto& p : partial) {
    for (std::size_t k = 0; k < m; ++k) {
      total.n1[k] += p.n1[k];
      total.n1sq[k] += p.n1sq[k];
      total.n2[k] += p.n2[k];
      total.n2sq[k] += p.n2sq[k];
      total.qre[k] += p.qre[k];
      total.qresq[k] += p.qresq[k];
      total.qim[k] += p.qim[k];
      total.qimsq[k] += p.qimsq[k];
      total.top[k] += p.top[k];
    }
  }
  const double n = static_cast<double>(n_trajectories);
  std::vector<MomentPoint> out(m);
  double top_mean = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    MomentPoint& pt = out[k];
    pt.time = times[k];
    pt.n1 = total.n1[k] / n;
    pt.n2 = total.n2[k] / n;
    pt.n1_se = standard_error(total.n1[k], total.n1sq[k], n);
    pt.n2_se = standard_error(total.n2[k], total.n2sq[k], n);
    pt.coherence = cplx(total.qre[k] / n, total.qim[k] / n);
    pt.coherence_re_se = standard_error(total.qre[k], total.qresq[k], n);
    pt.coherence_im_se = standard_error(total.qim[k], total.qimsq[k], n);
    pt.top_level = total.top[k] / n;
    top_mean += pt.top_level;
  }
  if (options.check_truncation && m > 0) {
    check_truncation(top_mean / static_cast<double>(m), options.truncation_tolerance, "ensemble");
  }
  return out;
}

namespace {

// Per-batch sums of the conditional matrix elements at each delay.
struct CondSums {
  std::vector<double> p00, p01, p10, p11, qre, qim;
  std::vector<double> count;
  explicit CondSums(std::size_t m) : p00(m), p01(m), p10(m), p11(m), qre(m), qim(m), count(m) {}
  void add(const CondSums& o, double sign = 1.0) {
    for (std::size_t k = 0; k < count.size(); ++k) {
      p00[k] += sign * o.p00[k];
      p01[k] += sign * o.p01[k];
      p10[k] += sign * o.p10[k];
      p11[k] += sign * o.p11[k];
      qre[k] += sign * o.qre[k];
      qim[k] += sign * o.qim[k];
      count[k] += sign * o.count[k];
    }
  }
};

class ConditionalObserver : public Observer {
 public:
  ConditionalObserver(const ChannelSet& channels, const std::vector<double>& taus, std::size_t trigger,
                      double t_start, double t_stop, std::vector<CondSums>& batches)
      : taus_(taus), trigger_(trigger), t_start_(t_start), t_stop_(t_stop), batches_(batches) {
    const FockSpace& sp = channels.space;
    i00_ = sp.index(0, 0);
    i01_ = sp.index(0, 1);
    i10_ = sp.index(1, 0);
    i11_ = sp.index(1, 1);
  }

  void on_step(double time, const Eigen::VectorXcd& psi, double norm2) override { service(time, psi, norm2); }

  void on_jump(double time, std::size_t channel, const Eigen::VectorXcd& psi) override {
    if (channel == trigger_ && time >= t_start_ && time <= t_stop_) {
      const double frac = (time - t_start_) / (t_stop_ - t_start_);
      auto b = static_cast<std::size_t>(frac * static_cast<double>(batches_.size()));
      b = std::min(b, batches_.size() - 1);
      pending_.push_back({time, 0, b});
      ++clicks_;
    }
    service(time, psi, 1.0);
  }

  std::size_t clicks() const { return clicks_; }

 private:
  struct Window {
    double t0;
    std::size_t next;
    std::size_t batch;
  };

  void service(double time, const Eigen::VectorXcd& psi, double norm2) {
    for (auto& w : pending_) {
      while (w.next < taus_.size() && time - w.t0 >= taus_[w.next] - 1e-12) {
        sample(batches_[w.batch], w.next, psi, norm2);
        ++w.next;
      }
    }
    std::erase_if(pending_, [&](const Window& w) { return w.next >= taus_.size(); });
  }

  void sample(CondSums& s, std::size_t k, const Eigen::VectorXcd& psi, double norm2) {
    s.p00[k] += std::norm(psi(i00_)) / norm2;
    s.p01[k] += std::norm(psi(i01_)) / norm2;
    s.p10[k] += std::norm(psi(i10_)) / norm2;
    s.p11[k] += std::norm(psi(i11_)) / norm2;
    const cplx q = std::conj(psi(i01_)) * psi(i10_) / norm2;
    s.qre[k] += q.real();
    s.qim[k] += q.imag();
    s.count[k] += 1.0;
  }

  const std::vector<double>& taus_;
  std::size_t trigger_;
  double t_start_;
  double t_stop_;
  std::vector<CondSums>& batches_;
  std::vector<Window> pending_;
  std::size_t clicks_ = 0;
  int i00_, i01_, i10_, i11_;
};

struct CondEstimate {
  double p00, p01, p10, p11;
  cplx q;
  double concurrence;
  double ratio;
};

CondEstimate estimate(const CondSums& s, std::size_t k) {
  const double n = s.count[k];
  CondEstimate e{};
  e.p00 = s.p00[k] / n;
  e.p01 = s.p01[k] / n;
  e.p10 = s.p10[k] / n;
  e.p11 = s.p11[k] / n;
  e.q = cplx(s.qre[k] / n, s.qim[k] / n);
  e.concurrence = analytic::concurrence(e.p00, e.p11, e.q);
  const double q2 = std::norm(e.q);
  e.ratio = q2 > 0.0 ? e.p00 * e.p11 / q2 : std::numeric_limits<double>::infinity();
  return e;
}

}  // namespace

ConditionalResult conditional_after_red(const ChannelSet& channels, const ConditionalOptions& opt,
                                        std::uint64_t seed, const EvolveOptions& evolve_options,
                                        unsigned workers) {
  if (channels.space.oscillators() != 2) {
    fail_config("invalid model", "conditional states need the two-oscillator model");
  }
  if (opt.tau_grid.empty() || !std::is_sorted(opt.tau_grid.begin(), opt.tau_grid.end()) ||
      opt.tau_grid.front() < 0.0) {
    fail_config("invalid grid", "tau grid must be non-empty, sorted and non-negative");
  }
  const double tau_last = opt.tau_grid.back();
  if (!(opt.record_duration > tau_last) || opt.n_records == 0 || opt.batches_per_record == 0) {
    fail_config("invalid options", "records must outlast the tau grid");
  }
  std::size_t trigger = channels.channels.size();
  for (std::size_t k = 0; k < channels.channels.size(); ++k) {
    const auto& ch = channels.channels[k];
    if (ch.observed() && *ch.detector == opt.trigger) trigger = k;
  }
  if (trigger == channels.channels.size()) {
    fail_config("invalid trigger", "no observed channel carries " + to_string(opt.trigger));
  }

  const std::size_t m = opt.tau_grid.size();
  std::vector<std::vector<CondSums>> per_record(opt.n_records,
                                                std::vector<CondSums>(opt.batches_per_record, CondSums(m)));
  std::vector<std::size_t> clicks(opt.n_records, 0);
  std::vector<double> top(opt.n_records, 0.0);

  parallel_for(
      opt.n_records,
      [&](std::size_t r) {
        Trajectory tr(channels, JointState::vacuum(channels.space), derive_seed(seed, r), evolve_options);
        tr.advance_to(opt.burn_in);
        const double t_start = opt.burn_in;
        const double t_stop = opt.burn_in + opt.record_duration - tau_last;
        ConditionalObserver obs(channels, opt.tau_grid, trigger, t_start, t_stop, per_record[r]);
        tr.advance_to(opt.burn_in + opt.record_duration, &obs);
        clicks[r] = obs.clicks();
        top[r] = tr.top_level_weight();
      },
      workers);

  ConditionalResult result;
  for (std::size_t r = 0; r < opt.n_records; ++r) {
    result.n_clicks += clicks[r];
    result.top_level_weight += top[r] / static_cast<double>(opt.n_records);
  }
  if (evolve_options.check_truncation) {
    check_truncation(result.top_level_weight, evolve_options.truncation_tolerance, "conditional run");
  }
  if (result.n_clicks < opt.min_clicks) {
    fail_statistical("insufficient clicks", std::to_string(result.n_clicks) + " trigger clicks, need " +
                                                std::to_string(opt.min_clicks));
  }

  std::vector<const CondSums*> batches;
  CondSums total(m);
  for (const auto& rec : per_record) {
    for (const auto& b : rec) {
      batches.push_back(&b);
      total.add(b);
    }
  }
  for (std::size_t k = 0; k < m; ++k) {
    const CondEstimate e = estimate(total, k);
    ConditionalPoint pt;
    pt.tau = opt.tau_grid[k];
    pt.p00 = e.p00;
    pt.p01 = e.p01;
    pt.p10 = e.p10;
    pt.p11 = e.p11;
    pt.remainder = std::max(0.0, 1.0 - (e.p00 + e.p01 + e.p10 + e.p11));
    pt.q = e.q;
    pt.concurrence = e.concurrence;
    pt.ratio = e.ratio;

    // Jackknife over batches.
    std::vector<double> cs, rs;
    for (const CondSums* b : batches) {
      if (b->count[k] <= 0.0 || total.count[k] - b->count[k] <= 0.0) continue;
      CondSums loo = total;
      loo.add(*b, -1.0);
      const CondEstimate j = estimate(loo, k);
      cs.push_back(j.concurrence);
      rs.push_back(j.ratio);
    }
    auto jk = [](const std::vector<double>& v) {
      const double n = static_cast<double>(v.size());
      if (n < 2.0) return std::numeric_limits<double>::infinity();
      double mean = 0.0;
      for (double x : v) mean += x / n;
      double acc = 0.0;
      for (double x : v) acc += (x - mean) * (x - mean);
      return std::sqrt((n - 1.0) / n * acc);
    };
    pt.concurrence_se = jk(cs);
    pt.ratio_se = jk(rs);
    result.points.push_back(pt);
  }
  return result;
}

}  // namespace trajectory
}  // namespace optoent
