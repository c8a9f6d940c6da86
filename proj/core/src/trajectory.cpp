#include "optoent/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "optoent/error.hpp"

namespace optoent {

std::size_t ClickRecord::count(DetectorTag tag) const {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [&](const ClickEvent& e) { return e.tag == tag; }));
}

std::vector<double> ClickRecord::times(DetectorTag tag) const {
  std::vector<double> out;
  for (const auto& e : events) {
    if (e.tag == tag) out.push_back(e.time);
  }
  return out;
}

void ClickRecord::check_ordering() const {
  double last = -std::numeric_limits<double>::infinity();
  for (const auto& e : events) {
    if (!(e.time > last)) fail_config("invalid record", "event times are not strictly increasing");
    last = e.time;
  }
  if (!events.empty() && (events.front().time < start_time || events.back().time > end_time())) {
    fail_config("invalid record", "event times fall outside the record window");
  }
}

namespace trajectory {

namespace {

std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

void add_channel(ChannelSet& set, std::string tag, ChannelKind kind, std::optional<DetectorTag> det,
                 SparseOp op) {
  op.prune(cplx(0.0));
  set.channels.push_back({std::move(tag), kind, det, std::move(op)});
}

void finish(ChannelSet& set, double delta) {
  const FockSpace& sp = set.space;
  set.hamiltonian = SparseOp(sp.dim(), sp.dim());
  if (delta != 0.0 && sp.oscillators() == 2) set.hamiltonian = delta * sp.number(1);
  set.decay = SparseOp(sp.dim(), sp.dim());
  for (const auto& ch : set.channels) {
    SparseOp term = SparseOp(ch.op.adjoint()) * ch.op;
    set.decay += term;
  }
  set.decay.prune(cplx(0.0), 1e-14);
  double max_rate = 0.0;
  for (int r = 0; r < set.decay.outerSize(); ++r) {
    double row = 0.0;
    for (SparseOp::InnerIterator it(set.decay, r); it; ++it) row += std::abs(it.value());
    max_rate = std::max(max_rate, row);
  }
  set.max_rate = max_rate;
}

void check_balance(const ChannelSet& set, const DerivedParams& d) {
  for (int osc = 0; osc < set.space.oscillators(); ++osc) {
    const double n = implied_occupancy(set, osc);
    const double tol = 1e-9 * std::max(1.0, d.n_m);
    if (!(std::abs(n - d.n_m) <= tol)) {
      std::ostringstream os;
      os << "dissipator of oscillator " << osc + 1 << " implies n = " << n << ", expected " << d.n_m;
      fail_numerical("rate inconsistency", os.str());
    }
  }
}

void require_rates(const DerivedParams& d, int n_max, double eta_esc) {
  if (n_max < 3) fail_config("invalid truncation", "n_max must be >= 3");
  if (!(eta_esc >= 0.0 && eta_esc <= 1.0)) fail_config("invalid params", "eta_esc must lie in [0, 1]");
  if (d.a_minus < 0.0 || d.a_plus < 0.0 || d.gamma < 0.0 || d.n_th < 0.0) {
    fail_config("invalid params", "scattering rates must be positive");
  }
}

void add_incoherent(ChannelSet& set, const DerivedParams& d, double eta_esc) {
  const FockSpace& sp = set.space;
  for (int osc = 0; osc < sp.oscillators(); ++osc) {
    const std::string idx = std::to_string(osc + 1);
    const SparseOp c = sp.lower(osc);
    const SparseOp cd = sp.raise(osc);
    const double hidden = 1.0 - eta_esc;
    if (hidden > 0.0) {
      add_channel(set, "unobserved_blue_" + idx, ChannelKind::unobserved, std::nullopt,
                  std::sqrt(hidden * d.a_minus) * c);
      if (d.a_plus > 0.0) {
        add_channel(set, "unobserved_red_" + idx, ChannelKind::unobserved, std::nullopt,
                    std::sqrt(hidden * d.a_plus) * cd);
      }
    }
    if (d.gamma > 0.0) {
      add_channel(set, "thermal_down_" + idx, ChannelKind::thermal, std::nullopt,
                  std::sqrt(d.gamma * (d.n_th + 1.0)) * c);
      if (d.n_th > 0.0) {
        add_channel(set, "thermal_up_" + idx, ChannelKind::thermal, std::nullopt,
                    std::sqrt(d.gamma * d.n_th) * cd);
      }
    }
  }
}

}  // namespace

SparseOp ChannelSet::effective_hamiltonian() const {
  SparseOp h = hamiltonian;
  h -= cplx(0.0, 0.5) * decay;
  return h;
}

bool ChannelSet::diagonal() const {
  const SparseOp h = effective_hamiltonian();
  for (int r = 0; r < h.outerSize(); ++r) {
    for (SparseOp::InnerIterator it(h, r); it; ++it) {
      if (it.row() != it.col() && std::abs(it.value()) > 1e-13 * std::max(1.0, max_rate)) return false;
    }
  }
  return true;
}

ChannelSet build_channels(const TwoCavityParams& p, const DerivedParams& d, int n_max,
                          double eta_esc) {
  require_rates(d, n_max, eta_esc);
  ChannelSet set;
  set.space = FockSpace(2, n_max);
  set.eta_esc = eta_esc;
  set.delta = p.delta;
  set.phi = p.phi;

  const FockSpace& sp = set.space;
  const SparseOp c1 = sp.lower(0);
  const SparseOp c2 = sp.lower(1);
  const SparseOp c1d = sp.raise(0);
  const SparseOp c2d = sp.raise(1);
  const cplx i(0.0, 1.0);
  const cplx path = std::exp(i * (0.5 * kPi - p.phi));

  const double gb = std::sqrt(0.5 * eta_esc * d.a_minus);
  const double gr = std::sqrt(0.5 * eta_esc * d.a_plus);
  add_channel(set, "A_blue", ChannelKind::observed, DetectorTag{Detector::A, Color::blue},
              gb * (i * c1 + path * c2));
  add_channel(set, "B_blue", ChannelKind::observed, DetectorTag{Detector::B, Color::blue},
              gb * (c1 + i * path * c2));
  add_channel(set, "A_red", ChannelKind::observed, DetectorTag{Detector::A, Color::red},
              gr * (i * c1d + path * c2d));
  add_channel(set, "B_red", ChannelKind::observed, DetectorTag{Detector::B, Color::red},
              gr * (c1d + i * path * c2d));
  add_incoherent(set, d, eta_esc);
  finish(set, p.delta);
  check_balance(set, d);
  return set;
}

ChannelSet build_channels(const TwoCavityParams& p, const DerivedParams& d, int n_max) {
  return build_channels(p, d, n_max, d.eta_esc());
}

ChannelSet build_single_channels(const DerivedParams& d, int n_max, double eta_esc) {
  require_rates(d, n_max, eta_esc);
  ChannelSet set;
  set.space = FockSpace(1, n_max);
  set.eta_esc = eta_esc;
  const SparseOp c = set.space.lower(0);
  const SparseOp cd = set.space.raise(0);
  add_channel(set, "S_blue", ChannelKind::observed, DetectorTag{Detector::single, Color::blue},
              std::sqrt(eta_esc * d.a_minus) * c);
  add_channel(set, "S_red", ChannelKind::observed, DetectorTag{Detector::single, Color::red},
              std::sqrt(eta_esc * d.a_plus) * cd);
  add_incoherent(set, d, eta_esc);
  finish(set, 0.0);
  check_balance(set, d);
  return set;
}

double implied_occupancy(const ChannelSet& channels, int osc) {
  const FockSpace& sp = channels.space;
  const int vac = sp.index(0, 0);
  const int one = sp.oscillators() == 1 ? sp.index(1) : (osc == 0 ? sp.index(1, 0) : sp.index(0, 1));
  double up = 0.0;
  double down = 0.0;
  for (const auto& ch : channels.channels) {
    up += std::norm(ch.op.coeff(one, vac));
    down += std::norm(ch.op.coeff(vac, one));
  }
  return up / (down - up);
}

void Observer::on_step(double, const Eigen::VectorXcd&, double) {}
void Observer::on_jump(double, std::size_t, const Eigen::VectorXcd&) {}

Trajectory::Trajectory(const ChannelSet& channels, const JointState& initial, std::uint64_t seed,
                       const EvolveOptions& options)
    : channels_(&channels), options_(options), rng_(make_engine(seed)) {
  const FockSpace& sp = channels.space;
  if (initial.amplitudes.size() != sp.dim() || initial.n_max != sp.n_max() ||
      initial.n_oscillators != sp.oscillators()) {
    fail_config("invalid state", "initial state does not match the channel space");
  }
  psi_ = initial.amplitudes;
  const double n = psi_.norm();
  if (!(n > 0.0)) fail_config("invalid state", "initial state has zero norm");
  psi_ /= n;
  time_ = start_time_ = initial.time;

  double hscale = 0.0;
  for (int r = 0; r < channels.hamiltonian.outerSize(); ++r) {
    for (SparseOp::InnerIterator it(channels.hamiltonian, r); it; ++it) {
      hscale = std::max(hscale, std::abs(it.value()));
    }
  }
  if (options.dt > 0.0) {
    dt_ = options.dt;
  } else if (channels.max_rate > 0.0) {
    dt_ = options.dt_scale / channels.max_rate;
  } else if (hscale > 0.0) {
    dt_ = options.dt_scale / hscale;
  } else {
    dt_ = 1.0;
  }
  if (channels.max_rate * dt_ >= 0.05) {
    fail_config("invalid step", "max rate times dt must stay below 0.05");
  }

  const SparseOp heff = channels.effective_hamiltonian();
  diagonal_ = channels.diagonal();
  if (diagonal_) {
    heff_diag_ = heff.diagonal();
    step_diag_ = (cplx(0.0, -dt_) * heff_diag_).array().exp().matrix();
  } else {
    heff_dense_ = Eigen::MatrixXcd(heff);
    step_dense_ = (cplx(0.0, -dt_) * heff_dense_).exp();
  }
  top_flag_.resize(sp.dim());
  for (int k = 0; k < sp.dim(); ++k) top_flag_[k] = sp.at_top(k) ? 1 : 0;
  per_channel_.assign(channels.channels.size(), 0);
  weights_.resize(channels.channels.size());
  threshold_ = uniform_open(rng_);
  refresh_support();
}

void Trajectory::refresh_support() {
  support_.clear();
  for (int k = 0; k < psi_.size(); ++k) {
    if (psi_(k) != cplx(0.0)) support_.push_back(k);
  }
}

void Trajectory::propagate(double h, bool regular) {
  if (diagonal_) {
    if (regular) {
      for (int k : support_) psi_(k) *= step_diag_(k);
    } else {
      for (int k : support_) psi_(k) *= std::exp(cplx(0.0, -h) * heff_diag_(k));
    }
  } else {
    scratch_ = regular ? (step_dense_ * psi_).eval() : ((cplx(0.0, -h) * heff_dense_).exp() * psi_).eval();
    psi_.swap(scratch_);
    refresh_support();
  }
}

std::size_t Trajectory::jump() {
  double total = 0.0;
  for (std::size_t k = 0; k < channels_->channels.size(); ++k) {
    weights_[k] = (channels_->channels[k].op * psi_).squaredNorm();
    total += weights_[k];
  }
  if (!(total > 0.0)) fail_numerical("jump failure", "no channel can act on the current state");
  double u = uniform_open(rng_) * total;
  std::size_t chosen = weights_.size() - 1;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    if (weights_[k] <= 0.0) continue;
    if (u < weights_[k]) {
      chosen = k;
      break;
    }
    u -= weights_[k];
  }
  while (weights_[chosen] <= 0.0) --chosen;
  scratch_ = channels_->channels[chosen].op * psi_;
  psi_.swap(scratch_);
  psi_ /= psi_.norm();
  norm2_ = 1.0;
  ++jumps_;
  ++per_channel_[chosen];
  refresh_support();
  threshold_ = uniform_open(rng_);
  return chosen;
}

void Trajectory::advance_to(double t_end, Observer* observer, ClickRecord* record) {
  auto top_weight = [&](double n2) {
    double acc = 0.0;
    for (int k : support_) {
      if (top_flag_[k]) acc += std::norm(psi_(k));
    }
    return acc / n2;
  };
  while (time_ < t_end) {
    const double remaining = t_end - time_;
    const bool regular = remaining >= dt_;
    const double h = regular ? dt_ : remaining;
    const double prev_norm = norm2_;
    propagate(h, regular);
    double n2 = 0.0;
    if (diagonal_) {
      for (int k : support_) n2 += std::norm(psi_(k));
    } else {
      n2 = psi_.squaredNorm();
    }
    if (n2 > threshold_) {
      norm2_ = n2;
      time_ = regular ? time_ + h : t_end;
      top_accum_ += top_weight(n2) * h;
      if (observer) observer->on_step(time_, psi_, n2);
      continue;
    }
    // Undo the step and move to the interpolated crossing of the threshold.
    if (diagonal_) {
      for (int k : support_) psi_(k) /= regular ? step_diag_(k) : std::exp(cplx(0.0, -h) * heff_diag_(k));
    } else {
      psi_ = (cplx(0.0, h) * heff_dense_).exp() * psi_;
    }
    double s = (prev_norm - threshold_) / (prev_norm - n2);
    s = std::clamp(s, 1e-9, 1.0);
    const double h1 = s * h;
    propagate(h1, false);
    time_ += h1;
    if (time_ > t_end) time_ = t_end;
    double n_mid = 0.0;
    for (int k : support_) n_mid += std::norm(psi_(k));
    top_accum_ += top_weight(n_mid) * h1;
    const std::size_t chosen = jump();
    const auto& ch = channels_->channels[chosen];
    if (record && ch.observed()) record->events.push_back({time_, *ch.detector});
    if (observer) observer->on_jump(time_, chosen, psi_);
  }
}

JointState Trajectory::state() const {
  JointState s;
  s.n_oscillators = channels_->space.oscillators();
  s.n_max = channels_->space.n_max();
  s.amplitudes = psi_ / psi_.norm();
  s.time = time_;
  return s;
}

double Trajectory::top_level_weight() const {
  const double span = time_ - start_time_;
  return span > 0.0 ? top_accum_ / span : 0.0;
}

void check_truncation(double weight, double tolerance, const std::string& context) {
  if (weight > tolerance) {
    std::ostringstream os;
    os << context << ": top-level Fock weight " << weight << " exceeds " << tolerance;
    fail_numerical("truncation exceeded", os.str());
  }
}

EvolveResult evolve(const ChannelSet& channels, const JointState& initial, double duration,
                    std::uint64_t seed, const EvolveOptions& options) {
  if (!(duration > 0.0)) fail_config("invalid duration", "duration must be > 0");
  Trajectory tr(channels, initial, seed, options);
  EvolveResult out;
  out.record.start_time = initial.time;
  out.record.duration = duration;
  out.record.seed = seed;
  tr.advance_to(initial.time + duration, nullptr, &out.record);
  out.final_state = tr.state();
  out.top_level_weight = tr.top_level_weight();
  out.jumps = tr.jumps();
  if (options.check_truncation) {
    check_truncation(out.top_level_weight, options.truncation_tolerance, "trajectory");
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> snapshot(const ChannelSet& channels,
                                                          const DerivedParams& d) {
  return {
      {"model", channels.space.oscillators() == 2 ? "two_cavity" : "single_cavity"},
      {"n_max", std::to_string(channels.space.n_max())},
      {"eta_esc", format_double(channels.eta_esc)},
      {"delta", format_double(channels.delta)},
      {"phi", format_double(channels.phi)},
      {"a_minus", format_double(d.a_minus)},
      {"a_plus", format_double(d.a_plus)},
      {"gamma", format_double(d.gamma)},
      {"n_th", format_double(d.n_th)},
      {"gamma_eff", format_double(d.gamma_eff)},
      {"n_m", format_double(d.n_m)},
  };
}

}  // namespace trajectory
}  // namespace optoent
