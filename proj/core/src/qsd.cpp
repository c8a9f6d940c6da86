#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "optoent/error.hpp"
#include "optoent/heterodyne.hpp"
#include "optoent/rng.hpp"

namespace optoent::heterodyne {

namespace {

// Compressed rows; the operators here have a handful of entries per row.
struct Csr {
  std::vector<int> start;
  std::vector<int> col;
  std::vector<cplx> val;

  explicit Csr(const SparseOp& op) {
    SparseOp m = op;
    m.makeCompressed();
    start.assign(m.outerIndexPtr(), m.outerIndexPtr() + m.outerSize() + 1);
    col.assign(m.innerIndexPtr(), m.innerIndexPtr() + m.nonZeros());
    val.assign(m.valuePtr(), m.valuePtr() + m.nonZeros());
  }

  void apply(const cplx* x, cplx* y, int n) const {
    for (int r = 0; r < n; ++r) {
      cplx s(0.0);
      for (int k = start[r]; k < start[r + 1]; ++k) s += val[k] * x[col[k]];
      y[r] = s;
    }
  }
};

struct Measured {
  Detector detector;
  Csr blue, red, blue_adj, red_adj;
};

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

QsdResult unravel_qsd(const trajectory::ChannelSet& channels, const DerivedParams& d,
                      const QsdOptions& options, std::uint64_t seed) {
  const double w = d.omega_eff;
  const double dt = options.dt;
  if (!(dt > 0.0) || !(options.duration > 0.0) || !(options.burn_in >= 0.0)) {
    fail_config("invalid params", "state diffusion needs dt > 0, duration > 0 and burn_in >= 0");
  }
  if (dt * w > 0.05) fail_config("invalid params", "dt omega_m = " + fmt(dt * w) + " exceeds 0.05");
  if (dt * channels.max_rate > 0.05) {
    fail_config("invalid params", "dt times the total rate = " + fmt(dt * channels.max_rate) + " exceeds 0.05");
  }

  const FockSpace& sp = channels.space;
  const int dim = sp.dim();

  // Pair observed channels per detector; the rest stay jumps.
  std::map<Detector, std::pair<const SparseOp*, const SparseOp*>> by_det;
  std::vector<Csr> hidden;
  for (const auto& ch : channels.channels) {
    if (ch.observed()) {
      auto& slot = by_det[ch.detector->detector];
      (ch.detector->color == Color::blue ? slot.first : slot.second) = &ch.op;
    } else {
      hidden.emplace_back(ch.op);
    }
  }
  std::vector<Measured> meas;
  for (const auto& [det, ops] : by_det) {
    if (!ops.first || !ops.second) fail_config("invalid params", "detector lacks a blue or red channel");
    meas.push_back({det, Csr(*ops.first), Csr(*ops.second), Csr(SparseOp(ops.first->adjoint())),
                    Csr(SparseOp(ops.second->adjoint()))});
  }

  // Diagonal pieces: H and the hidden-channel decay.
  std::vector<double> h_diag(dim, 0.0);
  std::vector<double> d_hidden(dim, 0.0);
  for (int k = 0; k < dim; ++k) h_diag[k] = channels.hamiltonian.coeff(k, k).real();
  for (const auto& ch : channels.channels) {
    if (ch.observed()) continue;
    const SparseOp dd = SparseOp(ch.op.adjoint()) * ch.op;
    for (int r = 0; r < dd.outerSize(); ++r) {
      for (SparseOp::InnerIterator it(dd, r); it; ++it) {
        if (it.row() != it.col() && std::abs(it.value()) > 1e-12) {
          fail_numerical("invalid params", "unobserved channels must have a diagonal decay");
        }
        if (it.row() == it.col()) d_hidden[it.row()] += it.value().real();
      }
    }
  }
  for (int r = 0; r < channels.hamiltonian.outerSize(); ++r) {
    for (SparseOp::InnerIterator it(channels.hamiltonian, r); it; ++it) {
      if (it.row() != it.col() && std::abs(it.value()) > 1e-12) {
        fail_numerical("invalid params", "state diffusion expects a diagonal Hamiltonian");
      }
    }
  }
  std::vector<char> top(dim);
  for (int k = 0; k < dim; ++k) top[k] = sp.at_top(k) ? 1 : 0;

  Engine rng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5 * dt));
  auto uniform = [&] { return uniform_open(rng); };

  std::vector<cplx> psi(dim, cplx(0.0));
  psi[sp.index(0, 0)] = 1.0;
  std::vector<cplx> dpsi(dim), vb(dim), vr(dim), lpsi(dim), tmp(dim), tmp2(dim);

  const auto n_burn = static_cast<std::size_t>(std::llround(options.burn_in / dt));
  const auto n_rec = static_cast<std::size_t>(std::llround(options.duration / dt));

  QsdResult result;
  result.records.resize(meas.size());
  for (std::size_t m = 0; m < meas.size(); ++m) {
    auto& rec = result.records[m];
    rec.dt = dt;
    rec.omega_m = w;
    rec.start_time = static_cast<double>(n_burn) * dt;
    rec.seed = seed;
    rec.detector = meas[m].detector;
    rec.params = trajectory::snapshot(channels, d);
    rec.params.emplace_back("source", "qsd");
    rec.samples.resize(n_rec);
  }

  double top_accum = 0.0;
  std::vector<double> jump_weights(hidden.size());
  for (std::size_t step = 0; step < n_burn + n_rec; ++step) {
    const double t = static_cast<double>(step) * dt;
    const bool recording = step >= n_burn;
    const std::size_t idx = step - n_burn;

    double mean_hidden = 0.0;
    double top_weight = 0.0;
    for (int k = 0; k < dim; ++k) {
      const double p = std::norm(psi[k]);
      mean_hidden += d_hidden[k] * p;
      if (top[k]) top_weight += p;
    }
    if (recording) top_accum += top_weight;
    if (recording && options.trace_stride > 0 && idx % options.trace_stride == 0) {
      StateSample s;
      s.time = t;
      s.top = top_weight;
      for (int k = 0; k < dim; ++k) {
        const double p = std::norm(psi[k]);
        s.n1 += sp.occupation(k, 0) * p;
        if (sp.oscillators() == 2) s.n2 += sp.occupation(k, 1) * p;
      }
      if (sp.oscillators() == 2) {
        // <c2^dag c1> = sum sqrt(n1 (n2+1)) conj(psi[n1-1, n2+1]) psi[n1, n2]
        for (int k = 0; k < dim; ++k) {
          const int n1 = sp.occupation(k, 0);
          const int n2 = sp.occupation(k, 1);
          if (n1 == 0 || n2 == sp.n_max()) continue;
          s.coherence += std::sqrt(static_cast<double>(n1) * (n2 + 1)) * std::conj(psi[sp.index(n1 - 1, n2 + 1)]) * psi[k];
        }
      }
      result.trace.push_back(s);
    }

    for (int k = 0; k < dim; ++k) {
      dpsi[k] = dt * cplx(-0.5 * (d_hidden[k] - mean_hidden), -h_diag[k]) * psi[k];
    }
    const cplx rot = std::polar(1.0, -w * t);  // e^{-i w t}
    for (std::size_t m = 0; m < meas.size(); ++m) {
      const Measured& ms = meas[m];
      ms.blue.apply(psi.data(), vb.data(), dim);
      ms.red.apply(psi.data(), vr.data(), dim);
      cplx ell(0.0);
      for (int k = 0; k < dim; ++k) {
        lpsi[k] = rot * vb[k] + std::conj(rot) * vr[k];
        ell += std::conj(psi[k]) * lpsi[k];
      }
      ms.blue_adj.apply(lpsi.data(), tmp.data(), dim);
      ms.red_adj.apply(lpsi.data(), tmp2.data(), dim);
      const cplx dz(normal(rng), normal(rng));
      const cplx dzc = std::conj(dz);
      const double ell2 = std::norm(ell);
      for (int k = 0; k < dim; ++k) {
        const cplx ldl = std::conj(rot) * tmp[k] + rot * tmp2[k];
        dpsi[k] += dt * (-0.5 * ldl + std::conj(ell) * lpsi[k] - 0.5 * ell2 * psi[k]) +
                   (lpsi[k] - ell * psi[k]) * dzc;
      }
      if (recording) result.records[m].samples[idx] = ell + dz / dt;
    }
    double norm2 = 0.0;
    for (int k = 0; k < dim; ++k) {
      psi[k] += dpsi[k];
      norm2 += std::norm(psi[k]);
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& v : psi) v *= inv;

    if (!hidden.empty() && uniform() < mean_hidden * dt) {
      double total = 0.0;
      for (std::size_t j = 0; j < hidden.size(); ++j) {
        hidden[j].apply(psi.data(), tmp.data(), dim);
        double s = 0.0;
        for (int k = 0; k < dim; ++k) s += std::norm(tmp[k]);
        jump_weights[j] = s;
        total += s;
      }
      double u = uniform() * total;
      std::size_t pick = 0;
      while (pick + 1 < hidden.size() && u > jump_weights[pick]) u -= jump_weights[pick++];
      hidden[pick].apply(psi.data(), tmp.data(), dim);
      const double s = 1.0 / std::sqrt(jump_weights[pick]);
      for (int k = 0; k < dim; ++k) psi[k] = tmp[k] * s;
    }
  }
  result.top_level_weight = n_rec > 0 ? top_accum / static_cast<double>(n_rec) : 0.0;
  trajectory::check_truncation(result.top_level_weight, options.truncation_tolerance, "state diffusion");
  return result;
}

QsdResult unravel_qsd(const TwoCavityParams& p, const DerivedParams& d, const QsdOptions& options,
                      std::uint64_t seed) {
  const auto channels = trajectory::build_channels(p, d, options.n_max, options.eta_esc.value_or(d.eta_esc()));
  return unravel_qsd(channels, d, options, seed);
}

QsdResult unravel_qsd_single(const DerivedParams& d, const QsdOptions& options, std::uint64_t seed) {
  const auto channels = trajectory::build_single_channels(d, options.n_max, options.eta_esc.value_or(d.eta_esc()));
  return unravel_qsd(channels, d, options, seed);
}

}  // namespace optoent::heterodyne
