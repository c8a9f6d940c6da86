#include "optoent/fock.hpp"

#include <cmath>

#include "optoent/error.hpp"

namespace optoent {

FockSpace::FockSpace(int n_oscillators, int n_max) : n_osc_(n_oscillators), n_max_(n_max) {
  if (n_oscillators != 1 && n_oscillators != 2) {
    fail_config("invalid space", "only one or two oscillators are supported");
  }
  if (n_max < 1) fail_config("invalid space", "n_max must be >= 1");
  dim_ = n_osc_ == 1 ? n_max_ + 1 : (n_max_ + 1) * (n_max_ + 1);
}

int FockSpace::index(int n1, int n2) const {
  if (n_osc_ == 1) return n1;
  return n1 * (n_max_ + 1) + n2;
}

int FockSpace::occupation(int idx, int oscillator) const {
  if (n_osc_ == 1) return idx;
  return oscillator == 0 ? idx / (n_max_ + 1) : idx % (n_max_ + 1);
}

bool FockSpace::at_top(int idx) const {
  for (int o = 0; o < n_osc_; ++o) {
    if (occupation(idx, o) == n_max_) return true;
  }
  return false;
}

SparseOp FockSpace::lower(int oscillator) const {
  std::vector<Eigen::Triplet<cplx>> t;
  for (int col = 0; col < dim_; ++col) {
    const int n = occupation(col, oscillator);
    if (n == 0) continue;
    int row;
    if (n_osc_ == 1) {
      row = n - 1;
    } else {
      const int n1 = occupation(col, 0) - (oscillator == 0 ? 1 : 0);
      const int n2 = occupation(col, 1) - (oscillator == 1 ? 1 : 0);
      row = index(n1, n2);
    }
    t.emplace_back(row, col, std::sqrt(static_cast<double>(n)));
  }
  SparseOp op(dim_, dim_);
  op.setFromTriplets(t.begin(), t.end());
  return op;
}

SparseOp FockSpace::raise(int oscillator) const {
  SparseOp a = lower(oscillator).adjoint();
  return a;
}

SparseOp FockSpace::number(int oscillator) const {
  std::vector<Eigen::Triplet<cplx>> t;
  for (int i = 0; i < dim_; ++i) t.emplace_back(i, i, static_cast<double>(occupation(i, oscillator)));
  SparseOp op(dim_, dim_);
  op.setFromTriplets(t.begin(), t.end());
  return op;
}

SparseOp FockSpace::identity() const {
  SparseOp op(dim_, dim_);
  op.setIdentity();
  return op;
}

JointState JointState::vacuum(const FockSpace& space) { return fock(space, 0, 0); }

JointState JointState::fock(const FockSpace& space, int n1, int n2) {
  JointState s;
  s.n_oscillators = space.oscillators();
  s.n_max = space.n_max();
  s.amplitudes = Eigen::VectorXcd::Zero(space.dim());
  s.amplitudes(space.index(n1, n2)) = 1.0;
  return s;
}

void JointState::normalize() {
  const double n = amplitudes.norm();
  if (!(n > 0.0)) fail_numerical("zero state", "cannot normalize a null state vector");
  amplitudes /= n;
}

double JointState::population(int n1, int n2) const {
  const FockSpace sp = space();
  return std::norm(amplitudes(sp.index(n1, n2))) / amplitudes.squaredNorm();
}

double JointState::mean_occupation(int oscillator) const {
  const FockSpace sp = space();
  double acc = 0.0;
  for (int i = 0; i < sp.dim(); ++i) acc += sp.occupation(i, oscillator) * std::norm(amplitudes(i));
  return acc / amplitudes.squaredNorm();
}

double JointState::top_population() const {
  const FockSpace sp = space();
  double acc = 0.0;
  for (int i = 0; i < sp.dim(); ++i) {
    if (sp.at_top(i)) acc += std::norm(amplitudes(i));
  }
  return acc / amplitudes.squaredNorm();
}

cplx JointState::coherence() const {
  const FockSpace sp = space();
  if (sp.oscillators() != 2) return 0.0;
  const Eigen::VectorXcd v = sp.lower(0) * amplitudes;
  const Eigen::VectorXcd w = sp.lower(1) * amplitudes;
  return w.dot(v) / amplitudes.squaredNorm();
}

}  // namespace optoent
