#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace optoent {

using cplx = std::complex<double>;
using SparseOp = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

/// Truncated Fock space of one or two oscillators, n_i in [0, n_max].
/// Basis index is n1 * (n_max + 1) + n2.
class FockSpace {
 public:
  FockSpace(int n_oscillators, int n_max);

  int oscillators() const noexcept { return n_osc_; }
  int n_max() const noexcept { return n_max_; }
  int dim() const noexcept { return dim_; }

  int index(int n1, int n2 = 0) const;
  int occupation(int index, int oscillator) const;
  bool at_top(int index) const;

  SparseOp lower(int oscillator) const;
  SparseOp raise(int oscillator) const;
  SparseOp number(int oscillator) const;
  SparseOp identity() const;

 private:
  int n_osc_;
  int n_max_;
  int dim_;
};

/// Pure state on a FockSpace.
struct JointState {
  Eigen::VectorXcd amplitudes;
  double time = 0.0;
  int n_oscillators = 2;
  int n_max = 0;

  static JointState vacuum(const FockSpace& space);
  static JointState fock(const FockSpace& space, int n1, int n2 = 0);

  FockSpace space() const { return FockSpace(n_oscillators, n_max); }
  double norm() const { return amplitudes.norm(); }
  void normalize();

  double population(int n1, int n2 = 0) const;
  double mean_occupation(int oscillator) const;
  /// Weight on states with any n_i = n_max.
  double top_population() const;
  /// <c2^dag c1>.
  cplx coherence() const;
};

}  // namespace optoent
