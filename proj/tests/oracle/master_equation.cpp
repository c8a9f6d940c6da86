#include "master_equation.hpp"

#include <cmath>

namespace oracle {

Rates Rates::from(const optoent::DerivedParams& d, double delta) {
  return {d.a_minus + d.gamma * (d.n_th + 1.0), d.a_plus + d.gamma * d.n_th, delta};
}

MasterEquation::MasterEquation(const Rates& rates, int n_max)
    : n_max_(n_max), dim_((n_max + 1) * (n_max + 1)), rates_(rates) {
  const int m = n_max + 1;
  Matrix a = Matrix::Zero(m, m);
  for (int k = 1; k < m; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  const Matrix id = Matrix::Identity(m, m);
  c1_ = Matrix::Zero(dim_, dim_);
  c2_ = Matrix::Zero(dim_, dim_);
  // Kronecker products by hand: index = n1 * m + n2.
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l) {
          c1_(i * m + k, j * m + l) = a(i, j) * id(k, l);
          c2_(i * m + k, j * m + l) = id(i, j) * a(k, l);
        }
  h_ = rates.delta * c2_.adjoint() * c2_;
  decay_ = rates.down * (c1_.adjoint() * c1_ + c2_.adjoint() * c2_) +
           rates.up * (c1_ * c1_.adjoint() + c2_ * c2_.adjoint());
}

Matrix MasterEquation::derivative(const Matrix& rho) const {
  const cplx i(0.0, 1.0);
  Matrix out = -i * (h_ * rho - rho * h_) - 0.5 * (decay_ * rho + rho * decay_);
  for (const Matrix* c : {&c1_, &c2_}) {
    out += rates_.down * (*c) * rho * c->adjoint();
    out += rates_.up * c->adjoint() * rho * (*c);
  }
  return out;
}

void MasterEquation::evolve(Matrix& rho, double duration, double dt) const {
  const int steps = static_cast<int>(std::ceil(duration / dt - 1e-9));
  if (steps <= 0) return;
  const double h = duration / steps;
  for (int s = 0; s < steps; ++s) {
    const Matrix k1 = derivative(rho);
    const Matrix k2 = derivative(rho + 0.5 * h * k1);
    const Matrix k3 = derivative(rho + 0.5 * h * k2);
    const Matrix k4 = derivative(rho + h * k3);
    rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
}

Matrix MasterEquation::vacuum() const {
  Matrix rho = Matrix::Zero(dim_, dim_);
  rho(0, 0) = 1.0;
  return rho;
}

Matrix MasterEquation::pure(const Eigen::VectorXcd& psi) const {
  const Eigen::VectorXcd v = psi / psi.norm();
  return v * v.adjoint();
}

Matrix MasterEquation::steady_state(double relax_time, double dt) const {
  Matrix rho = vacuum();
  evolve(rho, relax_time, dt);
  return rho;
}

double MasterEquation::n1(const Matrix& rho) const { return (c1_.adjoint() * c1_ * rho).trace().real(); }
double MasterEquation::n2(const Matrix& rho) const { return (c2_.adjoint() * c2_ * rho).trace().real(); }
cplx MasterEquation::coherence(const Matrix& rho) const { return (c2_.adjoint() * c1_ * rho).trace(); }
double MasterEquation::population(const Matrix& rho, int a, int b) const {
  return rho(index(a, b), index(a, b)).real();
}

namespace {
cplx path(double phi) { return std::polar(1.0, 0.5 * optoent::kPi - phi); }
}  // namespace

Matrix red_at_a(const MasterEquation& me, double phi) {
  const cplx i(0.0, 1.0);
  return i * me.c1().adjoint() + path(phi) * me.c2().adjoint();
}

Matrix blue_at_a(const MasterEquation& me, double phi) {
  const cplx i(0.0, 1.0);
  return i * me.c1() + path(phi) * me.c2();
}

Matrix blue_at_b(const MasterEquation& me, double phi) {
  const cplx i(0.0, 1.0);
  return me.c1() + i * path(phi) * me.c2();
}

}  // namespace oracle
