#include "mfarb/deflator.hpp"

#include <cmath>

#include "mfarb/stats.hpp"

namespace mfarb {

using stats::KahanSum;

double DeflatorState::value() const { return std::exp(log_L); }

DeflatorState step_deflator(const DeflatorState& st, const Vec& theta,
                            const Eigen::RowVectorXd& dB, double dt) {
  DeflatorState next = st;
  next.log_L -= theta.dot(dB.transpose()) + 0.5 * theta.squaredNorm() * dt;
  return next;
}

// ---------------------------------------------------------------------------
// finite-difference fallbacks

namespace {

double fd_h(double step, double coord) { return step * (1.0 + std::abs(coord)); }

// Gradient of f with respect to the selected argument (0 = x, 1 = z).
Vec fd_gradient(const std::function<double(const Vec&, const Vec&)>& f, const Vec& x, const Vec& z,
                int arg, double step) {
  const Vec& base = (arg == 0) ? x : z;
  const int n = static_cast<int>(base.size());
  Vec g(n);
  Vec pert = base;
  for (int i = 0; i < n; ++i) {
    const double h = fd_h(step, base[i]);
    pert[i] = base[i] + h;
    const double up = (arg == 0) ? f(pert, z) : f(x, pert);
    pert[i] = base[i] - h;
    const double dn = (arg == 0) ? f(pert, z) : f(x, pert);
    pert[i] = base[i];
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

// Hessian block; args select the two differentiation directions.
Mat fd_hessian(const std::function<double(const Vec&, const Vec&)>& f, const Vec& x, const Vec& z,
               int arg_a, int arg_b, double step) {
  const Vec& base_a = (arg_a == 0) ? x : z;
  const Vec& base_b = (arg_b == 0) ? x : z;
  const int na = static_cast<int>(base_a.size());
  const int nb = static_cast<int>(base_b.size());
  Mat hess(na, nb);
  Vec xx = x, zz = z;
  auto coord = [&](int arg, int idx) -> double& { return (arg == 0) ? xx[idx] : zz[idx]; };
  const double f0 = f(x, z);
  for (int i = 0; i < na; ++i) {
    const double hi = fd_h(step, base_a[i]);
    for (int j = 0; j < nb; ++j) {
      const double hj = fd_h(step, base_b[j]);
      if (arg_a == arg_b && i == j) {
        coord(arg_a, i) = base_a[i] + hi;
        const double up = f(xx, zz);
        coord(arg_a, i) = base_a[i] - hi;
        const double dn = f(xx, zz);
        coord(arg_a, i) = base_a[i];
        hess(i, j) = (up - 2.0 * f0 + dn) / (hi * hi);
      } else {
        double acc = 0.0;
        for (int sa : {+1, -1}) {
          for (int sb : {+1, -1}) {
            coord(arg_a, i) = base_a[i] + sa * hi;
            coord(arg_b, j) += sb * hj;  // handles shared coordinate overlap
            acc += sa * sb * f(xx, zz);
            coord(arg_a, i) = base_a[i];
            coord(arg_b, j) = base_b[j];
          }
        }
        hess(i, j) = acc / (4.0 * hi * hj);
      }
    }
  }
  return hess;
}

}  // namespace

Vec HFunction::gx(const Vec& x, const Vec& z) const {
  if (grad_x) return grad_x(x, z);
  return fd_gradient(value, x, z, 0, fd_step);
}

Vec HFunction::gz(const Vec& x, const Vec& z) const {
  if (grad_z) return grad_z(x, z);
  return fd_gradient(value, x, z, 1, fd_step);
}

Mat HFunction::hxx(const Vec& x, const Vec& z) const {
  if (hess_xx) return hess_xx(x, z);
  return fd_hessian(value, x, z, 0, 0, fd_step);
}

Mat HFunction::hzz(const Vec& x, const Vec& z) const {
  if (hess_zz) return hess_zz(x, z);
  return fd_hessian(value, x, z, 1, 1, fd_step);
}

Mat HFunction::hxz(const Vec& x, const Vec& z) const {
  if (hess_xz) return hess_xz(x, z);
  return fd_hessian(value, x, z, 0, 1, fd_step);
}

// ---------------------------------------------------------------------------
// theta and integrands

Vec theta_from_h(const CoefficientSet& coeffs, const HFunction& H, const Vec& x, const Vec& z,
                 ThetaMode mode) {
  const Mat s = coeffs.s(x, z);
  if (mode == ThetaMode::Doubled) return 2.0 * s.transpose() * H.gx(x, z);
  const Mat tau = coeffs.tau(x, z);
  return s.transpose() * H.gx(x, z) + tau.transpose() * H.gz(x, z);
}

KKValues kk_integrands(const CoefficientSet& coeffs, const HFunction& H, const Vec& x,
                       const Vec& z) {
  const Mat a = coeffs.a(x, z);
  const Mat psi = coeffs.psi(x, z);
  const Mat stau = coeffs.s(x, z) * coeffs.tau(x, z).transpose();
  const Vec gx = H.gx(x, z);
  const Vec gz = H.gz(x, z);
  const Mat hxx = H.hxx(x, z);
  const Mat hzz = H.hzz(x, z);
  const Mat hxz = H.hxz(x, z);
  const int n = static_cast<int>(x.size());

  KKValues out;
  KahanSum k, kt;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      k.add(-0.5 * a(i, j) * (hxx(i, j) + gx[i] * gx[j]));
      kt.add(-0.5 * psi(i, j) * (hzz(i, j) + gz[i] * gz[j]));
      kt.add(-stau(i, j) * (hxz(i, j) + gx[i] * gz[j]));
    }
  }
  out.k = k.value();
  out.k_tilde = kt.value();
  return out;
}

std::vector<double> deflator_via_h(const TrajectoryRecord& rec, const CoefficientSet& coeffs,
                                   const HFunction& H) {
  const std::size_t rows = rec.times.size();
  std::vector<double> L(rows);
  if (rows == 0) return L;
  const Vec x0 = rec.X.row(0).transpose();
  const Vec z0 = rec.Z.row(0).transpose();
  const double h0 = H.value(x0, z0);
  KahanSum integral;
  L[0] = 1.0;
  for (std::size_t kstep = 1; kstep < rows; ++kstep) {
    const double dt = rec.times[kstep] - rec.times[kstep - 1];
    const Vec xp = rec.X.row(static_cast<int>(kstep - 1)).transpose();
    const Vec zp = rec.Z.row(static_cast<int>(kstep - 1)).transpose();
    const KKValues kk = kk_integrands(coeffs, H, xp, zp);
    integral.add((kk.k + kk.k_tilde) * dt);
    const Vec xk = rec.X.row(static_cast<int>(kstep)).transpose();
    const Vec zk = rec.Z.row(static_cast<int>(kstep)).transpose();
    L[kstep] = std::exp(-(H.value(xk, zk) - h0) - integral.value());
  }
  return L;
}

}  // namespace mfarb
