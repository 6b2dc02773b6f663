#pragma once

// Supermartingale deflators.
//
// The deflator solves dL = -L theta' dB with the market price of risk theta,
// integrated in log space.  When the drift of the market system is generated
// by a potential H(x, z) -- that is, b = (ss') D_x H + (s tau') D_z H and
// gamma = (tau s') D_x H + (tau tau') D_z H -- the deflator also has the
// pathwise functional form
//
//   L(t) = exp{ -(H(X_t, Z_t) - H(X_0, Z_0)) - int_0^t (k + k~)(X_s, Z_s) ds }
//
// with the Ito correction integrands
//
//   k  = - sum_ij  (a_ij / 2)   (D2_xixj H + D_xi H D_xj H)
//   k~ = - sum_pq  (psi_pq / 2) (D2_zpzq H + D_zp H D_zq H)
//        - sum_ip  (s tau')_ip  (D2_xizp H + D_xi H D_zp H)
//
// which follows from Ito's formula applied to H plus the Girsanov exponent of
// theta = s' D_x H + tau' D_z H.  The alternative `Doubled` mode covers drifts
// of the form b = 2 a D_x H with z-independent H, where theta = 2 s' D_x H.

#include <functional>
#include <vector>

#include "mfarb/market.hpp"
#include "mfarb/sde.hpp"
#include "mfarb/types.hpp"

namespace mfarb {

/// Log-space deflator accumulator.
struct DeflatorState {
  double log_L = 0.0;
  double value() const;
};

/// One Euler step of dL = -L theta' dB, accumulated as
/// d log L = -theta' dB - |theta|^2/2 dt.
DeflatorState step_deflator(const DeflatorState& st, const Vec& theta,
                            const Eigen::RowVectorXd& dB, double dt);

/// Scalar potential of the market drift, with optional analytic derivatives.
/// Missing derivatives fall back to central finite differences with relative
/// step fd_step * (1 + |coordinate|).
struct HFunction {
  std::function<double(const Vec& x, const Vec& z)> value;
  std::function<Vec(const Vec& x, const Vec& z)> grad_x;
  std::function<Vec(const Vec& x, const Vec& z)> grad_z;
  std::function<Mat(const Vec& x, const Vec& z)> hess_xx;
  std::function<Mat(const Vec& x, const Vec& z)> hess_zz;
  std::function<Mat(const Vec& x, const Vec& z)> hess_xz;  ///< (i, p) entry D2_{x_i z_p}
  double fd_step = 1e-4;

  Vec gx(const Vec& x, const Vec& z) const;
  Vec gz(const Vec& x, const Vec& z) const;
  Mat hxx(const Vec& x, const Vec& z) const;
  Mat hzz(const Vec& x, const Vec& z) const;
  Mat hxz(const Vec& x, const Vec& z) const;
};

enum class ThetaMode {
  Combined,  ///< theta = s' D_x H + tau' D_z H  (drift b = a D_x H + s tau' D_z H)
  Doubled,   ///< theta = 2 s' D_x H             (drift b = 2 a D_x H, H free of z)
};

/// Market price of risk induced by a potential.
Vec theta_from_h(const CoefficientSet& coeffs, const HFunction& H, const Vec& x, const Vec& z,
                 ThetaMode mode = ThetaMode::Combined);

struct KKValues {
  double k = 0.0;
  double k_tilde = 0.0;
};

/// Ito correction integrands of the functional deflator form (Combined mode).
KKValues kk_integrands(const CoefficientSet& coeffs, const HFunction& H, const Vec& x,
                       const Vec& z);

/// Evaluates the functional deflator form along a recorded trajectory with a
/// left-endpoint Riemann sum for the (k + k~) integral, matching the Euler
/// convention of the simulated deflator.  Returns L at every grid time.
std::vector<double> deflator_via_h(const TrajectoryRecord& rec, const CoefficientSet& coeffs,
                                   const HFunction& H);

}  // namespace mfarb
