#pragma once

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "jape/earth.hpp"
#include "jape/errors.hpp"
#include "jape/rotations.hpp"
#include "jape/sim.hpp"

// Error-state (indirect) extended Kalman filter over a strapdown nominal
// solution, used as the conventional baseline next to the optimization
// estimators.
//
// Error state, 18 components in this order:
//   phi (3)  attitude error in the local-level frame, C_true = exp(-phi x) C
//   dv  (3)  velocity error, m/s N-U-E
//   dr  (3)  position error, metres N-U-E (geodetic dp = Rc dr)
//   dbg (3)  gyro bias error, rad/s (true = nominal + dbg)
//   dba (3)  accelerometer bias error, m/s^2
//   dl  (3)  lever-arm error, metres, body frame
//
// Biases and the lever arm are modelled as random constants (no process
// noise); attitude and velocity receive the sensor noise densities. The
// linearized dynamics are
//   phi_dot = -omega_in x phi + C dbg
//   dv_dot  =  (C f^b) x phi - (2 omega_ie + omega_en) x dv - C dba
//   dr_dot  =  dv
// and the GNSS antenna measurement model is
//   h_p = r + C l          (metres, local-level)
//   h_v = v + C (omega_eb x l)
// with Jacobian rows
//   H_p = [ (C l)x            0  I  0        0   C              ]
//   H_v = [ (C w)x - C[l]x C^T [omega_in]x
//                             I  0  C [l]x   0   C [omega_eb]x  ],  w = omega_eb x l.

namespace jape {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Vector18d = Eigen::Matrix<double, 18, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Matrix18d = Eigen::Matrix<double, 18, 18>;
using MatrixEkfH = Eigen::Matrix<double, 6, 18>;

struct EkfOptions {
  double att_level_sigma = 1.0 * units::kDeg;    // rad, N and E axes
  double att_heading_sigma = 8.0 * units::kDeg;  // rad, U axis
  double vel_sigma = 0.5;                        // m/s
  double pos_sigma = 3.0;                        // m
  double bg_sigma = 0.05 * units::kDegPerHour;   // rad/s
  double ba_sigma = 100.0 * units::kMicroG;      // m/s^2
  double lever_sigma = 3.0;                      // m
  double gate = 0.0;  // normalized innovation squared gate, 0 disables
};

class EkfBaseline {
 public:
  EkfBaseline(const EkfOptions& opt, const SensorSpec& spec)
      : opt_(opt), spec_(spec) {}

  /// Starts the filter at the fix time from an externally supplied attitude.
  /// Position and velocity are taken from the fix; biases and lever arm start
  /// at zero with the configured initial uncertainties.
  void init(const Matrix3d& Cbn0, const GnssFix& fix) {
    if (!Cbn0.allFinite()) throw NonFinite("initial attitude is not finite");
    C_ = Cbn0;
    p_ = fix.p;
    v_ = fix.v;
    bg_.setZero();
    ba_.setZero();
    l_.setZero();
    raw_rate_.setZero();
    nu_.setZero();
    P_.setZero();
    P_(0, 0) = sq(opt_.att_level_sigma);
    P_(1, 1) = sq(opt_.att_heading_sigma);
    P_(2, 2) = sq(opt_.att_level_sigma);
    P_.block<3, 3>(3, 3) = sq(opt_.vel_sigma) * Matrix3d::Identity();
    P_.block<3, 3>(6, 6) = sq(opt_.pos_sigma) * Matrix3d::Identity();
    P_.block<3, 3>(9, 9) = sq(opt_.bg_sigma) * Matrix3d::Identity();
    P_.block<3, 3>(12, 12) = sq(opt_.ba_sigma) * Matrix3d::Identity();
    P_.block<3, 3>(15, 15) = sq(opt_.lever_sigma) * Matrix3d::Identity();
    t_ = fix.t;
    ready_ = true;
  }

  /// Strapdown mechanization of the nominal state plus first-order
  /// covariance propagation over one two-sample increment.
  void propagate(const ImuIncrement& imu) {
    require_ready();
    if (imu.t0 > t_ + kTimeTol)
      throw GapDetected("IMU increment leaves a gap at the filter time");
    if (imu.t0 < t_ - kTimeTol || imu.t1 <= imu.t0)
      throw EpochOrder("IMU increment is out of order");
    const double T = imu.t1 - imu.t0;

    const EarthParams ep = earth_params(p_, v_);
    const Vector3d th1 = imu.dtheta1 - 0.5 * T * bg_;
    const Vector3d th2 = imu.dtheta2 - 0.5 * T * bg_;
    const Vector3d dv1 = imu.dvel1 - 0.5 * T * ba_;
    const Vector3d dv2 = imu.dvel2 - 0.5 * T * ba_;

    Matrix18d F = Matrix18d::Zero();
    F.block<3, 3>(0, 0) = -skew(ep.omega_in_n);
    F.block<3, 3>(0, 9) = C_;
    F.block<3, 3>(3, 0) = skew(C_ * ((dv1 + dv2) / T));
    F.block<3, 3>(3, 3) = -skew(2.0 * ep.omega_ie_n + ep.omega_en_n);
    F.block<3, 3>(3, 12) = -C_;
    F.block<3, 3>(6, 3) = Matrix3d::Identity();
    const Matrix18d Phi = Matrix18d::Identity() + T * F;

    Matrix18d Qd = Matrix18d::Zero();
    Qd.block<3, 3>(0, 0) =
        sq(spec_.gyro_noise_density) * T * Matrix3d::Identity();
    Qd.block<3, 3>(3, 3) =
        sq(spec_.accel_noise_density) * T * Matrix3d::Identity();
    P_ = Phi * P_ * Phi.transpose() + Qd;
    P_ = 0.5 * (P_ + P_.transpose()).eval();

    const Vector3d dv = dv1 + dv2 + 0.5 * (th1 + th2).cross(dv1 + dv2) +
                        (2.0 / 3.0) * (th1.cross(dv2) - th2.cross(dv1));
    const Vector3d zeta = T * ep.omega_in_n;
    const Vector3d u =
        (Matrix3d::Identity() - 0.5 * skew(zeta)) * (C_ * dv);
    const Vector3d v_new =
        v_ + u +
        T * (gravity_n(p_.lat, p_.h) -
             (2.0 * ep.omega_ie_n + ep.omega_en_n).cross(v_));
    const Vector3d dp = ep.Rc * (0.5 * T * (v_ + v_new));
    p_.lon += dp(0);
    p_.lat += dp(1);
    p_.h += dp(2);
    v_ = v_new;
    const Vector3d phi = th1 + th2 + (2.0 / 3.0) * th1.cross(th2);
    C_ = rotvec_to_dcm(-zeta) * C_ * rotvec_to_dcm(phi);
    // Endpoint rate, not the interval mean: the fix processed next is at t1
    // and an interval-mean rate would lag it by T/2.
    raw_rate_ = (3.0 * imu.dtheta2 - imu.dtheta1) / T;
    t_ = imu.t1;
  }

  /// Joseph-form update against one antenna position/velocity fix; the
  /// estimated error is folded into the nominal state and reset.
  void update(const GnssFix& fix) {
    require_ready();
    if (std::abs(fix.t - t_) > kTimeTol)
      throw GapDetected("fix time does not match the filter time");

    const EarthParams ep = earth_params(p_, v_);
    const Matrix3d M = metres_per_geodetic(ep);
    Vector6d nu;
    nu.head<3>() = M * (fix.p.vec() - p_.vec()) - C_ * l_;
    nu.tail<3>() = fix.v - (v_ + C_ * body_rate_eb(ep).cross(l_));

    const MatrixEkfH H = jacobian(ep);
    Matrix6d R = Matrix6d::Zero();
    R.topLeftCorner<3, 3>() = sq(spec_.gnss_pos_sigma) * Matrix3d::Identity();
    R.bottomRightCorner<3, 3>() =
        sq(spec_.gnss_vel_sigma) * Matrix3d::Identity();
    const Matrix6d S = H * P_ * H.transpose() + R;
    const auto ldlt = S.ldlt();
    if (opt_.gate > 0.0 && nu.dot(ldlt.solve(nu)) > opt_.gate)
      throw InnovationOutlier("innovation failed the consistency gate");

    const Eigen::Matrix<double, 18, 6> K =
        ldlt.solve(H * P_).transpose();
    const Matrix18d A = Matrix18d::Identity() - K * H;
    P_ = A * P_ * A.transpose() + K * R * K.transpose();
    P_ = 0.5 * (P_ + P_.transpose()).eval();
    nu_ = nu;
    apply_error(K * nu);
  }

  /// Folds an error-state estimate into the nominal state.
  void apply_error(const Vector18d& dx) {
    require_ready();
    if (!dx.allFinite()) throw NonFinite("error-state correction");
    C_ = rotvec_to_dcm(-dx.head<3>()) * C_;
    v_ += dx.segment<3>(3);
    const Vector3d dp = curvature_matrix(p_.lat, p_.h) * dx.segment<3>(6);
    p_.lon += dp(0);
    p_.lat += dp(1);
    p_.h += dp(2);
    bg_ += dx.segment<3>(9);
    ba_ += dx.segment<3>(12);
    l_ += dx.segment<3>(15);
  }

  /// Measurement Jacobian at the current nominal state.
  MatrixEkfH measurement_jacobian() const {
    require_ready();
    return jacobian(earth_params(p_, v_));
  }

  double t() const { return t_; }
  const Matrix3d& Cbn() const { return C_; }
  const Vector3d& vel() const { return v_; }
  const GeodeticPosition& pos() const { return p_; }
  const Vector3d& gyro_bias() const { return bg_; }
  const Vector3d& accel_bias() const { return ba_; }
  const Vector3d& lever() const { return l_; }
  const Matrix18d& cov() const { return P_; }
  const Vector6d& innovation() const { return nu_; }

  /// Bias-corrected body angular rate at the latest increment endpoint.
  Vector3d body_rate() const { return raw_rate_ - bg_; }

 private:
  static constexpr double kTimeTol = 1e-9;

  static double sq(double x) { return x * x; }

  void require_ready() const {
    if (!ready_) throw Error("EKF used before init");
  }

  static Matrix3d metres_per_geodetic(const EarthParams& ep) {
    Matrix3d M = Matrix3d::Zero();
    M(0, 1) = 1.0 / ep.Rc(1, 0);
    M(1, 2) = 1.0;
    M(2, 0) = 1.0 / ep.Rc(0, 2);
    return M;
  }

  Vector3d body_rate_eb(const EarthParams& ep) const {
    return body_rate() - C_.transpose() * ep.omega_in_n;
  }

  MatrixEkfH jacobian(const EarthParams& ep) const {
    const Vector3d omega_eb = body_rate_eb(ep);
    MatrixEkfH H = MatrixEkfH::Zero();
    H.block<3, 3>(0, 0) = skew(C_ * l_);
    H.block<3, 3>(0, 6) = Matrix3d::Identity();
    H.block<3, 3>(0, 15) = C_;
    H.block<3, 3>(3, 0) =
        skew(C_ * omega_eb.cross(l_)) -
        C_ * skew(l_) * C_.transpose() * skew(ep.omega_in_n);
    H.block<3, 3>(3, 3) = Matrix3d::Identity();
    H.block<3, 3>(3, 9) = C_ * skew(l_);
    H.block<3, 3>(3, 15) = C_ * skew(omega_eb);
    return H;
  }

  EkfOptions opt_;
  SensorSpec spec_;
  bool ready_ = false;
  double t_ = 0.0;
  Matrix3d C_ = Matrix3d::Identity();
  Vector3d v_ = Vector3d::Zero();
  GeodeticPosition p_;
  Vector3d bg_ = Vector3d::Zero();
  Vector3d ba_ = Vector3d::Zero();
  Vector3d l_ = Vector3d::Zero();
  Vector3d raw_rate_ = Vector3d::Zero();
  Matrix18d P_ = Matrix18d::Zero();
  Vector6d nu_ = Vector6d::Zero();
};

}  // namespace jape
