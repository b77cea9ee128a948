#pragma once

#include <cmath>
#include <deque>

#include <Eigen/Core>

#include "jape/earth.hpp"
#include "jape/errors.hpp"
#include "jape/rotations.hpp"
#include "jape/sim.hpp"

// Incremental construction of the velocity-integral observation
//   beta_M = C_b^n(0) (alpha_M + chi_M b_a + lambda_M b_g + gamma_M l),
// and of the finite-window differences of its coefficients that the
// estimators consume.

namespace jape {

/// Coefficients of one accumulated epoch.
struct CoeffEpoch {
  int m = 0;
  double t = 0.0;
  Vector3d alpha = Vector3d::Zero();   // m/s
  Vector3d beta = Vector3d::Zero();    // m/s
  Matrix3d chi = Matrix3d::Zero();     // s
  Matrix3d lambda = Matrix3d::Zero();  // m
  Matrix3d gamma = Matrix3d::Zero();   // rad/s
  Matrix3d Cb_b0 = Matrix3d::Identity();  // C_{b(t_m)}^{b(0)}
  Matrix3d Cn_n0 = Matrix3d::Identity();  // C_{n(t_m)}^{n(0)}
};

/// Windowed difference of coefficients between epochs m and m - window.
struct DiffCoeff {
  int m = 0;
  double t = 0.0;
  Vector3d alpha = Vector3d::Zero();
  Vector3d beta = Vector3d::Zero();
  Matrix3d chi = Matrix3d::Zero();
  Matrix3d lambda = Matrix3d::Zero();
  Matrix3d gamma = Matrix3d::Zero();
};

class CoeffBuilder {
 public:
  /// `window` is the differencing length in epochs, `T` the epoch period.
  CoeffBuilder(int window, double T) : window_(window), T_(T) {
    if (window < 1) throw Error("window must be positive");
    if (!(T > 0.0)) throw Error("epoch period must be positive");
    hist_.push_back(CoeffEpoch{});
  }

  /// Anchors the builder at the first GNSS fix (epoch 0).
  void start(const GnssFix& fix) {
    if (started_) throw Error("builder already started");
    started_ = true;
    t0_ = fix.t;
    v0_ = fix.v;
    prev_fix_ = fix;
    hist_.back().t = fix.t;
  }

  /// Consumes the IMU increment covering [t_m, t_m + T] and the GNSS fix at
  /// its end, advancing the epoch counter.
  void push(const ImuIncrement& imu, const GnssFix& fix) {
    if (!started_) throw Error("builder not started");
    const double t_now = t0_ + m_ * T_;
    if (imu.t0 > t_now + kTimeTol)
      throw GapDetected("missing IMU interval before t=" +
                        std::to_string(imu.t0));
    if (imu.t0 < t_now - kTimeTol)
      throw EpochOrder("IMU interval repeats or precedes current epoch");
    if (std::abs(imu.t1 - (t_now + T_)) > kTimeTol)
      throw GapDetected("IMU interval does not span one epoch period");
    if (std::abs(fix.t - imu.t1) > kTimeTol)
      throw GapDetected("GNSS fix does not align with the IMU interval end");

    CoeffEpoch e = hist_.back();

    // Navigation-frame side, quadrature weights over one interval.
    const EarthParams earth = earth_params(prev_fix_.p, prev_fix_.v);
    const Matrix3d Win = skew(earth.omega_in_n);
    const Vector3d g_n{0.0, -earth.g, 0.0};
    const Vector3d cor =
        (0.5 * T_ * Matrix3d::Identity() + T_ * T_ / 6.0 * Win) *
            earth.omega_ie_n.cross(prev_fix_.v) +
        (0.5 * T_ * Matrix3d::Identity() + T_ * T_ / 3.0 * Win) *
            earth.omega_ie_n.cross(fix.v);
    const Vector3d grav = (T_ * Matrix3d::Identity() + T_ * T_ / 2.0 * Win) *
                          g_n;
    beta_sum_ += e.Cn_n0 * (cor - grav);

    // Body side, two-sample corrections.
    const Vector3d dvsum = imu.dvel1 + imu.dvel2;
    const Vector3d dv = dvsum +
                        0.5 * (imu.dtheta1 + imu.dtheta2).cross(dvsum) +
                        2.0 / 3.0 * (imu.dtheta1.cross(imu.dvel2) +
                                     imu.dvel1.cross(imu.dtheta2));
    e.alpha += e.Cb_b0 * dv;
    e.chi -= T_ * e.Cb_b0 *
             (Matrix3d::Identity() +
              skew(5.0 * imu.dtheta1 + imu.dtheta2) / 6.0);
    e.lambda += e.Cb_b0 * skew(dvsum) + (m_ * T_) * skew(dv);

    if (m_ == 0) omega0_ = (3.0 * imu.dtheta1 - imu.dtheta2) / T_;

    const Vector3d phi = imu.dtheta1 + imu.dtheta2 +
                         2.0 / 3.0 * imu.dtheta1.cross(imu.dtheta2);
    e.Cb_b0 = e.Cb_b0 * rotvec_to_dcm(phi);
    e.Cn_n0 = e.Cn_n0 * rotvec_to_dcm(T_ * earth.omega_in_n);

    const Vector3d omega_end = (3.0 * imu.dtheta2 - imu.dtheta1) / T_;
    e.gamma = e.Cb_b0 * skew(omega_end) - skew(omega0_);
    e.beta = e.Cn_n0 * fix.v - v0_ + beta_sum_;

    ++m_;
    e.m = m_;
    e.t = fix.t;
    prev_fix_ = fix;
    hist_.push_back(e);
    if (static_cast<int>(hist_.size()) > window_ + 1) hist_.pop_front();
  }

  int epoch_count() const { return m_; }
  int window() const { return window_; }
  double period() const { return T_; }

  const CoeffEpoch& epoch() const { return hist_.back(); }

  bool has_diff() const { return m_ >= window_; }

  /// Difference between the newest epoch and the one `window` epochs back.
  DiffCoeff diff() const {
    if (!has_diff())
      throw InsufficientHistory("differencing window not yet filled");
    const CoeffEpoch& now = hist_.back();
    const CoeffEpoch& old = hist_.front();
    DiffCoeff d;
    d.m = now.m;
    d.t = now.t;
    d.alpha = now.alpha - old.alpha;
    d.beta = now.beta - old.beta;
    d.chi = now.chi - old.chi;
    d.lambda = now.lambda - old.lambda;
    d.gamma = now.gamma - old.gamma;
    return d;
  }

 private:
  static constexpr double kTimeTol = 1e-9;

  int window_;
  double T_;
  bool started_ = false;
  int m_ = 0;
  double t0_ = 0.0;
  Vector3d v0_ = Vector3d::Zero();
  Vector3d beta_sum_ = Vector3d::Zero();
  Vector3d omega0_ = Vector3d::Zero();
  GnssFix prev_fix_;
  std::deque<CoeffEpoch> hist_;
};

}  // namespace jape
