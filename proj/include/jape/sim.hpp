#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "jape/earth.hpp"
#include "jape/errors.hpp"
#include "jape/rng.hpp"
#include "jape/rotations.hpp"

// Trajectory and sensor simulator: closed-form oscillatory attitude/velocity
// truth, incremental IMU outputs by dense quadrature of the analytic rates,
// and lever-arm-displaced GNSS fixes.

namespace jape {

namespace units {
inline constexpr double kDegPerHour = M_PI / 180.0 / 3600.0;  // -> rad/s
inline constexpr double kDeg = M_PI / 180.0;                  // -> rad
inline constexpr double kMicroG = 9.80665e-6;                 // -> m/s^2
}  // namespace units

/// One sinusoidal channel, x(t) = amp * sin(2 pi freq t + phase).
struct AxisOsc {
  double amp = 0.0;
  double freq_hz = 0.0;
  double phase = 0.0;

  double value(double t) const {
    return amp * std::sin(2.0 * M_PI * freq_hz * t + phase);
  }
  double rate(double t) const {
    const double w = 2.0 * M_PI * freq_hz;
    return amp * w * std::cos(w * t + phase);
  }
  double integral(double t) const {
    const double w = 2.0 * M_PI * freq_hz;
    if (w == 0.0) return amp * std::sin(phase) * t;
    return amp / w * (std::cos(phase) - std::cos(w * t + phase));
  }
};

struct MotionProfile {
  GeodeticPosition p0;
  double yaw0 = 0.0, pitch0 = 0.0, roll0 = 0.0;  // rad
  AxisOsc yaw, pitch, roll;                      // rad
  AxisOsc vel_n, vel_u, vel_e;                   // m/s
};

struct SensorSpec {
  Vector3d gyro_bias = Vector3d::Zero();    // rad/s
  Vector3d accel_bias = Vector3d::Zero();   // m/s^2
  double gyro_noise_density = 0.0;          // rad/s/sqrt(Hz)
  double accel_noise_density = 0.0;         // m/s^2/sqrt(Hz)
  double imu_rate_hz = 100.0;
  double gnss_rate_hz = 50.0;
  double gnss_pos_sigma = 0.0;              // m, per N-U-E axis
  double gnss_vel_sigma = 0.0;              // m/s, per axis
  Vector3d lever_arm = Vector3d::Zero();    // m, body frame
};

struct NavTruth {
  double t = 0.0;
  GeodeticPosition p;
  Vector3d v = Vector3d::Zero();     // N-U-E
  Vector3d vdot = Vector3d::Zero();
  Matrix3d Cbn = Matrix3d::Identity();
  Vector3d omega_nb_b = Vector3d::Zero();
  Vector3d omega_ib_b = Vector3d::Zero();
  Vector3d omega_eb_b = Vector3d::Zero();
  Vector3d f_b = Vector3d::Zero();
  EarthParams earth;
};

/// Two-sample incremental IMU output over one GNSS interval [t0, t1]:
/// sample 1 covers [t0, (t0+t1)/2], sample 2 covers [(t0+t1)/2, t1].
struct ImuIncrement {
  double t0 = 0.0, t1 = 0.0;
  Vector3d dtheta1 = Vector3d::Zero();  // rad
  Vector3d dvel1 = Vector3d::Zero();    // m/s
  Vector3d dtheta2 = Vector3d::Zero();
  Vector3d dvel2 = Vector3d::Zero();
};

struct GnssFix {
  double t = 0.0;
  GeodeticPosition p;                // antenna position
  Vector3d v = Vector3d::Zero();     // antenna velocity, N-U-E
};

/// Closed-form truth state. Attitude and velocity are exact; position uses
/// curvature radii frozen at p0 (the oscillatory excursion is a few metres,
/// so the committed error is O(excursion/R) of the position rates).
inline NavTruth truth_at(const MotionProfile& pr, double t) {
  NavTruth s;
  s.t = t;

  const double yaw = pr.yaw0 + pr.yaw.value(t);
  const double pitch = pr.pitch0 + pr.pitch.value(t);
  const double roll = pr.roll0 + pr.roll.value(t);
  s.Cbn = euler_nue_to_dcm(yaw, pitch, roll);

  s.v = {pr.vel_n.value(t), pr.vel_u.value(t), pr.vel_e.value(t)};
  s.vdot = {pr.vel_n.rate(t), pr.vel_u.rate(t), pr.vel_e.rate(t)};

  const double Rn0 = meridian_radius(pr.p0.lat) + pr.p0.h;
  const double Re0 = transverse_radius(pr.p0.lat) + pr.p0.h;
  s.p.lon = pr.p0.lon + pr.vel_e.integral(t) / (Re0 * std::cos(pr.p0.lat));
  s.p.lat = pr.p0.lat + pr.vel_n.integral(t) / Rn0;
  s.p.h = pr.p0.h + pr.vel_u.integral(t);

  s.earth = earth_params(s.p, s.v);

  // Body rate from the Euler-angle rates (yaw about -U, pitch about E',
  // roll about N'').
  const Matrix3d R = rotvec_to_dcm(roll * Vector3d::UnitX());
  const Matrix3d P = rotvec_to_dcm(pitch * Vector3d::UnitZ());
  s.omega_nb_b = -pr.yaw.rate(t) * (R.transpose() * P.transpose() *
                                    Vector3d::UnitY()) +
                 pr.pitch.rate(t) * (R.transpose() * Vector3d::UnitZ()) +
                 pr.roll.rate(t) * Vector3d::UnitX();

  s.omega_ib_b = s.omega_nb_b + s.Cbn.transpose() * s.earth.omega_in_n;
  s.omega_eb_b = s.omega_ib_b - s.Cbn.transpose() * s.earth.omega_ie_n;

  const Vector3d g_n{0.0, -s.earth.g, 0.0};
  s.f_b = s.Cbn.transpose() *
          (s.vdot + (2.0 * s.earth.omega_ie_n + s.earth.omega_en_n).cross(s.v) -
           g_n);
  return s;
}

namespace detail {

/// Composite-Simpson integration of the analytic body rates over [a, b].
inline void integrate_rates(const MotionProfile& pr, double a, double b, int n,
                            Vector3d* dtheta, Vector3d* dvel) {
  const double h = (b - a) / n;
  Vector3d sw = Vector3d::Zero(), sf = Vector3d::Zero();
  for (int i = 0; i <= n; ++i) {
    const NavTruth s = truth_at(pr, a + i * h);
    const double w = (i == 0 || i == n) ? 1.0 : ((i % 2) ? 4.0 : 2.0);
    sw += w * s.omega_ib_b;
    sf += w * s.f_b;
  }
  *dtheta = sw * (h / 3.0);
  *dvel = sf * (h / 3.0);
}

}  // namespace detail

/// Incremental IMU outputs for ceil(duration * gnss_rate) update intervals.
/// Increments are integrals of the instantaneous body-frame components plus
/// constant biases and white noise of variance density^2 * (T/2) per sample.
/// `substeps` is the quadrature node count per half-interval (>= 20).
inline std::vector<ImuIncrement> synthesize_imu(const MotionProfile& pr,
                                                const SensorSpec& spec,
                                                double duration,
                                                std::uint64_t seed,
                                                int substeps = 20) {
  if (substeps < 20) substeps = 20;
  if (substeps % 2) ++substeps;
  const double T = 1.0 / spec.gnss_rate_hz;
  const auto n = static_cast<std::int64_t>(std::llround(duration / T));
  const RandomStream gyro(seed, static_cast<std::uint64_t>(NoiseStream::kGyro));
  const RandomStream accel(seed,
                           static_cast<std::uint64_t>(NoiseStream::kAccel));
  const double sg = spec.gyro_noise_density * std::sqrt(T / 2.0);
  const double sa = spec.accel_noise_density * std::sqrt(T / 2.0);

  std::vector<ImuIncrement> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) {
    ImuIncrement inc;
    inc.t0 = static_cast<double>(k) * T;
    inc.t1 = static_cast<double>(k + 1) * T;
    const double tm = inc.t0 + T / 2.0;
    detail::integrate_rates(pr, inc.t0, tm, substeps, &inc.dtheta1,
                            &inc.dvel1);
    detail::integrate_rates(pr, tm, inc.t1, substeps, &inc.dtheta2,
                            &inc.dvel2);
    const Vector3d bg = spec.gyro_bias * (T / 2.0);
    const Vector3d ba = spec.accel_bias * (T / 2.0);
    const auto s1 = static_cast<std::uint64_t>(2 * k);
    const auto s2 = static_cast<std::uint64_t>(2 * k + 1);
    inc.dtheta1 += bg + sg * gyro.normal3(s1);
    inc.dtheta2 += bg + sg * gyro.normal3(s2);
    inc.dvel1 += ba + sa * accel.normal3(s1);
    inc.dvel2 += ba + sa * accel.normal3(s2);
    out.push_back(inc);
  }
  return out;
}

/// Noise-free antenna observables at time t.
inline GnssFix gnss_truth(const MotionProfile& pr, const SensorSpec& spec,
                          double t) {
  const NavTruth s = truth_at(pr, t);
  GnssFix fix;
  fix.t = t;
  const Vector3d dp = s.earth.Rc * (s.Cbn * spec.lever_arm);
  fix.p.lon = s.p.lon + dp(0);
  fix.p.lat = s.p.lat + dp(1);
  fix.p.h = s.p.h + dp(2);
  fix.v = s.v + s.Cbn * s.omega_eb_b.cross(spec.lever_arm);
  return fix;
}

/// Fixes at t = 0, T, 2T, ..., covering [0, duration].
inline std::vector<GnssFix> synthesize_gnss(const MotionProfile& pr,
                                            const SensorSpec& spec,
                                            double duration,
                                            std::uint64_t seed) {
  const double T = 1.0 / spec.gnss_rate_hz;
  const auto n = static_cast<std::int64_t>(std::llround(duration / T));
  const RandomStream pos(seed,
                         static_cast<std::uint64_t>(NoiseStream::kGnssPos));
  const RandomStream vel(seed,
                         static_cast<std::uint64_t>(NoiseStream::kGnssVel));
  std::vector<GnssFix> out;
  out.reserve(static_cast<std::size_t>(n + 1));
  for (std::int64_t k = 0; k <= n; ++k) {
    GnssFix fix = gnss_truth(pr, spec, static_cast<double>(k) * T);
    const auto c = static_cast<std::uint64_t>(k);
    const Vector3d nm = spec.gnss_pos_sigma * pos.normal3(c);  // metres N-U-E
    const Vector3d dp =
        curvature_matrix(fix.p.lat, fix.p.h) * nm;
    fix.p.lon += dp(0);
    fix.p.lat += dp(1);
    fix.p.h += dp(2);
    fix.v += spec.gnss_vel_sigma * vel.normal3(c);
    out.push_back(fix);
  }
  return out;
}

}  // namespace jape
