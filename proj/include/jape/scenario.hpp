#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "jape/coeffs.hpp"
#include "jape/config.hpp"
#include "jape/ekf.hpp"
#include "jape/estimator.hpp"
#include "jape/sim.hpp"

// Single-run driver: synthesizes one seed's data and feeds it epoch by epoch
// to the selected estimator, recording time series and the final estimate.

namespace jape {

struct EpochRecord {
  double t = 0.0;
  double err_yaw_deg = 0.0;
  double err_pitch_deg = 0.0;
  double err_roll_deg = 0.0;
  Vector3d ba = Vector3d::Zero();  // estimate, m/s^2
  Vector3d bg = Vector3d::Zero();  // estimate, rad/s
  Vector3d lever_err_mm = Vector3d::Zero();
  double objective = 0.0;
  double objective_at_truth = 0.0;
  int iters = 0;
};

struct FinalEstimate {
  Vector3d att_err_mdeg = Vector3d::Zero();  // yaw, pitch, roll
  Vector3d ba_err_micro_g = Vector3d::Zero();
  Vector3d bg_err_deg_per_h = Vector3d::Zero();
  Vector3d lever_err_mm = Vector3d::Zero();
  double objective = 0.0;
  double objective_at_truth = 0.0;
  int iters = 0;
};

struct RunReport {
  std::string estimator;
  std::uint64_t run_index = 0;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  FinalEstimate final_estimate;
  double wall_s = 0.0;
};

namespace detail {

/// Per-angle differences wrapped to (-180, 180] degrees, [yaw pitch roll].
inline Vector3d euler_err_deg(const Matrix3d& C_est, const Matrix3d& C_true) {
  const Vector3d ee = dcm_to_euler_nue(C_est);
  const Vector3d et = dcm_to_euler_nue(C_true);
  Vector3d d;
  for (int i = 0; i < 3; ++i)
    d(i) = std::remainder(ee(i) - et(i), 2.0 * M_PI) / units::kDeg;
  return d;
}

inline EstimateX truth_state(const ScenarioConfig& c) {
  EstimateX x;
  x.q = dcm_to_quat(truth_at(c.profile, 0.0).Cbn.transpose());
  x.ba = c.sensors.accel_bias;
  x.bg = c.sensors.gyro_bias;
  x.lever = c.sensors.lever_arm;
  return x;
}

inline EpochRecord jape_record(const ScenarioConfig& c, double t,
                               const EstimateX& x, double f_truth,
                               const CoeffEpoch& e) {
  EpochRecord r;
  r.t = t;
  const Vector3d d =
      euler_err_deg(current_attitude(x.q, e), truth_at(c.profile, t).Cbn);
  r.err_yaw_deg = d(0);
  r.err_pitch_deg = d(1);
  r.err_roll_deg = d(2);
  r.ba = x.ba;
  r.bg = x.bg;
  r.lever_err_mm = (x.lever - c.sensors.lever_arm) * 1e3;
  r.objective = x.objective;
  r.objective_at_truth = f_truth;
  r.iters = x.iters;
  return r;
}

}  // namespace detail

/// Deterministic single run: identical (config, run_index, kind) inputs give
/// identical reports. `kind` is one of ra-jape | ba-jape | ekf.
inline RunReport run_scenario(const ScenarioConfig& c,
                              std::uint64_t run_index,
                              const std::string& kind) {
  validate_config(c);
  if (kind != "ra-jape" && kind != "ba-jape" && kind != "ekf")
    throw ConfigError("run_scenario: unknown estimator '" + kind + "'");

  const auto wall0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = c.seed + run_index * c.seed_stride;
  const auto imu = synthesize_imu(c.profile, c.sensors, c.duration_s, seed);
  const auto gnss = synthesize_gnss(c.profile, c.sensors, c.duration_s, seed);
  const std::size_t n = imu.size();
  const EstimateX x_true = detail::truth_state(c);

  RunReport rep;
  rep.estimator = kind;
  rep.run_index = run_index;
  rep.seed = seed;
  rep.epochs.reserve(n / static_cast<std::size_t>(c.record_stride) + 2);

  const auto want_record = [&](std::size_t k) {
    return (k + 1) % static_cast<std::size_t>(c.record_stride) == 0 ||
           k + 1 == n;
  };

  if (kind == "ra-jape") {
    RaJape ra(c.jape);
    ra.start(gnss[0]);
    for (std::size_t k = 0; k < n; ++k) {
      ra.push(imu[k], gnss[k + 1]);
      if (!want_record(k)) continue;
      EstimateX x;
      try {
        x = ra.estimate();
      } catch (const InsufficientHistory&) {
        continue;
      } catch (const DegenerateSpectrum&) {
        // The very first differenced epochs may not pin the attitude yet.
        continue;
      }
      rep.epochs.push_back(detail::jape_record(c, imu[k].t1, x,
                                               ra.objective_at(x_true),
                                               ra.builder().epoch()));
    }
  } else if (kind == "ba-jape") {
    BaJape ba(c.jape);
    ba.start(gnss[0]);
    for (std::size_t k = 0; k < n; ++k) {
      ba.push(imu[k], gnss[k + 1]);
      const bool solve = (k + 1) % static_cast<std::size_t>(c.ba_stride) ==
                             0 ||
                         k + 1 == n;
      if (!solve || !want_record(k) || !ba.ready()) continue;
      EstimateX x;
      try {
        x = ba.estimate();
      } catch (const DegenerateSpectrum&) {
        continue;
      }
      rep.epochs.push_back(detail::jape_record(c, imu[k].t1, x,
                                               ba.objective_at(x_true),
                                               ba.builder().epoch()));
    }
  } else {
    RaJape warm(c.jape);
    warm.start(gnss[0]);
    EkfBaseline ekf(c.ekf, c.sensors);
    bool started = false;
    for (std::size_t k = 0; k < n; ++k) {
      if (!started) {
        warm.push(imu[k], gnss[k + 1]);
        if (imu[k].t1 - gnss[0].t + 1e-9 < c.jape.warmup_s) continue;
        EstimateX x;
        try {
          x = warm.estimate();
        } catch (const Error&) {
          continue;
        }
        ekf.init(current_attitude(x.q, warm.builder().epoch()), gnss[k + 1]);
        started = true;
        continue;
      }
      ekf.propagate(imu[k]);
      ekf.update(gnss[k + 1]);
      if (!want_record(k)) continue;
      EpochRecord r;
      r.t = imu[k].t1;
      const Vector3d d = detail::euler_err_deg(
          ekf.Cbn(), truth_at(c.profile, r.t).Cbn);
      r.err_yaw_deg = d(0);
      r.err_pitch_deg = d(1);
      r.err_roll_deg = d(2);
      r.ba = ekf.accel_bias();
      r.bg = ekf.gyro_bias();
      r.lever_err_mm = (ekf.lever() - c.sensors.lever_arm) * 1e3;
      rep.epochs.push_back(r);
    }
  }

  if (rep.epochs.empty())
    throw InsufficientHistory("run produced no estimates; duration too short");

  const EpochRecord& last = rep.epochs.back();
  FinalEstimate& fin = rep.final_estimate;
  fin.att_err_mdeg =
      1e3 * Vector3d{last.err_yaw_deg, last.err_pitch_deg, last.err_roll_deg};
  fin.ba_err_micro_g = (last.ba - c.sensors.accel_bias) / units::kMicroG;
  fin.bg_err_deg_per_h = (last.bg - c.sensors.gyro_bias) / units::kDegPerHour;
  fin.lever_err_mm = last.lever_err_mm;
  fin.objective = last.objective;
  fin.objective_at_truth = last.objective_at_truth;
  fin.iters = last.iters;
  rep.wall_s = std::chrono::duration<double>(
                   std::chrono::steady_clock::now() - wall0)
                   .count();
  return rep;
}

}  // namespace jape
