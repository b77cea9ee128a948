#pragma once

#include <cmath>

#include <Eigen/Core>

#include "jape/errors.hpp"

// WGS-84 earth model for a local-level North-Up-East (N-U-E) navigation frame.
//
// Conventions used throughout the library:
//   * navigation-frame vector components are ordered [North, Up, East],
//   * geodetic position is p = [lon, lat, h] (rad, rad, m),
//   * gravity points along -Up, earth rate has no East component.

namespace jape {

using Eigen::Matrix3d;
using Eigen::Vector3d;

namespace wgs84 {
inline constexpr double kSemiMajor = 6378137.0;            // m
inline constexpr double kFlattening = 1.0 / 298.257223563;
inline constexpr double kEcc2 = kFlattening * (2.0 - kFlattening);
inline constexpr double kGravityEquator = 9.7803253359;    // m/s^2
inline constexpr double kSomigliana = 0.00193185265241;
inline constexpr double kEarthRate = 7.292115e-5;          // rad/s
inline constexpr double kFreeAirGradient = 3.086e-6;       // (m/s^2)/m
}  // namespace wgs84

struct GeodeticPosition {
  double lon = 0.0;  // rad
  double lat = 0.0;  // rad
  double h = 0.0;    // m

  Vector3d vec() const { return {lon, lat, h}; }
};

/// Per-epoch earth quantities evaluated at one position/velocity.
struct EarthParams {
  double Rn = 0.0;  // meridian curvature radius, m
  double Re = 0.0;  // transverse curvature radius, m
  double g = 0.0;   // gravity magnitude, m/s^2
  Matrix3d Rc = Matrix3d::Zero();  // dp/dt = Rc * v_n
  Vector3d omega_ie_n = Vector3d::Zero();
  Vector3d omega_en_n = Vector3d::Zero();
  Vector3d omega_in_n = Vector3d::Zero();
};

inline void check_latitude(double lat) {
  if (!std::isfinite(lat)) throw NonFinite("latitude is not finite");
  if (std::abs(lat) > M_PI / 2.0 + 1e-12)
    throw Error("latitude outside [-pi/2, pi/2]");
}

/// Meridian (north-south) curvature radius.
inline double meridian_radius(double lat) {
  check_latitude(lat);
  const double s2 = std::sin(lat) * std::sin(lat);
  const double d = 1.0 - wgs84::kEcc2 * s2;
  return wgs84::kSemiMajor * (1.0 - wgs84::kEcc2) / (d * std::sqrt(d));
}

/// Transverse (east-west, prime vertical) curvature radius.
inline double transverse_radius(double lat) {
  check_latitude(lat);
  const double s2 = std::sin(lat) * std::sin(lat);
  return wgs84::kSemiMajor / std::sqrt(1.0 - wgs84::kEcc2 * s2);
}

/// Somigliana normal gravity on the ellipsoid plus a linear free-air height
/// correction.
inline double gravity_magnitude(double lat, double h) {
  check_latitude(lat);
  if (!std::isfinite(h)) throw NonFinite("height is not finite");
  const double s2 = std::sin(lat) * std::sin(lat);
  const double g0 = wgs84::kGravityEquator * (1.0 + wgs84::kSomigliana * s2) /
                    std::sqrt(1.0 - wgs84::kEcc2 * s2);
  return g0 - wgs84::kFreeAirGradient * h;
}

/// Gravity vector in N-U-E components.
inline Vector3d gravity_n(double lat, double h) {
  return {0.0, -gravity_magnitude(lat, h), 0.0};
}

/// Position-rate mapping: [lon_dot, lat_dot, h_dot] = Rc * [v_N, v_U, v_E].
inline Matrix3d curvature_matrix(double lat, double h) {
  check_latitude(lat);
  const double cl = std::cos(lat);
  if (std::abs(cl) < 1e-9)
    throw PolarSingularity("curvature matrix undefined at the pole");
  Matrix3d Rc = Matrix3d::Zero();
  Rc(0, 2) = 1.0 / ((transverse_radius(lat) + h) * cl);
  Rc(1, 0) = 1.0 / (meridian_radius(lat) + h);
  Rc(2, 1) = 1.0;
  return Rc;
}

/// Earth rotation rate in N-U-E components.
inline Vector3d earth_rate_n(double lat) {
  check_latitude(lat);
  return {wgs84::kEarthRate * std::cos(lat), wgs84::kEarthRate * std::sin(lat),
          0.0};
}

/// Transport rate of the local-level frame in N-U-E components.
inline Vector3d transport_rate_n(const GeodeticPosition& p, const Vector3d& v) {
  const double Re = transverse_radius(p.lat) + p.h;
  const double Rn = meridian_radius(p.lat) + p.h;
  return {v(2) / Re, v(2) * std::tan(p.lat) / Re, -v(0) / Rn};
}

inline EarthParams earth_params(const GeodeticPosition& p, const Vector3d& v) {
  if (!v.allFinite()) throw NonFinite("velocity is not finite");
  EarthParams e;
  e.Rn = meridian_radius(p.lat);
  e.Re = transverse_radius(p.lat);
  e.g = gravity_magnitude(p.lat, p.h);
  e.Rc = curvature_matrix(p.lat, p.h);
  e.omega_ie_n = earth_rate_n(p.lat);
  e.omega_en_n = transport_rate_n(p, v);
  e.omega_in_n = e.omega_ie_n + e.omega_en_n;
  return e;
}

}  // namespace jape
