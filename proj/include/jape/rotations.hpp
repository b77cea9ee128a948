#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include "jape/errors.hpp"

// Quaternion and rotation-matrix algebra.
//
// Quaternions are stored as [s, e1, e2, e3] (scalar first). The algebra here
// performs no silent normalization; callers own the normalization policy.
// quat_to_dcm(q) returns the frame transformation whose action on a vector v
// equals the vector part of q* o [0, v] o q.

namespace jape {

using Eigen::Matrix3d;
using Eigen::Matrix4d;
using Eigen::Vector3d;
using Eigen::Vector4d;

inline Matrix3d skew(const Vector3d& a) {
  Matrix3d m;
  m << 0.0, -a(2), a(1),
       a(2), 0.0, -a(0),
      -a(1), a(0), 0.0;
  return m;
}

inline Vector4d quat_conj(const Vector4d& q) {
  return {q(0), -q(1), -q(2), -q(3)};
}

/// Left multiplication matrix: quat_mul(q, p) == qmat_plus(q) * p.
inline Matrix4d qmat_plus(const Vector4d& q) {
  Matrix4d m;
  m(0, 0) = q(0);
  m.block<1, 3>(0, 1) = -q.tail<3>().transpose();
  m.block<3, 1>(1, 0) = q.tail<3>();
  m.block<3, 3>(1, 1) = q(0) * Matrix3d::Identity() + skew(q.tail<3>());
  return m;
}

/// Right multiplication matrix: quat_mul(p, q) == qmat_minus(q) * p.
inline Matrix4d qmat_minus(const Vector4d& q) {
  Matrix4d m;
  m(0, 0) = q(0);
  m.block<1, 3>(0, 1) = -q.tail<3>().transpose();
  m.block<3, 1>(1, 0) = q.tail<3>();
  m.block<3, 3>(1, 1) = q(0) * Matrix3d::Identity() - skew(q.tail<3>());
  return m;
}

inline Vector4d quat_mul(const Vector4d& q, const Vector4d& p) {
  Vector4d r;
  r(0) = q(0) * p(0) - q.tail<3>().dot(p.tail<3>());
  r.tail<3>() =
      q(0) * p.tail<3>() + p(0) * q.tail<3>() + q.tail<3>().cross(p.tail<3>());
  return r;
}

inline Vector4d quat_from_vec(const Vector3d& v) {
  return {0.0, v(0), v(1), v(2)};
}

/// Frame transformation matrix of a unit quaternion,
/// C(q) = (s^2 - e'e) I + 2 e e' - 2 s skew(e).
inline Matrix3d quat_to_dcm(const Vector4d& q) {
  if (!q.allFinite()) throw NonFinite("quaternion is not finite");
  if (std::abs(q.squaredNorm() - 1.0) > 1e-9)
    throw NotUnit("quat_to_dcm requires a unit quaternion");
  const double s = q(0);
  const Vector3d e = q.tail<3>();
  return (s * s - e.squaredNorm()) * Matrix3d::Identity() +
         2.0 * e * e.transpose() - 2.0 * s * skew(e);
}

/// Inverse of quat_to_dcm via Shepperd's method (largest pivot). Returns the
/// representative with non-negative scalar part.
inline Vector4d dcm_to_quat(const Matrix3d& C) {
  if (!C.allFinite()) throw NonFinite("matrix is not finite");
  if ((C * C.transpose() - Matrix3d::Identity()).norm() > 1e-6 ||
      C.determinant() < 0.0)
    throw NotRotation("dcm_to_quat requires a rotation matrix");
  const double tr = C.trace();
  std::array<double, 4> piv = {tr, C(0, 0), C(1, 1), C(2, 2)};
  int k = 0;
  for (int i = 1; i < 4; ++i)
    if (piv[i] > piv[k]) k = i;

  Vector4d q;
  if (k == 0) {
    const double r = std::sqrt(1.0 + tr);
    q(0) = 0.5 * r;
    q(1) = 0.5 * (C(2, 1) - C(1, 2)) / r;
    q(2) = 0.5 * (C(0, 2) - C(2, 0)) / r;
    q(3) = 0.5 * (C(1, 0) - C(0, 1)) / r;
  } else {
    const int i = k - 1, j = (i + 1) % 3, l = (j + 1) % 3;
    const double r = std::sqrt(1.0 + C(i, i) - C(j, j) - C(l, l));
    q(0) = 0.5 * (C(l, j) - C(j, l)) / r;
    q(i + 1) = 0.5 * r;
    q(j + 1) = 0.5 * (C(j, i) + C(i, j)) / r;
    q(l + 1) = 0.5 * (C(i, l) + C(l, i)) / r;
  }
  // The construction above inverts the q -> C map for the transpose
  // convention; conjugate to match quat_to_dcm.
  q.tail<3>() = -q.tail<3>();
  if (q(0) < 0.0) q = -q;
  q.normalize();
  return q;
}

/// Rodrigues formula, exp(skew(phi)).
inline Matrix3d rotvec_to_dcm(const Vector3d& phi) {
  if (!phi.allFinite()) throw NonFinite("rotation vector is not finite");
  const double a = phi.norm();
  const Matrix3d K = skew(phi);
  if (a < 1e-8) {
    return Matrix3d::Identity() + K + 0.5 * K * K;
  }
  return Matrix3d::Identity() + std::sin(a) / a * K +
         (1.0 - std::cos(a)) / (a * a) * K * K;
}

inline Vector3d dcm_to_rotvec(const Matrix3d& R) {
  if ((R * R.transpose() - Matrix3d::Identity()).norm() > 1e-6 ||
      R.determinant() < 0.0)
    throw NotRotation("dcm_to_rotvec requires a rotation matrix");
  const Vector3d w{R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1)};
  const double c = 0.5 * (R.trace() - 1.0);
  const double s = 0.5 * w.norm();
  const double a = std::atan2(s, c);
  if (s > 1e-7) return (0.5 * a / s) * w;
  if (c > 0.0) return 0.5 * w;  // small angle
  // Near pi: extract axis from the symmetric part.
  Matrix3d S = 0.5 * (R + Matrix3d::Identity());
  int k = 0;
  for (int i = 1; i < 3; ++i)
    if (S(i, i) > S(k, k)) k = i;
  Vector3d axis = S.col(k) / std::sqrt(S(k, k));
  axis.normalize();
  if (w(k) < 0.0) axis = -axis;
  return a * axis;
}

// Euler angles for the N-U-E frame with body axes (forward, up, right):
//   C_b^n = R_U(-yaw) R_E(pitch) R_N(roll),
// where R_axis is the right-handed rotation about the given nav axis. Yaw is
// compass-like (positive swings forward from North toward East), pitch is
// positive nose-up, roll is positive right-side-down.

inline Matrix3d euler_nue_to_dcm(double yaw, double pitch, double roll) {
  return rotvec_to_dcm(-yaw * Vector3d::UnitY()) *
         rotvec_to_dcm(pitch * Vector3d::UnitZ()) *
         rotvec_to_dcm(roll * Vector3d::UnitX());
}

/// Returns [yaw, pitch, roll]; valid away from |pitch| = pi/2.
inline Vector3d dcm_to_euler_nue(const Matrix3d& C) {
  const double pitch = std::asin(std::clamp(C(1, 0), -1.0, 1.0));
  const double yaw = std::atan2(C(2, 0), C(0, 0));
  const double roll = std::atan2(-C(1, 2), C(1, 1));
  return {yaw, pitch, roll};
}

/// Decomposition qmat_plus(beta_vec) * qmat_plus(q)
///   == q(0) * qmat_plus(beta_vec) + sum_i q(i) * Jb[i-1].
inline std::array<Matrix4d, 3> jbeta_decomp(const Vector3d& b) {
  const double b1 = b(0), b2 = b(1), b3 = b(2);
  std::array<Matrix4d, 3> J;
  J[0] << -b1, 0.0, -b3, b2,
          0.0, -b1, b2, b3,
          b3, -b2, -b1, 0.0,
          -b2, -b3, 0.0, -b1;
  J[1] << -b2, b3, 0.0, -b1,
          -b3, -b2, -b1, 0.0,
          0.0, b1, -b2, b3,
          b1, 0.0, -b3, -b2;
  J[2] << -b3, -b2, b1, 0.0,
          b2, -b3, 0.0, -b1,
          -b1, 0.0, -b3, -b2,
          0.0, b1, b2, -b3;
  return J;
}

/// Decomposition quat_mul(quat_conj(q), quat_mul(beta_vec, q))
///   == sum_i beta(i) * Jq[i-1], exact for any (not necessarily unit) q.
inline std::array<Vector4d, 3> jq_decomp(const Vector4d& q) {
  const double s = q(0), e1 = q(1), e2 = q(2), e3 = q(3);
  std::array<Vector4d, 3> J;
  J[0] = {0.0, s * s + e1 * e1 - e2 * e2 - e3 * e3, 2.0 * (e1 * e2 - s * e3),
          2.0 * (s * e2 + e1 * e3)};
  J[1] = {0.0, 2.0 * (e1 * e2 + s * e3), s * s - e1 * e1 + e2 * e2 - e3 * e3,
          2.0 * (e2 * e3 - s * e1)};
  J[2] = {0.0, 2.0 * (e1 * e3 - s * e2), 2.0 * (s * e1 + e2 * e3),
          s * s - e1 * e1 - e2 * e2 + e3 * e3};
  return J;
}

}  // namespace jape
