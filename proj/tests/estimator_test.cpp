#include "jape/estimator.hpp"

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include <Eigen/SVD>

#include "jape/sim.hpp"

namespace {

using jape::DiffCoeff;
using jape::EstimateX;
using jape::GradHess;
using jape::Matrix3d;
using jape::Matrix4d;
using jape::Matrix13d;
using jape::MotionProfile;
using jape::RecursiveAccumulators;
using jape::SensorSpec;
using jape::Vector3d;
using jape::Vector4d;
using jape::Vector9d;
using jape::Vector13d;

constexpr double kDeg = jape::units::kDeg;

DiffCoeff random_diff(std::mt19937_64* rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  DiffCoeff d;
  for (int i = 0; i < 3; ++i) {
    d.alpha(i) = n(*rng);
    d.beta(i) = n(*rng);
    for (int j = 0; j < 3; ++j) {
      d.chi(i, j) = n(*rng);
      d.lambda(i, j) = n(*rng);
      d.gamma(i, j) = n(*rng);
    }
  }
  return d;
}

Vector4d random_quat(std::mt19937_64* rng, bool unit) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector4d q;
  for (int i = 0; i < 4; ++i) q(i) = n(*rng);
  if (unit) q.normalize();
  return q;
}

Vector9d random_params(std::mt19937_64* rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Vector9d th;
  for (int i = 0; i < 9; ++i) th(i) = n(*rng);
  return th;
}

// A consistent epoch satisfies beta = C_b^n(0) (alpha + chi b_a + ...) with
// C_b^n(0) the transpose of the matrix of q.
DiffCoeff consistent_diff(std::mt19937_64* rng, const Vector4d& q,
                          const Vector9d& theta) {
  DiffCoeff d = random_diff(rng);
  const Matrix3d Cbn = jape::quat_to_dcm(q).transpose();
  d.beta = Cbn * (d.alpha + jape::param_matrix(d) * theta);
  return d;
}

TEST(Estimator, ResidualVanishesOnConsistentEpoch) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector4d q = random_quat(&rng, true);
    const Vector9d theta = random_params(&rng, 0.5);
    const DiffCoeff d = consistent_diff(&rng, q, theta);
    EXPECT_LT(jape::residual_pi(d, q, theta).norm(), 1e-13);
  }
}

TEST(Estimator, ResidualAndObjectiveAreSignInvariant) {
  std::mt19937_64 rng(12);
  std::vector<DiffCoeff> obs;
  RecursiveAccumulators acc;
  for (int k = 0; k < 20; ++k) {
    obs.push_back(random_diff(&rng));
    acc.add(obs.back());
  }
  for (int trial = 0; trial < 20; ++trial) {
    const Vector4d q = random_quat(&rng, false);
    const Vector9d theta = random_params(&rng, 1.0);
    EXPECT_LT((jape::residual_pi(obs[0], -q, theta) +
               jape::residual_pi(obs[0], q, theta))
                  .norm(),
              1e-13);
    const double f = acc.objective(q, theta);
    EXPECT_NEAR(acc.objective(-q, theta), f, 1e-12 * std::abs(f));
  }
}

TEST(Estimator, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  std::vector<DiffCoeff> obs;
  for (int k = 0; k < 30; ++k) obs.push_back(random_diff(&rng));

  for (int trial = 0; trial < 10; ++trial) {
    Vector4d q = random_quat(&rng, false);
    q *= 1.3;
    const Vector9d theta = random_params(&rng, 0.7);
    const GradHess gh = jape::grad_hess_batch(obs, q, theta);

    Vector13d x;
    x << q, theta;
    Vector13d fd;
    for (int i = 0; i < 13; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
      Vector13d xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      fd(i) = (jape::objective_batch(obs, xp.head<4>(), xp.tail<9>()) -
               jape::objective_batch(obs, xm.head<4>(), xm.tail<9>())) /
              (2.0 * h);
    }
    EXPECT_LT((gh.grad - fd).norm(), 1e-5 * std::max(1.0, fd.norm()));
  }
}

TEST(Estimator, HessianMatchesGradientDifferences) {
  std::mt19937_64 rng(14);
  std::vector<DiffCoeff> obs;
  for (int k = 0; k < 30; ++k) obs.push_back(random_diff(&rng));

  for (int trial = 0; trial < 5; ++trial) {
    const Vector4d q = 0.8 * random_quat(&rng, false);
    const Vector9d theta = random_params(&rng, 0.7);
    const GradHess gh = jape::grad_hess_batch(obs, q, theta);

    Vector13d x;
    x << q, theta;
    Matrix13d fd;
    for (int i = 0; i < 13; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
      Vector13d xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      const GradHess gp =
          jape::grad_hess_batch(obs, xp.head<4>(), xp.tail<9>());
      const GradHess gm =
          jape::grad_hess_batch(obs, xm.head<4>(), xm.tail<9>());
      fd.col(i) = (gp.grad - gm.grad) / (2.0 * h);
    }
    EXPECT_LT((gh.hess - fd).norm(), 1e-4 * std::max(1.0, fd.norm()));
  }
}

TEST(Estimator, BatchEqualsRecursive) {
  std::mt19937_64 rng(15);
  std::vector<DiffCoeff> obs;
  RecursiveAccumulators acc;
  for (int k = 0; k < 200; ++k) {
    obs.push_back(random_diff(&rng));
    acc.add(obs.back());
  }
  ASSERT_EQ(acc.count(), 200);

  for (int trial = 0; trial < 100; ++trial) {
    const Vector4d q = random_quat(&rng, trial % 2 == 0);
    const Vector9d theta = random_params(&rng, 1.0);
    const GradHess gb = jape::grad_hess_batch(obs, q, theta);
    const GradHess gr = acc.grad_hess(q, theta);
    EXPECT_LT((gb.grad - gr.grad).norm(),
              1e-10 * std::max(1.0, gb.grad.norm()));
    EXPECT_LT((gb.hess - gr.hess).norm(),
              1e-10 * std::max(1.0, gb.hess.norm()));
    EXPECT_NEAR(gr.objective, gb.objective,
                1e-10 * std::max(1.0, gb.objective));
    EXPECT_NEAR(acc.objective(q, theta), gb.objective,
                1e-10 * std::max(1.0, gb.objective));
  }
}

TEST(Estimator, AttitudeInitMatchesWahbaSvdOracle) {
  std::mt19937_64 rng(16);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector4d q_true = random_quat(&rng, true);
    const Matrix3d Cbn = jape::quat_to_dcm(q_true).transpose();

    Matrix4d S = Matrix4d::Zero();
    Matrix3d M = Matrix3d::Zero();
    for (int k = 0; k < 50; ++k) {
      Vector3d a{n(rng), n(rng), n(rng)};
      Vector3d b = Cbn * a;
      for (int i = 0; i < 3; ++i) b(i) += 0.01 * n(rng);
      const Matrix4d A = jape::qmat_minus(jape::quat_from_vec(a)) -
                         jape::qmat_plus(jape::quat_from_vec(b));
      S += A.transpose() * A;
      M += b * a.transpose();
    }
    const Vector4d q_hat = jape::attitude_min_eigvec(S);

    const Eigen::JacobiSVD<Matrix3d> svd(
        M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Matrix3d D = Matrix3d::Identity();
    D(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant();
    const Matrix3d R = svd.matrixU() * D * svd.matrixV().transpose();
    const Vector4d q_svd = jape::dcm_to_quat(R.transpose());

    const double diff =
        std::min((q_hat - q_svd).norm(), (q_hat + q_svd).norm());
    EXPECT_LT(diff, 1e-8);
  }
}

TEST(Estimator, AttitudeInitThrowsOnDegenerateSpectrum) {
  Matrix4d S = Vector4d{1.0, 1.0, 3.0, 5.0}.asDiagonal();
  EXPECT_THROW(jape::attitude_min_eigvec(S), jape::DegenerateSpectrum);
  S = Vector4d{4.0, 1.0, 3.0, 2.0}.asDiagonal();
  const Vector4d q = jape::attitude_min_eigvec(S);
  EXPECT_NEAR(std::abs(q(1)), 1.0, 1e-14);
}

TEST(Estimator, NewtonOnAttitudeOnlyProblemReachesEigenvector) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  const Vector4d q_true = random_quat(&rng, true);
  const Matrix3d Cbn = jape::quat_to_dcm(q_true).transpose();
  Matrix4d S = Matrix4d::Zero();
  for (int k = 0; k < 40; ++k) {
    const Vector3d a{n(rng), n(rng), n(rng)};
    Vector3d b = Cbn * a;
    for (int i = 0; i < 3; ++i) b(i) += 0.05 * n(rng);
    const Matrix4d A = jape::qmat_minus(jape::quat_from_vec(a)) -
                       jape::qmat_plus(jape::quat_from_vec(b));
    S += A.transpose() * A;
  }
  const Vector4d q_eig = jape::attitude_min_eigvec(S);

  Vector4d q = (q_eig + 0.05 * random_quat(&rng, true)).eval();
  double mu = 0.0;
  for (int k = 0; k < 10; ++k) {
    Eigen::Matrix<double, 5, 5> K = Eigen::Matrix<double, 5, 5>::Zero();
    K.topLeftCorner<4, 4>() = 2.0 * S - 2.0 * mu * Matrix4d::Identity();
    K.block<4, 1>(0, 4) = -2.0 * q;
    K.block<1, 4>(4, 0) = 2.0 * q.transpose();
    Eigen::Matrix<double, 5, 1> rhs;
    rhs.head<4>() = -(2.0 * S * q - 2.0 * mu * q);
    rhs(4) = 1.0 - q.squaredNorm();
    const Eigen::Matrix<double, 5, 1> sol = K.fullPivLu().solve(rhs);
    q += sol.head<4>();
    mu += sol(4);
  }
  q.normalize();
  if (q(0) < 0.0) q = -q;
  EXPECT_LT(std::min((q - q_eig).norm(), (q + q_eig).norm()), 1e-8);
}

TEST(Estimator, RecoversExactParametersFromConsistentEpochs) {
  std::mt19937_64 rng(18);
  const Vector4d q_true = random_quat(&rng, true);
  const Vector9d theta_true = random_params(&rng, 0.1);

  std::vector<DiffCoeff> obs;
  Matrix4d S = Matrix4d::Zero();
  for (int k = 0; k < 30; ++k) {
    obs.push_back(consistent_diff(&rng, q_true, theta_true));
    const Matrix4d A = jape::obs_matrix(obs.back());
    S += A.transpose() * A;
  }

  EstimateX x0;
  x0.q = jape::attitude_min_eigvec(S);
  jape::SolveOptions opt;
  opt.max_iters = 20;
  opt.tol = 1e-14;
  const EstimateX x =
      jape::newton_solve(jape::detail::BatchProvider{&obs}, x0, opt);

  EXPECT_LT(x.objective, 1e-20);
  Vector4d q = x.q.normalized();
  EXPECT_LT(std::min((q - q_true).norm(), (q + q_true).norm()), 1e-9);
  Vector9d theta;
  theta << x.ba, x.bg, x.lever;
  EXPECT_LT((theta - theta_true).norm(), 1e-8);
}

TEST(Estimator, SolveKktThrowsOnSingularSystem) {
  const GradHess gh;
  EXPECT_THROW(jape::solve_kkt(gh, Vector4d{1, 0, 0, 0}, 0.0),
               jape::SingularKKT);
}

TEST(Estimator, EstimateBeforeHistoryThrows) {
  jape::JapeOptions opt;
  jape::BaJape ba(opt);
  jape::RaJape ra(opt);
  EXPECT_THROW(ba.estimate(), jape::InsufficientHistory);
  EXPECT_THROW(ra.estimate(), jape::InsufficientHistory);
}

MotionProfile default_profile() {
  MotionProfile p;
  p.p0.lat = 30.0 * kDeg;
  p.p0.lon = 0.0;
  p.p0.h = 50.0;
  p.yaw0 = 20.0 * kDeg;
  p.yaw = {8.0 * kDeg, 0.15, 0.0};
  p.pitch = {6.0 * kDeg, 0.12, 1.0};
  p.roll = {5.0 * kDeg, 0.10, 2.0};
  p.vel_n = {2.0, 0.10, 0.3};
  p.vel_u = {1.0, 0.10, 1.8};
  p.vel_e = {1.5, 0.10, 4.0};
  return p;
}

TEST(Estimator, BatchAndRecursiveAgreeOnCleanScenario) {
  const MotionProfile pr = default_profile();
  SensorSpec spec;
  spec.lever_arm = {1.0, 2.0, 1.5};
  spec.gyro_bias = Vector3d::Constant(0.01 * jape::units::kDegPerHour);
  spec.accel_bias = Vector3d::Constant(50.0 * jape::units::kMicroG);

  const double dur = 45.0;
  const auto imu = jape::synthesize_imu(pr, spec, dur, 21, 20);
  const auto gnss = jape::synthesize_gnss(pr, spec, dur, 21);

  jape::JapeOptions opt;
  opt.warmup_s = 2.0;
  jape::BaJape ba(opt);
  jape::RaJape ra(opt);
  ba.start(gnss[0]);
  ra.start(gnss[0]);
  for (std::size_t k = 0; k < imu.size(); ++k) {
    ba.push(imu[k], gnss[k + 1]);
    ra.push(imu[k], gnss[k + 1]);
  }

  const EstimateX xb = ba.estimate();
  const EstimateX xr = ra.estimate();
  EXPECT_LE(xb.iters, 5);
  EXPECT_LE(xr.iters, 5);
  EXPECT_LT(std::min((xb.q - xr.q).norm(), (xb.q + xr.q).norm()), 1e-8);
  EXPECT_LT((xb.ba - xr.ba).norm(), 1e-8);
  EXPECT_LT((xb.bg - xr.bg).norm(), 1e-8);
  EXPECT_LT((xb.lever - xr.lever).norm(), 1e-7);

  const Matrix3d C0 = jape::truth_at(pr, 0.0).Cbn;
  const Matrix3d C_est = jape::quat_to_dcm(xr.q).transpose();
  const double att_err =
      jape::dcm_to_rotvec(C_est.transpose() * C0).norm();
  EXPECT_LT(att_err, 0.05 * kDeg);
  EXPECT_LT((xr.lever - spec.lever_arm).norm(), 0.01);
  EXPECT_LT((xr.ba - spec.accel_bias).norm(), 20.0 * jape::units::kMicroG);

  const Matrix3d C_now = jape::current_attitude(xr.q, ra.builder().epoch());
  const Matrix3d C_true_now = jape::truth_at(pr, dur).Cbn;
  EXPECT_LT(jape::dcm_to_rotvec(C_now.transpose() * C_true_now).norm(),
            0.05 * kDeg);
}

}  // namespace
