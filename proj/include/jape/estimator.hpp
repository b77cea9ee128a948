#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "jape/coeffs.hpp"
#include "jape/errors.hpp"
#include "jape/rotations.hpp"

// Constrained joint estimation of the initial attitude quaternion, inertial
// sensor biases and the antenna lever arm from the windowed observation
// coefficients. The epoch residual is
//   pi = ([alpha]^- - [beta]^+) q + [q]^+ (chi b_a + lambda b_g + gamma l),
// and the solver minimizes sum |pi|^2 subject to q'q = 1 by Newton-Lagrange
// steps on the KKT system. Gradient and Hessian are exact for non-unit q;
// the unit constraint is enforced only through the multiplier.

namespace jape {

using Vector9d = Eigen::Matrix<double, 9, 1>;
using Vector13d = Eigen::Matrix<double, 13, 1>;
using Matrix9d = Eigen::Matrix<double, 9, 9>;
using Matrix13d = Eigen::Matrix<double, 13, 13>;
using Matrix39d = Eigen::Matrix<double, 3, 9>;
using Matrix49d = Eigen::Matrix<double, 4, 9>;

/// Joint estimate: quaternion of C_n^b(0), sensor biases, lever arm.
struct EstimateX {
  Vector4d q{1.0, 0.0, 0.0, 0.0};
  Vector3d ba = Vector3d::Zero();     // m/s^2
  Vector3d bg = Vector3d::Zero();     // rad/s
  Vector3d lever = Vector3d::Zero();  // m
  double mu = 0.0;
  int iters = 0;
  double objective = 0.0;
  bool attitude_only = false;
};

inline Vector9d pack_params(const EstimateX& x) {
  Vector9d th;
  th << x.ba, x.bg, x.lever;
  return th;
}

inline void unpack_params(const Vector9d& th, EstimateX* x) {
  x->ba = th.head<3>();
  x->bg = th.segment<3>(3);
  x->lever = th.tail<3>();
}

/// 4x4 observation matrix [alpha]^- - [beta]^+ of one differenced epoch.
inline Matrix4d obs_matrix(const DiffCoeff& d) {
  return qmat_minus(quat_from_vec(d.alpha)) - qmat_plus(quat_from_vec(d.beta));
}

/// 3x9 parameter coefficient block [chi  lambda  gamma].
inline Matrix39d param_matrix(const DiffCoeff& d) {
  Matrix39d B;
  B << d.chi, d.lambda, d.gamma;
  return B;
}

namespace detail {

inline Matrix49d lift(const Matrix39d& B) {
  Matrix49d L;
  L.row(0).setZero();
  L.bottomRows<3>() = B;
  return L;
}

}  // namespace detail

/// Epoch equality residual at (q, theta), theta = [b_a; b_g; l].
inline Vector4d residual_pi(const DiffCoeff& d, const Vector4d& q,
                            const Vector9d& theta) {
  return obs_matrix(d) * q +
         quat_mul(q, quat_from_vec(param_matrix(d) * theta));
}

/// Derivatives of the objective F(x) = sum |pi|^2 (without the constraint).
struct GradHess {
  Vector13d grad = Vector13d::Zero();
  Matrix13d hess = Matrix13d::Zero();
  double objective = 0.0;
};

/// Reference evaluation by a direct loop over the stored epochs.
inline GradHess grad_hess_batch(const std::vector<DiffCoeff>& obs,
                                const Vector4d& q, const Vector9d& theta) {
  GradHess out;
  for (const DiffCoeff& d : obs) {
    const Matrix4d A = obs_matrix(d);
    const Matrix39d B = param_matrix(d);
    const Matrix49d L = detail::lift(B);
    const Vector3d w = B * theta;
    const Matrix4d P = A + qmat_minus(quat_from_vec(w));
    const Vector4d pi = P * q;
    const Matrix49d QB = qmat_plus(q) * L;
    out.objective += pi.squaredNorm();
    out.grad.head<4>() += 2.0 * (P.transpose() * pi);
    out.grad.tail<9>() += 2.0 * (QB.transpose() * pi);
    const Matrix49d Hqt = P.transpose() * QB - qmat_plus(pi) * L;
    out.hess.topLeftCorner<4, 4>() += 2.0 * (P.transpose() * P);
    out.hess.block<4, 9>(0, 4) += 2.0 * Hqt;
    out.hess.block<9, 4>(4, 0) += 2.0 * Hqt.transpose();
    out.hess.bottomRightCorner<9, 9>() += 2.0 * (QB.transpose() * QB);
  }
  return out;
}

inline double objective_batch(const std::vector<DiffCoeff>& obs,
                              const Vector4d& q, const Vector9d& theta) {
  double f = 0.0;
  for (const DiffCoeff& d : obs) f += residual_pi(d, q, theta).squaredNorm();
  return f;
}

/// Epoch-summed derivative terms in constant-size storage. Adding an epoch
/// is O(1) and assembling the gradient and Hessian at any (q, theta) never
/// revisits past epochs.
class RecursiveAccumulators {
 public:
  RecursiveAccumulators() {
    for (auto& u : U_) u.setZero();
    for (auto& v : V_) v.setZero();
    for (auto& s : S_bJ_) s.setZero();
  }

  void add(const DiffCoeff& d) {
    const Vector4d ah = quat_from_vec(d.alpha);
    const Vector4d bh = quat_from_vec(d.beta);
    const Matrix4d A = qmat_minus(ah) - qmat_plus(bh);
    const Matrix39d B = param_matrix(d);
    const Matrix49d L = detail::lift(B);

    S_K_ += A.transpose() * A;
    S_am_ += qmat_minus(ah) * L;
    S_ap_ += qmat_plus(ah) * L;
    S_b_ += qmat_plus(bh) * L;
    const std::array<Matrix4d, 3> Jb = jbeta_decomp(d.beta);
    for (int i = 0; i < 3; ++i) S_bJ_[i] += Jb[i] * L;
    for (int j = 0; j < 9; ++j)
      U_[j] += A.transpose() * qmat_minus(quat_from_vec(B.col(j)));
    S_lin_ += B.transpose() * d.alpha;
    for (int i = 0; i < 3; ++i) V_[i] += d.beta(i) * B.transpose();
    S_gram_ += B.transpose() * B;
    ++count_;
  }

  int count() const { return count_; }

  /// Attitude-only quadratic form, sum A'A.
  const Matrix4d& attitude_matrix() const { return S_K_; }

  double objective(const Vector4d& q, const Vector9d& theta) const {
    const Matrix49d W = beta_left(q);
    return q.dot(S_K_ * q) +
           2.0 * q.dot((W - qmat_plus(q) * S_am_) * theta) +
           q.squaredNorm() * theta.dot(S_gram_ * theta);
  }

  GradHess grad_hess(const Vector4d& q, const Vector9d& theta) const {
    GradHess out;
    const double qq = q.squaredNorm();
    const Matrix4d Qp = qmat_plus(q);
    const Matrix49d W = beta_left(q);
    const Matrix49d mix = S_am_ + S_ap_;
    const Vector9d gt = S_gram_ * theta;
    const double ww = theta.dot(gt);

    const Vector4d Jq =
        S_K_ * q - Qp * (mix * theta) + 2.0 * (W * theta) + ww * q;
    const std::array<Vector4d, 3> jq = jq_decomp(q);
    Vector9d Jt = qq * (S_lin_ + gt);
    for (int i = 0; i < 3; ++i) Jt -= V_[i] * jq[i].tail<3>();

    Matrix4d Hqq = S_K_ + ww * Matrix4d::Identity();
    for (int j = 0; j < 9; ++j) Hqq += theta(j) * (U_[j] + U_[j].transpose());
    const Matrix49d Hqt = 2.0 * W - Qp * mix + 2.0 * (q * gt.transpose());

    out.grad.head<4>() = 2.0 * Jq;
    out.grad.tail<9>() = 2.0 * Jt;
    out.hess.topLeftCorner<4, 4>() = 2.0 * Hqq;
    out.hess.block<4, 9>(0, 4) = 2.0 * Hqt;
    out.hess.block<9, 4>(4, 0) = 2.0 * Hqt.transpose();
    out.hess.bottomRightCorner<9, 9>() = 2.0 * qq * S_gram_;
    out.objective =
        q.dot(S_K_ * q) + 2.0 * q.dot((W - Qp * S_am_) * theta) + qq * ww;
    return out;
  }

 private:
  Matrix49d beta_left(const Vector4d& q) const {
    Matrix49d W = q(0) * S_b_;
    for (int i = 0; i < 3; ++i) W += q(i + 1) * S_bJ_[i];
    return W;
  }

  Matrix4d S_K_ = Matrix4d::Zero();
  Matrix49d S_am_ = Matrix49d::Zero();
  Matrix49d S_ap_ = Matrix49d::Zero();
  Matrix49d S_b_ = Matrix49d::Zero();
  std::array<Matrix49d, 3> S_bJ_;
  std::array<Matrix4d, 9> U_;
  Vector9d S_lin_ = Vector9d::Zero();
  std::array<Eigen::Matrix<double, 9, 3>, 3> V_;
  Matrix9d S_gram_ = Matrix9d::Zero();
  int count_ = 0;
};

struct SolveOptions {
  int max_iters = 5;
  double tol = 1e-12;          // step infinity-norm convergence test
  bool step_guard = true;      // halve steps that increase the merit
  double guard_penalty = 1.0;  // weight of (q'q - 1)^2 in the guard merit
  // Pivot-ratio bound on the equilibrated KKT system, a numerical sanity
  // check rather than an observability test. Converged solves on well-excited
  // profiles sit below 1e6; intermediate Newton iterates may spike a few
  // orders higher and still recover, so the bound only rejects systems whose
  // double-precision factorization is meaningless.
  double cond_limit = 1e12;
};

struct NewtonStep {
  Vector13d dx = Vector13d::Zero();
  double dmu = 0.0;
};

/// One Newton-Lagrange step from (q, theta, mu): solves the bordered system
///   [ H_L   -2q~ ] [dx ]   [ -grad_L  ]
///   [ 2q~'   0   ] [dmu] = [ 1 - q'q  ],   q~ = [q; 0_9].
inline NewtonStep solve_kkt(const GradHess& gh, const Vector4d& q, double mu,
                            double cond_limit = 1e12) {
  Eigen::Matrix<double, 14, 14> K = Eigen::Matrix<double, 14, 14>::Zero();
  Eigen::Matrix<double, 14, 1> rhs;

  Vector13d grad_l = gh.grad;
  grad_l.head<4>() -= 2.0 * mu * q;
  Matrix13d hess_l = gh.hess;
  hess_l.topLeftCorner<4, 4>() -= 2.0 * mu * Matrix4d::Identity();

  Vector13d qpad = Vector13d::Zero();
  qpad.head<4>() = 2.0 * q;

  K.topLeftCorner<13, 13>() = hess_l;
  K.block<13, 1>(0, 13) = -qpad;
  K.block<1, 13>(13, 0) = qpad.transpose();
  rhs.head<13>() = -grad_l;
  rhs(13) = 1.0 - q.squaredNorm();

  if (!K.allFinite() || !rhs.allFinite())
    throw NonFinite("KKT system has non-finite entries");

  // The blocks carry different units (quaternion, accelerations, angular
  // rates, meters), so equilibrate symmetrically before measuring the pivot
  // ratio; otherwise the guard reacts to the unit spread instead of to the
  // geometry. True rank deficiency survives the scaling.
  Eigen::Matrix<double, 14, 1> s;
  for (int i = 0; i < 14; ++i) {
    const double r = K.row(i).cwiseAbs().maxCoeff();
    s(i) = r > 0.0 ? 1.0 / std::sqrt(r) : 1.0;
  }
  const Eigen::Matrix<double, 14, 14> Ks =
      s.asDiagonal() * K * s.asDiagonal();
  const Eigen::FullPivLU<Eigen::Matrix<double, 14, 14>> lu(Ks);
  const Eigen::Matrix<double, 14, 1> piv =
      lu.matrixLU().diagonal().cwiseAbs();
  const double pmin = piv.minCoeff();
  if (!(pmin > 0.0) || piv.maxCoeff() / pmin > cond_limit)
    throw SingularKKT("KKT pivot ratio exceeds the conditioning limit");

  const Eigen::Matrix<double, 14, 1> sol =
      s.asDiagonal() * lu.solve((s.asDiagonal() * rhs).eval());
  NewtonStep st;
  st.dx = sol.head<13>();
  st.dmu = sol(13);
  return st;
}

/// Smallest-eigenvector attitude of the accumulated 4x4 quadratic form.
/// Throws DegenerateSpectrum when the two smallest eigenvalues are
/// numerically tied (the attitude is not uniquely determined yet).
inline Vector4d attitude_min_eigvec(const Matrix4d& S) {
  const Eigen::SelfAdjointEigenSolver<Matrix4d> es(S);
  if (es.info() != Eigen::Success)
    throw Error("attitude eigen decomposition failed");
  const Vector4d ev = es.eigenvalues();
  const double scale = std::max(1.0, std::abs(ev(3)));
  if (ev(1) - ev(0) < 1e-12 * scale)
    throw DegenerateSpectrum("attitude spectrum gap below threshold");
  Vector4d q = es.eigenvectors().col(0);
  if (q(0) < 0.0) q = -q;
  return q;
}

namespace detail {

struct BatchProvider {
  const std::vector<DiffCoeff>* obs;
  GradHess grad_hess(const Vector4d& q, const Vector9d& th) const {
    return grad_hess_batch(*obs, q, th);
  }
  double objective(const Vector4d& q, const Vector9d& th) const {
    return objective_batch(*obs, q, th);
  }
};

struct RecursiveProvider {
  const RecursiveAccumulators* acc;
  GradHess grad_hess(const Vector4d& q, const Vector9d& th) const {
    return acc->grad_hess(q, th);
  }
  double objective(const Vector4d& q, const Vector9d& th) const {
    return acc->objective(q, th);
  }
};

inline void finalize_output(EstimateX* x) {
  if (!x->q.allFinite()) throw NonFinite("quaternion estimate is not finite");
  const double n = x->q.norm();
  if (!(n > 0.0)) throw NonFinite("quaternion estimate collapsed to zero");
  x->q /= n;
  if (x->q(0) < 0.0) x->q = -x->q;
}

}  // namespace detail

/// Newton-Lagrange iteration; q is never renormalized between steps.
template <class Provider>
EstimateX newton_solve(const Provider& prov, EstimateX x,
                       const SolveOptions& opt) {
  Vector9d theta = pack_params(x);
  x.iters = 0;
  for (int k = 0; k < opt.max_iters; ++k) {
    const GradHess gh = prov.grad_hess(x.q, theta);
    const NewtonStep st = solve_kkt(gh, x.q, x.mu, opt.cond_limit);
    double scale = 1.0;
    if (opt.step_guard) {
      const double c0 = x.q.squaredNorm() - 1.0;
      const double m0 = gh.objective + opt.guard_penalty * c0 * c0;
      for (int h = 0; h < 4; ++h) {
        const Vector4d qc = x.q + scale * st.dx.head<4>();
        const Vector9d tc = theta + scale * st.dx.tail<9>();
        const double cc = qc.squaredNorm() - 1.0;
        if (prov.objective(qc, tc) + opt.guard_penalty * cc * cc <= m0) break;
        scale *= 0.5;
      }
    }
    x.q += scale * st.dx.head<4>();
    theta += scale * st.dx.tail<9>();
    x.mu += scale * st.dmu;
    x.iters = k + 1;
    if (scale * st.dx.lpNorm<Eigen::Infinity>() < opt.tol) break;
  }
  unpack_params(theta, &x);
  x.objective = prov.objective(x.q, theta);
  return x;
}

/// Attitude at the newest epoch from the estimated initial attitude and the
/// builder's frame trackers: C_b^n(t) = Cn_n0' C_b^n(0) Cb_b0.
inline Matrix3d current_attitude(const Vector4d& q, const CoeffEpoch& e) {
  return e.Cn_n0.transpose() * quat_to_dcm(q).transpose() * e.Cb_b0;
}

struct JapeOptions {
  int window = 50;       // differencing window, epochs
  double period = 0.02;  // epoch period, s
  double warmup_s = 30.0;  // attitude-only span of the recursive estimator
  SolveOptions solve;
};

/// Batch estimator: every call re-initializes the attitude from the
/// eigenvector start and refines over all stored epochs.
class BaJape {
 public:
  explicit BaJape(const JapeOptions& opt)
      : opt_(opt), builder_(opt.window, opt.period) {}

  void start(const GnssFix& fix) { builder_.start(fix); }

  void push(const ImuIncrement& imu, const GnssFix& fix) {
    builder_.push(imu, fix);
    if (builder_.has_diff()) obs_.push_back(builder_.diff());
  }

  bool ready() const { return !obs_.empty(); }
  const CoeffBuilder& builder() const { return builder_; }
  const std::vector<DiffCoeff>& observations() const { return obs_; }

  EstimateX estimate() const {
    if (!ready()) throw InsufficientHistory("no differenced epochs yet");
    Matrix4d S = Matrix4d::Zero();
    for (const DiffCoeff& d : obs_) {
      const Matrix4d A = obs_matrix(d);
      S += A.transpose() * A;
    }
    EstimateX x;
    x.q = attitude_min_eigvec(S);
    x = newton_solve(detail::BatchProvider{&obs_}, x, opt_.solve);
    detail::finalize_output(&x);
    return x;
  }

  double objective_at(const EstimateX& x) const {
    return objective_batch(obs_, x.q, pack_params(x));
  }

 private:
  JapeOptions opt_;
  CoeffBuilder builder_;
  std::vector<DiffCoeff> obs_;
};

/// Recursive estimator: constant work per epoch. Runs attitude-only while
/// warming up, then switches to the full parameter vector warm-started from
/// the previous solution.
class RaJape {
 public:
  explicit RaJape(const JapeOptions& opt)
      : opt_(opt), builder_(opt.window, opt.period) {}

  void start(const GnssFix& fix) {
    builder_.start(fix);
    t0_ = fix.t;
  }

  void push(const ImuIncrement& imu, const GnssFix& fix) {
    builder_.push(imu, fix);
    if (builder_.has_diff()) acc_.add(builder_.diff());
  }

  bool ready() const { return acc_.count() > 0; }
  bool in_warmup() const { return builder_.epoch().t - t0_ < opt_.warmup_s; }
  const CoeffBuilder& builder() const { return builder_; }
  const RecursiveAccumulators& accumulators() const { return acc_; }

  EstimateX estimate() {
    if (!ready()) throw InsufficientHistory("no differenced epochs yet");
    if (in_warmup()) {
      EstimateX x;
      x.q = attitude_min_eigvec(acc_.attitude_matrix());
      x.attitude_only = true;
      x.objective = acc_.objective(x.q, Vector9d::Zero());
      return x;
    }
    if (!warm_) {
      EstimateX x0;
      x0.q = attitude_min_eigvec(acc_.attitude_matrix());
      warm_ = x0;
    }
    EstimateX x = newton_solve(detail::RecursiveProvider{&acc_}, *warm_,
                               opt_.solve);
    warm_ = x;
    detail::finalize_output(&x);
    return x;
  }

  double objective_at(const EstimateX& x) const {
    return acc_.objective(x.q, pack_params(x));
  }

 private:
  JapeOptions opt_;
  CoeffBuilder builder_;
  RecursiveAccumulators acc_;
  std::optional<EstimateX> warm_;
  double t0_ = 0.0;
};

}  // namespace jape
