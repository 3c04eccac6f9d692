#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "exo/muscle.hpp"

namespace exo::muscle {

namespace {

using Matrix2Xd = Eigen::Matrix<double, 2, Eigen::Dynamic>;

// Dual of  min 1/2 |a|^2 + 1/(2 rho) |A a - b|^2,  0 <= a <= 1.
// rho = 0 is the hard-equality problem. The dual variable lives in R^2
// (hip, knee), a(lambda) = clamp(A^T lambda, 0, 1), and the dual is a
// concave piecewise quadratic maximized by a damped semismooth Newton
// iteration whose free set is the active-set of the primal.
struct DualSolver {
  const Matrix2Xd& a_mat;
  Eigen::Vector2d b;
  double rho;
  double damping;  // keeps steps bounded while the free set is rank deficient

  Eigen::VectorXd primal(const Eigen::Vector2d& lambda) const {
    return (a_mat.transpose() * lambda).cwiseMax(0.0).cwiseMin(1.0);
  }

  double objective(const Eigen::Vector2d& lambda) const {
    const Eigen::VectorXd s = a_mat.transpose() * lambda;
    double h = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s[i] <= 0.0) continue;
      h += s[i] <= 1.0 ? 0.5 * s[i] * s[i] : s[i] - 0.5;
    }
    return lambda.dot(b) - h - 0.5 * rho * lambda.squaredNorm();
  }

  Eigen::Vector2d gradient(const Eigen::Vector2d& lambda) const {
    return b - a_mat * primal(lambda) - rho * lambda;
  }

  Eigen::Matrix2d curvature(const Eigen::Vector2d& lambda) const {
    const Eigen::VectorXd s = a_mat.transpose() * lambda;
    Eigen::Matrix2d h = rho * Eigen::Matrix2d::Identity();
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s[i] >= 0.0 && s[i] <= 1.0) h += a_mat.col(i) * a_mat.col(i).transpose();
    }
    return h;
  }

  // Returns iterations used, or -1 when not converged.
  int solve(Eigen::Vector2d& lambda, double tol, int max_iter) const {
    for (int it = 0; it < max_iter; ++it) {
      const Eigen::Vector2d g = gradient(lambda);
      if (g.norm() <= tol) return it;
      Eigen::Matrix2d h = curvature(lambda);
      h += damping * Eigen::Matrix2d::Identity();
      Eigen::Vector2d step = h.ldlt().solve(g);
      if (!step.allFinite()) step = g;
      const double f0 = objective(lambda);
      const double slope = g.dot(step);
      const double g0 = g.norm();
      double t = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Eigen::Vector2d trial = lambda + t * step;
        // Close to the optimum the objective change drowns in rounding;
        // a smaller gradient is then the better acceptance signal.
        if (objective(trial) >= f0 + 1e-4 * t * slope || gradient(trial).norm() < 0.5 * g0) {
          lambda = trial;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) return gradient(lambda).norm() <= tol ? it : -1;
    }
    return gradient(lambda).norm() <= tol ? max_iter : -1;
  }
};

}  // namespace

StaticOptimizationResult static_optimization(TorquePair required,
                                             std::span<const MuscleParams> muscles,
                                             std::span<const FiberKinematics> fibers) {
  if (muscles.size() != fibers.size()) {
    throw ValidationError("fibers", "one fiber state per muscle required");
  }
  const auto n = static_cast<Eigen::Index>(muscles.size());
  Matrix2Xd a_mat(2, n);
  Eigen::Vector2d passive = Eigen::Vector2d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const MuscleParams& m = muscles[static_cast<std::size_t>(i)];
    const FiberKinematics& f = fibers[static_cast<std::size_t>(i)];
    const double l_norm = f.length / m.optimal_fiber_length;
    const double v_norm = f.velocity / m.max_shortening_velocity;
    const double active = m.max_isometric_force * active_force_length(l_norm) * force_velocity(v_norm);
    const double passive_force = m.max_isometric_force * passive_force_length(l_norm);
    const double r_hip = m.moment_arm(dynamics::kHip);
    const double r_knee = m.moment_arm(dynamics::kKnee);
    a_mat(0, i) = r_hip * active;
    a_mat(1, i) = r_knee * active;
    passive += Eigen::Vector2d(r_hip, r_knee) * passive_force;
  }
  const Eigen::Vector2d target(required.hip, required.knee);
  const Eigen::Vector2d b = target - passive;
  const double tol = 1e-10;

  StaticOptimizationResult result;
  Eigen::Vector2d lambda = Eigen::Vector2d::Zero();
  const double gram = std::max(1e-300, (a_mat * a_mat.transpose()).trace());
  DualSolver exact{a_mat, b, 0.0, 1e-6 * gram};
  int iterations = exact.solve(lambda, tol, 200);
  if (iterations < 0) {
    // Out of reach: least-residual activations via a stiff penalty.
    DualSolver penalized{a_mat, b, 1e-9 * std::max(1.0, gram), 1e-6 * gram};
    lambda.setZero();
    iterations = penalized.solve(lambda, 1e-12 * (1.0 + b.norm()), 500);
    result.feasible = false;
  }
  const Eigen::VectorXd act = exact.primal(lambda);
  const Eigen::Vector2d residual = b - a_mat * act;
  result.activations.assign(act.data(), act.data() + act.size());
  result.residual = {residual[0], residual[1]};
  result.kkt_residual = residual.norm();
  result.iterations = std::max(iterations, 0);
  if (result.feasible && result.kkt_residual > 1e-8) result.feasible = false;
  return result;
}

}  // namespace exo::muscle
