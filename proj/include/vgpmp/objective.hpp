#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vgpmp/errors.hpp"
#include "vgpmp/robot.hpp"
#include "vgpmp/sdf.hpp"

namespace vgpmp {

enum class SoftLimitTarget { Velocity, Position };

struct ObjectiveWeights {
  double sigma_obs = 0.005;
  std::optional<double> sigma_c;
  std::optional<double> sigma_grasp;
  std::optional<double> sigma_velocity;
  /// safety distance
  double eps = 0.05;
  double likelihood_scale = 1.0;
  bool collision = true;
  bool soft_limits = true;
  bool grasp = true;
  bool velocity = true;
  SoftLimitTarget soft_limit_target = SoftLimitTarget::Velocity;
  /// position mode threshold, as a fraction of each joint's half range
  double position_threshold = 0.95;

  void validate() const {
    if (!(sigma_obs > 0.0))
      throw InvalidArgument("sigma_obs must be positive");
    for (const auto &s : {sigma_c, sigma_grasp, sigma_velocity})
      if (s && !(*s > 0.0))
        throw InvalidArgument("objective sigmas must be positive");
    if (!(eps >= 0.0))
      throw InvalidArgument("eps must be nonnegative");
    if (!(likelihood_scale > 0.0))
      throw InvalidArgument("likelihood_scale must be positive");
    if (!(position_threshold > 0.0 && position_threshold <= 1.0))
      throw InvalidArgument("position_threshold must be in (0, 1]");
  }
};

struct GraspTarget {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  double position_weight = 1.0;
  double rotation_weight = 1.0;
  /// time-grid indices the term applies to; empty means the final step
  std::vector<int> steps;

  void validate() const {
    if (!position.allFinite() || !rotation.allFinite())
      throw InvalidArgument("grasp target must be finite");
    if (!(rotation.transpose() * rotation).isIdentity(1e-6))
      throw InvalidArgument("grasp target rotation must be orthonormal");
    if (position_weight < 0.0 || rotation_weight < 0.0)
      throw InvalidArgument("grasp weights must be nonnegative");
  }
};

struct VelocityTarget {
  /// 1 x d constant profile or T x d per-step profile
  Eigen::MatrixXd mu_v;

  [[nodiscard]] Eigen::VectorXd at(Eigen::Index step) const {
    return mu_v.rows() == 1 ? Eigen::VectorXd(mu_v.row(0).transpose())
                            : Eigen::VectorXd(mu_v.row(step).transpose());
  }
};

/// Sum over steps and spheres of hinge^2 / sigma_obs^2, with theta_path T x d.
inline double collision_cost(const RobotSpec &robot, const SdfGrid &grid,
                             const ObjectiveWeights &weights, const Eigen::MatrixXd &theta_path) {
  double total = 0.0;
  const double inv = 1.0 / (weights.sigma_obs * weights.sigma_obs);
  for (Eigen::Index t = 0; t < theta_path.rows(); ++t) {
    for (const auto &s : sphere_positions(robot, Eigen::VectorXd(theta_path.row(t).transpose()))) {
      const double h = hinge(query(grid, s.center) - s.radius, weights.eps);
      total += h * h * inv;
    }
  }
  return total;
}

/// Squared excess of |q| over a per-column threshold, divided by sigma_c^2.
inline double soft_limit_cost(double sigma_c, const Eigen::MatrixXd &quantity,
                              const Eigen::VectorXd &threshold) {
  double total = 0.0;
  for (Eigen::Index t = 0; t < quantity.rows(); ++t)
    for (Eigen::Index i = 0; i < quantity.cols(); ++i) {
      const double e = std::max(std::abs(quantity(t, i)) - threshold[i], 0.0);
      total += e * e;
    }
  return total / (sigma_c * sigma_c);
}

inline double soft_limit_cost(const ObjectiveWeights &weights, const Eigen::MatrixXd &quantity,
                              const Eigen::VectorXd &threshold) {
  if (!weights.sigma_c)
    throw InvalidArgument("soft limit cost needs sigma_c");
  return soft_limit_cost(*weights.sigma_c, quantity, threshold);
}

inline double grasp_pose_error(const GraspTarget &target, const Pose &pose) {
  return target.position_weight * (pose.position - target.position).squaredNorm() +
         target.rotation_weight * (pose.rotation - target.rotation).squaredNorm();
}

/// Weighted squared pose error of the end link at joint vector theta.
inline double grasp_cost(const RobotSpec &robot, const GraspTarget &target,
                         const ObjectiveWeights &weights, const Eigen::VectorXd &theta) {
  if (!weights.sigma_grasp)
    throw InvalidArgument("grasp cost needs sigma_grasp");
  const auto poses = forward_kinematics(robot, theta);
  return grasp_pose_error(target, poses.back()) / (*weights.sigma_grasp * *weights.sigma_grasp);
}

struct TermCosts {
  double collision = 0.0;
  double soft = 0.0;
  double grasp = 0.0;
  double velocity = 0.0;

  [[nodiscard]] double total() const { return collision + soft + grasp + velocity; }
};

/// d cost / d f and d cost / d f' for one unconstrained path.
struct PathCostGradient {
  Eigen::MatrixXd d_f;
  Eigen::MatrixXd d_fdot;
};

/// All likelihood terms for one unconstrained path f (T x d) with time
/// derivative fdot (T x d, may be empty when no velocity term is active).
class CostModel {
public:
  CostModel(const RobotSpec &robot, const SdfGrid *grid, ObjectiveWeights weights,
            std::optional<GraspTarget> grasp, std::optional<VelocityTarget> velocity,
            double squash_slope = 1.0)
      : robot_(&robot), grid_(grid), weights_(std::move(weights)), grasp_(std::move(grasp)),
        velocity_(std::move(velocity)), slope_(squash_slope) {
    weights_.validate();
    if (grasp_)
      grasp_->validate();
    if (!(slope_ > 0.0))
      throw InvalidArgument("squash_slope must be positive");
  }

  [[nodiscard]] const RobotSpec &robot() const { return *robot_; }
  [[nodiscard]] const SdfGrid *grid() const { return grid_; }
  [[nodiscard]] const ObjectiveWeights &weights() const { return weights_; }
  [[nodiscard]] const std::optional<GraspTarget> &grasp_target() const { return grasp_; }
  [[nodiscard]] double squash_slope() const { return slope_; }

  [[nodiscard]] bool collision_active() const { return weights_.collision && grid_ != nullptr; }
  [[nodiscard]] bool grasp_active() const {
    return weights_.grasp && grasp_.has_value() && weights_.sigma_grasp.has_value();
  }
  [[nodiscard]] bool soft_active() const {
    if (!weights_.soft_limits || !weights_.sigma_c)
      return false;
    return weights_.soft_limit_target == SoftLimitTarget::Position ||
           robot_->velocity_limits.has_value();
  }
  [[nodiscard]] bool velocity_active() const {
    return weights_.velocity && velocity_.has_value() && weights_.sigma_velocity.has_value();
  }
  [[nodiscard]] bool needs_derivatives() const {
    return velocity_active() ||
           (soft_active() && weights_.soft_limit_target == SoftLimitTarget::Velocity);
  }

  /// Evaluates the terms; fills `grad` and appends a description of every
  /// piecewise branch taken to `signature` when given.
  TermCosts evaluate(const Eigen::MatrixXd &f, const Eigen::MatrixXd &fdot, PathCostGradient *grad,
                     std::vector<std::int64_t> *signature = nullptr) const;

private:
  const RobotSpec *robot_;
  const SdfGrid *grid_;
  ObjectiveWeights weights_;
  std::optional<GraspTarget> grasp_;
  std::optional<VelocityTarget> velocity_;
  double slope_;
};

inline TermCosts CostModel::evaluate(const Eigen::MatrixXd &f, const Eigen::MatrixXd &fdot,
                                     PathCostGradient *grad,
                                     std::vector<std::int64_t> *signature) const {
  const auto &robot = *robot_;
  const auto &limits = robot.limits;
  const Eigen::Index steps = f.rows();
  const Eigen::Index d = f.cols();
  if (d != robot.dof())
    throw InvalidArgument("path width does not match the robot");
  const bool need_dot = needs_derivatives();
  if (need_dot && (fdot.rows() != steps || fdot.cols() != d))
    throw InvalidArgument("velocity terms need the path derivative");

  TermCosts costs;
  if (grad) {
    grad->d_f = Eigen::MatrixXd::Zero(steps, d);
    grad->d_fdot = need_dot ? Eigen::MatrixXd::Zero(steps, d) : Eigen::MatrixXd();
  }
  const Eigen::VectorXd range = limits.range();
  const Eigen::VectorXd mid = limits.midpoint();

  std::vector<int> grasp_steps;
  if (grasp_active()) {
    grasp_steps = grasp_->steps;
    if (grasp_steps.empty())
      grasp_steps.push_back(static_cast<int>(steps - 1));
  }

  const double inv_obs = 1.0 / (weights_.sigma_obs * weights_.sigma_obs);
  for (Eigen::Index t = 0; t < steps; ++t) {
    const Eigen::VectorXd ft = f.row(t).transpose();
    const Eigen::VectorXd theta = squash(limits, ft, slope_);
    const Eigen::VectorXd dtheta = squash_derivative(limits, ft, slope_);
    // d cost / d theta at this step, converted to f at the end
    Eigen::VectorXd g_theta = Eigen::VectorXd::Zero(d);

    const bool grasp_here =
        std::find(grasp_steps.begin(), grasp_steps.end(), static_cast<int>(t)) != grasp_steps.end();
    if (collision_active() || grasp_here) {
      const auto poses = forward_kinematics(robot, theta);
      const auto axes = grad ? joint_axes(poses) : std::vector<JointAxis>{};
      if (collision_active()) {
        for (std::size_t j = 0; j < robot.spheres.size(); ++j) {
          const auto &att = robot.spheres[j];
          const auto &pose = poses[static_cast<std::size_t>(att.link)];
          const Eigen::Vector3d c = pose.position + pose.rotation * att.offset;
          const auto sample = query_with_gradient(*grid_, c);
          const double h = hinge(sample.distance - att.radius, weights_.eps);
          costs.collision += h * h * inv_obs;
          if (signature) {
            signature->push_back(h > 0.0);
            signature->push_back(sample.cell[0]);
            signature->push_back(sample.cell[1]);
            signature->push_back(sample.cell[2]);
            signature->push_back(sample.clamped_axes);
          }
          if (grad && h > 0.0) {
            const auto jac = point_jacobian(axes, att.link, c);
            g_theta -= 2.0 * h * inv_obs * (jac.transpose() * sample.gradient);
          }
        }
      }
      if (grasp_here) {
        const auto &ee = poses.back();
        const double inv = 1.0 / (*weights_.sigma_grasp * *weights_.sigma_grasp);
        costs.grasp += grasp_pose_error(*grasp_, ee) * inv;
        if (grad) {
          const Eigen::Vector3d dp = ee.position - grasp_->position;
          const Eigen::Matrix3d dr = ee.rotation - grasp_->rotation;
          const int last = static_cast<int>(d) - 1;
          const auto jac = point_jacobian(axes, last, ee.position);
          for (Eigen::Index k = 0; k < d; ++k) {
            const Eigen::Matrix3d dR = skew(axes[static_cast<std::size_t>(k)].axis) * ee.rotation;
            g_theta[k] += 2.0 * inv *
                          (grasp_->position_weight * dp.dot(jac.col(k)) +
                           grasp_->rotation_weight * (dr.cwiseProduct(dR)).sum());
          }
        }
      }
    }

    if (soft_active() && weights_.soft_limit_target == SoftLimitTarget::Position) {
      const double inv = 1.0 / (*weights_.sigma_c * *weights_.sigma_c);
      for (Eigen::Index i = 0; i < d; ++i) {
        const double q = theta[i] - mid[i];
        const double e = std::max(std::abs(q) - weights_.position_threshold * 0.5 * range[i], 0.0);
        costs.soft += e * e * inv;
        if (signature)
          signature->push_back(e > 0.0);
        if (grad && e > 0.0)
          g_theta[i] += 2.0 * e * inv * (q > 0.0 ? 1.0 : -1.0);
      }
    }

    if (need_dot) {
      // theta' = g(f) f' with g = range * slope * s (1 - s)
      for (Eigen::Index i = 0; i < d; ++i) {
        const double s = logistic(slope_ * ft[i]);
        const double vel = dtheta[i] * fdot(t, i);
        const double dvel_df = range[i] * slope_ * slope_ * s * (1.0 - s) * (1.0 - 2.0 * s) * fdot(t, i);
        double g_vel = 0.0;
        if (soft_active() && weights_.soft_limit_target == SoftLimitTarget::Velocity) {
          const double inv = 1.0 / (*weights_.sigma_c * *weights_.sigma_c);
          const double e = std::max(std::abs(vel) - (*robot.velocity_limits)[i], 0.0);
          costs.soft += e * e * inv;
          if (signature)
            signature->push_back(e > 0.0);
          if (e > 0.0)
            g_vel += 2.0 * e * inv * (vel > 0.0 ? 1.0 : -1.0);
        }
        if (velocity_active()) {
          const double inv = 1.0 / (*weights_.sigma_velocity * *weights_.sigma_velocity);
          const double diff = vel - velocity_->at(velocity_->mu_v.rows() == 1 ? 0 : t)[i];
          costs.velocity += diff * diff * inv;
          g_vel += 2.0 * diff * inv;
        }
        if (grad) {
          grad->d_f(t, i) += g_vel * dvel_df;
          grad->d_fdot(t, i) += g_vel * dtheta[i];
        }
      }
    }

    if (grad)
      grad->d_f.row(t) += g_theta.cwiseProduct(dtheta).transpose();
  }
  return costs;
}

/// likelihood_scale * mean_k 1/2 (cost_k) + kl.
inline double negative_elbo(const std::vector<double> &sample_costs, double kl,
                            const ObjectiveWeights &weights) {
  if (sample_costs.empty())
    throw InvalidArgument("negative ELBO needs at least one sample");
  // summing in sorted order makes the result independent of sample order
  std::vector<double> sorted(sample_costs);
  std::sort(sorted.begin(), sorted.end());
  double acc = 0.0;
  for (double c : sorted)
    acc += 0.5 * c;
  return weights.likelihood_scale * acc / static_cast<double>(sorted.size()) + kl;
}

} // namespace vgpmp
