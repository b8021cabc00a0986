#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vgpmp/errors.hpp"

namespace vgpmp {

/// Classic DH parameters of one revolute joint:
/// F_i = Rot_z(theta + theta_offset) Trans_z(d) Trans_x(a) Rot_x(alpha).
struct DhJoint {
  double a = 0.0;
  double d = 0.0;
  double alpha = 0.0;
  double theta_offset = 0.0;
};

struct JointLimits {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  [[nodiscard]] Eigen::Index size() const { return lower.size(); }
  [[nodiscard]] Eigen::VectorXd range() const { return upper - lower; }
  [[nodiscard]] Eigen::VectorXd midpoint() const { return 0.5 * (upper + lower); }
};

/// Collision sphere rigidly attached to the frame after joint `link`.
struct SphereAttachment {
  int link = 0;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  double radius = 0.0;
};

struct RobotSpec {
  std::vector<DhJoint> joints;
  JointLimits limits;
  std::vector<SphereAttachment> spheres;
  std::optional<Eigen::VectorXd> velocity_limits;

  [[nodiscard]] int dof() const { return static_cast<int>(joints.size()); }

  void validate() const {
    const auto d = static_cast<Eigen::Index>(joints.size());
    if (d < 1)
      throw InvalidArgument("robot needs at least one joint");
    if (limits.lower.size() != d || limits.upper.size() != d)
      throw InvalidArgument("one joint limit pair per joint");
    for (Eigen::Index i = 0; i < d; ++i)
      if (!(limits.lower[i] < limits.upper[i]) || !std::isfinite(limits.lower[i]) ||
          !std::isfinite(limits.upper[i]))
        throw InvalidArgument("joint limits must be finite with min < max");
    for (const auto &s : spheres) {
      if (s.link < 0 || s.link >= d)
        throw InvalidArgument("sphere attached to a nonexistent link");
      if (!(s.radius > 0.0))
        throw InvalidArgument("sphere radius must be positive");
    }
    if (velocity_limits && velocity_limits->size() != d)
      throw InvalidArgument("one velocity limit per joint");
  }
};

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
};

inline double logistic(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Scaled and shifted sigmoid from unconstrained to joint space.
inline Eigen::VectorXd squash(const JointLimits &limits, const Eigen::VectorXd &f,
                              double slope = 1.0) {
  Eigen::VectorXd out(f.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double theta = limits.lower[i] + (limits.upper[i] - limits.lower[i]) * logistic(slope * f[i]);
    // Saturated logistic can round onto a bound; keep the result interior.
    out[i] = std::clamp(theta, std::nextafter(limits.lower[i], limits.upper[i]),
                        std::nextafter(limits.upper[i], limits.lower[i]));
  }
  return out;
}

inline Eigen::VectorXd unsquash(const JointLimits &limits, const Eigen::VectorXd &theta,
                                double slope = 1.0) {
  Eigen::VectorXd out(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double lo = limits.lower[i];
    const double hi = limits.upper[i];
    if (!(theta[i] > lo && theta[i] < hi))
      throw OutOfLimits("joint " + std::to_string(i) + " value is not strictly inside its limits");
    // logit of the normalized position, written to stay accurate near both ends
    out[i] = (std::log(theta[i] - lo) - std::log(hi - theta[i])) / slope;
  }
  return out;
}

/// d theta / d f for the squash map.
inline Eigen::VectorXd squash_derivative(const JointLimits &limits, const Eigen::VectorXd &f,
                                         double slope = 1.0) {
  Eigen::VectorXd out(f.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double s = logistic(slope * f[i]);
    out[i] = (limits.upper[i] - limits.lower[i]) * slope * s * (1.0 - s);
  }
  return out;
}

/// Chain rule through squash: d theta/dt = squash'(f) * df/dt.
inline Eigen::VectorXd joint_velocity(const JointLimits &limits, const Eigen::VectorXd &f,
                                      const Eigen::VectorXd &df_dt, double slope = 1.0) {
  return squash_derivative(limits, f, slope).cwiseProduct(df_dt);
}

inline Eigen::Matrix4d dh_transform(const DhJoint &j, double theta) {
  const double ct = std::cos(theta + j.theta_offset);
  const double st = std::sin(theta + j.theta_offset);
  const double ca = std::cos(j.alpha);
  const double sa = std::sin(j.alpha);
  Eigen::Matrix4d t;
  t << ct, -st * ca, st * sa, j.a * ct,
       st, ct * ca, -ct * sa, j.a * st,
       0.0, sa, ca, j.d,
       0.0, 0.0, 0.0, 1.0;
  return t;
}

/// World pose of the frame after each joint (entry i is after joint i).
inline std::vector<Pose> forward_kinematics(const RobotSpec &robot, const Eigen::VectorXd &theta) {
  if (theta.size() != robot.dof())
    throw InvalidArgument("joint vector size does not match the robot");
  std::vector<Pose> poses;
  poses.reserve(robot.joints.size());
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  for (int i = 0; i < robot.dof(); ++i) {
    const Eigen::Matrix4d t = dh_transform(robot.joints[static_cast<std::size_t>(i)], theta[i]);
    p = p + r * t.block<3, 1>(0, 3);
    r = r * t.block<3, 3>(0, 0);
    poses.push_back({p, r});
  }
  return poses;
}

struct WorldSphere {
  Eigen::Vector3d center;
  double radius;
};

inline std::vector<WorldSphere> sphere_positions(const RobotSpec &robot,
                                                 const std::vector<Pose> &poses) {
  std::vector<WorldSphere> out;
  out.reserve(robot.spheres.size());
  for (const auto &s : robot.spheres) {
    const auto &pose = poses[static_cast<std::size_t>(s.link)];
    out.push_back({pose.position + pose.rotation * s.offset, s.radius});
  }
  return out;
}

inline std::vector<WorldSphere> sphere_positions(const RobotSpec &robot,
                                                 const Eigen::VectorXd &theta) {
  return sphere_positions(robot, forward_kinematics(robot, theta));
}

/// Rotation axis and origin of joint i in world coordinates: the z axis of the
/// frame before that joint.
struct JointAxis {
  Eigen::Vector3d axis;
  Eigen::Vector3d origin;
};

inline std::vector<JointAxis> joint_axes(const std::vector<Pose> &poses) {
  std::vector<JointAxis> axes;
  axes.reserve(poses.size());
  axes.push_back({Eigen::Vector3d::UnitZ(), Eigen::Vector3d::Zero()});
  for (std::size_t i = 0; i + 1 < poses.size(); ++i)
    axes.push_back({poses[i].rotation.col(2), poses[i].position});
  return axes;
}

/// d point / d theta_k for a point rigidly attached to `link` (3 x d).
inline Eigen::Matrix<double, 3, Eigen::Dynamic>
point_jacobian(const std::vector<JointAxis> &axes, int link, const Eigen::Vector3d &point) {
  Eigen::Matrix<double, 3, Eigen::Dynamic> jac =
      Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, static_cast<Eigen::Index>(axes.size()));
  for (int k = 0; k <= link; ++k)
    jac.col(k) = axes[static_cast<std::size_t>(k)].axis.cross(point - axes[static_cast<std::size_t>(k)].origin);
  return jac;
}

inline Eigen::Matrix3d skew(const Eigen::Vector3d &v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

} // namespace vgpmp
