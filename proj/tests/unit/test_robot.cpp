#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "vgpmp/robot.hpp"

using namespace vgpmp;
using vgpmp::testing::planar_arm;
using vgpmp::testing::seven_dof_arm;

namespace {

Eigen::Matrix4d rot_z(double t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(0, 0) = std::cos(t);
  m(0, 1) = -std::sin(t);
  m(1, 0) = std::sin(t);
  m(1, 1) = std::cos(t);
  return m;
}

Eigen::Matrix4d rot_x(double t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(1, 1) = std::cos(t);
  m(1, 2) = -std::sin(t);
  m(2, 1) = std::sin(t);
  m(2, 2) = std::cos(t);
  return m;
}

Eigen::Matrix4d trans(double x, double y, double z) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(0, 3) = x;
  m(1, 3) = y;
  m(2, 3) = z;
  return m;
}

// frames from elementary homogeneous matrices, entries [from, to)
std::vector<Eigen::Matrix4d> oracle_frames(const RobotSpec &r, const Eigen::VectorXd &q, int from = 0) {
  std::vector<Eigen::Matrix4d> out;
  Eigen::Matrix4d acc = Eigen::Matrix4d::Identity();
  for (int i = from; i < r.dof(); ++i) {
    const auto &j = r.joints[static_cast<std::size_t>(i)];
    acc = acc * rot_z(q[i] + j.theta_offset) * trans(0, 0, j.d) * trans(j.a, 0, 0) * rot_x(j.alpha);
    out.push_back(acc);
  }
  return out;
}

Eigen::VectorXd random_config(const RobotSpec &r, std::mt19937_64 &rng) {
  Eigen::VectorXd q(r.dof());
  for (int i = 0; i < r.dof(); ++i)
    q[i] = std::uniform_real_distribution<double>(r.limits.lower[i], r.limits.upper[i])(rng);
  return q;
}

JointLimits limits(std::initializer_list<double> lo, std::initializer_list<double> hi) {
  JointLimits l;
  l.lower = Eigen::Map<const Eigen::VectorXd>(lo.begin(), static_cast<Eigen::Index>(lo.size()));
  l.upper = Eigen::Map<const Eigen::VectorXd>(hi.begin(), static_cast<Eigen::Index>(hi.size()));
  return l;
}

} // namespace

TEST(Squash, ZeroMapsToMidpoint) {
  const auto l = limits({-1.0, 0.5}, {3.0, 2.5});
  const auto t = squash(l, Eigen::Vector2d::Zero());
  EXPECT_DOUBLE_EQ(t[0], 1.0);
  EXPECT_DOUBLE_EQ(t[1], 1.5);
}

TEST(Squash, SaturatesStrictlyInside) {
  const auto l = limits({-2.0}, {2.0});
  const double hi = squash(l, Eigen::VectorXd::Constant(1, 20.0))[0];
  EXPECT_LT(hi, 2.0);
  EXPECT_GT(hi, 2.0 - 1e-8);
  const double lo = squash(l, Eigen::VectorXd::Constant(1, -20.0))[0];
  EXPECT_GT(lo, -2.0);
  EXPECT_LT(lo, -2.0 + 1e-8);
}

TEST(Squash, InteriorForFuzzedInputs) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  const auto l = limits({-2.9, 0.1, -1e-3}, {2.9, 0.2, 1e-3});
  for (int n = 0; n < 10000; ++n) {
    const Eigen::Vector3d f(u(rng), u(rng) * 1e-6, u(rng));
    const auto t = squash(l, f);
    for (int i = 0; i < 3; ++i) {
      EXPECT_GT(t[i], l.lower[i]);
      EXPECT_LT(t[i], l.upper[i]);
    }
  }
  for (double x : {-1e6, 1e6, -800.0, 800.0}) {
    const auto t = squash(l, Eigen::Vector3d::Constant(x));
    EXPECT_TRUE(((t - l.lower).array() > 0).all() && ((l.upper - t).array() > 0).all());
  }
}

TEST(Squash, RoundTrip) {
  std::mt19937_64 rng(2);
  const auto l = limits({-2.6, -2.0, 0.0}, {2.6, 2.0, 0.5});
  std::uniform_real_distribution<double> u(0.001, 0.999);
  for (int n = 0; n < 1000; ++n) {
    Eigen::Vector3d t;
    for (int i = 0; i < 3; ++i)
      t[i] = l.lower[i] + u(rng) * (l.upper[i] - l.lower[i]);
    EXPECT_LT((squash(l, unsquash(l, t)) - t).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Unsquash, MidpointAndBoundary) {
  const auto l = limits({-1.0}, {3.0});
  EXPECT_NEAR(unsquash(l, Eigen::VectorXd::Constant(1, 1.0))[0], 0.0, 1e-15);
  const double near_lo = unsquash(l, Eigen::VectorXd::Constant(1, -1.0 + 4e-12))[0];
  EXPECT_TRUE(std::isfinite(near_lo));
  EXPECT_LT(near_lo, -20.0);
  EXPECT_THROW(unsquash(l, Eigen::VectorXd::Constant(1, -1.0)), OutOfLimits);
  EXPECT_THROW(unsquash(l, Eigen::VectorXd::Constant(1, 3.0)), OutOfLimits);
  EXPECT_THROW(unsquash(l, Eigen::VectorXd::Constant(1, 5.0)), OutOfLimits);
}

TEST(JointVelocity, ChainRule) {
  const auto l = limits({-1.0, 0.0}, {3.0, 2.0});
  EXPECT_EQ(joint_velocity(l, Eigen::Vector2d(0.3, -2.0), Eigen::Vector2d::Zero()).norm(), 0.0);
  const auto v = joint_velocity(l, Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones());
  EXPECT_DOUBLE_EQ(v[0], 1.0);
  EXPECT_DOUBLE_EQ(v[1], 0.5);
}

TEST(JointVelocity, MatchesFiniteDifferenceAlongPath) {
  const auto l = limits({-2.0, 0.5}, {1.0, 4.0});
  auto f = [](double t) { return Eigen::Vector2d(2.0 * std::sin(3.0 * t), t * t - 1.0); };
  auto df = [](double t) { return Eigen::Vector2d(6.0 * std::cos(3.0 * t), 2.0 * t); };
  for (double t = 0.05; t < 1.0; t += 0.1) {
    const double h = 1e-6;
    const Eigen::VectorXd fd = (squash(l, f(t + h)) - squash(l, f(t - h))) / (2 * h);
    const Eigen::VectorXd v = joint_velocity(l, f(t), df(t));
    for (int i = 0; i < 2; ++i)
      EXPECT_LT(std::abs(v[i] - fd[i]), 1e-4 * std::max(std::abs(fd[i]), 1e-3));
  }
}

TEST(Kinematics, PlanarStraightAndQuarterTurn) {
  const auto arm = planar_arm(2);
  auto p = forward_kinematics(arm, Eigen::Vector2d::Zero());
  EXPECT_LT((p[1].position - Eigen::Vector3d(2, 0, 0)).norm(), 1e-15);
  p = forward_kinematics(arm, Eigen::Vector2d(std::numbers::pi / 2, 0.0));
  EXPECT_LT((p[1].position - Eigen::Vector3d(0, 2, 0)).norm(), 1e-12);
}

TEST(Kinematics, SevenDofMatchesMatrixProducts) {
  const auto arm = seven_dof_arm();
  std::mt19937_64 rng(3);
  for (int n = 0; n < 1000; ++n) {
    const auto q = random_config(arm, rng);
    const auto poses = forward_kinematics(arm, q);
    const auto frames = oracle_frames(arm, q);
    for (int i = 0; i < 7; ++i) {
      EXPECT_LT((poses[i].position - frames[i].block<3, 1>(0, 3)).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LT((poses[i].rotation - frames[i].block<3, 3>(0, 0)).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Kinematics, RotationsOrthonormal) {
  const auto arm = seven_dof_arm();
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 10.0);
  for (int k = 0; k < 500; ++k) {
    Eigen::VectorXd q(7);
    for (int i = 0; i < 7; ++i)
      q[i] = n(rng);
    for (const auto &p : forward_kinematics(arm, q)) {
      EXPECT_LT((p.rotation.transpose() * p.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_NEAR(p.rotation.determinant(), 1.0, 1e-9);
    }
  }
}

TEST(Kinematics, SubChainComposition) {
  const auto arm = seven_dof_arm();
  std::mt19937_64 rng(5);
  for (int n = 0; n < 100; ++n) {
    const auto q = random_config(arm, rng);
    const auto poses = forward_kinematics(arm, q);
    for (int i = 0; i < 6; ++i) {
      const auto sub = oracle_frames(arm, q, i + 1);
      for (int j = i + 1; j < 7; ++j) {
        const Eigen::Matrix4d &s = sub[static_cast<std::size_t>(j - i - 1)];
        const Eigen::Vector3d p = poses[i].position + poses[i].rotation * s.block<3, 1>(0, 3);
        const Eigen::Matrix3d r = poses[i].rotation * s.block<3, 3>(0, 0);
        EXPECT_LT((p - poses[j].position).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((r - poses[j].rotation).cwiseAbs().maxCoeff(), 1e-12);
      }
    }
  }
}

TEST(Kinematics, RejectsWrongSize) {
  EXPECT_THROW(forward_kinematics(planar_arm(2), Eigen::Vector3d::Zero()), InvalidArgument);
}

TEST(Spheres, ZeroOffsetIsLinkOrigin) {
  auto arm = seven_dof_arm();
  arm.spheres = {{3, Eigen::Vector3d::Zero(), 0.1}};
  std::mt19937_64 rng(6);
  const auto q = random_config(arm, rng);
  EXPECT_EQ(sphere_positions(arm, q)[0].center, forward_kinematics(arm, q)[3].position);
}

TEST(Spheres, StraightPlanarArm) {
  auto arm = planar_arm(2);
  arm.spheres = {{1, Eigen::Vector3d(0.5, 0, 0), 0.1}};
  const auto s = sphere_positions(arm, Eigen::Vector2d::Zero());
  EXPECT_LT((s[0].center - Eigen::Vector3d(2.5, 0, 0)).norm(), 1e-15);
  // link frames sit at the distal end, so a -0.5 offset is mid-link
  arm.spheres = {{1, Eigen::Vector3d(-0.5, 0, 0), 0.1}};
  EXPECT_LT((sphere_positions(arm, Eigen::Vector2d::Zero())[0].center - Eigen::Vector3d(1.5, 0, 0)).norm(), 1e-15);
}

TEST(Spheres, MatchMatrixProducts) {
  const auto arm = seven_dof_arm();
  std::mt19937_64 rng(7);
  for (int n = 0; n < 1000; ++n) {
    const auto q = random_config(arm, rng);
    const auto frames = oracle_frames(arm, q);
    const auto s = sphere_positions(arm, q);
    for (std::size_t k = 0; k < arm.spheres.size(); ++k) {
      const auto &a = arm.spheres[k];
      const Eigen::Vector4d c = frames[static_cast<std::size_t>(a.link)] * a.offset.homogeneous();
      EXPECT_LT((s[k].center - c.head<3>()).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_EQ(s[k].radius, a.radius);
    }
  }
}

TEST(Spheres, JacobianMatchesFiniteDifference) {
  const auto arm = seven_dof_arm();
  std::mt19937_64 rng(8);
  const auto q = random_config(arm, rng);
  const auto poses = forward_kinematics(arm, q);
  const auto axes = joint_axes(poses);
  const auto centers = sphere_positions(arm, poses);
  for (std::size_t k = 0; k < arm.spheres.size(); ++k) {
    const auto jac = point_jacobian(axes, arm.spheres[k].link, centers[k].center);
    for (int i = 0; i < 7; ++i) {
      Eigen::VectorXd qp = q, qm = q;
      qp[i] += 1e-6;
      qm[i] -= 1e-6;
      const Eigen::Vector3d fd =
          (sphere_positions(arm, qp)[k].center - sphere_positions(arm, qm)[k].center) / 2e-6;
      EXPECT_LT((jac.col(i) - fd).cwiseAbs().maxCoeff(), 1e-7);
    }
  }
}

TEST(RobotSpec, Validation) {
  auto arm = planar_arm(2);
  EXPECT_NO_THROW(arm.validate());
  arm.spheres[0].link = 2;
  EXPECT_THROW(arm.validate(), InvalidArgument);
  arm = planar_arm(2);
  arm.spheres[0].radius = 0.0;
  EXPECT_THROW(arm.validate(), InvalidArgument);
  arm = planar_arm(2);
  arm.limits.lower[1] = arm.limits.upper[1];
  EXPECT_THROW(arm.validate(), InvalidArgument);
  arm = planar_arm(2);
  arm.velocity_limits = Eigen::VectorXd::Ones(3);
  EXPECT_THROW(arm.validate(), InvalidArgument);
}
