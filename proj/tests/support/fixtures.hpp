#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "vgpmp/robot.hpp"
#include "vgpmp/sdf.hpp"

namespace vgpmp::testing {

/// Planar arm in the xy plane with unit links and spheres along each link.
inline RobotSpec planar_arm(int links, double link_length = 1.0, int spheres_per_link = 4,
                            double radius = 0.1) {
  RobotSpec robot;
  robot.limits.lower = Eigen::VectorXd::Constant(links, -3.0);
  robot.limits.upper = Eigen::VectorXd::Constant(links, 3.0);
  for (int i = 0; i < links; ++i) {
    robot.joints.push_back({link_length, 0.0, 0.0, 0.0});
    for (int s = 0; s < spheres_per_link; ++s) {
      const double x = -link_length + link_length * (s + 1.0) / spheres_per_link;
      robot.spheres.push_back({i, Eigen::Vector3d(x, 0.0, 0.0), radius});
    }
  }
  return robot;
}

/// 7-joint arm with a classic DH table (Barrett WAM proportions).
inline RobotSpec seven_dof_arm() {
  const double pi = std::numbers::pi;
  RobotSpec robot;
  const double a[] = {0.0, 0.0, 0.045, -0.045, 0.0, 0.0, 0.0};
  const double alpha[] = {-pi / 2, pi / 2, -pi / 2, pi / 2, -pi / 2, pi / 2, 0.0};
  const double d[] = {0.0, 0.0, 0.55, 0.0, 0.3, 0.0, 0.06};
  for (int i = 0; i < 7; ++i)
    robot.joints.push_back({a[i], d[i], alpha[i], 0.0});
  robot.limits.lower.resize(7);
  robot.limits.upper.resize(7);
  robot.limits.lower << -2.6, -2.0, -2.8, -0.9, -4.76, -1.6, -3.0;
  robot.limits.upper << 2.6, 2.0, 2.8, 3.1, 1.24, 1.6, 3.0;
  for (int i = 0; i < 7; ++i)
    robot.spheres.push_back({i, Eigen::Vector3d(0.0, 0.0, -0.02 * i), 0.05 + 0.005 * i});
  robot.spheres.push_back({2, Eigen::Vector3d(0.0, 0.0, -0.3), 0.06});
  robot.spheres.push_back({4, Eigen::Vector3d(0.0, 0.0, -0.15), 0.05});
  return robot;
}

inline PrimitiveScene planar_scene_with_sphere(Eigen::Vector3d center, double radius) {
  PrimitiveScene scene;
  scene.bounds.min = Eigen::Vector3d(-2.5, -2.5, -0.3);
  scene.bounds.max = Eigen::Vector3d(2.5, 2.5, 0.3);
  scene.primitives.push_back(SpherePrimitive{center, radius});
  return scene;
}

} // namespace vgpmp::testing
