#pragma once

// Self-checks behind `vgpmp check`. Each compares a library routine with a
// slower, separately written computation and reports the worst error.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "vgpmp/objective.hpp"
#include "vgpmp/optimizer.hpp"
#include "vgpmp/robot.hpp"
#include "vgpmp/sdf.hpp"
#include "vgpmp/sparse_gp.hpp"

namespace vgpmp::checks {

struct Report {
  int instances = 0;
  int skipped = 0;
  double max_error = 0.0;
};

/// KL(N(m0, s0) || N(m1, s1)) from the textbook formula.
inline double gaussian_kl(const Eigen::VectorXd &m0, const Eigen::MatrixXd &s0, const Eigen::VectorXd &m1,
                          const Eigen::MatrixXd &s1) {
  const Eigen::LLT<Eigen::MatrixXd> l1(s1);
  const Eigen::LLT<Eigen::MatrixXd> l0(s0);
  const Eigen::MatrixXd l1m = l1.matrixL();
  const Eigen::MatrixXd l0m = l0.matrixL();
  const Eigen::VectorXd dm = m1 - m0;
  const double trace = l1.solve(s0).trace();
  const double quad = dm.dot(l1.solve(dm));
  const double logdet1 = 2.0 * l1m.diagonal().array().log().sum();
  const double logdet0 = 2.0 * l0m.diagonal().array().log().sum();
  return 0.5 * (trace + quad - static_cast<double>(m0.size()) + logdet1 - logdet0);
}

/// Whitened KL against the direct Gaussian KL of the unwhitened q(u').
inline Report kl(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Report r;
  for (int n = 0; n < instances; ++n) {
    const int m = 1 + static_cast<int>(unit(rng) * 15.999);
    const auto family = static_cast<KernelFamily>(n % 3);
    const bool zero_velocity = family != KernelFamily::Matern12 && n % 2 == 0;
    KernelSpec kernel = KernelSpec::uniform(family, 1, 0.2 + 0.6 * unit(rng), 0.3 + 2.0 * unit(rng));
    VariationalState state;
    state.inducing = InducingSet::anchored(m + 2, zero_velocity, true);
    state.constrained_values = Eigen::MatrixXd::NullaryExpr(state.inducing.constrained_count(), 1,
                                                            [&] { return normal(rng); });
    state.whitened_mean = Eigen::MatrixXd::NullaryExpr(m, 1, [&] { return normal(rng); });
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(m, m);
    for (int c = 0; c < m; ++c) {
      l(c, c) = 0.3 + unit(rng);
      for (int i = c + 1; i < m; ++i)
        l(i, c) = 0.3 * normal(rng);
    }
    state.whitened_chol = {l};
    const auto prior = conditioned_prior(kernel, state.inducing, state.constrained_values);
    const auto [mean, cov] = free_moments(state, prior[0], 0);
    const double direct = gaussian_kl(mean, cov, prior[0].mean, prior[0].chol * prior[0].chol.transpose());
    const double whitened = kl_divergence(state);
    r.max_error = std::max(r.max_error, std::abs(direct - whitened) / std::max(std::abs(direct), 1e-12));
    ++r.instances;
  }
  return r;
}

/// Random serial chain with a few spheres per link.
inline RobotSpec random_chain(int dof, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RobotSpec robot;
  for (int i = 0; i < dof; ++i) {
    robot.joints.push_back({0.3 * u(rng), 0.3 * u(rng), 3.0 * u(rng), u(rng)});
    robot.spheres.push_back({i, Eigen::Vector3d(0.2 * u(rng), 0.2 * u(rng), 0.2 * u(rng)), 0.05});
  }
  robot.limits.lower = Eigen::VectorXd::Constant(dof, -3.0);
  robot.limits.upper = Eigen::VectorXd::Constant(dof, 3.0);
  return robot;
}

/// Forward kinematics and sphere centers against elementary transform
/// products Rz * Tz * Tx * Rx.
inline Report fk(const RobotSpec &robot, int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Report r;
  const int d = robot.dof();
  for (int n = 0; n < instances; ++n) {
    Eigen::VectorXd theta(d);
    for (int i = 0; i < d; ++i)
      theta[i] = std::uniform_real_distribution<double>(robot.limits.lower[i], robot.limits.upper[i])(rng);
    std::vector<Eigen::Affine3d> frames;
    Eigen::Affine3d acc = Eigen::Affine3d::Identity();
    for (int i = 0; i < d; ++i) {
      const auto &j = robot.joints[static_cast<std::size_t>(i)];
      acc = acc * Eigen::AngleAxisd(theta[i] + j.theta_offset, Eigen::Vector3d::UnitZ()) *
            Eigen::Translation3d(0.0, 0.0, j.d) * Eigen::Translation3d(j.a, 0.0, 0.0) *
            Eigen::AngleAxisd(j.alpha, Eigen::Vector3d::UnitX());
      frames.push_back(acc);
    }
    const auto poses = forward_kinematics(robot, theta);
    for (int i = 0; i < d; ++i) {
      r.max_error = std::max(r.max_error, (poses[i].position - frames[i].translation()).cwiseAbs().maxCoeff());
      r.max_error = std::max(r.max_error, (poses[i].rotation - frames[i].linear()).cwiseAbs().maxCoeff());
    }
    const auto spheres = sphere_positions(robot, theta);
    for (std::size_t s = 0; s < robot.spheres.size(); ++s) {
      const Eigen::Vector3d c = frames[static_cast<std::size_t>(robot.spheres[s].link)] * robot.spheres[s].offset;
      r.max_error = std::max(r.max_error, (spheres[s].center - c).cwiseAbs().maxCoeff());
    }
    ++r.instances;
  }
  return r;
}

/// Objective gradient against central differences on a planar two-link arm
/// near a spherical obstacle; configurations touching a hinge kink are skipped.
inline Report gradients(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RobotSpec robot;
  robot.joints = {{1.0, 0.0, 0.0, 0.0}, {1.0, 0.0, 0.0, 0.0}};
  for (int link = 0; link < 2; ++link)
    for (double x : {-0.66, -0.33, 0.0})
      robot.spheres.push_back({link, Eigen::Vector3d(x, 0.0, 0.0), 0.1});
  robot.limits.lower = Eigen::VectorXd::Constant(2, -3.0);
  robot.limits.upper = Eigen::VectorXd::Constant(2, 3.0);
  robot.velocity_limits = Eigen::VectorXd::Constant(2, 1.5);
  PrimitiveScene scene;
  scene.bounds = {Eigen::Vector3d(-2.5, -2.5, -0.3), Eigen::Vector3d(2.5, 2.5, 0.3)};
  scene.primitives.push_back(SpherePrimitive{Eigen::Vector3d(1.1, 0.9, 0.0), 0.35});
  const auto grid = build_grid(scene, 0.05);
  ObjectiveWeights w;
  w.sigma_obs = 0.3;
  w.eps = 0.15;
  w.sigma_c = 2.0;
  w.sigma_velocity = 4.0;
  w.sigma_grasp = 0.5;
  GraspTarget target;
  target.position = Eigen::Vector3d(0.5, 1.5, 0.0);
  target.rotation = Eigen::AngleAxisd(1.0, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const CostModel cost(robot, &grid, w, target, VelocityTarget{Eigen::MatrixXd::Zero(1, 2)});
  std::vector<double> times;
  for (int i = 0; i < 8; ++i)
    times.push_back(i / 7.0);
  Report r;
  int attempts = 0;
  while (r.instances < instances && attempts < 20 * instances) {
    ++attempts;
    const auto family = static_cast<KernelFamily>(1 + attempts % 2);
    ModelParameters p;
    p.kernel = KernelSpec::uniform(family, 2, 0.25 + 0.2 * unit(rng), 0.5 + unit(rng));
    p.state.inducing = InducingSet::anchored(5, attempts % 3 != 0, attempts % 4 != 0);
    p.state.constrained_values = Eigen::MatrixXd::Zero(p.state.inducing.constrained_count(), 2);
    const auto values = static_cast<Eigen::Index>(p.state.inducing.constrained_times.size());
    p.state.constrained_values.topRows(values) =
        0.6 * Eigen::MatrixXd::NullaryExpr(values, 2, [&] { return normal(rng); });
    const int m = p.state.inducing.free_count();
    p.state.whitened_mean = 0.5 * Eigen::MatrixXd::NullaryExpr(m, 2, [&] { return normal(rng); });
    for (int j = 0; j < 2; ++j) {
      Eigen::MatrixXd l = Eigen::MatrixXd::Zero(m, m);
      for (int c = 0; c < m; ++c) {
        l(c, c) = 0.5 + unit(rng);
        for (int i = c + 1; i < m; ++i)
          l(i, c) = 0.2 * normal(rng);
      }
      p.state.whitened_chol.push_back(l);
    }
    const ElboObjective obj(cost, p, TrainableSet{}, times, 3, 64, rng());
    const auto check = check_gradient(obj, obj.initial_parameters(), 2);
    if (!check.smooth) {
      ++r.skipped;
      continue;
    }
    r.max_error = std::max(r.max_error, check.max_relative_error);
    ++r.instances;
  }
  return r;
}

} // namespace vgpmp::checks
