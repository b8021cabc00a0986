#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "vgpmp/optimizer.hpp"

namespace vgpmp {
namespace {

struct GradientFixture {
  RobotSpec robot;
  SdfGrid grid;
  std::unique_ptr<CostModel> cost;
  ModelParameters params;
};

ModelParameters random_parameters(const RobotSpec &robot, KernelFamily family, int num_inducing,
                                  bool zero_velocity, bool with_goal, std::mt19937_64 &rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int d = robot.dof();
  ModelParameters p;
  p.kernel = KernelSpec::uniform(family, d, 0.25 + 0.2 * unit(rng), 0.5 + unit(rng));
  p.state.inducing = InducingSet::anchored(num_inducing, zero_velocity, with_goal);
  const int nc = p.state.inducing.constrained_count();
  const int m = p.state.inducing.free_count();
  p.state.constrained_values = Eigen::MatrixXd::Zero(nc, d);
  const int values = static_cast<int>(p.state.inducing.constrained_times.size());
  for (int r = 0; r < values; ++r)
    for (int j = 0; j < d; ++j)
      p.state.constrained_values(r, j) = 0.6 * normal(rng);
  p.state.whitened_mean = 0.5 * Eigen::MatrixXd::NullaryExpr(m, d, [&] { return normal(rng); });
  for (int j = 0; j < d; ++j) {
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(m, m);
    for (int c = 0; c < m; ++c) {
      l(c, c) = 0.5 + unit(rng);
      for (int r = c + 1; r < m; ++r)
        l(r, c) = 0.2 * normal(rng);
    }
    p.state.whitened_chol.push_back(l);
  }
  return p;
}

ObjectiveWeights smooth_weights() {
  ObjectiveWeights w;
  w.sigma_obs = 0.3;
  w.eps = 0.15;
  w.sigma_c = 2.0;
  w.sigma_velocity = 4.0;
  w.sigma_grasp = 0.5;
  return w;
}

TEST(Adam, ZeroGradientLeavesParameters) {
  AdamState s(AdamConfig{}, 3);
  Eigen::VectorXd x(3);
  x << 1.0, -2.0, 0.5;
  const Eigen::VectorXd before = x;
  adam_step(s, x, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(x, before);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  AdamState s(AdamConfig{}, 1);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.0);
  const double g = 3.7;
  adam_step(s, x, Eigen::VectorXd::Constant(1, g));
  // m_hat = g, v_hat = g^2, step = eta g / (|g| + eps)
  const double expected = 1.0 - 0.09 * g / (std::abs(g) + 1e-8);
  EXPECT_NEAR(x[0], expected, 1e-15);
  EXPECT_NEAR(1.0 - x[0], 0.09, 1e-8);
}

TEST(Adam, Defaults) {
  const AdamConfig c;
  EXPECT_EQ(c.beta1, 0.8);
  EXPECT_EQ(c.beta2, 0.95);
  EXPECT_EQ(c.learning_rate, 0.09);
}

TEST(CholeskyAdjoint, MatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  const int n = 5;
  Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return normal(rng); });
  const Eigen::MatrixXd s = a * a.transpose() + n * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd weight = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return normal(rng); });
  auto loss = [&](const Eigen::MatrixXd &m) {
    const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(m).matrixL();
    return (l.cwiseProduct(weight)).sum();
  };
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(s).matrixL();
  const Eigen::MatrixXd l_bar = weight.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd s_bar = cholesky_adjoint(l, l_bar);
  // perturb symmetric pairs together
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, n);
      e(i, j) = 1.0;
      e(j, i) = 1.0;
      const double h = 1e-6;
      const double fd = (loss(s + h * e) - loss(s - h * e)) / (2 * h);
      const double an = i == j ? s_bar(i, i) : s_bar(i, j) + s_bar(j, i);
      EXPECT_NEAR(an, fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(ParameterLayout, RoundTrip) {
  std::mt19937_64 rng(5);
  const auto robot = testing::planar_arm(2);
  const auto p = random_parameters(robot, KernelFamily::Matern52, 6, true, true, rng);
  const ParameterLayout layout(p, TrainableSet{});
  const Eigen::VectorXd x = layout.pack(p);
  const auto q = layout.unpack(x, p);
  EXPECT_LT((q.state.whitened_mean - p.state.whitened_mean).norm(), 1e-14);
  for (int j = 0; j < 2; ++j)
    EXPECT_LT((q.state.whitened_chol[j] - p.state.whitened_chol[j]).norm(), 1e-12);
  EXPECT_LT((q.kernel.length_scale - p.kernel.length_scale).norm(), 1e-14);
  EXPECT_LT((q.state.inducing.free_times - p.state.inducing.free_times).norm(), 1e-14);
}

TEST(Gradient, VanishesAtConditionedPriorWithoutLikelihood) {
  std::mt19937_64 rng(7);
  const auto robot = testing::planar_arm(2);
  auto p = random_parameters(robot, KernelFamily::Matern52, 6, true, true, rng);
  p.state.whitened_mean.setZero();
  for (auto &l : p.state.whitened_chol)
    l = Eigen::MatrixXd::Identity(l.rows(), l.cols());
  ObjectiveWeights w;
  w.collision = w.soft_limits = w.grasp = w.velocity = false;
  const CostModel cost(robot, nullptr, w, std::nullopt, std::nullopt);
  const ElboObjective obj(cost, p, TrainableSet{}, {0.0, 0.25, 0.5, 0.75, 1.0}, 4, 64, 11);
  const auto v = obj.evaluate(obj.initial_parameters(), 0, true);
  EXPECT_NEAR(v.loss, 0.0, 1e-12);
  EXPECT_LT(v.gradient.norm(), 1e-8);
}

TEST(Gradient, DeterministicForSeed) {
  std::mt19937_64 rng(9);
  const auto robot = testing::planar_arm(2);
  const auto p = random_parameters(robot, KernelFamily::Matern52, 6, true, true, rng);
  const auto grid = build_grid(testing::planar_scene_with_sphere({1.2, 0.8, 0.0}, 0.3), 0.05);
  const CostModel cost(robot, &grid, smooth_weights(), std::nullopt, std::nullopt);
  const ElboObjective obj(cost, p, TrainableSet{}, {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}, 4, 128, 17);
  const auto a = obj.evaluate(obj.initial_parameters(), 3, true);
  const auto b = obj.evaluate(obj.initial_parameters(), 3, true);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.gradient, b.gradient);
}

struct GradientCase {
  KernelFamily family;
  bool zero_velocity;
  bool with_goal;
  bool velocity_terms;
};

class GradientFidelity : public ::testing::TestWithParam<GradientCase> {};

TEST_P(GradientFidelity, MatchesCentralDifferences) {
  const auto c = GetParam();
  std::mt19937_64 rng(1234);
  auto robot = testing::planar_arm(2, 1.0, 3, 0.1);
  robot.velocity_limits = Eigen::VectorXd::Constant(2, 1.5);
  const auto grid = build_grid(testing::planar_scene_with_sphere({1.1, 0.9, 0.0}, 0.35), 0.05);
  auto weights = smooth_weights();
  if (!c.velocity_terms) {
    weights.soft_limits = false;
    weights.velocity = false;
  }
  GraspTarget target;
  target.position = Eigen::Vector3d(0.5, 1.5, 0.0);
  target.rotation = Eigen::AngleAxisd(1.0, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  VelocityTarget vel{Eigen::MatrixXd::Zero(1, 2)};
  const CostModel cost(robot, &grid, weights, target, vel);
  std::vector<double> times;
  for (int i = 0; i < 8; ++i)
    times.push_back(i / 7.0);
  int checked = 0;
  int attempts = 0;
  while (checked < 3 && attempts < 30) {
    ++attempts;
    const auto p = random_parameters(robot, c.family, 5, c.zero_velocity, c.with_goal, rng);
    const ElboObjective obj(cost, p, TrainableSet{}, times, 3, 64, rng());
    const auto x = obj.initial_parameters();
    const auto check = check_gradient(obj, x, 2);
    if (!check.smooth)
      continue;
    EXPECT_LT(check.max_relative_error, 1e-4) << "worst component " << check.worst_index;
    ++checked;
  }
  EXPECT_EQ(checked, 3);
}

INSTANTIATE_TEST_SUITE_P(
    Families, GradientFidelity,
    ::testing::Values(GradientCase{KernelFamily::Matern52, true, true, true},
                      GradientCase{KernelFamily::Matern52, false, false, true},
                      GradientCase{KernelFamily::Matern32, true, true, true},
                      GradientCase{KernelFamily::Matern12, false, true, false}));

} // namespace
} // namespace vgpmp
