#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "vgpmp/bench.hpp"
#include "vgpmp/io.hpp"
#include "vgpmp/planner.hpp"

using namespace vgpmp;

namespace {

const std::string kData = VGPMP_DATA_DIR;

PlannerConfig desk_config() { return io::load_config(kData + "/configs/desk.json"); }

PlannerConfig quick_config() {
  auto c = desk_config();
  c.iterations = 40;
  c.n_features = 256;
  c.posterior_samples = 8;
  return c;
}

RobotSpec planar2() { return io::load_robot(kData + "/robots/planar2.json"); }

SdfGrid empty_grid() {
  PrimitiveScene s;
  s.bounds = {Eigen::Vector3d(-1.2, -1.2, -0.1), Eigen::Vector3d(1.2, 1.2, 0.1)};
  return build_grid(s, 0.05);
}

PlanningProblem free_problem() {
  PlanningProblem p;
  p.start = Eigen::Vector2d(-1.0, 0.5);
  p.goal = Eigen::Vector2d(1.0, 0.4);
  return p;
}

Eigen::MatrixXd mean_joints_at(const PlanResult &r, const RobotSpec &robot, const std::vector<double> &t) {
  const auto m = posterior_moments(r.model.state, r.model.kernel, t);
  Eigen::MatrixXd out(m.mean.rows(), m.mean.cols());
  for (Eigen::Index i = 0; i < m.mean.rows(); ++i)
    out.row(i) = squash(robot.limits, m.mean.row(i).transpose()).transpose();
  return out;
}

bool within_limits(const Trajectory &t, const JointLimits &l) {
  for (Eigen::Index r = 0; r < t.joints.rows(); ++r)
    for (Eigen::Index j = 0; j < t.joints.cols(); ++j)
      if (!(t.joints(r, j) > l.lower[j] && t.joints(r, j) < l.upper[j]))
        return false;
  return true;
}

} // namespace

TEST(Config, DefaultsAndValidation) {
  PlannerConfig c;
  EXPECT_EQ(c.iterations, 150);
  EXPECT_EQ(c.adam.beta1, 0.8);
  EXPECT_EQ(c.adam.beta2, 0.95);
  EXPECT_EQ(c.adam.learning_rate, 0.09);
  EXPECT_EQ(c.kernel_family, KernelFamily::Matern52);
  EXPECT_EQ(c.kernel(3).dims(), 3);
  c.num_inducing = 2;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = PlannerConfig{};
  c.time_steps = 1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = PlannerConfig{};
  c.length_scale = Eigen::Vector2d(0.3, 0.4);
  EXPECT_THROW(c.kernel(3), InvalidArgument);
}

TEST(Plan, EmptySceneIsFreeAndExact) {
  const auto robot = planar2();
  const auto grid = empty_grid();
  const auto c = quick_config();
  const auto p = free_problem();
  const auto r = plan(c, robot, &grid, p);
  EXPECT_EQ(collision_cost(robot, grid, c.weights, r.mean.joints), 0.0);
  EXPECT_TRUE(endpoints_match(r.mean, p));
  EXPECT_EQ(r.mean.size(), c.time_steps);
  EXPECT_EQ(static_cast<int>(r.loss_trace.size()), c.iterations);
  EXPECT_EQ(static_cast<int>(r.samples.size()), c.posterior_samples);
  EXPECT_TRUE(check_success(c, robot, &grid, r).success);
}

TEST(Plan, RejectsEndpointsOnLimits) {
  const auto robot = planar2();
  const auto grid = empty_grid();
  auto p = free_problem();
  p.start[0] = robot.limits.upper[0];
  EXPECT_THROW(plan(quick_config(), robot, &grid, p), InfeasibleEndpoint);
  p = free_problem();
  p.goal = Eigen::Vector2d(0.0, robot.limits.lower[1] - 1.0);
  EXPECT_THROW(plan(quick_config(), robot, &grid, p), InfeasibleEndpoint);
}

TEST(Plan, DeterministicForSeed) {
  const auto suite = load_suite(kData + "/suites/desk2d.json");
  const auto grids = build_grids(suite);
  auto c = quick_config();
  c.seed = 3;
  const auto a = plan(c, suite.robot, &grids[0], suite.problems[0].problem);
  const auto b = plan(c, suite.robot, &grids[0], suite.problems[0].problem);
  EXPECT_TRUE(same_plan(a, b));
  c.seed = 4;
  const auto d = plan(c, suite.robot, &grids[0], suite.problems[0].problem);
  EXPECT_FALSE(same_plan(a, d));
}

TEST(Plan, GateSelectedClearsMargin) {
  const auto suite = load_suite(kData + "/suites/desk2d.json");
  const auto grids = build_grids(suite);
  const auto c = desk_config();
  for (std::size_t i = 0; i < suite.problems.size(); ++i) {
    if (suite.problems[i].name.rfind("gate", 0) != 0)
      continue;
    const auto r = plan(c, suite.robot, &grids[i], suite.problems[i].problem);
    int clear = 0;
    double worst = 1e9;
    for (Eigen::Index t = 0; t < r.selected.size(); ++t) {
      const double d = min_surface_distance(suite.robot, grids[i], r.selected.joints.row(t));
      worst = std::min(worst, d);
      clear += d >= c.weights.eps;
    }
    EXPECT_GT(worst, 0.0) << suite.problems[i].name;
    EXPECT_GE(clear, 0.95 * static_cast<double>(r.selected.size())) << suite.problems[i].name;
  }
}

TEST(Plan, SuiteInvariantsAcrossSeeds) {
  // limits, endpoints, finite traces and loss decrease over the 2-link suite
  const auto suite = load_suite(kData + "/suites/desk2d.json");
  const auto grids = build_grids(suite);
  auto c = desk_config();
  int runs = 0, decreased = 0;
  for (std::size_t i = 0; i < suite.problems.size(); ++i)
    for (auto seed : suite.seeds) {
      c.seed = seed;
      const auto &p = suite.problems[i].problem;
      const auto r = plan(c, suite.robot, &grids[i], p);
      ++runs;
      ASSERT_EQ(static_cast<int>(r.loss_trace.size()), c.iterations);
      for (double l : r.loss_trace)
        ASSERT_TRUE(std::isfinite(l));
      decreased += r.final_loss < r.loss_trace.front();
      std::vector<const Trajectory *> all{&r.mean, &r.selected};
      for (const auto &s : r.samples)
        all.push_back(&s);
      for (const auto *t : all) {
        EXPECT_TRUE(within_limits(*t, suite.robot.limits));
        EXPECT_TRUE(endpoints_match(*t, p));
      }
      EXPECT_LE(collision_cost(suite.robot, grids[i], c.weights, r.selected.joints),
                collision_cost(suite.robot, grids[i], c.weights, r.mean.joints));
    }
  EXPECT_GE(decreased, 0.95 * runs);
}

TEST(Plan, IterationCostScalesWithTimeGrid) {
  const auto robot = planar2();
  const auto grid = empty_grid();
  auto c = quick_config();
  const auto model = initial_model(c, robot, free_problem());
  const CostModel cost(robot, &grid, c.weights, std::nullopt, std::nullopt);
  auto seconds = [&](int steps) {
    const ElboObjective obj(cost, model, c.trainable, uniform_times(0.0, 1.0, steps), c.samples, 256, 1);
    const auto x = obj.initial_parameters();
    double best = 1e9;
    for (int rep = 0; rep < 7; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int k = 0; k < 5; ++k)
        (void)obj.evaluate(x, static_cast<std::uint64_t>(k), true);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  const double t40 = seconds(40), t80 = seconds(80);
  EXPECT_LT(t80, 3.0 * t40) << t40 << " " << t80;
}

TEST(Intervals, DegenerateAndPinned) {
  const auto robot = planar2();
  const auto grid = empty_grid();
  const auto r = plan(quick_config(), robot, &grid, free_problem());
  const auto times = uniform_times(0.0, 1.0, 11);
  const auto zero = intervals(r, robot, times, 0.0);
  EXPECT_EQ(zero.low, zero.high);
  EXPECT_LT((zero.low - mean_joints_at(r, robot, times)).cwiseAbs().maxCoeff(), 1e-12);
  const auto two = intervals(r, robot, times, 2.0);
  EXPECT_LT((two.high.row(0) - two.low.row(0)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((two.high.row(10) - two.low.row(10)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_TRUE(((two.high - two.low).array() >= 0.0).all());
  EXPECT_GT((two.high - two.low).maxCoeff(), 1e-3);
  EXPECT_THROW(intervals(r, robot, times, -1.0), InvalidArgument);
}

TEST(Intervals, CoverSampledPaths) {
  const auto robot = planar2();
  const auto grid = empty_grid();
  const auto r = plan(quick_config(), robot, &grid, free_problem());
  const auto times = uniform_times(0.0, 1.0, 21);
  const auto iv = intervals(r, robot, times, 2.0);
  const int count = 4000;
  const auto paths = draw_samples(r.model.state, r.model.kernel, count, 123, 2048);
  Eigen::MatrixXi inside = Eigen::MatrixXi::Zero(21, 2);
  for (const auto &s : paths) {
    const Eigen::MatrixXd f = s.evaluate(times);
    for (int t = 0; t < 21; ++t) {
      const Eigen::VectorXd th = squash(robot.limits, f.row(t).transpose());
      for (int j = 0; j < 2; ++j)
        inside(t, j) += th[j] >= iv.low(t, j) - 1e-9 && th[j] <= iv.high(t, j) + 1e-9;
    }
  }
  EXPECT_GE(inside.minCoeff(), static_cast<int>(0.93 * count));
}

TEST(Replan, AtTimeZeroReproducesPlanLoss) {
  const auto suite = load_suite(kData + "/suites/desk2d.json");
  const auto grids = build_grids(suite);
  const auto c = quick_config();
  const auto &p = suite.problems[1].problem;
  const auto r = plan(c, suite.robot, &grids[1], p);
  const auto remapped = replan_model(c, suite.robot, r, 0.0, p.start);
  for (std::uint64_t it : {0ull, 5ull, 17ull}) {
    const double a = evaluate_loss(c, suite.robot, &grids[1], p, r.model, 0.0, it);
    const double b = evaluate_loss(c, suite.robot, &grids[1], p, remapped, 0.0, it);
    EXPECT_NEAR(a, b, 1e-6 * std::max(1.0, std::abs(a)));
  }
}

TEST(Replan, UnchangedWorldStaysClose) {
  const auto suite = load_suite(kData + "/suites/desk2d.json");
  const auto grids = build_grids(suite);
  const auto c = desk_config();
  const auto &p = suite.problems[0].problem;
  const auto r = plan(c, suite.robot, &grids[0], p);
  const double tc = 0.5;
  const Eigen::VectorXd state = mean_joints_at(r, suite.robot, {tc}).row(0).transpose();
  const auto n = replan(c, suite.robot, &grids[0], r, tc, state);
  EXPECT_EQ(n.mean.times.front(), tc);
  EXPECT_LT((n.mean.joints.row(0).transpose() - state).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_TRUE(endpoints_match(n.mean, n.problem));
  const Eigen::MatrixXd old_tail = mean_joints_at(r, suite.robot, n.mean.times);
  double length = 0.0;
  for (Eigen::Index t = 1; t < old_tail.rows(); ++t)
    length += (old_tail.row(t) - old_tail.row(t - 1)).norm();
  double dev = 0.0;
  for (Eigen::Index t = 0; t < old_tail.rows(); ++t)
    dev = std::max(dev, (n.mean.joints.row(t) - old_tail.row(t)).norm());
  EXPECT_LT(dev, 0.05 * length) << "deviation " << dev << " length " << length;
}

TEST(Replan, AvoidsNewObstacle) {
  const auto robot = planar2();
  const auto grid = empty_grid();
  auto c = desk_config();
  const auto p = free_problem();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    c.seed = seed;
    const auto r = plan(c, robot, &grid, p);
    // obstacle at the old tip position at t = 0.7
    const Eigen::VectorXd q = mean_joints_at(r, robot, {0.7}).row(0).transpose();
    PrimitiveScene scene;
    scene.bounds = {Eigen::Vector3d(-1.2, -1.2, -0.1), Eigen::Vector3d(1.2, 1.2, 0.1)};
    scene.primitives.push_back(SpherePrimitive{forward_kinematics(robot, q).back().position, 0.1});
    const auto blocked = build_grid(scene, 0.01);
    ASSERT_LE(min_surface_distance(robot, blocked, r.mean.joints), 0.0);
    const double tc = 0.3;
    const Eigen::VectorXd state = mean_joints_at(r, robot, {tc}).row(0).transpose();
    const auto n = replan(c, robot, &blocked, r, tc, state);
    EXPECT_GT(min_surface_distance(robot, blocked, n.selected.joints), 0.0) << "seed " << seed;
    const auto check = check_success(c, robot, &blocked, n);
    EXPECT_TRUE(check.success) << "seed " << seed << " densified min distance " << check.min_surface_distance;
    EXPECT_EQ(static_cast<int>(n.loss_trace.size()), c.replan_iterations);
  }
}

TEST(Replan, RejectsBadTime) {
  const auto robot = planar2();
  const auto grid = empty_grid();
  const auto c = quick_config();
  const auto r = plan(c, robot, &grid, free_problem());
  EXPECT_THROW(replan(c, robot, &grid, r, 1.0, free_problem().start), InvalidArgument);
  EXPECT_THROW(replan(c, robot, &grid, r, -0.1, free_problem().start), InvalidArgument);
}
