#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "vgpmp/bench.hpp"
#include "vgpmp/io.hpp"

using namespace vgpmp;
using vgpmp::testing::planar_arm;
using vgpmp::testing::planar_scene_with_sphere;

namespace {

const std::string kData = VGPMP_DATA_DIR;

PlannerConfig quick_config() {
  auto c = io::load_config(kData + "/configs/desk.json");
  c.iterations = 30;
  c.n_features = 256;
  c.posterior_samples = 8;
  return c;
}

Trajectory rows(const std::vector<double> &times, const Eigen::MatrixXd &q) {
  Trajectory t;
  t.times = times;
  t.joints = q;
  return t;
}

ProblemSuite open_suite(int problems, std::vector<std::uint64_t> seeds) {
  ProblemSuite s;
  s.name = "open";
  s.robot = io::load_robot(kData + "/robots/planar2.json");
  s.scene_file = "<memory>";
  s.scene.scene.bounds = {Eigen::Vector3d(-1.2, -1.2, -0.1), Eigen::Vector3d(1.2, 1.2, 0.1)};
  s.scene.resolution = 0.05;
  for (int i = 0; i < problems; ++i) {
    SuiteProblem p;
    p.name = "open_" + std::to_string(i);
    p.problem.start = Eigen::Vector2d(-1.0 + 0.2 * i, 0.5);
    p.problem.goal = Eigen::Vector2d(1.0, 0.3 - 0.2 * i);
    s.problems.push_back(p);
  }
  s.seeds = std::move(seeds);
  return s;
}

MetricsReport synthetic_report() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  MetricsReport r;
  for (int p = 0; p < 3; ++p)
    for (std::uint64_t seed : {0u, 7u}) {
      ProblemMetrics m;
      m.problem = p;
      m.name = "prob_" + std::to_string(p);
      m.seed = seed;
      m.success = (p + seed) % 2 == 0;
      m.clearance = -std::abs(n(rng)) / 3.0;
      m.path_length = 1.0 + std::abs(n(rng));
      m.min_distance = n(rng) * 1e-3;
      m.baseline_clearance = p == 1 ? std::numeric_limits<double>::quiet_NaN() : -std::abs(n(rng)) * 7.1;
      m.final_loss = 1e3 * n(rng);
      m.seconds = 0.1 + std::abs(n(rng));
      r.rows.push_back(m);
    }
  ProblemMetrics failed;
  failed.problem = 3;
  failed.name = "broken";
  failed.seed = 0;
  failed.error = "start is outside the joint limits";
  r.rows.push_back(failed);
  recompute_aggregates(r);
  return r;
}

} // namespace

TEST(Clearance, ClearTrajectoryIsZero) {
  const auto arm = planar_arm(2, 0.5, 4, 0.05);
  const auto grid = build_grid(planar_scene_with_sphere(Eigen::Vector3d(0, -1.5, 0), 0.2), 0.05);
  Eigen::MatrixXd q(3, 2);
  q << 0.0, 0.0, 0.5, 0.2, 1.0, 0.4;
  const double c = clearance(arm, grid, ObjectiveWeights{}, rows({0.0, 0.5, 1.0}, q));
  EXPECT_EQ(c, 0.0);
  EXPECT_FALSE(std::signbit(c));
}

TEST(Clearance, SingleViolationExample) {
  RobotSpec r;
  r.joints = {{1.0, 0.0, 0.0, 0.0}};
  r.limits.lower = Eigen::VectorXd::Constant(1, -3.0);
  r.limits.upper = Eigen::VectorXd::Constant(1, 3.0);
  r.spheres = {{0, Eigen::Vector3d::Zero(), 0.1}};
  // sphere surface touches the obstacle surface: hinge 0.05 at sigma 0.005
  const auto grid = build_grid(planar_scene_with_sphere(Eigen::Vector3d(1.5, 0, 0), 0.4), 0.05);
  ObjectiveWeights w;
  w.sigma_obs = 0.005;
  w.eps = 0.05;
  EXPECT_NEAR(clearance(r, grid, w, rows({0.0}, Eigen::MatrixXd::Zero(1, 1))), -50.0, 1e-9);
  EXPECT_NEAR(clearance(r, grid, w, rows({0.0}, Eigen::MatrixXd::Zero(1, 1))),
              -0.5 * collision_cost(r, grid, w, Eigen::MatrixXd::Zero(1, 1)), 1e-12);
}

TEST(PathLength, ConstantPathIsZero) {
  const auto arm = planar_arm(2);
  const Eigen::MatrixXd q = Eigen::RowVector2d(0.3, -0.7).replicate(10, 1);
  EXPECT_EQ(path_length(arm, rows(uniform_times(0, 1, 10), q)), 0.0);
}

TEST(PathLength, ArcConvergesToAnalytic) {
  const auto arm = planar_arm(2, 1.0);
  const int T = 200;
  const auto traj = straight_line(Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(std::numbers::pi / 2, 0.0),
                                  uniform_times(0, 1, T));
  EXPECT_NEAR(path_length(arm, traj), std::numbers::pi, 1e-3);
  EXPECT_LT(path_length(arm, traj), std::numbers::pi);
}

TEST(PathLength, DensifyingNeverShortens) {
  const auto arm = planar_arm(3, 0.4);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  for (int trial = 0; trial < 20; ++trial) {
    // a smooth random joint curve sampled at nested grids
    Eigen::Matrix3d coef;
    for (int i = 0; i < 9; ++i)
      coef(i) = u(rng);
    auto sample = [&](int T) {
      const auto times = uniform_times(0, 1, T);
      Eigen::MatrixXd q(T, 3);
      for (int t = 0; t < T; ++t) {
        const double s = times[static_cast<std::size_t>(t)];
        q.row(t) = (coef.row(0) * s + coef.row(1) * s * s + coef.row(2) * std::sin(3 * s)) / 3.0;
      }
      return path_length(arm, rows(times, q));
    };
    double prev = 0.0;
    for (int T : {3, 5, 9, 17, 33, 65, 129}) {
      const double l = sample(T);
      EXPECT_GE(l, prev - 1e-12);
      prev = l;
    }
  }
}

TEST(StraightLine, EndpointsAndMidpoint) {
  const auto t = straight_line(Eigen::Vector2d(0, 1), Eigen::Vector2d(2, -1), uniform_times(0.2, 1.0, 5));
  EXPECT_EQ(t.joints.row(0), Eigen::RowVector2d(0, 1));
  EXPECT_EQ(t.joints.row(4), Eigen::RowVector2d(2, -1));
  EXPECT_NEAR((t.joints.row(2) - Eigen::RowVector2d(1, 0)).norm(), 0.0, 1e-15);
}

TEST(Suite, LoadsBundledSuites) {
  const auto desk = load_suite(kData + "/suites/desk2d.json");
  EXPECT_EQ(desk.problems.size(), 12u);
  EXPECT_EQ(desk.seeds.size(), 5u);
  EXPECT_EQ(desk.robot.dof(), 2);
  const auto grids = build_grids(desk);
  EXPECT_EQ(grids.size(), desk.problems.size());
  const auto shelf = load_suite(kData + "/suites/shelf_lite.json");
  EXPECT_EQ(shelf.problems.size(), 6u);
  EXPECT_EQ(shelf.robot.dof(), 7);
  const auto grasp = load_suite(kData + "/suites/grasp.json");
  EXPECT_TRUE(grasp.problems.at(0).problem.grasp.has_value());
  EXPECT_FALSE(grasp.problems.at(0).problem.goal.has_value());
}

TEST(Suite, ValidationCatchesBadProblems) {
  auto s = open_suite(1, {0});
  EXPECT_NO_THROW(s.validate());
  s.problems[0].problem.start[0] = 5.0;
  EXPECT_THROW(s.validate(), OutOfLimits);
  s = open_suite(1, {});
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = open_suite(1, {0});
  s.problems[0].name = "a,b";
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(Benchmark, UnobstructedProblemIsPerfect) {
  const auto s = open_suite(1, {0});
  const auto r = run_benchmark(s, quick_config());
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_TRUE(r.rows[0].error.empty()) << r.rows[0].error;
  EXPECT_EQ(r.pooled.accuracy, 1.0);
  EXPECT_EQ(r.pooled.mc_mean, 0.0);
  EXPECT_EQ(r.rows[0].baseline_clearance, 0.0);
  EXPECT_FALSE(r.rows[0].obstructed());
  EXPECT_GT(r.rows[0].path_length, 0.0);
}

TEST(Benchmark, FailuresAreRecordedNotThrown) {
  auto s = open_suite(2, {0});
  // validate would reject this, so go through run_problem directly
  s.problems[1].problem.goal = Eigen::Vector2d(3.0, 0.0);
  const auto grids = build_grids(s);
  const auto m = run_problem(s, grids[1], quick_config(), 1, 0);
  EXPECT_FALSE(m.success);
  EXPECT_FALSE(m.error.empty());
  EXPECT_EQ(m.error.find(','), std::string::npos);
}

TEST(Benchmark, DeterministicAndConsistent) {
  const auto s = open_suite(2, {0, 3});
  auto c = quick_config();
  int callbacks = 0;
  const auto a = run_benchmark(s, c, [&](const ProblemMetrics &m, const PlanResult &p) {
    ++callbacks;
    EXPECT_EQ(m.final_loss, p.final_loss);
  });
  const auto b = run_benchmark(s, c);
  EXPECT_EQ(callbacks, 4);
  EXPECT_TRUE(same_report(a, b));
  // row order: problem-major, seeds inner
  ASSERT_EQ(a.rows.size(), 4u);
  EXPECT_EQ(a.rows[1].problem, 0);
  EXPECT_EQ(a.rows[1].seed, 3u);
  EXPECT_EQ(a.rows[2].problem, 1);
  auto copy = a;
  recompute_aggregates(copy);
  EXPECT_TRUE(copy == a);
}

TEST(Report, AggregatesMatchIndependentRecount) {
  const auto r = synthetic_report();
  ASSERT_EQ(r.per_seed.size(), 2u);
  EXPECT_EQ(r.per_seed[0].seed, 0);
  EXPECT_EQ(r.per_seed[1].seed, 7);
  EXPECT_EQ(r.pooled.seed, -1);
  for (const auto &a : r.per_seed) {
    int n = 0, ok = 0, measured = 0;
    double sum = 0.0;
    for (const auto &m : r.rows)
      if (static_cast<std::int64_t>(m.seed) == a.seed) {
        ++n;
        ok += m.success;
        if (!std::isnan(m.path_length)) {
          sum += m.path_length;
          ++measured;
        }
      }
    EXPECT_EQ(a.problems, n);
    EXPECT_EQ(a.successes, ok);
    EXPECT_DOUBLE_EQ(a.accuracy, static_cast<double>(ok) / n);
    EXPECT_NEAR(a.mpl_mean, sum / measured, 1e-12);
  }
  EXPECT_EQ(r.pooled.problems, 7);
  EXPECT_DOUBLE_EQ(r.pooled.accuracy, static_cast<double>(r.pooled.successes) / 7.0);
}

TEST(Report, CsvRoundTrip) {
  const auto r = synthetic_report();
  const auto text = report_csv(r);
  EXPECT_EQ(text.substr(0, text.find('\n')), kReportHeader);
  const auto back = report_from_csv(text);
  EXPECT_TRUE(back == r);
  EXPECT_EQ(report_csv(back), text);
}

TEST(Report, JsonRoundTrip) {
  const auto r = synthetic_report();
  const auto j = report_json(r);
  const auto back = report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_TRUE(back == r);
}

TEST(Report, CsvRejectsMalformed) {
  const auto text = report_csv(synthetic_report());
  EXPECT_THROW(report_from_csv("kind,problem\n"), ParseError);
  auto bad = text;
  bad.replace(bad.find("problem,0,"), 10, "problem,0,x,");
  EXPECT_THROW(report_from_csv(bad), ParseError);
  // a stored aggregate that disagrees with the rows
  bad = text;
  const auto pooled = bad.rfind("pooled,");
  bad = bad.substr(0, pooled) + "pooled,,,,,,,,,,,7,0," + bad.substr(bad.find(',', bad.find(",7,", pooled) + 3) + 1);
  EXPECT_THROW(report_from_csv(bad), ParseError);
}
