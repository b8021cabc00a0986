#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "vgpmp/errors.hpp"
#include "vgpmp/io.hpp"
#include "vgpmp/objective.hpp"
#include "vgpmp/planner.hpp"
#include "vgpmp/robot.hpp"
#include "vgpmp/sdf.hpp"

namespace vgpmp {

/// Negated collision term; 0 iff every sphere keeps the safety margin.
inline double clearance(const RobotSpec &robot, const SdfGrid &grid, const ObjectiveWeights &weights,
                        const Trajectory &traj) {
  const double cost = collision_cost(robot, grid, weights, traj.joints);
  return cost == 0.0 ? 0.0 : -0.5 * cost;
}

/// Distance travelled by the end of the last link.
inline double path_length(const RobotSpec &robot, const Trajectory &traj) {
  double total = 0.0;
  Eigen::Vector3d prev = Eigen::Vector3d::Zero();
  for (Eigen::Index t = 0; t < traj.size(); ++t) {
    const Eigen::Vector3d p =
        forward_kinematics(robot, Eigen::VectorXd(traj.joints.row(t).transpose())).back().position;
    if (t > 0)
      total += (p - prev).norm();
    prev = p;
  }
  return total;
}

/// Joint-space straight line between start and goal on the given times.
inline Trajectory straight_line(const Eigen::VectorXd &start, const Eigen::VectorXd &goal,
                                const std::vector<double> &times) {
  Trajectory t;
  t.times = times;
  t.joints.resize(static_cast<Eigen::Index>(times.size()), start.size());
  const double t0 = times.front();
  const double t1 = times.back();
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double s = (times[i] - t0) / (t1 - t0);
    t.joints.row(static_cast<Eigen::Index>(i)) = ((1.0 - s) * start + s * goal).transpose();
  }
  return t;
}

struct SuiteProblem {
  std::string name;
  PlanningProblem problem;
  /// replaces the suite scene for this problem
  std::optional<std::string> scene_file;
  std::optional<io::SceneFile> scene;
};

struct ProblemSuite {
  std::string name;
  std::string robot_file;
  std::string scene_file;
  RobotSpec robot;
  io::SceneFile scene;
  std::vector<SuiteProblem> problems;
  std::vector<std::uint64_t> seeds;

  void validate() const {
    if (problems.empty())
      throw InvalidArgument("suite needs at least one problem");
    if (seeds.empty())
      throw InvalidArgument("suite needs at least one seed");
    const auto inside = [&](const Eigen::VectorXd &q) {
      if (q.size() != robot.dof())
        return false;
      for (Eigen::Index i = 0; i < q.size(); ++i)
        if (!(q[i] > robot.limits.lower[i] && q[i] < robot.limits.upper[i]))
          return false;
      return true;
    };
    for (const auto &p : problems) {
      if (!inside(p.problem.start))
        throw OutOfLimits("start of problem '" + p.name + "' is not strictly inside the joint limits");
      if (p.problem.goal && !inside(*p.problem.goal))
        throw OutOfLimits("goal of problem '" + p.name + "' is not strictly inside the joint limits");
      if (p.name.find_first_of(",\n\"") != std::string::npos)
        throw InvalidArgument("problem names must not contain commas, quotes or newlines");
    }
  }
};

/// Loads a suite file; robot and scene paths resolve against its directory.
inline ProblemSuite load_suite(const std::string &path) {
  const auto j = io::read_json(path);
  io::detail::check_keys(j, {"name", "robot", "scene", "problems", "seeds"}, "suite");
  const auto base = std::filesystem::path(path).parent_path();
  ProblemSuite s;
  s.name = io::detail::get_or<std::string>(j, "name", std::filesystem::path(path).stem().string());
  s.robot_file = (base / j.at("robot").get<std::string>()).string();
  s.scene_file = (base / j.at("scene").get<std::string>()).string();
  s.robot = io::load_robot(s.robot_file);
  s.scene = io::load_scene(s.scene_file);
  int index = 0;
  for (const auto &p : j.at("problems")) {
    io::detail::check_keys(p, {"name", "start", "goal", "grasp", "velocity_target", "scene"}, "suite problem");
    SuiteProblem sp;
    sp.name = io::detail::get_or<std::string>(p, "name", "p" + std::to_string(index));
    sp.problem = io::problem_from_json(p);
    if (p.contains("scene")) {
      sp.scene_file = (base / p["scene"].get<std::string>()).string();
      sp.scene = io::load_scene(*sp.scene_file);
    }
    s.problems.push_back(std::move(sp));
    ++index;
  }
  s.seeds = j.contains("seeds") ? j["seeds"].get<std::vector<std::uint64_t>>() : std::vector<std::uint64_t>{0};
  try {
    s.validate();
  } catch (const InvalidArgument &e) {
    throw ParseError(path + ": " + e.what());
  }
  return s;
}

struct ProblemMetrics {
  int problem = 0;
  std::string name;
  std::uint64_t seed = 0;
  bool success = false;
  double clearance = std::numeric_limits<double>::quiet_NaN();
  double path_length = std::numeric_limits<double>::quiet_NaN();
  double min_distance = std::numeric_limits<double>::quiet_NaN();
  /// clearance of the straight joint-space line; NaN without a goal
  double baseline_clearance = std::numeric_limits<double>::quiet_NaN();
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  /// empty unless planning threw
  std::string error;

  [[nodiscard]] bool obstructed() const { return baseline_clearance < 0.0; }
};

struct Aggregate {
  /// seed value, or -1 for the pooled row
  std::int64_t seed = -1;
  int problems = 0;
  int successes = 0;
  double accuracy = 0.0;
  double mc_mean = 0.0;
  double mc_std = 0.0;
  double mpl_mean = 0.0;
  double mpl_std = 0.0;
};

struct MetricsReport {
  std::vector<ProblemMetrics> rows;
  std::vector<Aggregate> per_seed;
  Aggregate pooled;
};

namespace detail {

inline bool same_double(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

/// Mean and population std of the finite entries.
inline std::pair<double, double> mean_std(const std::vector<double> &v) {
  double sum = 0.0;
  int n = 0;
  for (double x : v)
    if (std::isfinite(x)) {
      sum += x;
      ++n;
    }
  if (n == 0)
    return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const double mean = sum / n;
  double ss = 0.0;
  for (double x : v)
    if (std::isfinite(x))
      ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

inline Aggregate aggregate(const std::vector<const ProblemMetrics *> &rows, std::int64_t seed) {
  Aggregate a;
  a.seed = seed;
  a.problems = static_cast<int>(rows.size());
  std::vector<double> mc;
  std::vector<double> mpl;
  for (const auto *r : rows) {
    a.successes += r->success ? 1 : 0;
    mc.push_back(r->clearance);
    mpl.push_back(r->path_length);
  }
  a.accuracy = a.problems > 0 ? static_cast<double>(a.successes) / a.problems : 0.0;
  std::tie(a.mc_mean, a.mc_std) = mean_std(mc);
  std::tie(a.mpl_mean, a.mpl_std) = mean_std(mpl);
  return a;
}

} // namespace detail

inline bool operator==(const Aggregate &a, const Aggregate &b) {
  using detail::same_double;
  return a.seed == b.seed && a.problems == b.problems && a.successes == b.successes &&
         same_double(a.accuracy, b.accuracy) && same_double(a.mc_mean, b.mc_mean) &&
         same_double(a.mc_std, b.mc_std) && same_double(a.mpl_mean, b.mpl_mean) &&
         same_double(a.mpl_std, b.mpl_std);
}

/// Equality of everything except wall-clock timings.
inline bool same_metrics(const ProblemMetrics &a, const ProblemMetrics &b, bool with_timing = false) {
  using detail::same_double;
  return a.problem == b.problem && a.name == b.name && a.seed == b.seed && a.success == b.success &&
         same_double(a.clearance, b.clearance) && same_double(a.path_length, b.path_length) &&
         same_double(a.min_distance, b.min_distance) && same_double(a.baseline_clearance, b.baseline_clearance) &&
         same_double(a.final_loss, b.final_loss) && a.error == b.error &&
         (!with_timing || same_double(a.seconds, b.seconds));
}

inline bool same_report(const MetricsReport &a, const MetricsReport &b, bool with_timing = false) {
  if (a.rows.size() != b.rows.size() || a.per_seed.size() != b.per_seed.size() || !(a.pooled == b.pooled))
    return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i)
    if (!same_metrics(a.rows[i], b.rows[i], with_timing))
      return false;
  for (std::size_t i = 0; i < a.per_seed.size(); ++i)
    if (!(a.per_seed[i] == b.per_seed[i]))
      return false;
  return true;
}

inline bool operator==(const MetricsReport &a, const MetricsReport &b) { return same_report(a, b, true); }

/// Per-seed aggregates in first-appearance order, then the pooled one.
inline void recompute_aggregates(MetricsReport &report) {
  std::vector<std::uint64_t> seeds;
  for (const auto &r : report.rows)
    if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end())
      seeds.push_back(r.seed);
  report.per_seed.clear();
  for (auto s : seeds) {
    std::vector<const ProblemMetrics *> rows;
    for (const auto &r : report.rows)
      if (r.seed == s)
        rows.push_back(&r);
    report.per_seed.push_back(detail::aggregate(rows, static_cast<std::int64_t>(s)));
  }
  std::vector<const ProblemMetrics *> all;
  for (const auto &r : report.rows)
    all.push_back(&r);
  report.pooled = detail::aggregate(all, -1);
}

/// Plans one problem and measures the selected trajectory. Never throws for
/// planning failures; they land in `error`.
inline ProblemMetrics run_problem(const ProblemSuite &suite, const SdfGrid &grid, PlannerConfig config,
                                  int index, std::uint64_t seed, PlanResult *result_out = nullptr) {
  ProblemMetrics m;
  m.problem = index;
  m.name = suite.problems[static_cast<std::size_t>(index)].name;
  m.seed = seed;
  config.seed = seed;
  const auto &problem = suite.problems[static_cast<std::size_t>(index)].problem;
  const auto begin = std::chrono::steady_clock::now();
  try {
    auto result = plan(config, suite.robot, &grid, problem);
    const auto check = check_success(config, suite.robot, &grid, result);
    m.success = check.success;
    m.min_distance = check.min_surface_distance;
    m.clearance = clearance(suite.robot, grid, config.weights, result.selected);
    m.path_length = path_length(suite.robot, result.selected);
    m.final_loss = result.final_loss;
    if (problem.goal)
      m.baseline_clearance =
          clearance(suite.robot, grid, config.weights, straight_line(problem.start, *problem.goal, result.selected.times));
    if (result_out)
      *result_out = std::move(result);
  } catch (const std::exception &e) {
    m.success = false;
    m.error = e.what();
    for (char &ch : m.error)
      if (ch == ',' || ch == '\n' || ch == '"')
        ch = ' ';
  }
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
  return m;
}

/// One grid per problem; problems sharing a scene file share the grid.
inline std::vector<SdfGrid> build_grids(const ProblemSuite &suite) {
  std::map<std::string, SdfGrid> cache;
  std::vector<SdfGrid> out;
  for (const auto &p : suite.problems) {
    const auto &file = p.scene_file ? *p.scene_file : suite.scene_file;
    const auto &scene = p.scene ? *p.scene : suite.scene;
    auto it = cache.find(file);
    if (it == cache.end())
      it = cache.emplace(file, build_grid(scene.scene, scene.resolution)).first;
    out.push_back(it->second);
  }
  return out;
}

/// Every (problem, seed) pair in problem-major order. The optional callback
/// sees each row and its plan as soon as it is done.
template <typename Callback>
MetricsReport run_benchmark(const ProblemSuite &suite, const PlannerConfig &config, Callback &&on_row) {
  suite.validate();
  const auto grids = build_grids(suite);
  MetricsReport report;
  for (int i = 0; i < static_cast<int>(suite.problems.size()); ++i)
    for (auto seed : suite.seeds) {
      PlanResult result;
      report.rows.push_back(run_problem(suite, grids[static_cast<std::size_t>(i)], config, i, seed, &result));
      on_row(report.rows.back(), result);
    }
  recompute_aggregates(report);
  return report;
}

inline MetricsReport run_benchmark(const ProblemSuite &suite, const PlannerConfig &config) {
  return run_benchmark(suite, config, [](const ProblemMetrics &, const PlanResult &) {});
}

// ---------------------------------------------------------------- report files

inline constexpr const char *kReportHeader =
    "kind,problem,name,seed,success,clearance,path_length,min_distance,baseline_clearance,final_loss,seconds,"
    "problems,successes,accuracy,mc_mean,mc_std,mpl_mean,mpl_std,error";

/// One "problem" row per run, then "seed" rows and a final "pooled" row.
inline std::string report_csv(const MetricsReport &r) {
  using io::format_double;
  std::ostringstream out;
  out << kReportHeader << "\n";
  for (const auto &m : r.rows)
    out << "problem," << m.problem << "," << m.name << "," << m.seed << "," << (m.success ? 1 : 0) << ","
        << format_double(m.clearance) << "," << format_double(m.path_length) << ","
        << format_double(m.min_distance) << "," << format_double(m.baseline_clearance) << ","
        << format_double(m.final_loss) << "," << format_double(m.seconds) << ",,,,,,,," << m.error << "\n";
  auto agg = [&](const Aggregate &a, const char *kind) {
    out << kind << ",,," << (a.seed >= 0 ? std::to_string(a.seed) : std::string()) << ",,,,,,,," << a.problems
        << "," << a.successes << "," << format_double(a.accuracy) << "," << format_double(a.mc_mean) << ","
        << format_double(a.mc_std) << "," << format_double(a.mpl_mean) << "," << format_double(a.mpl_std)
        << ",\n";
  };
  for (const auto &a : r.per_seed)
    agg(a, "seed");
  agg(r.pooled, "pooled");
  return out.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string &line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ','))
    cells.push_back(cell);
  if (!line.empty() && line.back() == ',')
    cells.emplace_back();
  return cells;
}

inline double parse_double(const std::string &s) {
  if (s == "nan" || s == "-nan")
    return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size())
      throw std::invalid_argument(s);
    return v;
  } catch (const std::exception &) {
    throw ParseError("bad number in report: '" + s + "'");
  }
}

} // namespace detail

/// Parses report_csv output; stored aggregates must agree with the rows.
inline MetricsReport report_from_csv(const std::string &text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader)
    throw ParseError("report CSV has an unexpected header");
  MetricsReport r;
  std::vector<Aggregate> stored;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    const auto c = detail::split_csv_line(line);
    if (c.size() != 19)
      throw ParseError("report CSV row has " + std::to_string(c.size()) + " cells");
    if (c[0] == "problem") {
      ProblemMetrics m;
      m.problem = std::stoi(c[1]);
      m.name = c[2];
      m.seed = std::stoull(c[3]);
      m.success = c[4] == "1";
      m.clearance = detail::parse_double(c[5]);
      m.path_length = detail::parse_double(c[6]);
      m.min_distance = detail::parse_double(c[7]);
      m.baseline_clearance = detail::parse_double(c[8]);
      m.final_loss = detail::parse_double(c[9]);
      m.seconds = detail::parse_double(c[10]);
      m.error = c[18];
      r.rows.push_back(std::move(m));
    } else if (c[0] == "seed" || c[0] == "pooled") {
      Aggregate a;
      a.seed = c[0] == "seed" ? static_cast<std::int64_t>(std::stoull(c[3])) : -1;
      a.problems = std::stoi(c[11]);
      a.successes = std::stoi(c[12]);
      a.accuracy = detail::parse_double(c[13]);
      a.mc_mean = detail::parse_double(c[14]);
      a.mc_std = detail::parse_double(c[15]);
      a.mpl_mean = detail::parse_double(c[16]);
      a.mpl_std = detail::parse_double(c[17]);
      stored.push_back(a);
    } else {
      throw ParseError("unknown report row kind '" + c[0] + "'");
    }
  }
  recompute_aggregates(r);
  auto expected = r.per_seed;
  expected.push_back(r.pooled);
  if (stored.size() != expected.size() || !std::equal(stored.begin(), stored.end(), expected.begin()))
    throw ParseError("report aggregates disagree with its rows");
  return r;
}

namespace detail {

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline double number_from(const nlohmann::json &j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline nlohmann::json to_json(const Aggregate &a) {
  return {{"seed", a.seed},
          {"problems", a.problems},
          {"successes", a.successes},
          {"accuracy", number_or_null(a.accuracy)},
          {"mc_mean", number_or_null(a.mc_mean)},
          {"mc_std", number_or_null(a.mc_std)},
          {"mpl_mean", number_or_null(a.mpl_mean)},
          {"mpl_std", number_or_null(a.mpl_std)}};
}

inline Aggregate aggregate_from_json(const nlohmann::json &j) {
  Aggregate a;
  a.seed = j.at("seed").get<std::int64_t>();
  a.problems = j.at("problems").get<int>();
  a.successes = j.at("successes").get<int>();
  a.accuracy = number_from(j.at("accuracy"));
  a.mc_mean = number_from(j.at("mc_mean"));
  a.mc_std = number_from(j.at("mc_std"));
  a.mpl_mean = number_from(j.at("mpl_mean"));
  a.mpl_std = number_from(j.at("mpl_std"));
  return a;
}

} // namespace detail

inline nlohmann::json report_json(const MetricsReport &r) {
  using detail::number_or_null;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto &m : r.rows)
    rows.push_back({{"problem", m.problem},
                    {"name", m.name},
                    {"seed", m.seed},
                    {"success", m.success},
                    {"clearance", number_or_null(m.clearance)},
                    {"path_length", number_or_null(m.path_length)},
                    {"min_distance", number_or_null(m.min_distance)},
                    {"baseline_clearance", number_or_null(m.baseline_clearance)},
                    {"final_loss", number_or_null(m.final_loss)},
                    {"seconds", m.seconds},
                    {"error", m.error}});
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto &a : r.per_seed)
    seeds.push_back(detail::to_json(a));
  return {{"rows", rows}, {"per_seed", seeds}, {"pooled", detail::to_json(r.pooled)}};
}

inline MetricsReport report_from_json(const nlohmann::json &j) {
  MetricsReport r;
  for (const auto &row : j.at("rows")) {
    ProblemMetrics m;
    m.problem = row.at("problem").get<int>();
    m.name = row.at("name").get<std::string>();
    m.seed = row.at("seed").get<std::uint64_t>();
    m.success = row.at("success").get<bool>();
    m.clearance = detail::number_from(row.at("clearance"));
    m.path_length = detail::number_from(row.at("path_length"));
    m.min_distance = detail::number_from(row.at("min_distance"));
    m.baseline_clearance = detail::number_from(row.at("baseline_clearance"));
    m.final_loss = detail::number_from(row.at("final_loss"));
    m.seconds = row.at("seconds").get<double>();
    m.error = row.at("error").get<std::string>();
    r.rows.push_back(std::move(m));
  }
  for (const auto &a : j.at("per_seed"))
    r.per_seed.push_back(detail::aggregate_from_json(a));
  r.pooled = detail::aggregate_from_json(j.at("pooled"));
  return r;
}

} // namespace vgpmp
