// vgpmp command-line front end: planning, benchmarking, SDF tools and
// self-checks.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vgpmp/checks.hpp"
#include "vgpmp/vgpmp.hpp"

namespace {

using namespace vgpmp;
using io::Json;

PlannerConfig load_config_or_default(const std::string &path) {
  PlannerConfig c = path.empty() ? PlannerConfig{} : io::load_config(path);
  io::apply_seed_override(c);
  return c;
}

SdfGrid grid_for(const std::string &scene_path, const std::string &grid_path) {
  if (!grid_path.empty())
    return read_sdf(grid_path);
  const auto scene = io::load_scene(scene_path);
  return build_grid(scene.scene, scene.resolution);
}

bool has_suffix(const std::string &s, const std::string &suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

Json plan_json(const PlannerConfig &config, const RobotSpec &robot, const PlanResult &result,
               const SuccessCheck &check, int emit_samples, std::optional<double> alpha) {
  Json j;
  j["mean"] = io::to_json(result.mean);
  j["selected"] = io::to_json(result.selected);
  j["selected_index"] = result.selected_index;
  j["final_loss"] = result.final_loss;
  j["loss_trace"] = result.loss_trace;
  j["wall_clock_seconds"] = result.wall_clock_seconds;
  j["seed"] = config.seed;
  j["success"] = check.success;
  j["min_surface_distance"] = check.min_surface_distance;
  j["kernel"] = io::to_json(result.model.kernel);
  if (emit_samples > 0) {
    Json samples = Json::array();
    for (int i = 0; i < emit_samples && i < static_cast<int>(result.samples.size()); ++i)
      samples.push_back(io::to_json(result.samples[static_cast<std::size_t>(i)]));
    j["samples"] = samples;
  }
  if (alpha) {
    const auto iv = intervals(result, robot, result.mean.times, *alpha, config.squash_slope);
    j["intervals"] = {{"alpha", *alpha},
                      {"times", iv.times},
                      {"low", io::detail::to_json(iv.low)},
                      {"high", io::detail::to_json(iv.high)}};
  }
  return j;
}

void write_plan_outputs(const std::string &out, const std::string &csv, const std::string &checkpoint,
                        const PlannerConfig &config, const RobotSpec &robot, const PlanResult &result,
                        const SuccessCheck &check, int emit_samples, std::optional<double> alpha) {
  if (has_suffix(out, ".csv"))
    io::write_text(out, io::trajectory_csv(result.selected));
  else
    io::write_json(out, plan_json(config, robot, result, check, emit_samples, alpha));
  if (!csv.empty())
    io::write_text(csv, io::trajectory_csv(result.selected));
  if (!checkpoint.empty())
    io::write_json(checkpoint, io::to_json(io::make_checkpoint(config, result)));
  std::printf("%s  loss %.6g  min distance %.4f m  %.2f s  -> %s\n", check.success ? "success" : "FAILURE",
              result.final_loss, check.min_surface_distance, result.wall_clock_seconds, out.c_str());
}

int run_check(bool gradients, bool kl, bool fk, int count, std::uint64_t seed, const std::string &robot_path) {
  if (!gradients && !kl && !fk)
    gradients = kl = fk = true;
  bool ok = true;
  if (kl) {
    const auto r = checks::kl(count, seed);
    const bool pass = r.max_error < 1e-8;
    ok = ok && pass;
    std::printf("%s kl: %d instances, max relative error %.3e\n", pass ? "PASS" : "FAIL", r.instances, r.max_error);
  }
  if (fk) {
    std::mt19937_64 rng(seed);
    const auto robot = robot_path.empty() ? checks::random_chain(7, rng) : io::load_robot(robot_path);
    const auto r = checks::fk(robot, count, seed);
    const bool pass = r.max_error < 1e-10;
    ok = ok && pass;
    std::printf("%s fk: %d configurations, max abs error %.3e\n", pass ? "PASS" : "FAIL", r.instances, r.max_error);
  }
  if (gradients) {
    const int n = std::min(count, 50);
    const auto r = checks::gradients(n, seed);
    const bool pass = r.instances == n && r.max_error < 1e-4;
    ok = ok && pass;
    std::printf("%s gradients: %d configurations (%d skipped near kinks), max relative error %.3e\n",
                pass ? "PASS" : "FAIL", r.instances, r.skipped, r.max_error);
  }
  return ok ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Variational Gaussian process motion planning"};
  app.require_subcommand(1);

  // plan
  auto *plan_cmd = app.add_subcommand("plan", "plan one trajectory");
  std::string robot_path, scene_path, grid_path, config_path, out_path, csv_path, checkpoint_path, problem_path;
  std::string start_arg, goal_arg;
  int emit_samples = 0;
  std::optional<double> alpha;
  plan_cmd->add_option("--robot", robot_path, "robot JSON")->required()->check(CLI::ExistingFile);
  plan_cmd->add_option("--scene", scene_path, "scene JSON")->check(CLI::ExistingFile);
  plan_cmd->add_option("--grid", grid_path, "prebuilt binary SDF (instead of --scene)")->check(CLI::ExistingFile);
  plan_cmd->add_option("--problem", problem_path, "problem JSON with start, goal, grasp")->check(CLI::ExistingFile);
  plan_cmd->add_option("--start", start_arg, "start joint vector, e.g. 0.1,0.2");
  plan_cmd->add_option("--goal", goal_arg, "goal joint vector");
  plan_cmd->add_option("--config", config_path, "planner config JSON")->check(CLI::ExistingFile);
  plan_cmd->add_option("--out", out_path, "plan JSON (or trajectory CSV if it ends in .csv)")->required();
  plan_cmd->add_option("--csv", csv_path, "also write the selected trajectory as CSV");
  plan_cmd->add_option("--checkpoint", checkpoint_path, "write a checkpoint for replanning");
  plan_cmd->add_option("--emit-samples", emit_samples, "number of posterior samples to include")
      ->check(CLI::NonNegativeNumber);
  plan_cmd->add_option("--emit-intervals", alpha, "include mean +- ALPHA std intervals");

  // replan
  auto *replan_cmd = app.add_subcommand("replan", "continue a checkpointed plan from an intermediate state");
  double replan_time = 0.0;
  std::string state_arg;
  replan_cmd->add_option("--robot", robot_path, "robot JSON")->required()->check(CLI::ExistingFile);
  replan_cmd->add_option("--scene", scene_path, "scene JSON, possibly updated")->check(CLI::ExistingFile);
  replan_cmd->add_option("--grid", grid_path, "prebuilt binary SDF")->check(CLI::ExistingFile);
  replan_cmd->add_option("--config", config_path, "planner config JSON")->check(CLI::ExistingFile);
  replan_cmd->add_option("--from", checkpoint_path, "checkpoint JSON")->required()->check(CLI::ExistingFile);
  replan_cmd->add_option("--time", replan_time, "current time in [0, 1)")->required();
  replan_cmd->add_option("--state", state_arg, "current joint vector")->required();
  replan_cmd->add_option("--out", out_path, "plan JSON")->required();
  replan_cmd->add_option("--emit-samples", emit_samples)->check(CLI::NonNegativeNumber);
  replan_cmd->add_option("--emit-intervals", alpha);

  // benchmark
  auto *bench_cmd = app.add_subcommand("benchmark", "run a problem suite over its seeds");
  std::string suite_path, report_path, json_path;
  bench_cmd->add_option("--suite", suite_path, "suite JSON")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--config", config_path, "planner config JSON")->check(CLI::ExistingFile);
  bench_cmd->add_option("--out", report_path, "report CSV")->required();
  bench_cmd->add_option("--json", json_path, "also write the report as JSON");

  // sdf
  auto *sdf_cmd = app.add_subcommand("sdf", "signed distance grids");
  sdf_cmd->require_subcommand(1);
  auto *sdf_build = sdf_cmd->add_subcommand("build", "voxelize a scene");
  std::optional<double> resolution;
  sdf_build->add_option("--scene", scene_path, "scene JSON")->required()->check(CLI::ExistingFile);
  sdf_build->add_option("--out", out_path, "binary grid")->required();
  sdf_build->add_option("--resolution", resolution, "override the scene resolution (m)");
  auto *sdf_query = sdf_cmd->add_subcommand("query", "interpolated distance at a point");
  std::string point_arg;
  sdf_query->add_option("--grid", grid_path, "binary grid")->required()->check(CLI::ExistingFile);
  sdf_query->add_option("--point", point_arg, "x,y,z")->required();

  // check
  auto *check_cmd = app.add_subcommand("check", "run the numerical self-checks");
  bool check_gradients = false, check_kl = false, check_fk = false;
  int check_count = 200;
  std::uint64_t check_seed = 0;
  check_cmd->add_flag("--gradients", check_gradients, "objective gradient vs finite differences");
  check_cmd->add_flag("--kl", check_kl, "whitened KL vs direct Gaussian KL");
  check_cmd->add_flag("--fk", check_fk, "forward kinematics vs transform products");
  check_cmd->add_option("--count", check_count, "instances per check")->check(CLI::PositiveNumber);
  check_cmd->add_option("--seed", check_seed);
  check_cmd->add_option("--robot", robot_path, "robot for --fk (default: random 7-joint chain)")
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*plan_cmd) {
      const auto config = load_config_or_default(config_path);
      const auto robot = io::load_robot(robot_path);
      PlanningProblem problem;
      if (!problem_path.empty())
        problem = io::problem_from_json(io::read_json(problem_path));
      if (!start_arg.empty())
        problem.start = io::parse_vector_arg(start_arg);
      if (!goal_arg.empty())
        problem.goal = io::parse_vector_arg(goal_arg);
      if (problem.start.size() == 0)
        throw InvalidArgument("a start configuration is required (--start or --problem)");
      std::optional<SdfGrid> grid;
      if (!scene_path.empty() || !grid_path.empty())
        grid = grid_for(scene_path, grid_path);
      const auto result = plan(config, robot, grid ? &*grid : nullptr, problem);
      const auto check = check_success(config, robot, grid ? &*grid : nullptr, result);
      write_plan_outputs(out_path, csv_path, checkpoint_path, config, robot, result, check, emit_samples, alpha);
      return 0;
    }
    if (*replan_cmd) {
      const auto config = load_config_or_default(config_path);
      const auto robot = io::load_robot(robot_path);
      const auto previous = io::resume(config, io::checkpoint_from_json(io::read_json(checkpoint_path)));
      std::optional<SdfGrid> grid;
      if (!scene_path.empty() || !grid_path.empty())
        grid = grid_for(scene_path, grid_path);
      const auto result =
          replan(config, robot, grid ? &*grid : nullptr, previous, replan_time, io::parse_vector_arg(state_arg));
      const auto check = check_success(config, robot, grid ? &*grid : nullptr, result);
      write_plan_outputs(out_path, "", "", config, robot, result, check, emit_samples, alpha);
      return 0;
    }
    if (*bench_cmd) {
      const auto config = load_config_or_default(config_path);
      const auto suite = load_suite(suite_path);
      const auto report = run_benchmark(suite, config, [](const ProblemMetrics &m, const PlanResult &) {
        std::printf("%-14s seed %-3llu %s  clearance %9.3f  length %6.3f m  %.2f s%s%s\n", m.name.c_str(),
                    static_cast<unsigned long long>(m.seed), m.success ? "ok  " : "FAIL", m.clearance,
                    m.path_length, m.seconds, m.error.empty() ? "" : "  error: ", m.error.c_str());
        std::fflush(stdout);
      });
      io::write_text(report_path, report_csv(report));
      if (!json_path.empty())
        io::write_json(json_path, report_json(report));
      for (const auto &a : report.per_seed)
        std::printf("seed %lld: %d/%d  MC %.3f +- %.3f  MPL %.3f +- %.3f\n", static_cast<long long>(a.seed),
                    a.successes, a.problems, a.mc_mean, a.mc_std, a.mpl_mean, a.mpl_std);
      const auto &p = report.pooled;
      std::printf("pooled: accuracy %.1f%%  MC %.3f +- %.3f  MPL %.3f +- %.3f\n", 100.0 * p.accuracy, p.mc_mean,
                  p.mc_std, p.mpl_mean, p.mpl_std);
      return 0;
    }
    if (*sdf_build) {
      const auto scene = io::load_scene(scene_path);
      const auto grid = build_grid(scene.scene, resolution.value_or(scene.resolution));
      write_sdf(grid, out_path);
      std::printf("%u x %u x %u voxels at %.4g m -> %s\n", grid.dims[0], grid.dims[1], grid.dims[2],
                  grid.resolution, out_path.c_str());
      return 0;
    }
    if (*sdf_query) {
      const auto grid = read_sdf(grid_path);
      const auto p = io::parse_vector_arg(point_arg);
      if (p.size() != 3)
        throw InvalidArgument("--point needs three coordinates");
      const auto s = query_with_gradient(grid, p);
      std::printf("distance %.9g  gradient %.6g %.6g %.6g\n", s.distance, s.gradient.x(), s.gradient.y(),
                  s.gradient.z());
      return 0;
    }
    if (*check_cmd)
      return run_check(check_gradients, check_kl, check_fk, check_count, check_seed, robot_path);
  } catch (const std::exception &e) {
    std::fprintf(stderr, "vgpmp: %s\n", e.what());
    return 2;
  }
  return 0;
}
