// Plans across an empty workspace, then an obstacle appears on the tip's
// path and the plan is continued from t = 0.3 through a checkpoint.

#include <cstdio>

#include "vgpmp/vgpmp.hpp"

int main(int argc, char **argv) {
  using namespace vgpmp;
  const std::string data = argc > 1 ? argv[1] : VGPMP_DATA_DIR;
  try {
    const auto robot = io::load_robot(data + "/robots/planar2.json");
    const auto config = io::load_config(data + "/configs/desk.json");
    PrimitiveScene scene;
    scene.bounds = {Eigen::Vector3d(-1.2, -1.2, -0.1), Eigen::Vector3d(1.2, 1.2, 0.1)};
    const auto empty = build_grid(scene, 0.02);

    PlanningProblem problem;
    problem.start = Eigen::Vector2d(-1.0, 0.5);
    problem.goal = Eigen::Vector2d(1.0, 0.4);
    const auto first = plan(config, robot, &empty, problem);
    const auto saved = io::to_json(io::make_checkpoint(config, first)).dump();

    // something shows up where the tip will be at t = 0.7
    const std::vector<double> at{0.3, 0.7};
    const auto moments = posterior_moments(first.model.state, first.model.kernel, at);
    const Eigen::VectorXd now = squash(robot.limits, Eigen::VectorXd(moments.mean.row(0).transpose()));
    const Eigen::VectorXd later = squash(robot.limits, Eigen::VectorXd(moments.mean.row(1).transpose()));
    scene.primitives.push_back(SpherePrimitive{forward_kinematics(robot, later).back().position, 0.1});
    const auto blocked = build_grid(scene, 0.01);
    std::printf("old plan in the new world: min surface distance %.3f m\n",
                min_surface_distance(robot, blocked, first.mean.joints));

    const auto restored = io::resume(config, io::checkpoint_from_json(nlohmann::json::parse(saved)));
    const auto next = replan(config, robot, &blocked, restored, 0.3, now);
    const auto check = check_success(config, robot, &blocked, next);
    std::printf("replanned from t=0.3: %s, min surface distance %.3f m, %zu iterations in %.2f s\n",
                check.success ? "collision-free" : "in collision", check.min_surface_distance,
                next.loss_trace.size(), next.wall_clock_seconds);
    return check.success ? 0 : 1;
  } catch (const Error &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
