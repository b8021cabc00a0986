// Plans the first gate problem of the 2-link desk suite and prints the
// selected trajectory as CSV, with 2-sigma joint intervals on stderr.

#include <cstdio>
#include <iostream>

#include "vgpmp/vgpmp.hpp"

int main(int argc, char **argv) {
  using namespace vgpmp;
  const std::string data = argc > 1 ? argv[1] : VGPMP_DATA_DIR;
  try {
    const auto suite = load_suite(data + "/suites/desk2d.json");
    auto config = io::load_config(data + "/configs/desk.json");
    io::apply_seed_override(config);
    const auto grids = build_grids(suite);
    const auto &problem = suite.problems.front();

    const auto result = plan(config, suite.robot, &grids.front(), problem.problem);
    const auto check = check_success(config, suite.robot, &grids.front(), result);
    std::fprintf(stderr, "%s: %s, min surface distance %.3f m, loss %.2f -> %.2f in %.2f s\n",
                 problem.name.c_str(), check.success ? "collision-free" : "in collision",
                 check.min_surface_distance, result.loss_trace.front(), result.final_loss,
                 result.wall_clock_seconds);

    const auto band = intervals(result, suite.robot, result.mean.times, 2.0);
    for (Eigen::Index t = 0; t < band.low.rows(); t += 8)
      std::fprintf(stderr, "t=%.3f  q0 in [%.3f, %.3f]  q1 in [%.3f, %.3f]\n", band.times[t], band.low(t, 0),
                   band.high(t, 0), band.low(t, 1), band.high(t, 1));

    std::cout << io::trajectory_csv(result.selected);
    return check.success ? 0 : 1;
  } catch (const Error &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
