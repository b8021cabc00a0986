#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vgpmp/errors.hpp"
#include "vgpmp/kernels.hpp"
#include "vgpmp/objective.hpp"
#include "vgpmp/optimizer.hpp"
#include "vgpmp/robot.hpp"
#include "vgpmp/sdf.hpp"
#include "vgpmp/sparse_gp.hpp"

namespace vgpmp {

enum class InitMode { Zeros, Interpolated, Fixed };

struct PlannerConfig {
  KernelFamily kernel_family = KernelFamily::Matern52;
  /// one entry per joint, or a single entry broadcast to all joints
  Eigen::VectorXd length_scale = Eigen::VectorXd::Constant(1, 0.5);
  Eigen::VectorXd variance = Eigen::VectorXd::Constant(1, 0.3);
  /// inducing points, constrained ones included
  int num_inducing = 10;
  int iterations = 150;
  /// Monte Carlo samples per iteration
  int samples = 8;
  int posterior_samples = 32;
  int time_steps = 40;
  /// output grid size; 0 uses time_steps
  int query_steps = 0;
  ObjectiveWeights weights;
  TrainableSet trainable;
  AdamConfig adam;
  std::uint64_t seed = 0;
  double squash_slope = 1.0;
  int n_features = 2048;
  /// features per dimension used inside the training loop; 0 uses n_features
  int train_features = 0;
  InitMode init = InitMode::Interpolated;
  /// joint-space configuration used by InitMode::Fixed (1 x d)
  Eigen::MatrixXd fixed_profile;
  /// initial whitened standard deviation of q
  double initial_std = 1.0;
  bool zero_velocity = true;
  int replan_iterations = 50;
  int densify_factor = 4;

  void validate() const {
    if (iterations < 1 || samples < 1 || num_inducing < 3 || time_steps < 2)
      throw InvalidArgument("planner config needs iterations >= 1, samples >= 1, "
                            "num_inducing >= 3 and time_steps >= 2");
    if (posterior_samples < 0 || query_steps < 0 || n_features < 1 || train_features < 0)
      throw InvalidArgument("planner config counts must be nonnegative");
    if (!(initial_std > 0.0) || !(squash_slope > 0.0))
      throw InvalidArgument("initial_std and squash_slope must be positive");
    if (replan_iterations < 1 || densify_factor < 1)
      throw InvalidArgument("replan_iterations and densify_factor must be positive");
    weights.validate();
    adam.validate();
  }

  [[nodiscard]] KernelSpec kernel(int dof) const {
    auto expand = [dof](const Eigen::VectorXd &v, const char *what) {
      if (v.size() == dof)
        return v;
      if (v.size() == 1)
        return Eigen::VectorXd(Eigen::VectorXd::Constant(dof, v[0]));
      throw InvalidArgument(std::string(what) + " needs one entry or one per joint");
    };
    return KernelSpec(kernel_family, expand(length_scale, "length_scale"),
                      expand(variance, "variance"));
  }
};

struct PlanningProblem {
  Eigen::VectorXd start;
  /// without a goal only the start is pinned and the end is left to the
  /// likelihood terms (e.g. a grasp target)
  std::optional<Eigen::VectorXd> goal;
  std::optional<GraspTarget> grasp;
  std::optional<VelocityTarget> velocity;
};

struct Trajectory {
  std::vector<double> times;
  Eigen::MatrixXd joints;
  std::optional<Eigen::MatrixXd> velocities;
  /// marginal posterior std of the unconstrained process
  std::optional<Eigen::MatrixXd> std;

  [[nodiscard]] int dof() const { return static_cast<int>(joints.cols()); }
  [[nodiscard]] Eigen::Index size() const { return joints.rows(); }

  void validate(const JointLimits &limits) const {
    if (static_cast<Eigen::Index>(times.size()) != joints.rows())
      throw InvalidArgument("trajectory times and joints differ in length");
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1]))
        throw InvalidArgument("trajectory times must be strictly increasing");
    for (Eigen::Index t = 0; t < joints.rows(); ++t)
      for (Eigen::Index j = 0; j < joints.cols(); ++j)
        if (!(joints(t, j) > limits.lower[j] && joints(t, j) < limits.upper[j]))
          throw OutOfLimits("trajectory leaves the joint limits");
  }
};

inline bool operator==(const Trajectory &a, const Trajectory &b) {
  return a.times == b.times && a.joints == b.joints && a.velocities == b.velocities && a.std == b.std;
}

struct PlanResult {
  Trajectory mean;
  std::vector<Trajectory> samples;
  Trajectory selected;
  /// index into samples, -1 for the mean
  int selected_index = -1;
  double final_loss = 0.0;
  std::vector<double> loss_trace;
  double wall_clock_seconds = 0.0;

  /// trained variational state and kernel
  ModelParameters model;
  PlanningProblem problem;
  /// start of the planned time window (0 unless replanned)
  double time_origin = 0.0;
  std::vector<PathSample> sample_paths;
};

/// Equality of everything a run computes (wall-clock excluded).
inline bool same_plan(const PlanResult &a, const PlanResult &b) {
  if (!(a.mean == b.mean) || a.samples.size() != b.samples.size() || !(a.selected == b.selected))
    return false;
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    if (!(a.samples[i] == b.samples[i]))
      return false;
  if (a.selected_index != b.selected_index || a.loss_trace != b.loss_trace)
    return false;
  if (!(a.final_loss == b.final_loss || (std::isnan(a.final_loss) && std::isnan(b.final_loss))))
    return false;
  const auto &sa = a.model.state;
  const auto &sb = b.model.state;
  if (sa.whitened_mean != sb.whitened_mean || sa.constrained_values != sb.constrained_values ||
      sa.inducing.free_times != sb.inducing.free_times)
    return false;
  for (std::size_t j = 0; j < sa.whitened_chol.size(); ++j)
    if (sa.whitened_chol[j] != sb.whitened_chol[j])
      return false;
  return a.model.kernel.length_scale == b.model.kernel.length_scale &&
         a.model.kernel.variance == b.model.kernel.variance;
}

inline std::vector<double> uniform_times(double start, double end, int count) {
  std::vector<double> t(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    t[static_cast<std::size_t>(i)] =
        i == count - 1 ? end : start + (end - start) * static_cast<double>(i) / (count - 1);
  return t;
}

namespace detail {

inline constexpr std::uint64_t kPosteriorStream = 0x504f5354;  // "POST"
inline constexpr std::uint64_t kReplanStream = 0x52504c4e;     // "RPLN"

inline Eigen::VectorXd unsquash_endpoint(const RobotSpec &robot, const Eigen::VectorXd &theta,
                                         double slope, const char *what) {
  if (theta.size() != robot.dof())
    throw InvalidArgument(std::string(what) + " has the wrong number of joints");
  try {
    return unsquash(robot.limits, theta, slope);
  } catch (const OutOfLimits &) {
    throw InfeasibleEndpoint(std::string(what) + " is not strictly inside the joint limits");
  }
}

inline CostModel make_cost_model(const PlannerConfig &config, const RobotSpec &robot,
                                 const SdfGrid *grid, const PlanningProblem &problem) {
  return CostModel(robot, grid, config.weights, problem.grasp, problem.velocity, config.squash_slope);
}

/// Sets the whitened mean so the free inducing values sit at `target` (m x d).
inline void whiten_into(VariationalState &state, const std::vector<ConditionedPrior> &priors,
                        const Eigen::MatrixXd &target) {
  for (int j = 0; j < state.dims(); ++j) {
    const auto &p = priors[static_cast<std::size_t>(j)];
    state.whitened_mean.col(j) =
        p.chol.triangularView<Eigen::Lower>().solve(target.col(j) - p.mean);
  }
}

inline Trajectory make_trajectory(const RobotSpec &robot, double slope, std::vector<double> times,
                                  const Eigen::MatrixXd &f, const Eigen::MatrixXd *fdot,
                                  const Eigen::MatrixXd *var) {
  Trajectory out;
  out.times = std::move(times);
  out.joints.resize(f.rows(), f.cols());
  if (fdot)
    out.velocities = Eigen::MatrixXd(f.rows(), f.cols());
  for (Eigen::Index t = 0; t < f.rows(); ++t) {
    const Eigen::VectorXd ft = f.row(t).transpose();
    out.joints.row(t) = squash(robot.limits, ft, slope).transpose();
    if (fdot)
      out.velocities->row(t) =
          joint_velocity(robot.limits, ft, fdot->row(t).transpose(), slope).transpose();
  }
  if (var)
    out.std = var->cwiseMax(0.0).cwiseSqrt();
  return out;
}

struct Optimized {
  ModelParameters model;
  std::vector<double> trace;
  double final_loss = 0.0;
};

inline Optimized optimize(const PlannerConfig &config, const CostModel &cost,
                          const ModelParameters &initial, const std::vector<double> &times,
                          int iterations, std::uint64_t seed) {
  const int features = config.train_features > 0 ? config.train_features : config.n_features;
  const ElboObjective objective(cost, initial, config.trainable, times, config.samples, features, seed);
  Eigen::VectorXd x = objective.initial_parameters();
  AdamState adam(config.adam, x.size());
  Optimized out;
  out.trace.reserve(static_cast<std::size_t>(iterations));
  for (int it = 0; it < iterations; ++it) {
    ObjectiveValue v;
    try {
      v = objective.evaluate(x, static_cast<std::uint64_t>(it), true);
    } catch (const NonFiniteLoss &) {
      throw NonFiniteLoss("negative ELBO became non-finite at iteration " + std::to_string(it) +
                          " after " + std::to_string(out.trace.size()) + " finite values");
    }
    out.trace.push_back(v.loss);
    if (x.size() > 0)
      adam_step(adam, x, v.gradient, config.adam.rate(it, iterations));
  }
  out.final_loss = objective.evaluate(x, static_cast<std::uint64_t>(iterations), false).loss;
  out.model = objective.unpack(x);
  return out;
}

inline PlanResult extract(const PlannerConfig &config, const RobotSpec &robot, const SdfGrid *grid,
                          const PlanningProblem &problem, ModelParameters model, double t0,
                          std::uint64_t seed) {
  PlanResult result;
  result.model = std::move(model);
  result.problem = problem;
  result.time_origin = t0;
  const auto &state = result.model.state;
  const auto &kernel = result.model.kernel;
  const int steps = config.query_steps > 0 ? config.query_steps : config.time_steps;
  const auto times = uniform_times(t0, 1.0, steps);
  const bool derivatives = max_derivative_order(kernel.family) >= 1;
  const double slope = config.squash_slope;

  const auto priors = conditioned_prior(kernel, state.inducing, state.constrained_values);
  const auto moments = posterior_moments(state, kernel, priors, times, PointKind::Value);
  std::optional<PosteriorMoments> dmoments;
  if (derivatives)
    dmoments = posterior_moments(state, kernel, priors, times, PointKind::Derivative);
  result.mean = make_trajectory(robot, slope, times, moments.mean, dmoments ? &dmoments->mean : nullptr,
                                &moments.marginal_var);

  result.sample_paths = draw_samples(state, kernel, config.posterior_samples,
                                     splitmix64(seed ^ kPosteriorStream), config.n_features);
  for (const auto &s : result.sample_paths) {
    const Eigen::MatrixXd f = s.evaluate(times, PointKind::Value);
    Eigen::MatrixXd fd;
    if (derivatives)
      fd = s.evaluate(times, PointKind::Derivative);
    result.samples.push_back(make_trajectory(robot, slope, times, f, derivatives ? &fd : nullptr, nullptr));
  }

  result.selected_index = -1;
  result.selected = result.mean;
  if (grid) {
    double best = collision_cost(robot, *grid, config.weights, result.mean.joints);
    for (std::size_t i = 0; i < result.samples.size(); ++i) {
      const double c = collision_cost(robot, *grid, config.weights, result.samples[i].joints);
      if (c < best) {
        best = c;
        result.selected_index = static_cast<int>(i);
      }
    }
    if (result.selected_index >= 0)
      result.selected = result.samples[static_cast<std::size_t>(result.selected_index)];
  }
  return result;
}

} // namespace detail

/// Variational state and kernel a fresh plan starts from.
inline ModelParameters initial_model(const PlannerConfig &config, const RobotSpec &robot,
                                     const PlanningProblem &problem) {
  config.validate();
  robot.validate();
  const int d = robot.dof();
  const double slope = config.squash_slope;
  const Eigen::VectorXd u_start = detail::unsquash_endpoint(robot, problem.start, slope, "start");
  std::optional<Eigen::VectorXd> u_goal;
  if (problem.goal)
    u_goal = detail::unsquash_endpoint(robot, *problem.goal, slope, "goal");

  ModelParameters model;
  model.kernel = config.kernel(d);
  const bool zero_velocity =
      config.zero_velocity && max_derivative_order(config.kernel_family) >= 1;
  model.kernel.validate();
  auto &state = model.state;
  state.inducing = InducingSet::anchored(config.num_inducing, zero_velocity, u_goal.has_value());
  const int nc = state.inducing.constrained_count();
  const int m = state.inducing.free_count();
  state.constrained_values = Eigen::MatrixXd::Zero(nc, d);
  state.constrained_values.row(0) = u_start.transpose();
  if (u_goal)
    state.constrained_values.row(1) = u_goal->transpose();
  state.whitened_mean = Eigen::MatrixXd::Zero(m, d);
  state.whitened_chol.assign(static_cast<std::size_t>(d),
                             config.initial_std * Eigen::MatrixXd::Identity(m, m));

  if (config.init != InitMode::Zeros) {
    const auto priors = conditioned_prior(model.kernel, state.inducing, state.constrained_values);
    Eigen::MatrixXd target(m, d);
    if (config.init == InitMode::Interpolated) {
      const Eigen::VectorXd end = u_goal ? *u_goal : u_start;
      for (int i = 0; i < m; ++i) {
        const double t = state.inducing.free_times[i];
        target.row(i) = ((1.0 - t) * u_start + t * end).transpose();
      }
    } else {
      if (config.fixed_profile.rows() != 1 || config.fixed_profile.cols() != d)
        throw InvalidArgument("fixed init needs a 1 x d joint profile");
      const Eigen::VectorXd u = detail::unsquash_endpoint(
          robot, config.fixed_profile.row(0).transpose(), slope, "fixed profile");
      target = u.transpose().replicate(m, 1);
    }
    detail::whiten_into(state, priors, target);
  }
  state.validate();
  return model;
}

/// Runs the full stochastic optimization and extracts mean, samples and the
/// lowest-collision trajectory. Deterministic in config.seed.
inline PlanResult plan(const PlannerConfig &config, const RobotSpec &robot, const SdfGrid *grid,
                       const PlanningProblem &problem) {
  const auto clock = std::chrono::steady_clock::now();
  const ModelParameters initial = initial_model(config, robot, problem);
  const CostModel cost = detail::make_cost_model(config, robot, grid, problem);
  const auto times = uniform_times(0.0, 1.0, config.time_steps);
  auto optimized = detail::optimize(config, cost, initial, times, config.iterations, config.seed);
  auto result = detail::extract(config, robot, grid, problem, std::move(optimized.model), 0.0, config.seed);
  result.loss_trace = std::move(optimized.trace);
  result.final_loss = optimized.final_loss;
  result.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock).count();
  return result;
}

/// Per-time per-joint squash(mean -/+ alpha std).
struct Intervals {
  std::vector<double> times;
  Eigen::MatrixXd low;
  Eigen::MatrixXd high;
};

inline Intervals intervals(const ModelParameters &model, const RobotSpec &robot,
                           std::span<const double> times, double alpha, double squash_slope = 1.0) {
  if (!(alpha >= 0.0))
    throw InvalidArgument("interval alpha must be nonnegative");
  const auto m = posterior_moments(model.state, model.kernel, times, PointKind::Value);
  Intervals out;
  out.times.assign(times.begin(), times.end());
  const Eigen::MatrixXd sd = m.marginal_var.cwiseSqrt();
  out.low.resize(m.mean.rows(), m.mean.cols());
  out.high.resize(m.mean.rows(), m.mean.cols());
  for (Eigen::Index t = 0; t < m.mean.rows(); ++t) {
    out.low.row(t) =
        squash(robot.limits, (m.mean.row(t) - alpha * sd.row(t)).transpose(), squash_slope).transpose();
    out.high.row(t) =
        squash(robot.limits, (m.mean.row(t) + alpha * sd.row(t)).transpose(), squash_slope).transpose();
  }
  return out;
}

inline Intervals intervals(const PlanResult &result, const RobotSpec &robot,
                           std::span<const double> times, double alpha, double squash_slope = 1.0) {
  return intervals(result.model, robot, times, alpha, squash_slope);
}

/// Model for continuing `previous` from (current_time, current_state): z_c
/// moves to {current_time, 1}, free times are squeezed into (current_time, 1)
/// keeping their relative spacing, and q is warm-started from the previous
/// posterior mean. The pinned velocity at current_time (when the kernel
/// supports derivatives) is the previous posterior mean velocity there.
inline ModelParameters replan_model(const PlannerConfig &config, const RobotSpec &robot,
                                    const PlanResult &previous, double current_time,
                                    const Eigen::VectorXd &current_state) {
  if (!(current_time >= 0.0 && current_time < 1.0))
    throw InvalidArgument("replan time must lie in [0, 1)");
  const double slope = config.squash_slope;
  const auto &old = previous.model;
  const int d = old.state.dims();
  const double t_old = previous.time_origin;
  if (current_time < t_old)
    throw InvalidArgument("replan time precedes the previous plan's start");
  const Eigen::VectorXd u_now = detail::unsquash_endpoint(robot, current_state, slope, "current state");
  const bool has_goal = previous.problem.goal.has_value();
  const bool derivatives = max_derivative_order(old.kernel.family) >= 1;
  const bool pin_velocity = derivatives && std::find(old.state.inducing.derivative_flags.begin(),
                                                     old.state.inducing.derivative_flags.end(),
                                                     true) != old.state.inducing.derivative_flags.end();

  ModelParameters model;
  model.kernel = old.kernel;
  auto &state = model.state;
  state.inducing.constrained_times.push_back(current_time);
  if (has_goal)
    state.inducing.constrained_times.push_back(1.0);
  state.inducing.derivative_flags.assign(state.inducing.constrained_times.size(), pin_velocity);
  const int m = old.state.inducing.free_count();
  state.inducing.free_times.resize(m);
  for (int i = 0; i < m; ++i) {
    const double rel = (old.state.inducing.free_times[i] - t_old) / (1.0 - t_old);
    state.inducing.free_times[i] = current_time + (1.0 - current_time) * rel;
  }

  const auto old_priors = conditioned_prior(old.kernel, old.state.inducing, old.state.constrained_values);
  const int values = static_cast<int>(state.inducing.constrained_times.size());
  state.constrained_values = Eigen::MatrixXd::Zero(state.inducing.constrained_count(), d);
  state.constrained_values.row(0) = u_now.transpose();
  if (has_goal)
    state.constrained_values.row(1) = old.state.constrained_values.row(1);
  if (pin_velocity) {
    const std::vector<double> tc{current_time, 1.0};
    const auto dm = posterior_moments(old.state, old.kernel, old_priors,
                                      std::span<const double>(tc.data(), has_goal ? 2 : 1),
                                      PointKind::Derivative);
    for (int r = 0; r < values; ++r)
      state.constrained_values.row(values + r) = dm.mean.row(r);
  }

  const auto free = state.inducing.free_time_list();
  Eigen::MatrixXd warm;
  if (current_time == t_old) {
    // same layout: take q(u') exactly, predicting there would pick up the Gram jitter
    warm.resize(m, d);
    for (int j = 0; j < d; ++j)
      warm.col(j) = free_moments(old.state, old_priors[static_cast<std::size_t>(j)], j).first;
  } else {
    warm = posterior_moments(old.state, old.kernel, old_priors, free, PointKind::Value).mean;
  }
  state.whitened_mean = Eigen::MatrixXd::Zero(m, d);
  state.whitened_chol = old.state.whitened_chol;
  const auto priors = conditioned_prior(model.kernel, state.inducing, state.constrained_values);
  detail::whiten_into(state, priors, warm);
  state.validate();
  return model;
}

/// Continues a plan from an intermediate state, optionally against an
/// updated world, with a shorter optimization.
inline PlanResult replan(const PlannerConfig &config, const RobotSpec &robot, const SdfGrid *grid,
                         const PlanResult &previous, double current_time,
                         const Eigen::VectorXd &current_state) {
  const auto clock = std::chrono::steady_clock::now();
  config.validate();
  ModelParameters initial = replan_model(config, robot, previous, current_time, current_state);
  PlanningProblem problem = previous.problem;
  problem.start = current_state;
  const CostModel cost = detail::make_cost_model(config, robot, grid, problem);
  const auto times = uniform_times(current_time, 1.0, config.time_steps);
  const std::uint64_t seed =
      current_time == 0.0 ? config.seed : splitmix64(config.seed ^ detail::kReplanStream);
  auto optimized = detail::optimize(config, cost, initial, times, config.replan_iterations, seed);
  auto result =
      detail::extract(config, robot, grid, problem, std::move(optimized.model), current_time, seed);
  result.loss_trace = std::move(optimized.trace);
  result.final_loss = optimized.final_loss;
  result.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock).count();
  return result;
}

/// Seeded negative ELBO of a model for the given problem and time window.
inline double evaluate_loss(const PlannerConfig &config, const RobotSpec &robot, const SdfGrid *grid,
                            const PlanningProblem &problem, const ModelParameters &model,
                            double t0, std::uint64_t iteration) {
  const CostModel cost = detail::make_cost_model(config, robot, grid, problem);
  const int features = config.train_features > 0 ? config.train_features : config.n_features;
  const ElboObjective objective(cost, model, config.trainable, uniform_times(t0, 1.0, config.time_steps),
                                config.samples, features, config.seed);
  return objective.evaluate(objective.initial_parameters(), iteration, false).loss;
}

struct SuccessCheck {
  bool success = false;
  bool endpoints_exact = false;
  /// smallest sphere surface distance over the densified trajectory
  double min_surface_distance = std::numeric_limits<double>::infinity();
};

/// Densified trajectory of the selected plan (mean or sample) at
/// densify_factor * time_steps points.
inline Trajectory densified_selection(const PlannerConfig &config, const RobotSpec &robot,
                                      const PlanResult &result) {
  const int steps = config.densify_factor * config.time_steps;
  const auto times = uniform_times(result.time_origin, 1.0, steps);
  Eigen::MatrixXd f;
  if (result.selected_index < 0)
    f = posterior_moments(result.model.state, result.model.kernel, times, PointKind::Value).mean;
  else
    f = result.sample_paths[static_cast<std::size_t>(result.selected_index)].evaluate(times);
  return detail::make_trajectory(robot, config.squash_slope, times, f, nullptr, nullptr);
}

inline double min_surface_distance(const RobotSpec &robot, const SdfGrid &grid,
                                   const Eigen::MatrixXd &joints) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < joints.rows(); ++t)
    for (const auto &s : sphere_positions(robot, Eigen::VectorXd(joints.row(t).transpose())))
      best = std::min(best, query(grid, s.center) - s.radius);
  return best;
}

inline bool endpoints_match(const Trajectory &traj, const PlanningProblem &problem, double tol = 1e-6) {
  if (traj.size() < 2)
    return false;
  const Eigen::VectorXd first = traj.joints.row(0).transpose();
  if ((first - problem.start).cwiseAbs().maxCoeff() > tol)
    return false;
  if (problem.goal) {
    const Eigen::VectorXd last = traj.joints.row(traj.size() - 1).transpose();
    if ((last - *problem.goal).cwiseAbs().maxCoeff() > tol)
      return false;
  }
  return true;
}

/// Success iff the densified selected trajectory keeps every sphere outside
/// every obstacle and hits the endpoints.
inline SuccessCheck check_success(const PlannerConfig &config, const RobotSpec &robot,
                                  const SdfGrid *grid, const PlanResult &result) {
  SuccessCheck out;
  const auto dense = densified_selection(config, robot, result);
  out.endpoints_exact = endpoints_match(dense, result.problem);
  if (grid)
    out.min_surface_distance = min_surface_distance(robot, *grid, dense.joints);
  out.success = out.endpoints_exact && out.min_surface_distance > 0.0;
  return out;
}

} // namespace vgpmp
