#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "vgpmp/errors.hpp"
#include "vgpmp/planner.hpp"
#include "vgpmp/robot.hpp"
#include "vgpmp/sdf.hpp"

namespace vgpmp::io {

using Json = nlohmann::json;

inline Json read_json(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception &e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_text(const std::string &path, const std::string &text) {
  std::ofstream out(path);
  if (!out)
    throw Error("cannot open " + path + " for writing");
  out << text;
}

inline void write_json(const std::string &path, const Json &j) { write_text(path, j.dump(2) + "\n"); }

namespace detail {

inline void require_object(const Json &j, const char *what) {
  if (!j.is_object())
    throw ParseError(std::string(what) + " must be a JSON object");
}

/// Rejects keys outside `allowed` so misspelled options do not pass silently.
inline void check_keys(const Json &j, std::initializer_list<const char *> allowed, const char *what) {
  require_object(j, what);
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto &item : j.items())
    if (!keys.count(item.key()))
      throw ParseError(std::string("unknown key '") + item.key() + "' in " + what);
}

inline double number(const Json &j, const char *what) {
  if (!j.is_number())
    throw ParseError(std::string(what) + " must be a number");
  return j.get<double>();
}

inline Eigen::VectorXd vector(const Json &j, const char *what) {
  if (j.is_number())
    return Eigen::VectorXd::Constant(1, j.get<double>());
  if (!j.is_array())
    throw ParseError(std::string(what) + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = number(j[i], what);
  return v;
}

inline Eigen::Vector3d vec3(const Json &j, const char *what) {
  const auto v = vector(j, what);
  if (v.size() != 3)
    throw ParseError(std::string(what) + " must have three entries");
  return v;
}

inline Eigen::MatrixXd matrix(const Json &j, const char *what) {
  if (!j.is_array())
    throw ParseError(std::string(what) + " must be an array of rows");
  if (j.empty())
    return {};
  const auto cols = j[0].is_array() ? j[0].size() : 0;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw ParseError(std::string(what) + " rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = number(j[r][c], what);
  }
  return m;
}

inline Json to_json(const Eigen::VectorXd &v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    a.push_back(v[i]);
  return a;
}

inline Json to_json(const Eigen::MatrixXd &m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

template <typename T> T get_or(const Json &j, const char *key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

} // namespace detail

// ---------------------------------------------------------------- robot

inline RobotSpec robot_from_json(const Json &j) {
  detail::check_keys(j, {"name", "joints", "spheres", "convention"}, "robot");
  if (j.contains("convention") && j["convention"] != "classic_dh")
    throw ParseError("only the classic_dh convention is supported");
  RobotSpec robot;
  if (!j.contains("joints") || !j["joints"].is_array())
    throw ParseError("robot needs a 'joints' array");
  const auto n = static_cast<Eigen::Index>(j["joints"].size());
  robot.limits.lower.resize(n);
  robot.limits.upper.resize(n);
  Eigen::VectorXd vel(n);
  int with_vel = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto &jj = j["joints"][static_cast<std::size_t>(i)];
    detail::check_keys(jj, {"a", "d", "alpha", "theta_offset", "min", "max", "vel_max"}, "joint");
    DhJoint dh;
    dh.a = detail::get_or(jj, "a", 0.0);
    dh.d = detail::get_or(jj, "d", 0.0);
    dh.alpha = detail::get_or(jj, "alpha", 0.0);
    dh.theta_offset = detail::get_or(jj, "theta_offset", 0.0);
    robot.joints.push_back(dh);
    if (!jj.contains("min") || !jj.contains("max"))
      throw ParseError("every joint needs finite 'min' and 'max'");
    robot.limits.lower[i] = detail::number(jj["min"], "joint min");
    robot.limits.upper[i] = detail::number(jj["max"], "joint max");
    if (jj.contains("vel_max")) {
      vel[i] = detail::number(jj["vel_max"], "vel_max");
      ++with_vel;
    }
  }
  if (with_vel != 0 && with_vel != n)
    throw ParseError("vel_max must be given for all joints or none");
  if (with_vel == n)
    robot.velocity_limits = vel;
  if (j.contains("spheres")) {
    for (const auto &s : j["spheres"]) {
      detail::check_keys(s, {"link", "offset", "radius"}, "sphere");
      robot.spheres.push_back({s.at("link").get<int>(), detail::vec3(s.at("offset"), "sphere offset"),
                               detail::number(s.at("radius"), "sphere radius")});
    }
  }
  try {
    robot.validate();
  } catch (const InvalidArgument &e) {
    throw ParseError(e.what());
  }
  return robot;
}

inline RobotSpec load_robot(const std::string &path) { return robot_from_json(read_json(path)); }

// ---------------------------------------------------------------- scene

struct SceneFile {
  PrimitiveScene scene;
  double resolution = 0.02;
};

inline SceneFile scene_from_json(const Json &j) {
  detail::check_keys(j, {"name", "bounds", "resolution", "primitives"}, "scene");
  SceneFile out;
  if (!j.contains("bounds"))
    throw ParseError("scene needs 'bounds'");
  detail::check_keys(j["bounds"], {"min", "max"}, "scene bounds");
  out.scene.bounds.min = detail::vec3(j["bounds"].at("min"), "bounds min");
  out.scene.bounds.max = detail::vec3(j["bounds"].at("max"), "bounds max");
  out.resolution = detail::get_or(j, "resolution", out.resolution);
  if (j.contains("primitives")) {
    for (const auto &p : j["primitives"]) {
      const auto type = p.at("type").get<std::string>();
      if (type == "sphere") {
        detail::check_keys(p, {"type", "center", "radius", "name"}, "sphere primitive");
        out.scene.primitives.push_back(
            SpherePrimitive{detail::vec3(p.at("center"), "center"), detail::number(p.at("radius"), "radius")});
      } else if (type == "box") {
        detail::check_keys(p, {"type", "center", "half_extents", "name"}, "box primitive");
        out.scene.primitives.push_back(BoxPrimitive{detail::vec3(p.at("center"), "center"),
                                                    detail::vec3(p.at("half_extents"), "half_extents")});
      } else {
        throw ParseError("unknown primitive type '" + type + "'");
      }
    }
  }
  try {
    out.scene.validate();
  } catch (const InvalidArgument &e) {
    throw ParseError(e.what());
  }
  return out;
}

inline SceneFile load_scene(const std::string &path) { return scene_from_json(read_json(path)); }

// ---------------------------------------------------------------- config

inline std::string to_string(InitMode mode) {
  switch (mode) {
  case InitMode::Zeros:
    return "zeros";
  case InitMode::Interpolated:
    return "interpolated";
  case InitMode::Fixed:
    return "fixed";
  }
  return "interpolated";
}

inline InitMode init_mode_from_string(const std::string &s) {
  if (s == "zeros" || s == "Zeros")
    return InitMode::Zeros;
  if (s == "interpolated" || s == "Interpolated")
    return InitMode::Interpolated;
  if (s == "fixed" || s == "Fixed")
    return InitMode::Fixed;
  throw ParseError("unknown init mode '" + s + "'");
}

inline ObjectiveWeights weights_from_json(const Json &j, ObjectiveWeights w = {}) {
  detail::check_keys(j,
                     {"sigma_obs", "sigma_c", "sigma_grasp", "sigma_velocity", "eps", "likelihood_scale",
                      "collision", "soft_limits", "grasp", "velocity", "soft_limit_target",
                      "position_threshold"},
                     "weights");
  w.sigma_obs = detail::get_or(j, "sigma_obs", w.sigma_obs);
  for (auto [key, field] : {std::pair{"sigma_c", &w.sigma_c}, std::pair{"sigma_grasp", &w.sigma_grasp},
                            std::pair{"sigma_velocity", &w.sigma_velocity}})
    if (j.contains(key))
      *field = j[key].is_null() ? std::optional<double>() : std::optional<double>(detail::number(j[key], key));
  w.eps = detail::get_or(j, "eps", w.eps);
  w.likelihood_scale = detail::get_or(j, "likelihood_scale", w.likelihood_scale);
  w.collision = detail::get_or(j, "collision", w.collision);
  w.soft_limits = detail::get_or(j, "soft_limits", w.soft_limits);
  w.grasp = detail::get_or(j, "grasp", w.grasp);
  w.velocity = detail::get_or(j, "velocity", w.velocity);
  if (j.contains("soft_limit_target")) {
    const auto s = j["soft_limit_target"].get<std::string>();
    if (s == "velocity")
      w.soft_limit_target = SoftLimitTarget::Velocity;
    else if (s == "position")
      w.soft_limit_target = SoftLimitTarget::Position;
    else
      throw ParseError("soft_limit_target must be 'velocity' or 'position'");
  }
  w.position_threshold = detail::get_or(j, "position_threshold", w.position_threshold);
  return w;
}

inline Json to_json(const ObjectiveWeights &w) {
  Json j;
  j["sigma_obs"] = w.sigma_obs;
  j["sigma_c"] = w.sigma_c ? Json(*w.sigma_c) : Json(nullptr);
  j["sigma_grasp"] = w.sigma_grasp ? Json(*w.sigma_grasp) : Json(nullptr);
  j["sigma_velocity"] = w.sigma_velocity ? Json(*w.sigma_velocity) : Json(nullptr);
  j["eps"] = w.eps;
  j["likelihood_scale"] = w.likelihood_scale;
  j["collision"] = w.collision;
  j["soft_limits"] = w.soft_limits;
  j["grasp"] = w.grasp;
  j["velocity"] = w.velocity;
  j["soft_limit_target"] = w.soft_limit_target == SoftLimitTarget::Velocity ? "velocity" : "position";
  j["position_threshold"] = w.position_threshold;
  return j;
}

inline PlannerConfig config_from_json(const Json &j, PlannerConfig c = {}) {
  detail::check_keys(j,
                     {"kernel_family", "length_scale", "variance", "num_inducing", "iterations", "samples",
                      "posterior_samples", "time_steps", "query_steps", "weights", "trainable", "adam",
                      "seed", "squash_slope", "n_features", "train_features", "init", "fixed_profile",
                      "initial_std", "zero_velocity", "replan_iterations", "densify_factor"},
                     "config");
  if (j.contains("kernel_family"))
    c.kernel_family = kernel_family_from_string(j["kernel_family"].get<std::string>());
  if (j.contains("length_scale"))
    c.length_scale = detail::vector(j["length_scale"], "length_scale");
  if (j.contains("variance"))
    c.variance = detail::vector(j["variance"], "variance");
  c.num_inducing = detail::get_or(j, "num_inducing", c.num_inducing);
  c.iterations = detail::get_or(j, "iterations", c.iterations);
  c.samples = detail::get_or(j, "samples", c.samples);
  c.posterior_samples = detail::get_or(j, "posterior_samples", c.posterior_samples);
  c.time_steps = detail::get_or(j, "time_steps", c.time_steps);
  c.query_steps = detail::get_or(j, "query_steps", c.query_steps);
  if (j.contains("weights"))
    c.weights = weights_from_json(j["weights"], c.weights);
  if (j.contains("trainable")) {
    const auto &t = j["trainable"];
    detail::check_keys(t, {"mean", "covariance", "inducing_times", "length_scale", "variance"}, "trainable");
    c.trainable.mean = detail::get_or(t, "mean", c.trainable.mean);
    c.trainable.covariance = detail::get_or(t, "covariance", c.trainable.covariance);
    c.trainable.inducing_times = detail::get_or(t, "inducing_times", c.trainable.inducing_times);
    c.trainable.length_scale = detail::get_or(t, "length_scale", c.trainable.length_scale);
    c.trainable.variance = detail::get_or(t, "variance", c.trainable.variance);
  }
  if (j.contains("adam")) {
    const auto &a = j["adam"];
    detail::check_keys(a, {"beta1", "beta2", "learning_rate", "epsilon", "final_learning_rate"}, "adam");
    c.adam.beta1 = detail::get_or(a, "beta1", c.adam.beta1);
    c.adam.beta2 = detail::get_or(a, "beta2", c.adam.beta2);
    c.adam.learning_rate = detail::get_or(a, "learning_rate", c.adam.learning_rate);
    c.adam.epsilon = detail::get_or(a, "epsilon", c.adam.epsilon);
    if (a.contains("final_learning_rate"))
      c.adam.final_learning_rate = a["final_learning_rate"].is_null()
                                       ? std::optional<double>()
                                       : std::optional<double>(detail::number(a["final_learning_rate"], "final_learning_rate"));
  }
  c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed);
  c.squash_slope = detail::get_or(j, "squash_slope", c.squash_slope);
  c.n_features = detail::get_or(j, "n_features", c.n_features);
  c.train_features = detail::get_or(j, "train_features", c.train_features);
  if (j.contains("init"))
    c.init = init_mode_from_string(j["init"].get<std::string>());
  if (j.contains("fixed_profile")) {
    const auto v = detail::vector(j["fixed_profile"], "fixed_profile");
    c.fixed_profile = v.transpose();
  }
  c.initial_std = detail::get_or(j, "initial_std", c.initial_std);
  c.zero_velocity = detail::get_or(j, "zero_velocity", c.zero_velocity);
  c.replan_iterations = detail::get_or(j, "replan_iterations", c.replan_iterations);
  c.densify_factor = detail::get_or(j, "densify_factor", c.densify_factor);
  c.validate();
  return c;
}

inline Json to_json(const PlannerConfig &c) {
  Json j;
  j["kernel_family"] = to_string(c.kernel_family);
  j["length_scale"] = detail::to_json(c.length_scale);
  j["variance"] = detail::to_json(c.variance);
  j["num_inducing"] = c.num_inducing;
  j["iterations"] = c.iterations;
  j["samples"] = c.samples;
  j["posterior_samples"] = c.posterior_samples;
  j["time_steps"] = c.time_steps;
  j["query_steps"] = c.query_steps;
  j["weights"] = to_json(c.weights);
  j["trainable"] = {{"mean", c.trainable.mean},
                    {"covariance", c.trainable.covariance},
                    {"inducing_times", c.trainable.inducing_times},
                    {"length_scale", c.trainable.length_scale},
                    {"variance", c.trainable.variance}};
  j["adam"] = {{"beta1", c.adam.beta1},
               {"beta2", c.adam.beta2},
               {"learning_rate", c.adam.learning_rate},
               {"epsilon", c.adam.epsilon},
               {"final_learning_rate", c.adam.final_learning_rate ? Json(*c.adam.final_learning_rate) : Json()}};
  j["seed"] = c.seed;
  j["squash_slope"] = c.squash_slope;
  j["n_features"] = c.n_features;
  j["train_features"] = c.train_features;
  j["init"] = to_string(c.init);
  if (c.fixed_profile.size() > 0)
    j["fixed_profile"] = detail::to_json(Eigen::VectorXd(c.fixed_profile.row(0).transpose()));
  j["initial_std"] = c.initial_std;
  j["zero_velocity"] = c.zero_velocity;
  j["replan_iterations"] = c.replan_iterations;
  j["densify_factor"] = c.densify_factor;
  return j;
}

inline PlannerConfig load_config(const std::string &path) { return config_from_json(read_json(path)); }

/// Applies VGPMP_SEED from the environment when set.
inline void apply_seed_override(PlannerConfig &config) {
  if (const char *s = std::getenv("VGPMP_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      if (used != std::string(s).size())
        throw std::invalid_argument(s);
      config.seed = v;
    } catch (const std::exception &) {
      throw ParseError(std::string("VGPMP_SEED is not an unsigned integer: ") + s);
    }
  }
}

/// FNV-1a 64 of the canonical (sorted-key) config dump, as 16 hex digits.
inline std::string config_hash(const PlannerConfig &c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------- problems

inline GraspTarget grasp_from_json(const Json &j) {
  detail::check_keys(j, {"position", "rotation", "axis_angle", "position_weight", "rotation_weight", "steps"},
                     "grasp");
  GraspTarget g;
  g.position = detail::vec3(j.at("position"), "grasp position");
  if (j.contains("rotation")) {
    const auto m = detail::matrix(j["rotation"], "grasp rotation");
    if (m.rows() != 3 || m.cols() != 3)
      throw ParseError("grasp rotation must be 3 x 3");
    g.rotation = m;
  } else if (j.contains("axis_angle")) {
    const auto &aa = j["axis_angle"];
    detail::check_keys(aa, {"axis", "angle"}, "axis_angle");
    g.rotation = Eigen::AngleAxisd(detail::number(aa.at("angle"), "angle"),
                                   detail::vec3(aa.at("axis"), "axis").normalized())
                     .toRotationMatrix();
  }
  g.position_weight = detail::get_or(j, "position_weight", g.position_weight);
  g.rotation_weight = detail::get_or(j, "rotation_weight", g.rotation_weight);
  if (j.contains("steps"))
    g.steps = j["steps"].get<std::vector<int>>();
  try {
    g.validate();
  } catch (const InvalidArgument &e) {
    throw ParseError(e.what());
  }
  return g;
}

inline Json to_json(const GraspTarget &g) {
  Json j;
  j["position"] = detail::to_json(Eigen::VectorXd(g.position));
  j["rotation"] = detail::to_json(Eigen::MatrixXd(g.rotation));
  j["position_weight"] = g.position_weight;
  j["rotation_weight"] = g.rotation_weight;
  if (!g.steps.empty())
    j["steps"] = g.steps;
  return j;
}

inline PlanningProblem problem_from_json(const Json &j) {
  PlanningProblem p;
  p.start = detail::vector(j.at("start"), "start");
  if (j.contains("goal") && !j["goal"].is_null())
    p.goal = detail::vector(j["goal"], "goal");
  if (j.contains("grasp") && !j["grasp"].is_null())
    p.grasp = grasp_from_json(j["grasp"]);
  if (j.contains("velocity_target") && !j["velocity_target"].is_null()) {
    const auto &v = j["velocity_target"];
    p.velocity = VelocityTarget{v.is_array() && !v.empty() && v[0].is_array()
                                    ? detail::matrix(v, "velocity_target")
                                    : Eigen::MatrixXd(detail::vector(v, "velocity_target").transpose())};
  }
  return p;
}

/// Parses a vector given on the command line as "a,b,c" or "[a, b, c]".
inline Eigen::VectorXd parse_vector_arg(std::string text) {
  for (char &ch : text)
    if (ch == '[' || ch == ']' || ch == ',')
      ch = ' ';
  std::istringstream in(text);
  std::vector<double> v;
  std::string token;
  while (in >> token) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(token, &used));
      if (used != token.size())
        throw std::invalid_argument(token);
    } catch (const std::exception &) {
      throw ParseError("not a number: '" + token + "'");
    }
  }
  if (v.empty())
    throw ParseError("empty vector argument");
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// ---------------------------------------------------------------- trajectories

inline Json to_json(const Trajectory &t) {
  Json j;
  j["times"] = t.times;
  j["joints"] = detail::to_json(t.joints);
  if (t.std)
    j["std"] = detail::to_json(*t.std);
  if (t.velocities)
    j["velocities"] = detail::to_json(*t.velocities);
  return j;
}

inline Trajectory trajectory_from_json(const Json &j) {
  detail::check_keys(j, {"times", "joints", "std", "velocities"}, "trajectory");
  Trajectory t;
  t.times = j.at("times").get<std::vector<double>>();
  t.joints = detail::matrix(j.at("joints"), "joints");
  if (j.contains("std"))
    t.std = detail::matrix(j["std"], "std");
  if (j.contains("velocities"))
    t.velocities = detail::matrix(j["velocities"], "velocities");
  if (static_cast<Eigen::Index>(t.times.size()) != t.joints.rows())
    throw ParseError("trajectory times and joints differ in length");
  return t;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with header t,q0..q{d-1} and, when present, s0..s{d-1}.
inline std::string trajectory_csv(const Trajectory &t) {
  std::ostringstream out;
  const int d = t.dof();
  out << "t";
  for (int j = 0; j < d; ++j)
    out << ",q" << j;
  if (t.std)
    for (int j = 0; j < d; ++j)
      out << ",s" << j;
  out << "\n";
  for (Eigen::Index r = 0; r < t.size(); ++r) {
    out << format_double(t.times[static_cast<std::size_t>(r)]);
    for (int j = 0; j < d; ++j)
      out << "," << format_double(t.joints(r, j));
    if (t.std)
      for (int j = 0; j < d; ++j)
        out << "," << format_double((*t.std)(r, j));
    out << "\n";
  }
  return out.str();
}

inline Trajectory trajectory_from_csv(const std::string &text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("empty trajectory CSV");
  std::vector<std::string> header;
  {
    std::istringstream h(line);
    std::string cell;
    while (std::getline(h, cell, ','))
      header.push_back(cell);
  }
  if (header.empty() || header[0] != "t")
    throw ParseError("trajectory CSV must start with column 't'");
  int d = 0;
  while (d + 1 < static_cast<int>(header.size()) && header[static_cast<std::size_t>(d + 1)] == "q" + std::to_string(d))
    ++d;
  bool has_std = d > 0 && static_cast<int>(header.size()) == 1 + 2 * d;
  for (int j = 0; has_std && j < d; ++j)
    has_std = header[static_cast<std::size_t>(1 + d + j)] == "s" + std::to_string(j);
  if (d == 0 || (static_cast<int>(header.size()) != 1 + d && !has_std))
    throw ParseError("trajectory CSV header must be t,q0..q{d-1}[,s0..s{d-1}]");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    std::vector<double> row;
    std::istringstream l(line);
    std::string cell;
    while (std::getline(l, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size())
          throw std::invalid_argument(cell);
      } catch (const std::exception &) {
        throw ParseError("bad number in trajectory CSV: '" + cell + "'");
      }
    }
    if (row.size() != header.size())
      throw ParseError("trajectory CSV row has the wrong number of cells");
    rows.push_back(std::move(row));
  }
  Trajectory t;
  t.joints.resize(static_cast<Eigen::Index>(rows.size()), d);
  if (has_std)
    t.std = Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    t.times.push_back(rows[r][0]);
    for (int j = 0; j < d; ++j) {
      t.joints(static_cast<Eigen::Index>(r), j) = rows[r][static_cast<std::size_t>(1 + j)];
      if (has_std)
        (*t.std)(static_cast<Eigen::Index>(r), j) = rows[r][static_cast<std::size_t>(1 + d + j)];
    }
  }
  return t;
}

// ---------------------------------------------------------------- checkpoints

inline Json to_json(const VariationalState &s) {
  Json j;
  j["constrained_times"] = s.inducing.constrained_times;
  j["derivative_flags"] = std::vector<bool>(s.inducing.derivative_flags.begin(), s.inducing.derivative_flags.end());
  j["free_times"] = detail::to_json(s.inducing.free_times);
  j["constrained_values"] = detail::to_json(s.constrained_values);
  j["whitened_mean"] = detail::to_json(s.whitened_mean);
  Json chol = Json::array();
  for (const auto &l : s.whitened_chol)
    chol.push_back(detail::to_json(l));
  j["whitened_chol"] = chol;
  return j;
}

inline VariationalState state_from_json(const Json &j) {
  detail::check_keys(j,
                     {"constrained_times", "derivative_flags", "free_times", "constrained_values",
                      "whitened_mean", "whitened_chol"},
                     "variational state");
  VariationalState s;
  s.inducing.constrained_times = j.at("constrained_times").get<std::vector<double>>();
  s.inducing.derivative_flags = j.at("derivative_flags").get<std::vector<bool>>();
  s.inducing.free_times = detail::vector(j.at("free_times"), "free_times");
  s.constrained_values = detail::matrix(j.at("constrained_values"), "constrained_values");
  s.whitened_mean = detail::matrix(j.at("whitened_mean"), "whitened_mean");
  for (const auto &l : j.at("whitened_chol"))
    s.whitened_chol.push_back(detail::matrix(l, "whitened_chol"));
  try {
    s.validate();
  } catch (const InvalidArgument &e) {
    throw ParseError(e.what());
  }
  return s;
}

inline Json to_json(const KernelSpec &k) {
  return {{"family", to_string(k.family)},
          {"length_scale", detail::to_json(k.length_scale)},
          {"variance", detail::to_json(k.variance)}};
}

inline KernelSpec kernel_from_json(const Json &j) {
  detail::check_keys(j, {"family", "length_scale", "variance"}, "kernel");
  try {
    return KernelSpec(kernel_family_from_string(j.at("family").get<std::string>()),
                      detail::vector(j.at("length_scale"), "length_scale"),
                      detail::vector(j.at("variance"), "variance"));
  } catch (const InvalidArgument &e) {
    throw ParseError(e.what());
  }
}

/// Everything needed to replan from a finished run in a new process.
struct Checkpoint {
  std::string config_hash;
  ModelParameters model;
  PlanningProblem problem;
  double time_origin = 0.0;
};

inline Json to_json(const Checkpoint &c) {
  Json j;
  j["config_hash"] = c.config_hash;
  j["state"] = to_json(c.model.state);
  j["kernel"] = to_json(c.model.kernel);
  j["start"] = detail::to_json(c.problem.start);
  if (c.problem.goal)
    j["goal"] = detail::to_json(*c.problem.goal);
  if (c.problem.grasp)
    j["grasp"] = to_json(*c.problem.grasp);
  j["time_origin"] = c.time_origin;
  return j;
}

inline Checkpoint checkpoint_from_json(const Json &j) {
  detail::check_keys(j, {"config_hash", "state", "kernel", "start", "goal", "grasp", "time_origin"}, "checkpoint");
  Checkpoint c;
  c.config_hash = j.at("config_hash").get<std::string>();
  c.model.state = state_from_json(j.at("state"));
  c.model.kernel = kernel_from_json(j.at("kernel"));
  c.problem = problem_from_json(j);
  c.time_origin = detail::get_or(j, "time_origin", 0.0);
  return c;
}

inline Checkpoint make_checkpoint(const PlannerConfig &config, const PlanResult &result) {
  return {config_hash(config), result.model, result.problem, result.time_origin};
}

/// PlanResult shell sufficient for replan() built from a checkpoint; the
/// config must hash to the stored value.
inline PlanResult resume(const PlannerConfig &config, const Checkpoint &c) {
  if (config_hash(config) != c.config_hash)
    throw InvalidArgument("checkpoint was written with a different config");
  PlanResult r;
  r.model = c.model;
  r.problem = c.problem;
  r.time_origin = c.time_origin;
  return r;
}

} // namespace vgpmp::io
