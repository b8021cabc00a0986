#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>

#include <Eigen/Dense>

#include "vgpmp/kernels.hpp"

namespace vgpmp {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for (seed, stream, index); streams separate the
/// purposes a seed is used for (training noise, posterior draws, ...).
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const std::uint64_t h = splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
  return Rng(h);
}

inline Eigen::MatrixXd standard_normal(Rng &rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      m(i, j) = normal(rng);
  return m;
}

/// Random Fourier basis for a unit-length-scale Matérn kernel: frequencies
/// from the Student-t spectral density, phases uniform on [0, 2 pi).
struct FeatureBasis {
  Eigen::VectorXd frequency;
  Eigen::VectorXd phase;

  [[nodiscard]] Eigen::Index size() const { return frequency.size(); }
};

inline FeatureBasis draw_basis(KernelFamily family, int n_features, Rng &rng) {
  if (n_features < 1)
    throw InvalidArgument("n_features must be at least 1");
  std::student_t_distribution<double> student(spectral_dof(family));
  std::uniform_real_distribution<double> uniform(0.0, 2.0 * std::numbers::pi);
  FeatureBasis basis;
  basis.frequency.resize(n_features);
  basis.phase.resize(n_features);
  for (int i = 0; i < n_features; ++i) {
    basis.frequency[i] = student(rng);
    basis.phase[i] = uniform(rng);
  }
  return basis;
}

/// Feature rows for a list of (time, kind) points. A prior draw is
/// `phi * w` with w ~ N(0, I).
struct FeatureEvaluation {
  Eigen::MatrixXd phi;
  /// d phi / d log(length scale)
  Eigen::MatrixXd d_log_length_scale;
  /// d phi / d t of the point's own time
  Eigen::MatrixXd d_time;
};

inline FeatureEvaluation evaluate_features(const KernelSpec &spec, int dim,
                                           const FeatureBasis &basis,
                                           std::span<const double> times,
                                           std::span<const PointKind> kinds,
                                           bool with_partials) {
  for (auto k : kinds)
    check_kind_supported(spec.family, k);
  const Eigen::Index n = static_cast<Eigen::Index>(times.size());
  const Eigen::Index nf = basis.size();
  const double kappa = spec.length_scale[dim];
  const double amp = std::sqrt(2.0 * spec.variance[dim] / static_cast<double>(nf));
  FeatureEvaluation out;
  out.phi.resize(n, nf);
  if (with_partials) {
    out.d_log_length_scale.resize(n, nf);
    out.d_time.resize(n, nf);
  }
  for (Eigen::Index f = 0; f < nf; ++f) {
    const double w = basis.frequency[f] / kappa;
    const double b = basis.phase[f];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = times[static_cast<std::size_t>(i)];
      const double angle = w * t + b;
      const double c = std::cos(angle);
      const double s = std::sin(angle);
      if (kinds[static_cast<std::size_t>(i)] == PointKind::Value) {
        out.phi(i, f) = amp * c;
        if (with_partials) {
          out.d_log_length_scale(i, f) = amp * s * w * t;
          out.d_time(i, f) = -amp * w * s;
        }
      } else {
        out.phi(i, f) = -amp * w * s;
        if (with_partials) {
          out.d_log_length_scale(i, f) = amp * w * s + amp * w * w * t * c;
          out.d_time(i, f) = -amp * w * w * c;
        }
      }
    }
  }
  return out;
}

/// `evaluate_features(...).phi * weights` without forming phi; only the
/// trig function a point kind needs is evaluated.
inline Eigen::VectorXd feature_path(const KernelSpec &spec, int dim, const FeatureBasis &basis,
                                    const Eigen::VectorXd &weights, std::span<const double> times,
                                    std::span<const PointKind> kinds) {
  for (auto k : kinds)
    check_kind_supported(spec.family, k);
  const Eigen::Index nf = basis.size();
  const double amp = std::sqrt(2.0 * spec.variance[dim] / static_cast<double>(nf));
  const Eigen::VectorXd w = basis.frequency / spec.length_scale[dim];
  Eigen::VectorXd out(static_cast<Eigen::Index>(times.size()));
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    double acc = 0.0;
    if (kinds[i] == PointKind::Value) {
      for (Eigen::Index f = 0; f < nf; ++f)
        acc += weights[f] * std::cos(w[f] * t + basis.phase[f]);
    } else {
      for (Eigen::Index f = 0; f < nf; ++f)
        acc -= weights[f] * w[f] * std::sin(w[f] * t + basis.phase[f]);
    }
    out[static_cast<Eigen::Index>(i)] = amp * acc;
  }
  return out;
}

} // namespace vgpmp
