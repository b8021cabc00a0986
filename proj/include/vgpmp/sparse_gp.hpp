#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vgpmp/errors.hpp"
#include "vgpmp/kernels.hpp"
#include "vgpmp/random_features.hpp"

namespace vgpmp {

/// Inducing inputs split into constrained times (held at fixed values) and
/// free times (learned). A constrained time may additionally pin the time
/// derivative (velocity inducing variable).
struct InducingSet {
  std::vector<double> constrained_times;
  std::vector<bool> derivative_flags;
  Eigen::VectorXd free_times;

  /// `num_inducing` counts every inducing time, constrained ones included.
  /// Free times start uniformly spaced strictly inside (start, end).
  static InducingSet anchored(int num_inducing, bool zero_velocity, bool with_goal,
                              double start = 0.0, double end = 1.0) {
    InducingSet set;
    set.constrained_times.push_back(start);
    if (with_goal)
      set.constrained_times.push_back(end);
    set.derivative_flags.assign(set.constrained_times.size(), zero_velocity);
    const int free = num_inducing - static_cast<int>(set.constrained_times.size());
    if (free < 1)
      throw InvalidArgument("need at least one free inducing point");
    set.free_times.resize(free);
    for (int i = 0; i < free; ++i)
      set.free_times[i] = start + (end - start) * (i + 1.0) / (with_goal ? free + 1.0 : free + 0.5);
    set.validate();
    return set;
  }

  [[nodiscard]] int free_count() const { return static_cast<int>(free_times.size()); }

  /// Number of constrained inducing variables (values plus pinned derivatives).
  [[nodiscard]] int constrained_count() const {
    return static_cast<int>(constrained_times.size()) +
           static_cast<int>(std::count(derivative_flags.begin(), derivative_flags.end(), true));
  }

  /// Times of the constrained variables: all values first, then flagged derivatives.
  [[nodiscard]] std::vector<double> constrained_variable_times() const {
    std::vector<double> out(constrained_times);
    for (std::size_t i = 0; i < constrained_times.size(); ++i)
      if (derivative_flags[i])
        out.push_back(constrained_times[i]);
    return out;
  }

  [[nodiscard]] std::vector<PointKind> constrained_variable_kinds() const {
    std::vector<PointKind> out(constrained_times.size(), PointKind::Value);
    for (std::size_t i = 0; i < constrained_times.size(); ++i)
      if (derivative_flags[i])
        out.push_back(PointKind::Derivative);
    return out;
  }

  [[nodiscard]] std::vector<double> free_time_list() const {
    return {free_times.data(), free_times.data() + free_times.size()};
  }

  void validate() const {
    if (constrained_times.empty())
      throw InvalidArgument("inducing set needs at least one constrained time");
    if (derivative_flags.size() != constrained_times.size())
      throw InvalidArgument("one derivative flag per constrained time");
    if (free_times.size() < 1)
      throw InvalidArgument("inducing set needs at least one free time");
    for (double t : constrained_times)
      if (!(t >= 0.0 && t <= 1.0))
        throw InvalidArgument("constrained inducing time outside [0, 1]");
    for (Eigen::Index i = 0; i < free_times.size(); ++i) {
      const double t = free_times[i];
      if (!(t >= 0.0 && t <= 1.0))
        throw InvalidArgument("free inducing time outside [0, 1]");
      for (double c : constrained_times)
        if (t == c)
          throw InvalidArgument("free and constrained inducing times must be disjoint");
    }
  }
};

/// q(u') in whitened coordinates relative to p(u' | u_c), per output dimension:
/// u' = prior_mean + prior_chol * v,  v ~ N(whitened_mean, S S^T).
struct VariationalState {
  InducingSet inducing;
  /// constrained_count x d, unconstrained joint space
  Eigen::MatrixXd constrained_values;
  /// free_count x d
  Eigen::MatrixXd whitened_mean;
  /// d lower-triangular factors, free_count x free_count, positive diagonal
  std::vector<Eigen::MatrixXd> whitened_chol;

  [[nodiscard]] int dims() const { return static_cast<int>(constrained_values.cols()); }

  void validate() const {
    inducing.validate();
    const int d = dims();
    const int m = inducing.free_count();
    if (constrained_values.rows() != inducing.constrained_count())
      throw InvalidArgument("constrained values do not match the inducing set");
    if (whitened_mean.rows() != m || whitened_mean.cols() != d)
      throw InvalidArgument("whitened mean has the wrong shape");
    if (static_cast<int>(whitened_chol.size()) != d)
      throw InvalidArgument("one covariance factor per dimension");
    for (const auto &l : whitened_chol) {
      if (l.rows() != m || l.cols() != m)
        throw InvalidArgument("covariance factor has the wrong shape");
      for (int i = 0; i < m; ++i) {
        if (!(l(i, i) > 0.0))
          throw InvalidArgument("covariance factor diagonal must be positive");
        for (int j = i + 1; j < m; ++j)
          if (l(i, j) != 0.0)
            throw InvalidArgument("covariance factor must be lower triangular");
      }
    }
  }
};

/// p(u' | u_c) for one output dimension.
struct ConditionedPrior {
  Eigen::MatrixXd constrained_gram;  // K_cc, jittered
  Eigen::LLT<Eigen::MatrixXd> constrained_llt;
  Eigen::MatrixXd free_cross;        // K_z'c
  Eigen::MatrixXd projection;        // K_z'c K_cc^-1
  Eigen::VectorXd mean;              // projection * u_c
  Eigen::MatrixXd covariance;        // K_z'z' - K_z'c K_cc^-1 K_cz', jittered
  Eigen::MatrixXd chol;              // lower Cholesky factor of covariance
};

inline ConditionedPrior conditioned_prior_dim(const KernelSpec &kernel, int dim,
                                              const InducingSet &inducing,
                                              const Eigen::VectorXd &constrained_values) {
  const auto ct = inducing.constrained_variable_times();
  const auto ck = inducing.constrained_variable_kinds();
  const auto zt = inducing.free_time_list();
  const auto zk = value_kinds(zt.size());

  ConditionedPrior p;
  p.constrained_gram = gram(kernel, dim, ct, ck, ct, ck).values;
  add_jitter(p.constrained_gram);
  p.constrained_llt = factorize(p.constrained_gram, "constrained inducing block");
  p.free_cross = gram(kernel, dim, zt, zk, ct, ck).values;
  p.projection = p.constrained_llt.solve(p.free_cross.transpose()).transpose();
  p.mean = p.projection * constrained_values;
  Eigen::MatrixXd kzz = gram(kernel, dim, zt, zk, zt, zk).values;
  add_jitter(kzz);
  p.covariance = kzz - p.projection * p.free_cross.transpose();
  p.covariance = 0.5 * (p.covariance + p.covariance.transpose()).eval();
  auto llt = factorize(p.covariance, "conditioned free inducing block");
  p.chol = llt.matrixL();
  return p;
}

/// Mean and Cholesky factor of p(u' | u_c) for every output dimension.
inline std::vector<ConditionedPrior> conditioned_prior(const KernelSpec &kernel,
                                                       const InducingSet &inducing,
                                                       const Eigen::MatrixXd &constrained_values) {
  std::vector<ConditionedPrior> out;
  out.reserve(static_cast<std::size_t>(kernel.dims()));
  for (int j = 0; j < kernel.dims(); ++j)
    out.push_back(conditioned_prior_dim(kernel, j, inducing, constrained_values.col(j)));
  return out;
}

/// Linear maps from (u_c, whitened v) to f at a set of query rows.
/// f_R = A u_c + B v for the conditional mean part.
struct PredictionRows {
  Eigen::MatrixXd cross_constrained;  // K_Rc
  Eigen::MatrixXd cross_free;         // K_Rz'
  Eigen::MatrixXd constrained_weights;  // A = K_Rc K_cc^-1
  Eigen::MatrixXd residual_cross;       // Q = K_Rz' - A K_cz'
  Eigen::MatrixXd whitened_weights;     // B = Q L^-T
  std::vector<int> snapped;             // constrained variable index or -1
};

/// Index of the constrained variable sitting exactly at (t, kind), or -1.
inline int constrained_match(const InducingSet &inducing, double t, PointKind kind) {
  const auto ct = inducing.constrained_variable_times();
  const auto ck = inducing.constrained_variable_kinds();
  for (std::size_t j = 0; j < ct.size(); ++j)
    if (ck[j] == kind && std::abs(ct[j] - t) <= 1e-12)
      return static_cast<int>(j);
  return -1;
}

inline PredictionRows prediction_rows(const KernelSpec &kernel, int dim,
                                      const InducingSet &inducing, const ConditionedPrior &prior,
                                      std::span<const double> times,
                                      std::span<const PointKind> kinds) {
  const auto ct = inducing.constrained_variable_times();
  const auto ck = inducing.constrained_variable_kinds();
  const auto zt = inducing.free_time_list();
  const auto zk = value_kinds(zt.size());
  PredictionRows rows;
  rows.cross_constrained = gram(kernel, dim, times, kinds, ct, ck).values;
  rows.cross_free = gram(kernel, dim, times, kinds, zt, zk).values;
  rows.constrained_weights =
      prior.constrained_llt.solve(rows.cross_constrained.transpose()).transpose();
  rows.residual_cross = rows.cross_free - rows.constrained_weights * prior.free_cross.transpose();
  // Rows at a constrained input are the equality constraint itself.
  rows.snapped.assign(times.size(), -1);
  for (std::size_t r = 0; r < times.size(); ++r) {
    const int j = constrained_match(inducing, times[r], kinds[r]);
    rows.snapped[r] = j;
    if (j >= 0) {
      const auto ri = static_cast<Eigen::Index>(r);
      rows.constrained_weights.row(ri).setZero();
      rows.constrained_weights(ri, j) = 1.0;
      rows.residual_cross.row(ri).setZero();
    }
  }
  rows.whitened_weights = prior.chol.triangularView<Eigen::Lower>()
                              .solve(rows.residual_cross.transpose())
                              .transpose();
  return rows;
}

/// Closed-form KL(N(m, S S^T) || N(0, I)) for one dimension.
inline double whitened_kl(const Eigen::VectorXd &mean, const Eigen::MatrixXd &chol) {
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < chol.rows(); ++i)
    logdet += std::log(chol(i, i));
  return 0.5 * (mean.squaredNorm() + chol.squaredNorm() - 2.0 * logdet -
                static_cast<double>(mean.size()));
}

/// KL(q(u') || p(u' | u_c)) summed over output dimensions. Whitening makes it
/// independent of the kernel hyperparameters.
inline double kl_divergence(const VariationalState &state) {
  double kl = 0.0;
  for (int j = 0; j < state.dims(); ++j)
    kl += whitened_kl(state.whitened_mean.col(j), state.whitened_chol[j]);
  return kl;
}

/// Unwhitened q(u') moments for one dimension.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd>
free_moments(const VariationalState &state, const ConditionedPrior &prior, int dim) {
  const Eigen::MatrixXd lw = prior.chol * state.whitened_chol[dim];
  return {prior.mean + prior.chol * state.whitened_mean.col(dim), lw * lw.transpose()};
}

struct PosteriorMoments {
  std::vector<double> times;
  PointKind kind = PointKind::Value;
  Eigen::MatrixXd mean;          // T x d
  Eigen::MatrixXd marginal_var;  // T x d
};

/// Analytic mean and marginal variance of f (or df/dt) under q, in
/// unconstrained joint space.
inline PosteriorMoments posterior_moments(const VariationalState &state, const KernelSpec &kernel,
                                          const std::vector<ConditionedPrior> &priors,
                                          std::span<const double> times,
                                          PointKind kind = PointKind::Value) {
  PosteriorMoments out;
  out.times.assign(times.begin(), times.end());
  out.kind = kind;
  const auto n = static_cast<Eigen::Index>(times.size());
  const int d = state.dims();
  out.mean.resize(n, d);
  out.marginal_var.resize(n, d);
  const std::vector<PointKind> kinds(times.size(), kind);
  for (int j = 0; j < d; ++j) {
    const auto rows = prediction_rows(kernel, j, state.inducing, priors[j], times, kinds);
    out.mean.col(j) = rows.constrained_weights * state.constrained_values.col(j) +
                      rows.whitened_weights * state.whitened_mean.col(j);
    const Eigen::MatrixXd bs = rows.whitened_weights * state.whitened_chol[j];
    for (Eigen::Index r = 0; r < n; ++r) {
      if (rows.snapped[static_cast<std::size_t>(r)] >= 0) {
        out.marginal_var(r, j) = 0.0;
        continue;
      }
      const double prior_var = cross_covariance(kernel, j, times[static_cast<std::size_t>(r)], kind,
                                                times[static_cast<std::size_t>(r)], kind);
      const double v = prior_var - rows.constrained_weights.row(r).dot(rows.cross_constrained.row(r)) -
                       rows.whitened_weights.row(r).squaredNorm() + bs.row(r).squaredNorm();
      out.marginal_var(r, j) = std::max(v, 0.0);
    }
  }
  return out;
}

inline PosteriorMoments posterior_moments(const VariationalState &state, const KernelSpec &kernel,
                                          std::span<const double> times,
                                          PointKind kind = PointKind::Value) {
  const auto priors = conditioned_prior(kernel, state.inducing, state.constrained_values);
  return posterior_moments(state, kernel, priors, times, kind);
}

/// Everything a posterior path sample needs besides its own noise.
struct SampleContext {
  KernelSpec kernel;
  InducingSet inducing;
  Eigen::MatrixXd constrained_values;
  std::vector<ConditionedPrior> priors;
};

/// One pathwise posterior draw: random-feature prior path plus a linear
/// correction that pins it to u_draw at the inducing inputs.
struct PathSample {
  std::shared_ptr<const SampleContext> context;
  /// per-dimension basis; may be shared between samples of one batch
  std::shared_ptr<const std::vector<FeatureBasis>> basis;
  /// per-dimension feature weights w ~ N(0, I)
  std::vector<Eigen::VectorXd> feature_weights;
  /// whitened draw v (free_count x d)
  Eigen::MatrixXd whitened_draw;
  /// sampled inducing values [u_c; u'] (constrained_count + free_count) x d
  Eigen::MatrixXd u_draw;
  /// K_zz^-1 (u_draw - f_prior(z)) with the jittered K_zz, same row layout as u_draw
  Eigen::MatrixXd correction;
  /// f_prior(z), same row layout as u_draw
  Eigen::MatrixXd prior_at_inducing;

  /// Sample path (or its time derivative) at arbitrary times, T x d.
  [[nodiscard]] Eigen::MatrixXd evaluate(std::span<const double> times,
                                         PointKind kind = PointKind::Value) const;

  /// f_prior(z) + K_zz * correction using the same jittered Gram as the
  /// correction; reproduces u_draw.
  [[nodiscard]] Eigen::MatrixXd evaluate_at_inducing() const;
};

enum class BasisSharing { PerSample, Shared };

namespace detail {

struct PriorDraw {
  Eigen::VectorXd at_rows;
  Eigen::VectorXd at_constrained;
  Eigen::VectorXd at_free;
};

inline PriorDraw prior_draw(const SampleContext &ctx, int dim, const FeatureBasis &basis,
                            const Eigen::VectorXd &weights, std::span<const double> times,
                            std::span<const PointKind> kinds) {
  const auto ct = ctx.inducing.constrained_variable_times();
  const auto ck = ctx.inducing.constrained_variable_kinds();
  const auto zt = ctx.inducing.free_time_list();
  const auto zk = value_kinds(zt.size());
  PriorDraw out;
  if (!times.empty())
    out.at_rows = feature_path(ctx.kernel, dim, basis, weights, times, kinds);
  out.at_constrained = feature_path(ctx.kernel, dim, basis, weights, ct, ck);
  out.at_free = feature_path(ctx.kernel, dim, basis, weights, zt, zk);
  return out;
}

} // namespace detail

inline Eigen::MatrixXd PathSample::evaluate(std::span<const double> times, PointKind kind) const {
  const auto &ctx = *context;
  const int d = ctx.kernel.dims();
  const std::vector<PointKind> kinds(times.size(), kind);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(times.size()), d);
  for (int j = 0; j < d; ++j) {
    const auto &prior = ctx.priors[j];
    const Eigen::Index nc = prior_at_inducing.rows() - whitened_draw.rows();
    const Eigen::VectorXd at_constrained = prior_at_inducing.col(j).head(nc);
    const Eigen::VectorXd at_rows = feature_path(ctx.kernel, j, (*basis)[j], feature_weights[j], times, kinds);
    const auto rows = prediction_rows(ctx.kernel, j, ctx.inducing, prior, times, kinds);
    const Eigen::VectorXd residual_free =
        prior_at_inducing.col(j).tail(whitened_draw.rows()) - prior.projection * at_constrained;
    const Eigen::VectorXd e =
        whitened_draw.col(j) - prior.chol.triangularView<Eigen::Lower>().solve(residual_free);
    out.col(j) = at_rows + rows.constrained_weights * (ctx.constrained_values.col(j) - at_constrained) +
                 rows.whitened_weights * e;
    // Snapped rows are exactly the constrained value; the prior terms cancel
    // only up to rounding, so write them directly.
    for (std::size_t r = 0; r < times.size(); ++r)
      if (rows.snapped[r] >= 0)
        out(static_cast<Eigen::Index>(r), j) = ctx.constrained_values(rows.snapped[r], j);
  }
  return out;
}

inline Eigen::MatrixXd PathSample::evaluate_at_inducing() const {
  const auto &ctx = *context;
  const int d = ctx.kernel.dims();
  const int nc = ctx.inducing.constrained_count();
  const int m = ctx.inducing.free_count();
  Eigen::MatrixXd out(nc + m, d);
  for (int j = 0; j < d; ++j) {
    const auto &prior = ctx.priors[j];
    const auto draw = detail::prior_draw(ctx, j, (*basis)[j], feature_weights[j], {}, {});
    Eigen::MatrixXd kzz(nc + m, nc + m);
    kzz.topLeftCorner(nc, nc) = prior.constrained_gram;
    kzz.bottomLeftCorner(m, nc) = prior.free_cross;
    kzz.topRightCorner(nc, m) = prior.free_cross.transpose();
    kzz.bottomRightCorner(m, m) = prior.covariance + prior.projection * prior.free_cross.transpose();
    Eigen::VectorXd fz(nc + m);
    fz << draw.at_constrained, draw.at_free;
    out.col(j) = fz + kzz * correction.col(j);
  }
  return out;
}

/// Draws `count` pathwise posterior samples from q. Deterministic in `seed`.
inline std::vector<PathSample> draw_samples(const VariationalState &state, const KernelSpec &kernel,
                                            int count, std::uint64_t seed, int n_features,
                                            BasisSharing sharing = BasisSharing::PerSample) {
  if (n_features < 1)
    throw InvalidArgument("n_features must be at least 1");
  state.validate();
  auto ctx = std::make_shared<SampleContext>();
  ctx->kernel = kernel;
  ctx->inducing = state.inducing;
  ctx->constrained_values = state.constrained_values;
  ctx->priors = conditioned_prior(kernel, state.inducing, state.constrained_values);

  const int d = state.dims();
  const int nc = state.inducing.constrained_count();
  const int m = state.inducing.free_count();
  constexpr std::uint64_t kSampleStream = 0x53414d50;  // "SAMP"

  std::shared_ptr<const std::vector<FeatureBasis>> shared;
  if (sharing == BasisSharing::Shared) {
    auto rng = make_rng(seed, kSampleStream, ~0ULL);
    auto b = std::make_shared<std::vector<FeatureBasis>>();
    for (int j = 0; j < d; ++j)
      b->push_back(draw_basis(kernel.family, n_features, rng));
    shared = b;
  }

  std::vector<PathSample> samples;
  samples.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 0; k < count; ++k) {
    auto rng = make_rng(seed, kSampleStream, static_cast<std::uint64_t>(k));
    PathSample s;
    s.context = ctx;
    if (sharing == BasisSharing::Shared) {
      s.basis = shared;
    } else {
      auto b = std::make_shared<std::vector<FeatureBasis>>();
      for (int j = 0; j < d; ++j)
        b->push_back(draw_basis(kernel.family, n_features, rng));
      s.basis = b;
    }
    s.whitened_draw.resize(m, d);
    s.u_draw.resize(nc + m, d);
    s.correction.resize(nc + m, d);
    s.prior_at_inducing.resize(nc + m, d);
    for (int j = 0; j < d; ++j) {
      const auto &prior = ctx->priors[j];
      s.feature_weights.push_back(standard_normal(rng, n_features, 1).col(0));
      const Eigen::VectorXd xi = standard_normal(rng, m, 1).col(0);
      const Eigen::VectorXd v = state.whitened_mean.col(j) +
                                state.whitened_chol[j].triangularView<Eigen::Lower>() * xi;
      s.whitened_draw.col(j) = v;
      s.u_draw.col(j).head(nc) = state.constrained_values.col(j);
      s.u_draw.col(j).tail(m) = prior.mean + prior.chol * v;

      const auto draw = detail::prior_draw(*ctx, j, (*s.basis)[j], s.feature_weights[j], {}, {});
      s.prior_at_inducing.col(j) << draw.at_constrained, draw.at_free;
      const Eigen::VectorXd residual_free = draw.at_free - prior.projection * draw.at_constrained;
      const auto lower = prior.chol.triangularView<Eigen::Lower>();
      const Eigen::VectorXd delta = lower.transpose().solve(v - lower.solve(residual_free));
      const Eigen::VectorXd y = state.constrained_values.col(j) - draw.at_constrained;
      s.correction.col(j).head(nc) =
          prior.constrained_llt.solve(y - prior.free_cross.transpose() * delta);
      s.correction.col(j).tail(m) = delta;
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

} // namespace vgpmp
