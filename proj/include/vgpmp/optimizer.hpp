#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "vgpmp/errors.hpp"
#include "vgpmp/kernels.hpp"
#include "vgpmp/objective.hpp"
#include "vgpmp/random_features.hpp"
#include "vgpmp/sparse_gp.hpp"

namespace vgpmp {

/// Which parameter groups gradient steps may change. u_c and sigma_obs are
/// never trainable.
struct TrainableSet {
  bool mean = true;
  bool covariance = true;
  bool inducing_times = true;
  bool length_scale = true;
  bool variance = true;
};

struct AdamConfig {
  double beta1 = 0.8;
  double beta2 = 0.95;
  double learning_rate = 0.09;
  double epsilon = 1e-8;
  /// when set, the rate decays geometrically to this value at the last step
  std::optional<double> final_learning_rate;

  void validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
      throw InvalidArgument("Adam betas must lie in (0, 1)");
    if (!(learning_rate > 0.0) || !(epsilon > 0.0))
      throw InvalidArgument("Adam learning rate and epsilon must be positive");
    if (final_learning_rate && !(*final_learning_rate > 0.0))
      throw InvalidArgument("final learning rate must be positive");
  }

  /// Rate for step `step` of `total` (0-based).
  [[nodiscard]] double rate(int step, int total) const {
    if (!final_learning_rate || total <= 1)
      return learning_rate;
    const double frac = static_cast<double>(step) / static_cast<double>(total - 1);
    return learning_rate * std::pow(*final_learning_rate / learning_rate, frac);
  }
};

struct AdamState {
  AdamConfig config;
  long step = 0;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;

  AdamState() = default;
  AdamState(AdamConfig cfg, Eigen::Index size)
      : config(cfg), first_moment(Eigen::VectorXd::Zero(size)),
        second_moment(Eigen::VectorXd::Zero(size)) {
    config.validate();
  }
};

/// One bias-corrected Adam descent step.
inline void adam_step(AdamState &state, Eigen::VectorXd &params, const Eigen::VectorXd &grad,
                      double learning_rate) {
  if (params.size() != grad.size() || state.first_moment.size() != params.size())
    throw InvalidArgument("Adam state, parameters and gradient sizes differ");
  const auto &c = state.config;
  ++state.step;
  state.first_moment = c.beta1 * state.first_moment + (1.0 - c.beta1) * grad;
  state.second_moment = c.beta2 * state.second_moment + (1.0 - c.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double mhat = state.first_moment[i] / bc1;
    const double vhat = state.second_moment[i] / bc2;
    params[i] -= learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
  }
}

inline void adam_step(AdamState &state, Eigen::VectorXd &params, const Eigen::VectorXd &grad) {
  adam_step(state, params, grad, state.config.learning_rate);
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

inline double softplus_inverse(double y) {
  if (!(y > 0.0))
    throw InvalidArgument("softplus inverse needs a positive value");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

/// Everything the trainable parameters describe.
struct ModelParameters {
  VariationalState state;
  KernelSpec kernel;
};

/// Flat packing of the trainable groups. Covariance diagonals go through
/// softplus, hyperparameters through log, free inducing times through a
/// logistic onto (first constrained time, 1).
class ParameterLayout {
public:
  ParameterLayout() = default;
  ParameterLayout(const ModelParameters &reference, TrainableSet trainable)
      : trainable_(trainable), dims_(reference.state.dims()),
        free_(reference.state.inducing.free_count()) {
    const auto &ct = reference.state.inducing.constrained_times;
    lower_ = *std::min_element(ct.begin(), ct.end());
    upper_ = 1.0;
    Eigen::Index n = 0;
    if (trainable_.mean)
      n += static_cast<Eigen::Index>(dims_) * free_;
    if (trainable_.covariance)
      n += static_cast<Eigen::Index>(dims_) * free_ * (free_ + 1) / 2;
    if (trainable_.length_scale)
      n += dims_;
    if (trainable_.variance)
      n += dims_;
    if (trainable_.inducing_times)
      n += free_;
    size_ = n;
  }

  [[nodiscard]] Eigen::Index size() const { return size_; }
  [[nodiscard]] const TrainableSet &trainable() const { return trainable_; }
  [[nodiscard]] double time_lower() const { return lower_; }
  [[nodiscard]] double time_upper() const { return upper_; }

  [[nodiscard]] double time_from_raw(double raw) const {
    const double t = lower_ + (upper_ - lower_) * logistic(raw);
    return std::clamp(t, std::nextafter(lower_, upper_), std::nextafter(upper_, lower_));
  }
  [[nodiscard]] double time_to_raw(double t) const {
    if (!(t > lower_ && t < upper_))
      throw InvalidArgument("free inducing time outside its trainable interval");
    return std::log(t - lower_) - std::log(upper_ - t);
  }

  [[nodiscard]] Eigen::VectorXd pack(const ModelParameters &p) const {
    Eigen::VectorXd x(size_);
    Eigen::Index k = 0;
    for (int j = 0; j < dims_; ++j) {
      if (trainable_.mean)
        for (int i = 0; i < free_; ++i)
          x[k++] = p.state.whitened_mean(i, j);
      if (trainable_.covariance) {
        const auto &l = p.state.whitened_chol[static_cast<std::size_t>(j)];
        for (int c = 0; c < free_; ++c)
          for (int r = c; r < free_; ++r)
            x[k++] = r == c ? softplus_inverse(l(r, c)) : l(r, c);
      }
    }
    if (trainable_.length_scale)
      for (int j = 0; j < dims_; ++j)
        x[k++] = std::log(p.kernel.length_scale[j]);
    if (trainable_.variance)
      for (int j = 0; j < dims_; ++j)
        x[k++] = std::log(p.kernel.variance[j]);
    if (trainable_.inducing_times)
      for (int i = 0; i < free_; ++i)
        x[k++] = time_to_raw(p.state.inducing.free_times[i]);
    return x;
  }

  [[nodiscard]] ModelParameters unpack(const Eigen::VectorXd &x, const ModelParameters &reference) const {
    if (x.size() != size_)
      throw InvalidArgument("parameter vector has the wrong size");
    ModelParameters p = reference;
    Eigen::Index k = 0;
    for (int j = 0; j < dims_; ++j) {
      if (trainable_.mean)
        for (int i = 0; i < free_; ++i)
          p.state.whitened_mean(i, j) = x[k++];
      if (trainable_.covariance) {
        auto &l = p.state.whitened_chol[static_cast<std::size_t>(j)];
        l.setZero();
        for (int c = 0; c < free_; ++c)
          for (int r = c; r < free_; ++r) {
            const double v = x[k++];
            l(r, c) = r == c ? softplus(v) : v;
          }
      }
    }
    if (trainable_.length_scale)
      for (int j = 0; j < dims_; ++j)
        p.kernel.length_scale[j] = std::exp(x[k++]);
    if (trainable_.variance)
      for (int j = 0; j < dims_; ++j)
        p.kernel.variance[j] = std::exp(x[k++]);
    if (trainable_.inducing_times)
      for (int i = 0; i < free_; ++i)
        p.state.inducing.free_times[i] = time_from_raw(x[k++]);
    return p;
  }

  /// Chain rule from natural-parameter gradients to the packed raw vector.
  [[nodiscard]] Eigen::VectorXd pack_gradient(const Eigen::VectorXd &x, const Eigen::MatrixXd &d_mean,
                                              const std::vector<Eigen::MatrixXd> &d_chol,
                                              const Eigen::VectorXd &d_log_length_scale,
                                              const Eigen::VectorXd &d_log_variance,
                                              const Eigen::VectorXd &d_times) const {
    Eigen::VectorXd g(size_);
    Eigen::Index k = 0;
    for (int j = 0; j < dims_; ++j) {
      if (trainable_.mean)
        for (int i = 0; i < free_; ++i)
          g[k++] = d_mean(i, j);
      if (trainable_.covariance) {
        const auto &dl = d_chol[static_cast<std::size_t>(j)];
        for (int c = 0; c < free_; ++c)
          for (int r = c; r < free_; ++r) {
            g[k] = r == c ? dl(r, c) * logistic(x[k]) : dl(r, c);
            ++k;
          }
      }
    }
    if (trainable_.length_scale)
      for (int j = 0; j < dims_; ++j)
        g[k++] = d_log_length_scale[j];
    if (trainable_.variance)
      for (int j = 0; j < dims_; ++j)
        g[k++] = d_log_variance[j];
    if (trainable_.inducing_times)
      for (int i = 0; i < free_; ++i) {
        const double s = logistic(x[k]);
        g[k] = d_times[i] * (upper_ - lower_) * s * (1.0 - s);
        ++k;
      }
    return g;
  }

private:
  TrainableSet trainable_;
  int dims_ = 0;
  int free_ = 0;
  double lower_ = 0.0;
  double upper_ = 1.0;
  Eigen::Index size_ = 0;
};

/// Reverse-mode adjoint of the lower Cholesky factor: given L = chol(S) and
/// dJ/dL (lower part used), returns the symmetric dJ/dS.
inline Eigen::MatrixXd cholesky_adjoint(const Eigen::MatrixXd &l, const Eigen::MatrixXd &l_bar) {
  Eigen::MatrixXd phi = (l.transpose() * l_bar.triangularView<Eigen::Lower>().toDenseMatrix())
                            .triangularView<Eigen::Lower>();
  phi.diagonal() *= 0.5;
  const auto lower = l.triangularView<Eigen::Lower>();
  // L^-T phi L^-1
  Eigen::MatrixXd s = lower.transpose().solve(phi);
  s = lower.transpose().solve(s.transpose()).transpose();
  return 0.5 * (s + s.transpose());
}

struct ObjectiveValue {
  double loss = 0.0;
  double kl = 0.0;
  /// likelihood_scale * mean_k 1/2 cost_k
  double likelihood = 0.0;
  std::vector<TermCosts> sample_costs;
  Eigen::VectorXd gradient;
  /// branch record of every piecewise cost term, for kink detection
  std::vector<std::int64_t> signature;
};

/// The seeded Monte Carlo negative ELBO over the packed trainable parameters.
/// For a given iteration index the noise (feature basis, feature weights and
/// whitened draws) is fixed, so the value is a deterministic smooth function
/// of the parameters away from hinge kinks.
class ElboObjective {
public:
  ElboObjective(const CostModel &cost, ModelParameters reference, TrainableSet trainable,
                std::vector<double> times, int samples, int n_features, std::uint64_t seed)
      : cost_(&cost), reference_(std::move(reference)), layout_(reference_, trainable),
        times_(std::move(times)), samples_(samples), n_features_(n_features), seed_(seed) {
    reference_.state.validate();
    reference_.kernel.validate();
    if (reference_.kernel.dims() != reference_.state.dims())
      throw InvalidArgument("kernel and variational state dimensions differ");
    if (samples_ < 1 || n_features_ < 1)
      throw InvalidArgument("need at least one sample and one feature");
    if (times_.size() < 2)
      throw InvalidArgument("time grid needs at least two points");
    if (cost_->needs_derivatives())
      check_kind_supported(reference_.kernel.family, PointKind::Derivative);
  }

  [[nodiscard]] const ParameterLayout &layout() const { return layout_; }
  [[nodiscard]] const ModelParameters &reference() const { return reference_; }
  [[nodiscard]] const std::vector<double> &times() const { return times_; }
  [[nodiscard]] Eigen::VectorXd initial_parameters() const { return layout_.pack(reference_); }
  [[nodiscard]] ModelParameters unpack(const Eigen::VectorXd &x) const {
    return layout_.unpack(x, reference_);
  }

  [[nodiscard]] ObjectiveValue evaluate(const Eigen::VectorXd &x, std::uint64_t iteration,
                                        bool with_gradient, bool with_signature = false) const;

private:
  struct DimWork;

  const CostModel *cost_;
  ModelParameters reference_;
  ParameterLayout layout_;
  std::vector<double> times_;
  int samples_;
  int n_features_;
  std::uint64_t seed_;
};

struct ElboObjective::DimWork {
  // inputs
  std::vector<double> ct, zt, rt;
  std::vector<PointKind> ck, zk, rk;
  std::vector<int> snapped;
  // kernel blocks and conditioning
  Eigen::MatrixXd kcc, kzc, krc;
  Eigen::LLT<Eigen::MatrixXd> kcc_llt;
  Eigen::MatrixXd az, ar, q, b, l;
  // noise and features
  FeatureBasis basis;
  Eigen::MatrixXd w, xi;
  FeatureEvaluation feat_r, feat_c, feat_z;
  Eigen::MatrixXd pr, pc, pz;
  // sample algebra
  Eigen::MatrixXd v, h, e, y, f;
};

inline ObjectiveValue ElboObjective::evaluate(const Eigen::VectorXd &x, std::uint64_t iteration,
                                              bool with_gradient, bool with_signature) const {
  const ModelParameters params = layout_.unpack(x, reference_);
  const auto &state = params.state;
  const auto &kernel = params.kernel;
  const int d = state.dims();
  const int m = state.inducing.free_count();
  const int k_samples = samples_;
  const auto steps = static_cast<Eigen::Index>(times_.size());
  const bool need_dot = cost_->needs_derivatives();
  const auto &trainable = layout_.trainable();
  const bool hyper_grad = with_gradient && (trainable.length_scale || trainable.variance);
  const bool time_grad = with_gradient && trainable.inducing_times;

  constexpr std::uint64_t kTrainStream = 0x5452414e;  // "TRAN"
  auto rng = make_rng(seed_, kTrainStream, iteration);

  std::vector<DimWork> work(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    auto &wk = work[static_cast<std::size_t>(j)];
    wk.ct = state.inducing.constrained_variable_times();
    wk.ck = state.inducing.constrained_variable_kinds();
    wk.zt = state.inducing.free_time_list();
    wk.zk = value_kinds(wk.zt.size());
    wk.rt = times_;
    wk.rk = value_kinds(times_.size());
    if (need_dot) {
      wk.rt.insert(wk.rt.end(), times_.begin(), times_.end());
      wk.rk.insert(wk.rk.end(), times_.size(), PointKind::Derivative);
    }
    wk.snapped.resize(wk.rt.size());
    for (std::size_t r = 0; r < wk.rt.size(); ++r)
      wk.snapped[r] = constrained_match(state.inducing, wk.rt[r], wk.rk[r]);

    wk.kcc = gram(kernel, j, wk.ct, wk.ck, wk.ct, wk.ck).values;
    add_jitter(wk.kcc);
    wk.kcc_llt = factorize(wk.kcc, "constrained inducing block");
    wk.kzc = gram(kernel, j, wk.zt, wk.zk, wk.ct, wk.ck).values;
    wk.az = wk.kcc_llt.solve(wk.kzc.transpose()).transpose();
    Eigen::MatrixXd kzz = gram(kernel, j, wk.zt, wk.zk, wk.zt, wk.zk).values;
    add_jitter(kzz);
    Eigen::MatrixXd s = kzz - wk.az * wk.kzc.transpose();
    s = 0.5 * (s + s.transpose()).eval();
    wk.l = factorize(s, "conditioned free inducing block").matrixL();
    wk.krc = gram(kernel, j, wk.rt, wk.rk, wk.ct, wk.ck).values;
    const Eigen::MatrixXd krz = gram(kernel, j, wk.rt, wk.rk, wk.zt, wk.zk).values;
    wk.ar = wk.kcc_llt.solve(wk.krc.transpose()).transpose();
    wk.q = krz - wk.ar * wk.kzc.transpose();
    for (std::size_t r = 0; r < wk.rt.size(); ++r)
      if (wk.snapped[r] >= 0) {
        const auto ri = static_cast<Eigen::Index>(r);
        wk.ar.row(ri).setZero();
        wk.ar(ri, wk.snapped[r]) = 1.0;
        wk.q.row(ri).setZero();
      }
    const auto lower = wk.l.triangularView<Eigen::Lower>();
    wk.b = lower.solve(wk.q.transpose()).transpose();

    wk.basis = draw_basis(kernel.family, n_features_, rng);
    wk.w = standard_normal(rng, n_features_, k_samples);
    wk.xi = standard_normal(rng, m, k_samples);
    wk.feat_r = evaluate_features(kernel, j, wk.basis, wk.rt, wk.rk, hyper_grad);
    wk.feat_c = evaluate_features(kernel, j, wk.basis, wk.ct, wk.ck, hyper_grad);
    wk.feat_z = evaluate_features(kernel, j, wk.basis, wk.zt, wk.zk, hyper_grad || time_grad);
    wk.pr = wk.feat_r.phi * wk.w;
    wk.pc = wk.feat_c.phi * wk.w;
    wk.pz = wk.feat_z.phi * wk.w;

    const auto &chol = state.whitened_chol[static_cast<std::size_t>(j)];
    wk.v = chol.triangularView<Eigen::Lower>() * wk.xi;
    wk.v.colwise() += state.whitened_mean.col(j);
    wk.h = lower.solve(wk.pz - wk.az * wk.pc);
    wk.e = wk.v - wk.h;
    wk.y = (-wk.pc).colwise() + state.constrained_values.col(j);
    wk.f = wk.pr + wk.ar * wk.y + wk.b * wk.e;
    for (std::size_t r = 0; r < wk.rt.size(); ++r)
      if (wk.snapped[r] >= 0)
        wk.f.row(static_cast<Eigen::Index>(r)).setConstant(state.constrained_values(wk.snapped[r], j));
  }

  ObjectiveValue out;
  out.kl = kl_divergence(state);
  const auto &weights = cost_->weights();
  std::vector<Eigen::MatrixXd> f_bar(static_cast<std::size_t>(d),
                                     Eigen::MatrixXd::Zero(need_dot ? 2 * steps : steps, k_samples));
  std::vector<double> totals;
  for (int k = 0; k < k_samples; ++k) {
    Eigen::MatrixXd fk(steps, d);
    Eigen::MatrixXd fdk = need_dot ? Eigen::MatrixXd(steps, d) : Eigen::MatrixXd();
    for (int j = 0; j < d; ++j) {
      const auto &wk = work[static_cast<std::size_t>(j)];
      fk.col(j) = wk.f.col(k).head(steps);
      if (need_dot)
        fdk.col(j) = wk.f.col(k).tail(steps);
    }
    PathCostGradient pg;
    const auto terms = cost_->evaluate(fk, fdk, with_gradient ? &pg : nullptr,
                                       with_signature ? &out.signature : nullptr);
    out.sample_costs.push_back(terms);
    totals.push_back(terms.total());
    if (with_gradient) {
      const double scale = weights.likelihood_scale * 0.5 / static_cast<double>(k_samples);
      for (int j = 0; j < d; ++j) {
        auto &fb = f_bar[static_cast<std::size_t>(j)];
        fb.col(k).head(steps) = scale * pg.d_f.col(j);
        if (need_dot)
          fb.col(k).tail(steps) = scale * pg.d_fdot.col(j);
      }
    }
  }
  out.loss = negative_elbo(totals, out.kl, weights);
  out.likelihood = out.loss - out.kl;
  if (!std::isfinite(out.loss))
    throw NonFiniteLoss("negative ELBO is not finite");
  if (!with_gradient)
    return out;

  Eigen::MatrixXd d_mean = state.whitened_mean;  // KL part
  std::vector<Eigen::MatrixXd> d_chol(static_cast<std::size_t>(d));
  Eigen::VectorXd d_log_ls = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd d_log_var = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd d_times = Eigen::VectorXd::Zero(m);
  const double jitter_scale = 1.0 + kGramJitter;

  for (int j = 0; j < d; ++j) {
    const auto &wk = work[static_cast<std::size_t>(j)];
    const auto &chol = state.whitened_chol[static_cast<std::size_t>(j)];
    d_chol[static_cast<std::size_t>(j)] = chol;
    d_chol[static_cast<std::size_t>(j)].diagonal() -= chol.diagonal().cwiseInverse();

    Eigen::MatrixXd fb = f_bar[static_cast<std::size_t>(j)];
    for (std::size_t r = 0; r < wk.rt.size(); ++r)
      if (wk.snapped[r] >= 0)
        fb.row(static_cast<Eigen::Index>(r)).setZero();
    const auto lower = wk.l.triangularView<Eigen::Lower>();

    // f = pr + ar y + b e,  y = u_c - pc,  e = v - h,  h = L^-1 (pz - az pc)
    const Eigen::MatrixXd &pr_bar = fb;
    Eigen::MatrixXd ar_bar = fb * wk.y.transpose();
    Eigen::MatrixXd pc_bar = -(wk.ar.transpose() * fb);
    const Eigen::MatrixXd b_bar = fb * wk.e.transpose();
    const Eigen::MatrixXd e_bar = wk.b.transpose() * fb;
    const Eigen::MatrixXd &v_bar = e_bar;
    const Eigen::MatrixXd g_bar = lower.transpose().solve(-e_bar);
    Eigen::MatrixXd l_bar = -(g_bar * wk.h.transpose());
    const Eigen::MatrixXd &pz_bar = g_bar;
    Eigen::MatrixXd az_bar = -(g_bar * wk.pc.transpose());
    pc_bar -= wk.az.transpose() * g_bar;

    // b = q L^-T
    Eigen::MatrixXd q_bar = lower.transpose().solve(b_bar.transpose()).transpose();
    l_bar -= q_bar.transpose() * wk.b;
    for (std::size_t r = 0; r < wk.rt.size(); ++r)
      if (wk.snapped[r] >= 0)
        q_bar.row(static_cast<Eigen::Index>(r)).setZero();
    // q = krz - ar kzc^T
    const Eigen::MatrixXd &krz_bar = q_bar;
    ar_bar -= q_bar * wk.kzc;
    Eigen::MatrixXd kzc_bar = -(q_bar.transpose() * wk.ar);
    for (std::size_t r = 0; r < wk.rt.size(); ++r)
      if (wk.snapped[r] >= 0)
        ar_bar.row(static_cast<Eigen::Index>(r)).setZero();

    // L = chol(kzz - az kzc^T)
    const Eigen::MatrixXd s_bar =
        cholesky_adjoint(wk.l, Eigen::MatrixXd(l_bar.triangularView<Eigen::Lower>()));
    Eigen::MatrixXd kzz_bar = s_bar;
    kzz_bar.diagonal() *= jitter_scale;
    az_bar -= s_bar * wk.kzc;
    kzc_bar -= s_bar * wk.az;

    // ar = krc kcc^-1, az = kzc kcc^-1
    const Eigen::MatrixXd krc_bar = wk.kcc_llt.solve(ar_bar.transpose()).transpose();
    const Eigen::MatrixXd az_solved = wk.kcc_llt.solve(az_bar.transpose()).transpose();
    kzc_bar += az_solved;
    Eigen::MatrixXd kcc_bar = -(wk.ar.transpose() * krc_bar) - wk.az.transpose() * az_solved;
    kcc_bar.diagonal() *= jitter_scale;

    // variational parameters
    d_mean.col(j) += v_bar.rowwise().sum();
    d_chol[static_cast<std::size_t>(j)] +=
        Eigen::MatrixXd((v_bar * wk.xi.transpose()).triangularView<Eigen::Lower>());

    if (!hyper_grad && !time_grad)
      continue;

    // kernel blocks to hyperparameters and free times
    auto accumulate = [&](const Eigen::MatrixXd &bar, const std::vector<double> &rt,
                          const std::vector<PointKind> &rk, const std::vector<double> &cts,
                          const std::vector<PointKind> &cks, bool rows_free, bool cols_free) {
      for (Eigen::Index a = 0; a < bar.rows(); ++a)
        for (Eigen::Index c = 0; c < bar.cols(); ++c) {
          const double g = bar(a, c);
          if (g == 0.0)
            continue;
          const auto p = cross_covariance_partials(kernel, j, rt[static_cast<std::size_t>(a)],
                                                   rk[static_cast<std::size_t>(a)],
                                                   cts[static_cast<std::size_t>(c)],
                                                   cks[static_cast<std::size_t>(c)]);
          d_log_ls[j] += g * p.d_log_length_scale;
          d_log_var[j] += g * p.d_log_variance;
          if (time_grad && rows_free)
            d_times[a] += g * p.d_t1;
          if (time_grad && cols_free)
            d_times[c] += g * p.d_t2;
        }
    };
    accumulate(kcc_bar, wk.ct, wk.ck, wk.ct, wk.ck, false, false);
    accumulate(kzc_bar, wk.zt, wk.zk, wk.ct, wk.ck, true, false);
    accumulate(kzz_bar, wk.zt, wk.zk, wk.zt, wk.zk, true, true);
    accumulate(krc_bar, wk.rt, wk.rk, wk.ct, wk.ck, false, false);
    accumulate(krz_bar, wk.rt, wk.rk, wk.zt, wk.zk, false, true);

    // feature matrices: p = phi w
    if (hyper_grad) {
      d_log_ls[j] += (pr_bar.cwiseProduct(wk.feat_r.d_log_length_scale * wk.w)).sum() +
                     (pc_bar.cwiseProduct(wk.feat_c.d_log_length_scale * wk.w)).sum() +
                     (pz_bar.cwiseProduct(wk.feat_z.d_log_length_scale * wk.w)).sum();
      d_log_var[j] += 0.5 * ((pr_bar.cwiseProduct(wk.pr)).sum() + (pc_bar.cwiseProduct(wk.pc)).sum() +
                             (pz_bar.cwiseProduct(wk.pz)).sum());
    }
    if (time_grad)
      d_times += (pz_bar.cwiseProduct(wk.feat_z.d_time * wk.w)).rowwise().sum();
  }

  out.gradient = layout_.pack_gradient(x, d_mean, d_chol, d_log_ls, d_log_var, d_times);
  if (!out.gradient.allFinite())
    throw NonFiniteGradient("negative ELBO gradient is not finite");
  return out;
}

/// Central finite differences of a scalar function.
inline Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd &)> &fn,
                                                  const Eigen::VectorXd &x, double step = 1e-5) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = fn(probe);
    probe[i] = x[i] - step;
    const double down = fn(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  Eigen::Index worst_index = -1;
  /// false when a finite-difference probe changed the piecewise branch
  bool smooth = true;
};

/// Compares the analytic gradient of `objective` at `x` (fixed iteration
/// noise) against central differences. Components are compared by
/// |g - fd| / max(|g|, |fd|, floor).
inline GradientCheck check_gradient(const ElboObjective &objective, const Eigen::VectorXd &x,
                                    std::uint64_t iteration, double step = 1e-5,
                                    double floor = 1e-6) {
  GradientCheck result;
  const auto base = objective.evaluate(x, iteration, true, true);
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const auto up = objective.evaluate(probe, iteration, false, true);
    probe[i] = x[i] - step;
    const auto down = objective.evaluate(probe, iteration, false, true);
    probe[i] = x[i];
    if (up.signature != base.signature || down.signature != base.signature)
      result.smooth = false;
    const double fd = (up.loss - down.loss) / (2.0 * step);
    const double g = base.gradient[i];
    const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), floor});
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_index = i;
    }
  }
  return result;
}

} // namespace vgpmp
