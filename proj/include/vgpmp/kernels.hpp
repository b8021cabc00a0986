#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vgpmp/errors.hpp"

namespace vgpmp {

enum class KernelFamily { Matern12, Matern32, Matern52 };

/// Whether a Gram row/column is a function value f(t) or its time derivative.
enum class PointKind { Value, Derivative };

inline std::string to_string(KernelFamily family) {
  switch (family) {
  case KernelFamily::Matern12:
    return "matern12";
  case KernelFamily::Matern32:
    return "matern32";
  case KernelFamily::Matern52:
    return "matern52";
  }
  return "unknown";
}

inline KernelFamily kernel_family_from_string(const std::string &name) {
  if (name == "matern12" || name == "Matern12")
    return KernelFamily::Matern12;
  if (name == "matern32" || name == "Matern32")
    return KernelFamily::Matern32;
  if (name == "matern52" || name == "Matern52")
    return KernelFamily::Matern52;
  throw ParseError("unknown kernel family '" + name + "'");
}

/// Highest time-derivative order (per argument) a family supports.
inline int max_derivative_order(KernelFamily family) {
  switch (family) {
  case KernelFamily::Matern12:
    return 0;
  case KernelFamily::Matern32:
    return 1;
  case KernelFamily::Matern52:
    return 2;
  }
  return 0;
}

/// Student-t degrees of freedom of the family's spectral density (2 nu).
inline double spectral_dof(KernelFamily family) {
  switch (family) {
  case KernelFamily::Matern12:
    return 1.0;
  case KernelFamily::Matern32:
    return 3.0;
  case KernelFamily::Matern52:
    return 5.0;
  }
  return 1.0;
}

/// Independent stationary kernels, one (length scale, variance) pair per
/// output dimension.
struct KernelSpec {
  KernelFamily family = KernelFamily::Matern52;
  Eigen::VectorXd length_scale;
  Eigen::VectorXd variance;

  KernelSpec() = default;
  KernelSpec(KernelFamily f, Eigen::VectorXd ls, Eigen::VectorXd var)
      : family(f), length_scale(std::move(ls)), variance(std::move(var)) {
    validate();
  }

  static KernelSpec uniform(KernelFamily f, int dims, double ls, double var) {
    return KernelSpec(f, Eigen::VectorXd::Constant(dims, ls),
                      Eigen::VectorXd::Constant(dims, var));
  }

  [[nodiscard]] int dims() const { return static_cast<int>(length_scale.size()); }

  void validate() const {
    if (length_scale.size() != variance.size() || length_scale.size() == 0)
      throw InvalidArgument("kernel needs one length scale and variance per dimension");
    for (int i = 0; i < length_scale.size(); ++i) {
      if (!(length_scale[i] > 0.0) || !std::isfinite(length_scale[i]))
        throw InvalidArgument("kernel length scale must be positive");
      if (!(variance[i] > 0.0) || !std::isfinite(variance[i]))
        throw InvalidArgument("kernel variance must be positive");
    }
  }
};

namespace detail {

inline double sign(double s) { return (s > 0.0) - (s < 0.0); }

} // namespace detail

/// n-th derivative of the unit Matérn correlation rho(s), s = (t - t') / kappa.
/// Odd orders are odd in s; at s = 0 they are taken as 0 (the symmetric limit).
inline double correlation_derivative(KernelFamily family, int order, double s) {
  const double u = std::abs(s);
  const double sg = detail::sign(s);
  switch (family) {
  case KernelFamily::Matern12: {
    const double e = std::exp(-u);
    switch (order) {
    case 0:
      return e;
    case 1:
      return -sg * e;
    default:
      throw DerivativeUnsupported("Matern12 correlation is not differentiable at the origin");
    }
  }
  case KernelFamily::Matern32: {
    const double a = std::sqrt(3.0);
    const double e = std::exp(-a * u);
    switch (order) {
    case 0:
      return (1.0 + a * u) * e;
    case 1:
      return -3.0 * s * e;
    case 2:
      return 3.0 * (a * u - 1.0) * e;
    case 3:
      return -3.0 * sg * (3.0 * u - 2.0 * a) * e;
    default:
      throw DerivativeUnsupported("Matern32 correlation derivative order too high");
    }
  }
  case KernelFamily::Matern52: {
    const double a = std::sqrt(5.0);
    const double e = std::exp(-a * u);
    switch (order) {
    case 0:
      return (1.0 + a * u + 5.0 * u * u / 3.0) * e;
    case 1:
      return -5.0 / 3.0 * s * (a * u + 1.0) * e;
    case 2:
      return 5.0 / 3.0 * (5.0 * u * u - a * u - 1.0) * e;
    case 3:
      return -25.0 / 3.0 * s * (a * u - 3.0) * e;
    case 4:
      return 25.0 / 3.0 * (5.0 * u * u - 5.0 * a * u + 3.0) * e;
    default:
      throw DerivativeUnsupported("Matern52 correlation derivative order too high");
    }
  }
  }
  return 0.0;
}

inline int derivative_order(PointKind kind) { return kind == PointKind::Derivative ? 1 : 0; }

inline void check_kind_supported(KernelFamily family, PointKind kind) {
  if (derivative_order(kind) > max_derivative_order(family))
    throw DerivativeUnsupported(to_string(family) + " has no derivative cross-covariances");
}

/// Covariance between (kind1) f at t1 and (kind2) f at t2 for output `dim`:
/// d^{n1}/dt1 d^{n2}/dt2 sigma^2 rho((t1 - t2) / kappa).
inline double cross_covariance(const KernelSpec &spec, int dim, double t1, PointKind kind1,
                               double t2, PointKind kind2) {
  const int n1 = derivative_order(kind1);
  const int n2 = derivative_order(kind2);
  const double kappa = spec.length_scale[dim];
  const double s = (t1 - t2) / kappa;
  const int n = n1 + n2;
  const double sgn = (n2 % 2 == 0) ? 1.0 : -1.0;
  return spec.variance[dim] * sgn * correlation_derivative(spec.family, n, s) /
         std::pow(kappa, n);
}

/// Covariance value plus its partial derivatives with respect to both time
/// arguments and the log hyperparameters.
struct CovariancePartials {
  double value = 0.0;
  double d_t1 = 0.0;
  double d_t2 = 0.0;
  double d_log_length_scale = 0.0;
  double d_log_variance = 0.0;
};

inline CovariancePartials cross_covariance_partials(const KernelSpec &spec, int dim, double t1,
                                                    PointKind kind1, double t2, PointKind kind2) {
  const int n1 = derivative_order(kind1);
  const int n2 = derivative_order(kind2);
  const int n = n1 + n2;
  const double kappa = spec.length_scale[dim];
  const double var = spec.variance[dim];
  const double s = (t1 - t2) / kappa;
  const double sgn = (n2 % 2 == 0) ? 1.0 : -1.0;
  const double kn = std::pow(kappa, n);
  const double rho_n = correlation_derivative(spec.family, n, s);
  const double rho_next = correlation_derivative(spec.family, n + 1, s);

  CovariancePartials p;
  p.value = var * sgn * rho_n / kn;
  p.d_t1 = var * sgn * rho_next / (kn * kappa);
  p.d_t2 = -p.d_t1;
  // kappa d/dkappa [rho^(n)(s) kappa^-n] = -s rho^(n+1) kappa^-n - n rho^(n) kappa^-n
  p.d_log_length_scale = var * sgn * (-s * rho_next - n * rho_n) / kn;
  p.d_log_variance = p.value;
  return p;
}

/// k(t, t2) for output `dim`.
inline double eval(const KernelSpec &spec, int dim, double t, double t2) {
  return cross_covariance(spec, dim, t, PointKind::Value, t2, PointKind::Value);
}

/// Relative diagonal jitter added to square Gram blocks before factorization.
inline constexpr double kGramJitter = 1e-8;

struct GramBlock {
  Eigen::MatrixXd values;
  std::vector<PointKind> row_kind;
  std::vector<PointKind> col_kind;
};

inline std::vector<PointKind> value_kinds(std::size_t n) {
  return std::vector<PointKind>(n, PointKind::Value);
}

inline GramBlock gram(const KernelSpec &spec, int dim, std::span<const double> rows,
                      std::span<const PointKind> row_kinds, std::span<const double> cols,
                      std::span<const PointKind> col_kinds) {
  if (rows.size() != row_kinds.size() || cols.size() != col_kinds.size())
    throw InvalidArgument("gram: times and kinds must have equal length");
  for (auto k : row_kinds)
    check_kind_supported(spec.family, k);
  for (auto k : col_kinds)
    check_kind_supported(spec.family, k);
  GramBlock block;
  block.row_kind.assign(row_kinds.begin(), row_kinds.end());
  block.col_kind.assign(col_kinds.begin(), col_kinds.end());
  block.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      block.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          cross_covariance(spec, dim, rows[i], row_kinds[i], cols[j], col_kinds[j]);
  return block;
}

/// Value-only Gram block.
inline GramBlock gram(const KernelSpec &spec, int dim, std::span<const double> rows,
                      std::span<const double> cols) {
  const auto rk = value_kinds(rows.size());
  const auto ck = value_kinds(cols.size());
  return gram(spec, dim, rows, rk, cols, ck);
}

/// Scales the diagonal by (1 + kGramJitter), i.e. jitter relative to each
/// diagonal entry; for value rows that is 1e-8 * variance.
inline void add_jitter(Eigen::MatrixXd &m) {
  m.diagonal() *= (1.0 + kGramJitter);
}

inline Eigen::LLT<Eigen::MatrixXd> factorize(const Eigen::MatrixXd &m, const char *what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw FactorizationFailure(std::string("Cholesky factorization failed for ") + what);
  return llt;
}

} // namespace vgpmp
