#pragma once

// Random-variate kernels for the augmentation schemes. All kernels draw from
// an RngHandle, so identical (seed, stream, call sequence) triples reproduce
// identical draws.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "zinbhmm/errors.hpp"

namespace zinbhmm {

/// Seedable generator with an independent substream per stream id.
class RngHandle {
 public:
  explicit RngHandle(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32), 0x5a17u};
    engine_.seed(seq);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    double u;
    do {
      u = std::generate_canonical<double, 53>(engine_);
    } while (u <= 0.0);
    return u;
  }

  double normal() { return normal_(engine_); }
  double exponential() { return -std::log(uniform()); }

  /// Gamma(shape, 1); floored at the smallest normal double so draws stay
  /// strictly positive for tiny shapes.
  double standard_gamma(double shape) {
    const double g = gamma_(engine_, std::gamma_distribution<double>::param_type(shape, 1.0));
    return std::max(g, std::numeric_limits<double>::min());
  }

  /// log of a Gamma(shape, 1) draw; accurate for shapes far below one.
  double log_standard_gamma(double shape) {
    if (shape >= 1.0) return std::log(standard_gamma(shape));
    const double g = gamma_(engine_, std::gamma_distribution<double>::param_type(shape + 1.0, 1.0));
    return std::log(g) + std::log(uniform()) / shape;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  std::gamma_distribution<double> gamma_;
};

// ---------------------------------------------------------------------------
// Polya-Gamma

namespace detail {

inline constexpr double kPgTruncation = 0.64;

inline double log_norm_cdf(double x) {
  if (x > -30.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
  // Mills-ratio asymptotics for the far lower tail.
  const double x2 = x * x;
  return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) +
         std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

// Coefficients of the alternating series for the J*(1, z) density.
inline double pg_series_coef(int n, double x) {
  constexpr double pi = std::numbers::pi;
  const double k = n + 0.5;
  if (x > kPgTruncation) return pi * k * std::exp(-0.5 * k * k * pi * pi * x);
  return pi * k * std::exp(-1.5 * (std::log(0.5 * pi) + std::log(x)) - 2.0 * k * k / x);
}

inline double pg_exponential_mass(double z) {
  constexpr double pi = std::numbers::pi;
  const double t = kPgTruncation;
  const double fz = pi * pi / 8.0 + 0.5 * z * z;
  const double b = std::sqrt(1.0 / t) * (t * z - 1.0);
  const double a = -std::sqrt(1.0 / t) * (t * z + 1.0);
  const double x0 = std::log(fz) + fz * t;
  const double xb = x0 - z + log_norm_cdf(b);
  const double xa = x0 + z + log_norm_cdf(a);
  const double q_over_p = 4.0 / pi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + q_over_p);
}

// Inverse Gaussian(1/z, 1) truncated to (0, t).
inline double truncated_inverse_gaussian(double z, double t, RngHandle& rng) {
  const double mu = 1.0 / z;
  double x = t + 1.0;
  if (mu > t) {
    double alpha = 0.0;
    while (rng.uniform() > alpha) {
      double e1 = rng.exponential();
      double e2 = rng.exponential();
      while (e1 * e1 > 2.0 * e2 / t) {
        e1 = rng.exponential();
        e2 = rng.exponential();
      }
      x = 1.0 + e1 * t;
      x = t / (x * x);
      alpha = std::exp(-0.5 * z * z * x);
    }
  } else {
    while (x > t) {
      const double y = rng.normal();
      const double mu_y = mu * y * y;
      x = mu + 0.5 * mu * mu_y - 0.5 * mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
      if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    }
  }
  return x;
}

// Exact PG(1, c) draw (Devroye-type alternating series sampler).
inline double polya_gamma_one(double c, RngHandle& rng) {
  constexpr double pi = std::numbers::pi;
  const double z = 0.5 * std::abs(c);
  const double fz = pi * pi / 8.0 + 0.5 * z * z;
  const double p_exp = pg_exponential_mass(z);
  for (;;) {
    double x;
    if (rng.uniform() < p_exp)
      x = kPgTruncation + rng.exponential() / fz;
    else
      x = truncated_inverse_gaussian(z, kPgTruncation, rng);
    double s = pg_series_coef(0, x);
    const double y = rng.uniform() * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= pg_series_coef(n, x);
        if (y <= s) return 0.25 * x;
      } else {
        s += pg_series_coef(n, x);
        if (y > s) break;
      }
    }
  }
}

}  // namespace detail

/// E[PG(b, c)] = b / (2c) tanh(c / 2), with limit b / 4 at c = 0.
inline double polya_gamma_mean(double b, double c) {
  const double h = 0.5 * std::abs(c);
  if (h < 1e-4) return 0.25 * b * (1.0 - h * h / 3.0);
  return b * std::tanh(h) / (4.0 * h);
}

/// Var[PG(b, c)] = b (sinh c - c) / (4 c^3 cosh^2(c / 2)), limit b / 24 at c = 0.
inline double polya_gamma_variance(double b, double c) {
  const double a = std::abs(c);
  if (a < 1e-3) return b / 24.0 * (1.0 - a * a / 5.0);
  const double ch = std::cosh(0.5 * a);
  return b * (std::sinh(a) - a) / (4.0 * a * a * a * ch * ch);
}

namespace detail {
inline constexpr int kPgSeriesTerms = 20;
inline constexpr long kPgExactIntegerLimit = 4;
}  // namespace detail

/// PG(b, c) from the sum-of-gammas representation
///   (1 / 2 pi^2) sum_k g_k / ((k - 1/2)^2 + c^2 / 4 pi^2),  g_k ~ Gamma(b, 1).
/// The leading 20 terms are drawn exactly; the remainder is replaced by one
/// gamma variate with the remainder's mean and variance, so the first two
/// moments of the result are exact.
inline double polya_gamma_sum_of_gammas(double b, double c, RngHandle& rng) {
  constexpr double pi = std::numbers::pi;
  const double shift = c * c / (4.0 * pi * pi);
  const double scale = 1.0 / (2.0 * pi * pi);
  double draw = 0.0;
  double kept_mean = 0.0;
  double kept_var = 0.0;
  for (int k = 1; k <= detail::kPgSeriesTerms; ++k) {
    const double inv_d = 1.0 / ((k - 0.5) * (k - 0.5) + shift);
    draw += rng.standard_gamma(b) * inv_d;
    kept_mean += inv_d;
    kept_var += inv_d * inv_d;
  }
  draw *= scale;
  const double tail_mean = polya_gamma_mean(b, c) - b * scale * kept_mean;
  const double tail_var = polya_gamma_variance(b, c) - b * scale * scale * kept_var;
  if (tail_mean > 0.0 && tail_var > 0.0) {
    const double shape = tail_mean * tail_mean / tail_var;
    draw += rng.standard_gamma(shape) * (tail_var / tail_mean);
  } else if (tail_mean > 0.0) {
    draw += tail_mean;
  }
  return draw;
}

/// Draw omega ~ PG(b, c). Integer parts up to 4 use exact PG(1, c) draws and
/// the fractional remainder goes through `polya_gamma_sum_of_gammas`; larger
/// shapes use the sum-of-gammas form for the whole of b.
inline double sample_polya_gamma(double b, double c, RngHandle& rng) {
  if (!(b > 0.0) || !std::isfinite(b)) throw NumericalError("PG shape must be positive");
  if (!std::isfinite(c)) throw NumericalError("PG tilt must be finite");
  const double whole = std::floor(b);
  const double frac = b - whole;
  double omega = 0.0;
  if (static_cast<long>(whole) > detail::kPgExactIntegerLimit) {
    omega = polya_gamma_sum_of_gammas(b, c, rng);
  } else {
    for (long n = 0; n < static_cast<long>(whole); ++n) omega += detail::polya_gamma_one(c, rng);
    if (frac > 1e-12) omega += polya_gamma_sum_of_gammas(frac, c, rng);
  }
  return std::max(omega, std::numeric_limits<double>::min());
}

// ---------------------------------------------------------------------------
// Counts and conjugate families

/// Chinese restaurant table count: sum of Bernoulli(r / (r + l - 1)), l = 1..y.
inline int sample_crt(int y, double r, RngHandle& rng) {
  if (y < 0) throw DataError("CRT count must be non-negative");
  if (!(r > 0.0)) throw NumericalError("CRT dispersion must be positive");
  int tables = 0;
  for (int l = 1; l <= y; ++l)
    if (rng.uniform() < r / (r + l - 1.0)) ++tables;
  return tables;
}

/// Gamma with (shape, rate) parametrization.
inline double sample_gamma(double shape, double rate, RngHandle& rng) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate))
    throw NumericalError("gamma parameters must be positive");
  return std::max(rng.standard_gamma(shape) / rate, std::numeric_limits<double>::min());
}

inline double sample_beta(double a, double b, RngHandle& rng) {
  if (!(a > 0.0) || !(b > 0.0)) throw NumericalError("beta parameters must be positive");
  const double la = rng.log_standard_gamma(a);
  const double lb = rng.log_standard_gamma(b);
  // x / (x + y) evaluated in log space
  const double top = std::max(la, lb);
  return std::exp(la - top) / (std::exp(la - top) + std::exp(lb - top));
}

inline Eigen::VectorXd sample_dirichlet(const Eigen::Ref<const Eigen::VectorXd>& alpha,
                                        RngHandle& rng) {
  const auto n = alpha.size();
  if (n == 0) throw NumericalError("Dirichlet needs at least one component");
  Eigen::VectorXd logs(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!(alpha[k] > 0.0)) throw NumericalError("Dirichlet concentration must be positive");
    logs[k] = rng.log_standard_gamma(alpha[k]);
  }
  const double top = logs.maxCoeff();
  Eigen::VectorXd out = (logs.array() - top).exp();
  out /= out.sum();
  return out;
}

/// Index drawn with probability proportional to `weights`.
inline int sample_categorical(const Eigen::Ref<const Eigen::VectorXd>& weights, RngHandle& rng) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    if (!(weights[k] >= 0.0) || !std::isfinite(weights[k]))
      throw NumericalError("categorical weights must be finite and non-negative");
    total += weights[k];
  }
  if (!(total > 0.0)) throw NumericalError("categorical weights sum to zero");
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) return static_cast<int>(k);
  }
  for (Eigen::Index k = weights.size() - 1; k >= 0; --k)
    if (weights[k] > 0.0) return static_cast<int>(k);
  return 0;
}

inline bool sample_bernoulli(double p, RngHandle& rng) { return rng.uniform() < p; }

// ---------------------------------------------------------------------------
// Gaussian

/// Lower Cholesky factor; throws NotPositiveDefinite with the failing pivot.
inline Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a) {
  const auto n = a.rows();
  if (a.cols() != n) throw NumericalError("Cholesky needs a square matrix");
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) throw NotPositiveDefinite(static_cast<int>(j));
    d = std::sqrt(d);
    l(j, j) = d;
    for (Eigen::Index i = j + 1; i < n; ++i)
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / d;
  }
  return l;
}

inline Eigen::VectorXd sample_gaussian_vec(const Eigen::Ref<const Eigen::VectorXd>& mean,
                                           const Eigen::MatrixXd& covariance, RngHandle& rng) {
  if (covariance.rows() != mean.size())
    throw NumericalError("covariance dimension does not match mean");
  const Eigen::MatrixXd l = cholesky_lower(covariance);
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + l * z;
}

/// Draw from N(P^{-1} h, P^{-1}) given precision P and linear term h.
inline Eigen::VectorXd sample_gaussian_canonical(const Eigen::MatrixXd& precision,
                                                 const Eigen::Ref<const Eigen::VectorXd>& h,
                                                 RngHandle& rng) {
  const Eigen::MatrixXd l = cholesky_lower(precision);
  const auto tri = l.triangularView<Eigen::Lower>();
  const Eigen::VectorXd w = tri.solve(h);
  Eigen::VectorXd z(h.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return tri.transpose().solve(w + z);
}

}  // namespace zinbhmm
