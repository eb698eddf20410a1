#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace covertime::stats {

inline double sample_mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("sample_mean: empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double sample_variance(std::span<const double> x) {
  if (x.size() < 2) throw std::invalid_argument("sample_variance: need >= 2 values");
  const double m = sample_mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double sample_sd(std::span<const double> x) { return std::sqrt(sample_variance(x)); }

inline double sample_skewness(std::span<const double> x) {
  const double m = sample_mean(x);
  double s2 = 0.0, s3 = 0.0;
  for (double v : x) {
    const double d = v - m;
    s2 += d * d;
    s3 += d * d * d;
  }
  const double n = static_cast<double>(x.size());
  const double sd = std::sqrt(s2 / n);
  return (s3 / n) / (sd * sd * sd);
}

// --- special functions -----------------------------------------------------

// Regularized upper incomplete gamma Q(a, x) via series / continued fraction.
inline double gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw std::invalid_argument("gamma_q: a > 0, x >= 0 required");
  if (x == 0.0) return 1.0;
  const double lg = std::lgamma(a);
  if (x < a + 1.0) {
    // P(a,x) by series, Q = 1 - P
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
    }
    const double p = sum * std::exp(-x + a * std::log(x) - lg);
    return 1.0 - p;
  }
  // Lentz continued fraction for Q
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - lg);
}

// Regularized lower incomplete gamma P(a, x) = 1 - Q(a, x).
inline double gamma_p(double a, double x) { return 1.0 - gamma_q(a, x); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Kolmogorov tail Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 200; ++j) {
    const double t = std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * t;
    if (t < 1e-18) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

// --- goodness of fit --------------------------------------------------------

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

// One-sample KS against a reference CDF; asymptotic p-value with the
// finite-sample effective-size correction.
inline KsResult ks_statistic(std::vector<double> samples,
                             const std::function<double(double)>& reference_cdf) {
  if (samples.size() < 10) throw std::invalid_argument("ks_statistic: need >= 10 samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = reference_cdf(samples[i]);
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
  }
  const double sq = std::sqrt(n);
  const double lambda = (sq + 0.12 + 0.11 / sq) * d;
  return {std::min(d, 1.0), kolmogorov_q(lambda), samples.size()};
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.size() < 10 || b.size() < 10)
    throw std::invalid_argument("ks_two_sample: need >= 10 samples on each side");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  const double sq = std::sqrt(ne);
  const double lambda = (sq + 0.12 + 0.11 / sq) * d;
  return {d, kolmogorov_q(lambda), a.size() + b.size()};
}

inline double tv_distance(std::span<const double> pmf_a, std::span<const double> pmf_b) {
  if (pmf_a.size() != pmf_b.size())
    throw std::invalid_argument("tv_distance: support grids differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < pmf_a.size(); ++i) s += std::fabs(pmf_a[i] - pmf_b[i]);
  return 0.5 * s;
}

// --- Gumbel maximum likelihood ----------------------------------------------

struct FitResult {
  double location = 0.0;
  double scale = 1.0;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
};

// MLE for Gumbel(mu, beta) with CDF exp(-exp(-(x-mu)/beta)) by a damped
// fixed point on beta. Exponentials are shifted by max(x) for stability.
inline FitResult gumbel_fit(const std::vector<double>& x) {
  if (x.size() < 50) throw std::invalid_argument("gumbel_fit: need >= 50 samples");
  const double n = static_cast<double>(x.size());
  const double mean = sample_mean(x);
  const double sd = sample_sd(x);
  const double xmax = *std::max_element(x.begin(), x.end());

  double beta = sd * std::sqrt(6.0) / M_PI;  // moment start
  if (beta <= 0.0 || !std::isfinite(beta))
    throw std::invalid_argument("gumbel_fit: degenerate sample");

  FitResult out;
  const int max_iter = 200;
  for (out.iterations = 1; out.iterations <= max_iter; ++out.iterations) {
    double sw = 0.0, swx = 0.0;
    for (double v : x) {
      const double w = std::exp(-(v - xmax) / beta);
      sw += w;
      swx += w * v;
    }
    const double target = mean - swx / sw;
    const double next = 0.5 * beta + 0.5 * target;
    const double rel = std::fabs(next - beta) / std::max(1e-300, std::fabs(beta));
    beta = next;
    if (beta <= 0.0 || !std::isfinite(beta)) break;
    if (rel < 1e-9) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged || beta <= 0.0) {
    out.converged = false;
    out.scale = beta;
    return out;
  }
  double sw = 0.0;
  for (double v : x) sw += std::exp(-(v - xmax) / beta);
  const double mu = xmax + beta * std::log(n / sw);

  double ll = -n * std::log(beta);
  for (double v : x) {
    const double z = (v - mu) / beta;
    ll += -z - std::exp(-z);
  }
  out.location = mu;
  out.scale = beta;
  out.log_likelihood = ll;
  return out;
}

// --- chi-square ---------------------------------------------------------------

// Pearson chi-square p-value with automatic merging of adjacent bins until
// every retained bin has expected count >= 5. Degrees of freedom: bins - 1.
inline double chi_square_pvalue(std::vector<double> observed, std::vector<double> expected) {
  if (observed.size() != expected.size() || observed.empty())
    throw std::invalid_argument("chi_square_pvalue: bin vectors must match");
  std::vector<double> obs, exp;
  double o_acc = 0.0, e_acc = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    o_acc += observed[i];
    e_acc += expected[i];
    if (e_acc >= 5.0) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  if (e_acc > 0.0 || o_acc > 0.0) {
    if (exp.empty()) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
    } else {
      obs.back() += o_acc;
      exp.back() += e_acc;
    }
  }
  if (exp.size() < 2) throw std::invalid_argument("chi_square_pvalue: degenerate binning");
  double stat = 0.0;
  for (std::size_t i = 0; i < exp.size(); ++i) {
    const double d = obs[i] - exp[i];
    stat += d * d / exp[i];
  }
  const double dof = static_cast<double>(exp.size() - 1);
  return gamma_q(dof / 2.0, stat / 2.0);
}

}  // namespace covertime::stats
