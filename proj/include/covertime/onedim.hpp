#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "covertime/rng.hpp"
#include "covertime/stats.hpp"

namespace covertime::onedim {

// --- compound distributions ----------------------------------------------------
// S = sum_{i<=N} V_i with independent count N and i.i.d. summands V_i.
//   Bigeo(n,p;q):  N ~ Binomial(n,p),  V ~ Geometric(q) on {1,2,...}
//   Biexp(n,p;l):  N ~ Binomial(n,p),  V ~ Exponential(rate l)
//   Poigeo(mu;q):  N ~ Poisson(mu),    V ~ Geometric(q) on {1,2,...}

struct Bigeo {
  std::uint64_t n = 0;
  double p = 0.0, q = 0.0;
};
struct Biexp {
  std::uint64_t n = 0;
  double p = 0.0, lambda = 0.0;
};
struct Poigeo {
  double mu = 0.0, q = 0.0;
};

struct CompoundSpec {
  std::variant<Bigeo, Biexp, Poigeo> law;

  static CompoundSpec bigeo(std::uint64_t n, double p, double q) {
    check_prob(p, "p");
    check_prob(q, "q");
    return {Bigeo{n, p, q}};
  }
  static CompoundSpec biexp(std::uint64_t n, double p, double lambda) {
    check_prob(p, "p");
    if (!(lambda > 0.0)) throw std::invalid_argument("Biexp: lambda must be > 0");
    return {Biexp{n, p, lambda}};
  }
  static CompoundSpec poigeo(double mu, double q) {
    if (mu < 0.0) throw std::invalid_argument("Poigeo: mu must be >= 0");
    check_prob(q, "q");
    return {Poigeo{mu, q}};
  }

  double mean() const {
    if (const auto* b = std::get_if<Bigeo>(&law)) return b->n * b->p / b->q;
    if (const auto* e = std::get_if<Biexp>(&law)) return e->n * e->p / e->lambda;
    return std::get<Poigeo>(law).mu / std::get<Poigeo>(law).q;
  }

  bool discrete() const { return !std::holds_alternative<Biexp>(law); }

 private:
  static void check_prob(double v, const char* name) {
    if (!(v > 0.0 && v <= 1.0))
      throw std::invalid_argument(std::string("compound parameter ") + name +
                                  " must lie in (0,1]");
  }
};

namespace detail {

inline std::vector<double> binomial_pmf(std::uint64_t n, double p) {
  std::vector<double> out(n + 1);
  // iterate in log space off the mode to stay stable for large n
  out[0] = std::pow(1.0 - p, static_cast<double>(n));
  if (p >= 1.0) {
    std::fill(out.begin(), out.end(), 0.0);
    out[n] = 1.0;
    return out;
  }
  for (std::uint64_t k = 1; k <= n; ++k)
    out[k] = out[k - 1] * (static_cast<double>(n - k + 1) / static_cast<double>(k)) *
             (p / (1.0 - p));
  return out;
}

inline std::vector<double> poisson_pmf(double mu, double tail_eps) {
  std::vector<double> out;
  double term = std::exp(-mu);
  double cum = term;
  out.push_back(term);
  for (std::uint64_t k = 1; cum < 1.0 - tail_eps && k < 100000; ++k) {
    term *= mu / static_cast<double>(k);
    out.push_back(term);
    cum += term;
  }
  return out;
}

// Negative binomial on {c, c+1, ...}: sum of c Geometrics(q) from one.
inline double negbin_pmf(std::uint64_t s, std::uint64_t c, double q) {
  if (c == 0) return s == 0 ? 1.0 : 0.0;
  if (s < c) return 0.0;
  // C(s-1, c-1) q^c (1-q)^(s-c)
  double log_p = c * std::log(q);
  if (s > c) log_p += (s - c) * std::log1p(-q);
  log_p += std::lgamma(static_cast<double>(s)) - std::lgamma(static_cast<double>(c)) -
           std::lgamma(static_cast<double>(s - c + 1));
  return std::exp(log_p);
}

}  // namespace detail

// Pmf of a discrete compound law on {0, 1, ..., cutoff}; the support is
// truncated where the cumulative mass exceeds 1 - 1e-12.
inline std::vector<double> compound_pmf(const CompoundSpec& spec) {
  constexpr double tail = 1e-12;
  if (const auto* b = std::get_if<Bigeo>(&spec.law)) {
    const auto count_pmf = detail::binomial_pmf(b->n, b->p);
    std::vector<double> out;
    double cum = 0.0;
    for (std::uint64_t s = 0; cum < 1.0 - tail; ++s) {
      double mass = 0.0;
      for (std::uint64_t c = 0; c < count_pmf.size() && c <= s; ++c)
        mass += count_pmf[c] * detail::negbin_pmf(s, c, b->q);
      out.push_back(mass);
      cum += mass;
      if (s > 100000) throw std::runtime_error("compound_pmf: truncation runaway");
    }
    return out;
  }
  if (const auto* pg = std::get_if<Poigeo>(&spec.law)) {
    const auto count_pmf = detail::poisson_pmf(pg->mu, tail);
    std::vector<double> out;
    double cum = 0.0;
    for (std::uint64_t s = 0; cum < 1.0 - tail; ++s) {
      double mass = 0.0;
      for (std::uint64_t c = 0; c < count_pmf.size() && c <= s; ++c)
        mass += count_pmf[c] * detail::negbin_pmf(s, c, pg->q);
      out.push_back(mass);
      cum += mass;
      if (s > 100000) throw std::runtime_error("compound_pmf: truncation runaway");
    }
    return out;
  }
  throw std::invalid_argument("compound_pmf: Biexp has a density, use compound_density");
}

// Binomial-Exponential law: atom (1-p)^n at zero plus a binomial mixture of
// Gamma(m, lambda) densities.
struct BiexpLaw {
  double atom0 = 0.0;
  std::vector<double> count_pmf;  // Binomial(n,p), index = m
  double lambda = 0.0;

  double density(double s) const {
    if (s <= 0.0) return 0.0;
    double f = 0.0;
    for (std::size_t m = 1; m < count_pmf.size(); ++m)
      f += count_pmf[m] * std::exp(m * std::log(lambda) + (m - 1) * std::log(s) - lambda * s -
                                   std::lgamma(static_cast<double>(m)));
    return f;
  }
  double cdf(double s) const {
    if (s < 0.0) return 0.0;
    double f = atom0;
    for (std::size_t m = 1; m < count_pmf.size(); ++m)
      f += count_pmf[m] * stats::gamma_p(static_cast<double>(m), lambda * s);
    return f;
  }
};

inline BiexpLaw compound_density(const CompoundSpec& spec) {
  const auto* e = std::get_if<Biexp>(&spec.law);
  if (!e) throw std::invalid_argument("compound_density: spec must be Biexp");
  BiexpLaw law;
  law.count_pmf = detail::binomial_pmf(e->n, e->p);
  law.atom0 = law.count_pmf[0];
  law.lambda = e->lambda;
  return law;
}

inline double compound_sample_one(const CompoundSpec& spec, RngStream& rng) {
  if (const auto* b = std::get_if<Bigeo>(&spec.law)) {
    const auto c = rng.binomial(b->n, b->p);
    double s = 0.0;
    for (std::uint64_t i = 0; i < c; ++i) s += static_cast<double>(rng.geometric_from_one(b->q));
    return s;
  }
  if (const auto* e = std::get_if<Biexp>(&spec.law)) {
    const auto c = rng.binomial(e->n, e->p);
    double s = 0.0;
    for (std::uint64_t i = 0; i < c; ++i) s += rng.exponential(e->lambda);
    return s;
  }
  const auto& pg = std::get<Poigeo>(spec.law);
  const auto c = rng.poisson(pg.mu);
  double s = 0.0;
  for (std::uint64_t i = 0; i < c; ++i) s += static_cast<double>(rng.geometric_from_one(pg.q));
  return s;
}

inline std::vector<double> compound_sample(const CompoundSpec& spec, std::uint64_t seed,
                                           std::size_t count) {
  RngStream rng(seed, RngUse::compound, 0);
  std::vector<double> out(count);
  for (auto& v : out) v = compound_sample_one(spec, rng);
  return out;
}

enum class TailSide { left, right };

struct TailBound {
  double value = 1.0;
  TailSide side = TailSide::left;  // left: bound for P(S <= theta); right: P(S >= theta)
};

// exp(-(sqrt(np) - sqrt(theta q))^2) and analogues. The left-tail form
// requires theta <= mean, the right-tail form theta >= mean; violations are
// rejected naming the side.
inline TailBound compound_tail_bound(const CompoundSpec& spec, double theta, TailSide side) {
  if (theta < 0.0) throw std::invalid_argument("compound_tail_bound: theta must be >= 0");
  const double mean = spec.mean();
  if (side == TailSide::left && theta > mean * (1.0 + 1e-12))
    throw std::domain_error("compound_tail_bound: left tail requires theta <= mean");
  if (side == TailSide::right && theta < mean * (1.0 - 1e-12))
    throw std::domain_error("compound_tail_bound: right tail requires theta >= mean");
  double a = 0.0, b = 0.0;
  if (const auto* bg = std::get_if<Bigeo>(&spec.law)) {
    a = std::sqrt(static_cast<double>(bg->n) * bg->p);
    b = std::sqrt(theta * bg->q);
  } else if (const auto* e = std::get_if<Biexp>(&spec.law)) {
    a = std::sqrt(static_cast<double>(e->n) * e->p);
    b = std::sqrt(theta * e->lambda);
  } else {
    const auto& pg = std::get<Poigeo>(spec.law);
    a = std::sqrt(pg.mu);
    b = std::sqrt(theta * pg.q);
  }
  return {std::exp(-(a - b) * (a - b)), side};
}

inline TailBound compound_tail_bound(const CompoundSpec& spec, double theta) {
  return compound_tail_bound(spec, theta,
                             theta <= spec.mean() ? TailSide::left : TailSide::right);
}

// --- the 1D walk -----------------------------------------------------------------

struct LinearWalkResult {
  std::uint32_t T = 0;
  std::uint64_t excursions = 0;
  double top_time = 0.0;                // local time at site T ("T-time")
  double real_time = 0.0;
  std::vector<double> local;            // per site 0..T
  std::vector<std::uint64_t> down;      // down[i] = transitions i -> i-1, i = 1..T
};

enum class LinearStop { excursions, t_time };

// Unit-rate CTSRW on {0..T} started at T; records per-site local times and
// per-edge downcrossing counts. Stops after a fixed number of completed
// excursions away from T, or the instant local time at T crosses t.
inline LinearWalkResult simulate_linear_walk(std::uint32_t T, LinearStop stop, double param,
                                             std::uint64_t seed, std::uint64_t replica) {
  if (T < 1) throw std::invalid_argument("simulate_linear_walk: T >= 1 required");
  RngStream rng(seed, RngUse::walk, replica);
  LinearWalkResult res;
  res.T = T;
  res.local.assign(T + 1, 0.0);
  res.down.assign(T + 1, 0);

  std::uint32_t pos = T;
  const auto target_exc = (stop == LinearStop::excursions)
                              ? static_cast<std::uint64_t>(param)
                              : std::numeric_limits<std::uint64_t>::max();
  const double target_t = (stop == LinearStop::t_time) ? param : 0.0;
  if (stop == LinearStop::t_time && !(param > 0.0))
    throw std::invalid_argument("simulate_linear_walk: t must be > 0");

  while (true) {
    const std::uint32_t deg = (pos == 0 || pos == T) ? 1 : 2;
    double hold = rng.exponential(static_cast<double>(deg));
    if (pos == T) {
      if (stop == LinearStop::excursions && res.excursions >= target_exc) break;
      if (stop == LinearStop::t_time && res.local[T] + hold >= target_t) {
        const double budget = target_t - res.local[T];
        res.local[T] += budget;
        res.real_time += budget;
        break;
      }
    }
    res.local[pos] += hold;
    res.real_time += hold;
    std::uint32_t next;
    if (pos == 0)
      next = 1;
    else if (pos == T)
      next = T - 1;
    else
      next = (rng.uniform_below(2) == 0) ? pos - 1 : pos + 1;
    if (next == pos - 1 && pos > 0) res.down[pos]++;
    if (next == T) res.excursions++;
    pos = next;
  }
  res.top_time = res.local[T];
  return res;
}

// Exact conditional law triple of the linear walk.
//   kind i:   T_v(T-j) | T_v(T-i) = m           ~ Bigeo(m, 1/(j-i+1); 1/(j-i+1))
//   kind ii:  L*_(v)(T-i)                        ~ Biexp(v, 1/i; 1/i)
//   kind iii: T_v(T-j) | sqrt(L*_(v)(T-i)) = th ~ Poigeo(th^2/(j-i+1); 1/(j-i+1))
enum class ConditionalKind { downcrossing_given_downcrossing, local_time, downcrossing_given_local_time };

inline CompoundSpec conditional_law(std::uint32_t T, std::uint32_t i, std::uint32_t j,
                                    ConditionalKind kind, double conditioning_value) {
  switch (kind) {
    case ConditionalKind::downcrossing_given_downcrossing: {
      if (!(j >= i && j <= T - 1))
        throw std::invalid_argument("conditional_law(i): need i <= j <= T-1");
      const double par = 1.0 / static_cast<double>(j - i + 1);
      const auto m = static_cast<std::uint64_t>(conditioning_value);
      return CompoundSpec::bigeo(m, par, par);
    }
    case ConditionalKind::local_time: {
      if (!(i >= 1 && i <= T)) throw std::invalid_argument("conditional_law(ii): need 1 <= i <= T");
      const auto v = static_cast<std::uint64_t>(conditioning_value);
      const double par = 1.0 / static_cast<double>(i);
      return CompoundSpec::biexp(v, par, par);
    }
    case ConditionalKind::downcrossing_given_local_time: {
      if (!(j >= i && j <= T - 1))
        throw std::invalid_argument("conditional_law(iii): need i <= j <= T-1");
      const double par = 1.0 / static_cast<double>(j - i + 1);
      const double theta = conditioning_value;
      return CompoundSpec::poigeo(theta * theta * par, par);
    }
  }
  throw std::invalid_argument("conditional_law: unknown kind");
}

// --- ballot machinery --------------------------------------------------------------

// r_{k,T}(u^, v^) of the sharp downcrossing ballot estimate.
inline double ballot_rate(double k, double gamma, double T, double u_hat, double v_hat) {
  if (!(k >= 1.0 && T >= 1.0)) throw std::invalid_argument("ballot_rate: k, T >= 1 required");
  if (!(u_hat > 0.0 && v_hat > 0.0))
    throw std::invalid_argument("ballot_rate: u^ and v^ must be > 0");
  const double kg = std::pow(k, gamma);
  return std::sqrt(2.0 / M_PI) / (T * std::pow(k, 1.5)) * std::exp(-2.0 * (T - 1.0) * kg) *
         (u_hat * std::exp(2.0 * std::sqrt(2.0) * u_hat)) *
         (v_hat * std::exp(-2.0 * std::sqrt(2.0) * v_hat - v_hat * v_hat / (T * kg)));
}

// P(min of a Brownian bridge from a to b over [0,T] dips to x):
// exp(-2 (b-x)(a-x) / (variance T)).
inline double bridge_min_probability(double a, double b, double x, double T, double variance) {
  if (!(T > 0.0 && variance > 0.0))
    throw std::invalid_argument("bridge_min_probability: T and variance must be > 0");
  if (!(x <= std::min(a, b)))
    throw std::invalid_argument("bridge_min_probability: need x <= min(a, b)");
  return std::exp(-2.0 * (b - x) * (a - x) / (variance * T));
}

// Marginal law of the local time at site T-i at T-time t: Poisson(t/i) many
// excursions reach the site, each depositing Exponential(1/i) local time.
struct LocalTimeMarginal {
  double t = 0.0;
  double i = 0.0;

  double atom0() const { return std::exp(-t / i); }
  double density(double x) const {
    if (x <= 0.0) return 0.0;
    const double mu = t / i, rate = 1.0 / i;
    // sum_m Poisson(mu)(m) Gamma(m, rate)-density(x)
    double f = 0.0;
    double log_pois = -mu;
    for (std::uint64_t m = 1; m < 500; ++m) {
      log_pois += std::log(mu) - std::log(static_cast<double>(m));
      const double log_gamma_density = m * std::log(rate) + (m - 1) * std::log(x) - rate * x -
                                       std::lgamma(static_cast<double>(m));
      f += std::exp(log_pois + log_gamma_density);
      if (log_pois < -60.0 && m > mu) break;
    }
    return f;
  }
  double cdf(double x) const {
    if (x < 0.0) return 0.0;
    const double mu = t / i, rate = 1.0 / i;
    double f = std::exp(-mu);
    double log_pois = -mu;
    for (std::uint64_t m = 1; m < 500; ++m) {
      log_pois += std::log(mu) - std::log(static_cast<double>(m));
      f += std::exp(log_pois) * stats::gamma_p(static_cast<double>(m), rate * x);
      if (log_pois < -60.0 && m > mu) break;
    }
    return std::min(f, 1.0);
  }
  double mean() const { return t; }
};

inline LocalTimeMarginal local_time_marginal_density(std::uint32_t T, std::uint32_t i, double t) {
  if (!(i >= 1 && i <= T)) throw std::invalid_argument("local_time_marginal: need 1 <= i <= T");
  if (!(t > 0.0)) throw std::invalid_argument("local_time_marginal: t > 0 required");
  return {t, static_cast<double>(i)};
}

// Conditional sampler for law (i): m independent descents below level T-i,
// each started by one downcrossing and killed on the return to T-i. Only
// elementary walk steps are used.
inline std::uint64_t sample_descents_count(std::uint32_t T, std::uint32_t i, std::uint32_t j,
                                           std::uint64_t m, RngStream& rng) {
  // levels relabeled: position measured as depth below T-i; the segment floor
  // is at depth T-i (site 0); a downcrossing at level j counts on the step
  // from depth j-i to depth j-i+1.
  const std::uint32_t floor_depth = T - i;
  const std::uint32_t target_depth = j - i + 1;
  std::uint64_t total = 0;
  for (std::uint64_t d = 0; d < m; ++d) {
    std::uint32_t depth = 1;  // the downcrossing that starts the descent
    if (target_depth == 1) ++total;
    while (depth != 0) {
      std::uint32_t next;
      if (depth == floor_depth)
        next = depth - 1;
      else
        next = (rng.uniform_below(2) == 0) ? depth - 1 : depth + 1;
      if (next == target_depth && next == depth + 1) ++total;
      depth = next;
    }
  }
  return total;
}

}  // namespace covertime::onedim
