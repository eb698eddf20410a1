#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "covertime/exact.hpp"
#include "covertime/gff.hpp"
#include "covertime/stats.hpp"
#include "covertime/walk.hpp"

namespace covertime::coupling {

using lattice::WiredGraph;

// Law-equality report for L_t + h^2 = (h' + sqrt(t))^2 with h, h' independent
// DGFFs of covariance G/2 at the walk's rate.
struct IsomorphismReport {
  struct Probe {
    std::uint32_t vertex = 0;
    double ks_statistic = 0.0;
    double ks_p_value = 1.0;
    double mean_identity_residual_se = 0.0;  // (mean L_t(x) - t) / SE
  };
  struct Functional {
    std::string name;
    double ks_statistic = 0.0;
    double ks_p_value = 1.0;
  };
  double t = 0.0;
  double rate = 1.0;
  std::size_t replicas = 0;
  std::vector<Probe> probes;
  std::vector<Functional> functionals;

  std::size_t failing_probes(double significance) const {
    std::size_t c = 0;
    for (const auto& p : probes) c += (p.ks_p_value <= significance);
    return c;
  }
};

// Fixed weight vectors for the linear-functional comparison: uniform,
// center indicator, alternating-sign checkerboard.
inline std::vector<std::pair<std::string, std::vector<double>>> functional_weights(
    const WiredGraph& g) {
  const std::uint32_t m = g.interior_count();
  std::vector<double> uniform(m, 1.0 / m);
  std::vector<double> center(m, 0.0);
  // pick the vertex closest to the coordinate centroid
  double cx = 0.0, cy = 0.0;
  for (std::uint32_t i = 0; i < m; ++i) {
    cx += g.coord(i).x;
    cy += g.coord(i).y;
  }
  cx /= m;
  cy /= m;
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::uint32_t i = 0; i < m; ++i) {
    const double d = std::hypot(g.coord(i).x - cx, g.coord(i).y - cy);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  center[best] = 1.0;
  std::vector<double> checkerboard(m);
  for (std::uint32_t i = 0; i < m; ++i)
    checkerboard[i] = ((g.coord(i).x + g.coord(i).y) % 2 == 0) ? 1.0 : -1.0;
  return {{"uniform", uniform}, {"center", center}, {"checkerboard", checkerboard}};
}

inline IsomorphismReport verify_ray_knight(const WiredGraph& g, double rate, double t,
                                           std::span<const std::uint32_t> probes,
                                           std::size_t replicas, std::uint64_t seed) {
  if (t < 0.0) throw std::invalid_argument("verify_ray_knight: t must be >= 0");
  if (replicas < 1000) throw std::invalid_argument("verify_ray_knight: replicas >= 1000 required");
  for (auto p : probes)
    if (p >= g.interior_count())
      throw std::invalid_argument("verify_ray_knight: probes must be interior");

  const auto green = exact::green_matrix(g, rate);
  const gff::CovarianceFactor factor(green);
  if (factor.rate() != rate)
    throw std::invalid_argument("verify_ray_knight: field and walk rate conventions differ");

  const double sqrt_t = std::sqrt(t);
  const auto weights = functional_weights(g);

  std::vector<std::vector<double>> side_a(probes.size()), side_b(probes.size());
  std::vector<std::vector<double>> fun_a(weights.size()), fun_b(weights.size());
  std::vector<double> local_means(probes.size(), 0.0), local_m2(probes.size(), 0.0);
  for (auto& v : side_a) v.reserve(replicas);
  for (auto& v : side_b) v.reserve(replicas);

  for (std::size_t rep = 0; rep < replicas; ++rep) {
    walk::WalkConfig cfg{&g, rate, seed, rep};
    const auto ltf = walk::run_to_boundary_time(cfg, t);
    const auto h = gff::sample_dgff(factor, seed, rep, RngUse::field);
    const auto hp = gff::sample_dgff(factor, seed, rep, RngUse::field_prime);

    for (std::size_t pi = 0; pi < probes.size(); ++pi) {
      const auto x = probes[pi];
      const double a = ltf.local[x] + h.values[x] * h.values[x];
      const double bq = hp.values[x] + sqrt_t;
      const double b = bq * bq;
      side_a[pi].push_back(a);
      side_b[pi].push_back(b);
      const double l = ltf.local[x];
      local_means[pi] += l;
      local_m2[pi] += l * l;
    }
    for (std::size_t wi = 0; wi < weights.size(); ++wi) {
      double sa = 0.0, sb = 0.0;
      for (std::uint32_t x = 0; x < g.interior_count(); ++x) {
        const double w = weights[wi].second[x];
        if (w == 0.0) continue;
        sa += w * (ltf.local[x] + h.values[x] * h.values[x]);
        const double bq = hp.values[x] + sqrt_t;
        sb += w * bq * bq;
      }
      fun_a[wi].push_back(sa);
      fun_b[wi].push_back(sb);
    }
  }

  IsomorphismReport rep;
  rep.t = t;
  rep.rate = rate;
  rep.replicas = replicas;
  const double n = static_cast<double>(replicas);
  for (std::size_t pi = 0; pi < probes.size(); ++pi) {
    IsomorphismReport::Probe pr;
    pr.vertex = probes[pi];
    const auto ks = stats::ks_two_sample(side_a[pi], side_b[pi]);
    pr.ks_statistic = ks.statistic;
    pr.ks_p_value = ks.p_value;
    const double mean = local_means[pi] / n;
    const double var = local_m2[pi] / n - mean * mean;
    const double se = std::sqrt(std::max(var, 1e-300) / n);
    pr.mean_identity_residual_se = (mean - t) / se;
    rep.probes.push_back(pr);
  }
  for (std::size_t wi = 0; wi < weights.size(); ++wi) {
    const auto ks = stats::ks_two_sample(fun_a[wi], fun_b[wi]);
    rep.functionals.push_back({weights[wi].first, ks.statistic, ks.p_value});
  }
  return rep;
}

struct SecondMomentRow {
  std::uint32_t interior = 0;
  double scaled_variance = 0.0;  // Var(sum h^2) / |D|^2
};

// Var(sum_x h(x)^2) / |D_n|^2 stays bounded; checked empirically per graph.
inline SecondMomentRow second_moment_check(const WiredGraph& g, double rate,
                                           std::size_t replicas, std::uint64_t seed) {
  const auto green = exact::green_matrix(g, rate);
  const gff::CovarianceFactor factor(green);
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t rep = 0; rep < replicas; ++rep) {
    const auto h = gff::sample_dgff(factor, seed, rep, RngUse::field);
    double q = 0.0;
    for (double v : h.values) q += v * v;
    s1 += q;
    s2 += q * q;
  }
  const double n = static_cast<double>(replicas);
  const double var = s2 / n - (s1 / n) * (s1 / n);
  const double m = static_cast<double>(g.interior_count());
  return {g.interior_count(), var / (m * m)};
}

}  // namespace covertime::coupling
