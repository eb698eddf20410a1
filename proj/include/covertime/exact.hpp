#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "covertime/lattice.hpp"

namespace covertime::exact {

using lattice::Vertex;
using lattice::WiredGraph;

inline constexpr std::uint32_t kMaxDenseVertices = 40000;

// Killed generator of the rate-per-edge walk: diagonal = rate * total degree,
// off-diagonal = -rate * (edge count), boundary row/column removed.
inline Eigen::SparseMatrix<double> killed_generator(const WiredGraph& g, double rate) {
  if (rate <= 0.0) throw std::invalid_argument("killed_generator: rate must be > 0");
  const std::uint32_t m = g.interior_count();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(m) * 5);
  for (std::uint32_t i = 0; i < m; ++i) {
    trips.emplace_back(i, i, rate * g.degree(i));
    std::unordered_map<std::uint32_t, int> counts;
    for (auto s : g.slots(i))
      if (s != g.boundary_index()) counts[s]++;
    for (const auto& [j, c] : counts) trips.emplace_back(i, j, -rate * c);
  }
  Eigen::SparseMatrix<double> q(m, m);
  q.setFromTriplets(trips.begin(), trips.end());
  return q;
}

class GreenMatrix {
 public:
  GreenMatrix(const WiredGraph& g, double rate) : graph_(&g), rate_(rate) {
    const std::uint32_t m = g.interior_count();
    if (m == 0) throw std::invalid_argument("GreenMatrix: empty interior");
    if (m > kMaxDenseVertices)
      throw std::invalid_argument("GreenMatrix: interior too large for dense solve (" +
                                  std::to_string(m) + " > " +
                                  std::to_string(kMaxDenseVertices) + ")");
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(killed_generator(g, rate));
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("GreenMatrix: killed generator is not positive definite");
    values_ = llt.solve(Eigen::MatrixXd::Identity(m, m));
  }

  const Eigen::MatrixXd& values() const { return values_; }
  double operator()(std::uint32_t i, std::uint32_t j) const { return values_(i, j); }
  double rate() const { return rate_; }
  const WiredGraph& graph() const { return *graph_; }
  std::uint32_t size() const { return static_cast<std::uint32_t>(values_.rows()); }

  double symmetry_residual() const {
    const double scale = values_.cwiseAbs().maxCoeff();
    return (values_ - values_.transpose()).cwiseAbs().maxCoeff() / scale;
  }

  bool is_positive_definite() const {
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (values_ + values_.transpose()));
    return llt.info() == Eigen::Success;
  }

 private:
  const WiredGraph* graph_;
  double rate_;
  Eigen::MatrixXd values_;
};

inline GreenMatrix green_matrix(const WiredGraph& g, double rate) { return {g, rate}; }

// Single Green column without forming the full matrix; usable at sizes where
// the dense solve is out of reach.
inline Eigen::VectorXd green_column(const WiredGraph& g, double rate, std::uint32_t x) {
  const std::uint32_t m = g.interior_count();
  if (x >= m) throw std::invalid_argument("green_column: x must be interior");
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(killed_generator(g, rate));
  if (llt.info() != Eigen::Success) throw std::runtime_error("green_column: factorization failed");
  Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
  e(x) = 1.0;
  return llt.solve(e);
}

// |D|^{-2} 1^T G 1 via one sparse solve; the exact variance of the field
// average is half this value.
inline double green_average(const WiredGraph& g, double rate) {
  const std::uint32_t m = g.interior_count();
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(killed_generator(g, rate));
  if (llt.info() != Eigen::Success) throw std::runtime_error("green_average: factorization failed");
  const Eigen::VectorXd w = llt.solve(Eigen::VectorXd::Ones(m));
  return w.sum() / (static_cast<double>(m) * static_cast<double>(m));
}

// --- harmonic systems -------------------------------------------------------------

// Discrete harmonic solve on a wired graph: value 1 on A, 0 on B, harmonic
// elsewhere. Returns one value per graph vertex (boundary index included).
inline Eigen::VectorXd hitting_probability_graph(const WiredGraph& g,
                                                 std::span<const std::uint32_t> absorbing_a,
                                                 std::span<const std::uint32_t> absorbing_b) {
  const std::uint32_t total = g.interior_count() + 1;
  std::vector<int> role(total, 0);  // 0 free, 1 in A, 2 in B
  for (auto a : absorbing_a) role.at(a) = 1;
  for (auto b : absorbing_b) {
    if (role.at(b) == 1) throw std::invalid_argument("hitting_probability: A and B intersect");
    role[b] = 2;
  }
  if (absorbing_a.empty() || absorbing_b.empty())
    throw std::invalid_argument("hitting_probability: A and B must be nonempty");

  std::vector<std::uint32_t> free_ids;
  std::vector<std::uint32_t> pos(total, WiredGraph::npos);
  for (std::uint32_t v = 0; v < total; ++v)
    if (role[v] == 0) {
      pos[v] = static_cast<std::uint32_t>(free_ids.size());
      free_ids.push_back(v);
    }

  Eigen::VectorXd out = Eigen::VectorXd::Zero(total);
  for (auto a : absorbing_a) out(a) = 1.0;
  if (free_ids.empty()) return out;

  const auto nf = static_cast<Eigen::Index>(free_ids.size());
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf);
  for (Eigen::Index r = 0; r < nf; ++r) {
    const std::uint32_t v = free_ids[static_cast<std::size_t>(r)];
    trips.emplace_back(r, r, static_cast<double>(g.degree(v)));
    for (auto s : g.slots(v)) {
      if (role[s] == 0)
        trips.emplace_back(r, pos[s], -1.0);
      else if (role[s] == 1)
        rhs(r) += 1.0;
    }
  }
  Eigen::SparseMatrix<double> mat(nf, nf);
  mat.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(mat);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("hitting_probability: singular harmonic system");
  const Eigen::VectorXd u = solver.solve(rhs);
  for (Eigen::Index r = 0; r < nf; ++r) out(free_ids[static_cast<std::size_t>(r)]) = u(r);
  return out;
}

// Free-lattice version: free region F in Z^2, absorbing sets A (value 1) and
// B (value 0). Every Z^2 neighbor of a free vertex must lie in F, A or B.
inline std::unordered_map<std::uint64_t, double> hitting_probability_lattice(
    std::span<const Vertex> free_region, std::span<const Vertex> absorbing_a,
    std::span<const Vertex> absorbing_b) {
  if (absorbing_a.empty() || absorbing_b.empty())
    throw std::invalid_argument("hitting_probability: A and B must be nonempty");
  std::unordered_map<std::uint64_t, int> role;  // 1 A, 2 B, 0 free
  for (const auto& v : absorbing_a) role[lattice::key_of(v)] = 1;
  for (const auto& v : absorbing_b) {
    auto [it, inserted] = role.try_emplace(lattice::key_of(v), 2);
    if (!inserted && it->second == 1)
      throw std::invalid_argument("hitting_probability: A and B intersect");
  }
  std::vector<Vertex> free_list;
  std::unordered_map<std::uint64_t, std::uint32_t> pos;
  for (const auto& v : free_region) {
    const auto k = lattice::key_of(v);
    if (role.count(k)) continue;  // absorbing wins over free
    if (pos.try_emplace(k, static_cast<std::uint32_t>(free_list.size())).second)
      free_list.push_back(v);
  }

  const auto nf = static_cast<Eigen::Index>(free_list.size());
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf);
  for (Eigen::Index r = 0; r < nf; ++r) {
    const Vertex v = free_list[static_cast<std::size_t>(r)];
    trips.emplace_back(r, r, 4.0);
    for (const Vertex nb : {Vertex{v.x + 1, v.y}, Vertex{v.x - 1, v.y},
                            Vertex{v.x, v.y + 1}, Vertex{v.x, v.y - 1}}) {
      const auto k = lattice::key_of(nb);
      if (const auto it = pos.find(k); it != pos.end()) {
        trips.emplace_back(r, it->second, -1.0);
      } else if (const auto rt = role.find(k); rt != role.end()) {
        if (rt->second == 1) rhs(r) += 1.0;
      } else {
        throw std::invalid_argument(
            "hitting_probability: free vertex has a neighbor outside F, A and B");
      }
    }
  }
  std::unordered_map<std::uint64_t, double> out;
  for (const auto& v : absorbing_a) out[lattice::key_of(v)] = 1.0;
  for (const auto& v : absorbing_b) out.try_emplace(lattice::key_of(v), 0.0);
  if (nf > 0) {
    Eigen::SparseMatrix<double> mat(nf, nf);
    mat.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(mat);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("hitting_probability: singular harmonic system");
    const Eigen::VectorXd u = solver.solve(rhs);
    for (Eigen::Index r = 0; r < nf; ++r)
      out[lattice::key_of(free_list[static_cast<std::size_t>(r)])] = u(r);
  }
  return out;
}

// --- Poisson kernel and harmonic measure ------------------------------------------

struct ProbabilityVector {
  std::vector<Vertex> support;
  std::vector<double> probabilities;

  double total() const {
    double s = 0.0;
    for (double p : probabilities) s += p;
    return s;
  }
  double at(Vertex v) const {
    for (std::size_t i = 0; i < support.size(); ++i)
      if (support[i] == v) return probabilities[i];
    return 0.0;
  }
};

// Outer vertex boundary of a set of Z^2 vertices.
inline std::vector<Vertex> outer_boundary(std::span<const Vertex> set) {
  std::unordered_set<std::uint64_t> in;
  for (const auto& v : set) in.insert(lattice::key_of(v));
  std::vector<Vertex> out;
  std::unordered_set<std::uint64_t> seen;
  for (const auto& v : set)
    for (const Vertex nb : {Vertex{v.x + 1, v.y}, Vertex{v.x - 1, v.y},
                            Vertex{v.x, v.y + 1}, Vertex{v.x, v.y - 1}})
      if (!in.count(lattice::key_of(nb)) && seen.insert(lattice::key_of(nb)).second)
        out.push_back(nb);
  std::sort(out.begin(), out.end());
  return out;
}

// Inner vertex boundary: members adjacent to the complement.
inline std::vector<Vertex> inner_boundary(std::span<const Vertex> set) {
  std::unordered_set<std::uint64_t> in;
  for (const auto& v : set) in.insert(lattice::key_of(v));
  std::vector<Vertex> out;
  for (const auto& v : set)
    for (const Vertex nb : {Vertex{v.x + 1, v.y}, Vertex{v.x - 1, v.y},
                            Vertex{v.x, v.y + 1}, Vertex{v.x, v.y - 1}})
      if (!in.count(lattice::key_of(nb))) {
        out.push_back(v);
        break;
      }
  std::sort(out.begin(), out.end());
  return out;
}

// Exit distribution of the SRW on B(x;R) over the outer boundary.
inline ProbabilityVector poisson_kernel(Vertex center, double radius_log, Vertex start) {
  const auto ball = lattice::geometry_query(center, radius_log, lattice::BallKind::log_ball);
  std::unordered_map<std::uint64_t, std::uint32_t> pos;
  for (std::uint32_t i = 0; i < ball.size(); ++i) pos[lattice::key_of(ball[i])] = i;
  if (!pos.count(lattice::key_of(start)))
    throw std::invalid_argument("poisson_kernel: start must lie inside the ball");
  const auto boundary = outer_boundary(ball);

  const auto nf = static_cast<Eigen::Index>(ball.size());
  std::vector<Eigen::Triplet<double>> trips;
  for (Eigen::Index r = 0; r < nf; ++r) {
    const Vertex v = ball[static_cast<std::size_t>(r)];
    trips.emplace_back(r, r, 4.0);
    for (const Vertex nb : {Vertex{v.x + 1, v.y}, Vertex{v.x - 1, v.y},
                            Vertex{v.x, v.y + 1}, Vertex{v.x, v.y - 1}})
      if (const auto it = pos.find(lattice::key_of(nb)); it != pos.end())
        trips.emplace_back(r, it->second, -1.0);
  }
  Eigen::SparseMatrix<double> mat(nf, nf);
  mat.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(mat);
  if (solver.info() != Eigen::Success) throw std::runtime_error("poisson_kernel: singular system");
  Eigen::VectorXd e = Eigen::VectorXd::Zero(nf);
  e(pos[lattice::key_of(start)]) = 1.0;
  const Eigen::VectorXd w = solver.solve(e);  // expected visits / 4, symmetrized

  ProbabilityVector out;
  out.support = boundary;
  out.probabilities.assign(boundary.size(), 0.0);
  std::unordered_map<std::uint64_t, std::uint32_t> bpos;
  for (std::uint32_t i = 0; i < boundary.size(); ++i) bpos[lattice::key_of(boundary[i])] = i;
  for (Eigen::Index r = 0; r < nf; ++r) {
    const Vertex v = ball[static_cast<std::size_t>(r)];
    for (const Vertex nb : {Vertex{v.x + 1, v.y}, Vertex{v.x - 1, v.y},
                            Vertex{v.x, v.y + 1}, Vertex{v.x, v.y - 1}})
      if (const auto it = bpos.find(lattice::key_of(nb)); it != bpos.end())
        out.probabilities[it->second] += w(r);
  }
  return out;
}

struct HarmonicMeasureResult {
  ProbabilityVector measure;          // on the inner boundary of B(0;k)
  double truncation_m = 0.0;          // outer log-radius used
  double truncation_diff = 0.0;       // sup-entry change vs m - 1
};

namespace detail {
inline ProbabilityVector harmonic_measure_once(double k, double m) {
  const auto ball_a = lattice::geometry_query({0, 0}, k, lattice::BallKind::log_ball);
  const auto ball_out = lattice::geometry_query({0, 0}, m, lattice::BallKind::log_ball);
  const auto outer = outer_boundary(ball_out);

  std::unordered_set<std::uint64_t> in_a;
  for (const auto& v : ball_a) in_a.insert(lattice::key_of(v));
  std::vector<Vertex> free_region;
  for (const auto& v : ball_out)
    if (!in_a.count(lattice::key_of(v))) free_region.push_back(v);

  // u = P(tau_out < tau_A), then escape probability from each inner-boundary
  // vertex of A; the measure from infinity is the normalized escape vector.
  const auto u = hitting_probability_lattice(free_region, outer, ball_a);
  ProbabilityVector out;
  out.support = inner_boundary(ball_a);
  out.probabilities.reserve(out.support.size());
  double total = 0.0;
  for (const auto& w : out.support) {
    double esc = 0.0;
    for (const Vertex nb : {Vertex{w.x + 1, w.y}, Vertex{w.x - 1, w.y},
                            Vertex{w.x, w.y + 1}, Vertex{w.x, w.y - 1}}) {
      const auto it = u.find(lattice::key_of(nb));
      if (it != u.end()) esc += 0.25 * it->second;
    }
    out.probabilities.push_back(esc);
    total += esc;
  }
  if (total <= 0.0) throw std::runtime_error("harmonic_measure: zero escape mass");
  for (auto& p : out.probabilities) p /= total;
  return out;
}
}  // namespace detail

// m-truncated harmonic measure from infinity of B(0;k), with the change
// against the next-smaller truncation reported as a convergence diagnostic.
inline HarmonicMeasureResult harmonic_measure(double k, double m) {
  if (!(m > k + 1.0)) throw std::invalid_argument("harmonic_measure: need m > k + 1");
  HarmonicMeasureResult res;
  res.measure = detail::harmonic_measure_once(k, m);
  res.truncation_m = m;
  const auto prev = detail::harmonic_measure_once(k, m - 1.0);
  double diff = 0.0;
  for (std::size_t i = 0; i < res.measure.support.size(); ++i)
    diff = std::max(diff, std::fabs(res.measure.probabilities[i] - prev.probabilities[i]));
  res.truncation_diff = diff;
  return res;
}

// --- unvisited-vertex law -----------------------------------------------------------

struct UnvisitedProbability {
  double probability = 0.0;  // exp(-t / G(x,x))
  double green_xx = 0.0;
  double lambda = 0.0;       // rate * deg(boundary) * P_boundary(hit x before return)
  double normalization_residual = 0.0;  // |lambda * G(x,x) - 1|
};

// P(L_t(x) = 0) = exp(-t / G(x,x)); the excursion-rate representation
// lambda_x = rate deg(bd) P_bd(tau_x < tau_bd^+) must satisfy lambda_x G(x,x) = 1.
inline UnvisitedProbability unvisited_probability(const WiredGraph& g, double rate,
                                                  std::uint32_t x, double t) {
  if (t < 0.0) throw std::invalid_argument("unvisited_probability: t must be >= 0");
  if (x >= g.interior_count())
    throw std::invalid_argument("unvisited_probability: x must be interior");
  UnvisitedProbability out;
  out.green_xx = green_column(g, rate, x)(x);

  const std::uint32_t bd = g.boundary_index();
  const std::uint32_t a[] = {x};
  const std::uint32_t b[] = {bd};
  const Eigen::VectorXd u = hitting_probability_graph(g, a, b);
  double hit = 0.0;
  for (auto s : g.slots(bd)) hit += u(s);
  hit /= static_cast<double>(g.boundary_degree());
  out.lambda = rate * g.boundary_degree() * hit;
  out.normalization_residual = std::fabs(out.lambda * out.green_xx - 1.0);
  if (out.normalization_residual > 1e-8)
    throw std::runtime_error("unvisited_probability: lambda * G(x,x) = 1 cross-check failed");
  out.probability = std::exp(-t / out.green_xx);
  return out;
}

// Poisson(tau) two-stage experiments with first-stage success p and
// second-stage failure q: P(no full success, >= 1 first-stage-only success).
inline double two_stage_race_probability(double tau, double p, double q) {
  if (tau < 0.0) throw std::invalid_argument("two_stage_race_probability: tau >= 0 required");
  if (!(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0))
    throw std::invalid_argument("two_stage_race_probability: p, q must lie in (0,1)");
  return (1.0 - std::exp(-tau * p * q)) * std::exp(-tau * p * (1.0 - q));
}

}  // namespace covertime::exact
