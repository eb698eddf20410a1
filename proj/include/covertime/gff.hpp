#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "covertime/exact.hpp"
#include "covertime/lattice.hpp"
#include "covertime/rng.hpp"

namespace covertime::gff {

using lattice::Vertex;
using lattice::WiredGraph;

// Square-root factor of the covariance C = G/2.
class CovarianceFactor {
 public:
  explicit CovarianceFactor(const exact::GreenMatrix& green)
      : graph_(&green.graph()), rate_(green.rate()) {
    const Eigen::MatrixXd c =
        0.25 * (green.values() + green.values().transpose());  // C = G/2, symmetrized
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("CovarianceFactor: covariance not positive definite");
    factor_ = llt.matrixL();
    const Eigen::MatrixXd back = factor_ * factor_.transpose();
    reconstruction_residual_ = (back - c).norm() / c.norm();
    if (reconstruction_residual_ > 1e-8)
      throw std::runtime_error("CovarianceFactor: reconstruction residual too large");
    variances_.resize(c.rows());
    for (Eigen::Index i = 0; i < c.rows(); ++i) variances_[i] = c(i, i);
  }

  const Eigen::MatrixXd& matrix() const { return factor_; }
  double reconstruction_residual() const { return reconstruction_residual_; }
  const WiredGraph& graph() const { return *graph_; }
  double rate() const { return rate_; }
  std::span<const double> variances() const { return variances_; }
  std::uint32_t size() const { return static_cast<std::uint32_t>(factor_.rows()); }

 private:
  const WiredGraph* graph_;
  double rate_;
  Eigen::MatrixXd factor_;
  std::vector<double> variances_;
  double reconstruction_residual_ = 0.0;
};

inline CovarianceFactor covariance_factor(const exact::GreenMatrix& green) {
  return CovarianceFactor(green);
}

struct GaussianFieldSample {
  const WiredGraph* graph = nullptr;
  double rate = 1.0;  // normalization tag: which rate convention produced C = G/2
  std::vector<double> values;
  double average = 0.0;

  double at(std::uint32_t i) const { return values[i]; }
};

inline GaussianFieldSample sample_dgff(const CovarianceFactor& factor, std::uint64_t seed,
                                       std::uint64_t replica,
                                       RngUse use = RngUse::field) {
  RngStream rng(seed, use, replica);
  const auto m = static_cast<Eigen::Index>(factor.size());
  Eigen::VectorXd z(m);
  for (Eigen::Index i = 0; i < m; ++i) z(i) = rng.normal();
  const Eigen::VectorXd h = factor.matrix() * z;
  GaussianFieldSample s;
  s.graph = &factor.graph();
  s.rate = factor.rate();
  s.values.assign(h.data(), h.data() + m);
  s.average = h.mean();
  return s;
}

// psi_n(y) = (|D|^{-1} sum_x G(x,y)) / (|D|^{-2} sum_{x,y} G(x,y)); mean 1.
inline std::vector<double> psi_field(const exact::GreenMatrix& green) {
  const auto m = static_cast<Eigen::Index>(green.size());
  const Eigen::VectorXd colsum = green.values().colwise().sum();
  const double total = colsum.sum();
  std::vector<double> psi(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i)
    psi[static_cast<std::size_t>(i)] = colsum(i) * static_cast<double>(m) / total;
  return psi;
}

struct Decomposition {
  double average = 0.0;             // hbar
  std::vector<double> zero_average; // hhat, mean zero
};

// h = psi * hbar + hhat with mean(hhat) = 0, exactly per sample.
inline Decomposition zero_average_decompose(const GaussianFieldSample& h,
                                            std::span<const double> psi) {
  if (psi.size() != h.values.size())
    throw std::invalid_argument("zero_average_decompose: psi size mismatch");
  Decomposition d;
  d.average = h.average;
  d.zero_average.resize(h.values.size());
  for (std::size_t i = 0; i < h.values.size(); ++i)
    d.zero_average[i] = h.values[i] - psi[i] * d.average;
  return d;
}

// --- centering sequences -------------------------------------------------------

enum class Centering {
  intro_mn,        // m_N = (1/sqrt(pi)) log N - (3/(8 sqrt(pi))) log log N
  intro_cover,     // sqrt(t_N) = (1/sqrt(pi)) log N - (1/(4 sqrt(pi))) log log N
  retuned_mn,      // sqrt(t_n^A) = sqrt(2) n - (3/(4 sqrt(2))) log n
  retuned_cover,   // sqrt(t_n) = sqrt(2) n - (1/(2 sqrt(2))) log n
  phase_b_time,    // t_n^B = (1/2) n log n
};

// Evaluates the selected closed form. The intro conventions take N, the
// retuned ones take n = log N; sqrt-forms return the square root quantity.
inline double eval_centering(double arg, Centering convention) {
  if (!(arg > 1.0)) throw std::domain_error("eval_centering: argument must exceed 1");
  const double sqrt_pi = std::sqrt(M_PI);
  const double sqrt2 = std::sqrt(2.0);
  switch (convention) {
    case Centering::intro_mn:
      return std::log(arg) / sqrt_pi - 3.0 / (8.0 * sqrt_pi) * std::log(std::log(arg));
    case Centering::intro_cover:
      return std::log(arg) / sqrt_pi - 1.0 / (4.0 * sqrt_pi) * std::log(std::log(arg));
    case Centering::retuned_mn:
      return sqrt2 * arg - 3.0 / (4.0 * sqrt2) * std::log(arg);
    case Centering::retuned_cover:
      return sqrt2 * arg - 1.0 / (2.0 * sqrt2) * std::log(arg);
    case Centering::phase_b_time:
      return 0.5 * arg * std::log(arg);
  }
  throw std::invalid_argument("eval_centering: unknown convention");
}

// --- extremal process ------------------------------------------------------------

struct ExtremalPoint {
  double pos_x = 0.0, pos_y = 0.0;  // scaled position e^{-n} x
  double depth = 0.0;               // h(x) + centering
  Vertex vertex;
  std::vector<std::pair<Vertex, double>> patch;  // offset -> h(x+y) - h(x)
};

// One point per r-local minimum: h(x) <= h over B(x;r) cap D, ties resolved to
// the lexicographically smallest minimizer in its ball. B(x;0) is the 5-point
// ball (floor(e^0) = 1), so r = 0 means nearest-neighbor local minima.
inline std::vector<ExtremalPoint> extremal_process(const GaussianFieldSample& h, double r,
                                                   double patch_log_radius, double centering) {
  if (r < 0.0 || patch_log_radius < 0.0)
    throw std::invalid_argument("extremal_process: radii must be >= 0");
  const WiredGraph& g = *h.graph;
  std::vector<ExtremalPoint> out;
  const auto ball = lattice::geometry_query({0, 0}, r, lattice::BallKind::log_ball);
  const auto patch_box =
      lattice::geometry_query({0, 0}, patch_log_radius, lattice::BallKind::log_box);
  for (std::uint32_t i = 0; i < g.interior_count(); ++i) {
    const Vertex x = g.coord(i);
    const double hx = h.values[i];
    bool is_min = true;
    bool lex_first = true;
    for (const auto& off : ball) {
      if (off.x == 0 && off.y == 0) continue;
      const Vertex z{x.x + off.x, x.y + off.y};
      const auto j = g.index_of(z);
      if (j == WiredGraph::npos) continue;
      const double hz = h.values[j];
      if (hz < hx) {
        is_min = false;
        break;
      }
      if (hz == hx && z < x) lex_first = false;
    }
    if (!is_min || !lex_first) continue;
    ExtremalPoint p;
    p.vertex = x;
    p.depth = hx + centering;
    for (const auto& off : patch_box) {
      const Vertex z{x.x + off.x, x.y + off.y};
      const auto j = g.index_of(z);
      if (j == WiredGraph::npos) continue;
      p.patch.emplace_back(off, h.values[j] - hx);
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline void scale_extremal_positions(std::vector<ExtremalPoint>& pts, double n) {
  const double s = std::exp(-n);
  for (auto& p : pts) {
    p.pos_x = s * p.vertex.x;
    p.pos_y = s * p.vertex.y;
  }
}

// {x in bulk : f(x)^2 <= u}
inline std::vector<std::uint32_t> level_set(std::span<const double> field, double u,
                                            std::span<const std::uint32_t> bulk) {
  if (u < 0.0) throw std::invalid_argument("level_set: u must be >= 0");
  std::vector<std::uint32_t> out;
  for (auto i : bulk)
    if (field[i] * field[i] <= u) out.push_back(i);
  return out;
}

// Discrete critical-LQGM proxy: atom max(0, alpha Var - h) e^{alpha h - alpha^2 Var / 2}
// at e^{-n} x. Negative derivative-martingale prefactors are clamped to zero.
inline lattice::PointMeasure lqg_proxy_measure(const GaussianFieldSample& h, double alpha,
                                               std::span<const double> variances, double n) {
  if (alpha <= 0.0) throw std::invalid_argument("lqg_proxy_measure: alpha must be > 0");
  if (variances.size() != h.values.size())
    throw std::invalid_argument("lqg_proxy_measure: variance vector size mismatch");
  const WiredGraph& g = *h.graph;
  const double scale = std::exp(-n);
  lattice::PointMeasure mu;
  mu.atoms.reserve(h.values.size());
  for (std::uint32_t i = 0; i < h.values.size(); ++i) {
    const double var = variances[i];
    const double prefactor = std::max(0.0, alpha * var - h.values[i]);
    const double weight = prefactor * std::exp(alpha * h.values[i] - 0.5 * alpha * alpha * var);
    const Vertex v = g.coord(i);
    mu.atoms.push_back({scale * v.x, scale * v.y, weight});
  }
  return mu;
}

}  // namespace covertime::gff
