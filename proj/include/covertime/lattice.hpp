#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace covertime::lattice {

struct Vertex {
  std::int32_t x = 0;
  std::int32_t y = 0;
  friend bool operator==(const Vertex&, const Vertex&) = default;
  friend auto operator<=>(const Vertex&, const Vertex&) = default;
};

inline std::uint64_t key_of(Vertex v) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(v.x)) << 32) |
         static_cast<std::uint64_t>(static_cast<std::uint32_t>(v.y));
}

inline std::int64_t dist2(Vertex a, Vertex b) {
  const std::int64_t dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

// floor(exp(v)) with a one-ulp relative guard so that exp(log k) lands on k.
inline std::int64_t floor_exp(double v) {
  const double e = std::exp(v);
  return static_cast<std::int64_t>(std::floor(e * (1.0 + 4e-15)));
}

// --- domain shapes -----------------------------------------------------------

struct DomainShape {
  enum class Kind { unit_square, unit_disc, annulus, polygon };
  Kind kind = Kind::unit_square;
  double inner_radius = 0.0;                       // annulus only
  std::vector<std::array<double, 2>> vertices;     // polygon only

  static DomainShape unit_square() { return {Kind::unit_square, 0.0, {}}; }
  static DomainShape unit_disc() { return {Kind::unit_disc, 0.0, {}}; }
  static DomainShape annulus(double inner) {
    if (!(inner > 0.0 && inner < 1.0))
      throw std::invalid_argument("annulus inner radius must lie in (0,1)");
    return {Kind::annulus, inner, {}};
  }
  static DomainShape polygon(std::vector<std::array<double, 2>> vs) {
    if (vs.size() < 3) throw std::invalid_argument("polygon needs >= 3 vertices");
    return {Kind::polygon, 0.0, std::move(vs)};
  }

  std::string name() const {
    switch (kind) {
      case Kind::unit_square: return "unit-square";
      case Kind::unit_disc: return "unit-disc";
      case Kind::annulus: return "annulus(" + std::to_string(inner_radius) + ")";
      case Kind::polygon: return "polygon(" + std::to_string(vertices.size()) + ")";
    }
    return "?";
  }

  // Euclidean distance from p to the complement of the domain (0 if p outside).
  double distance_to_complement(double px, double py) const {
    switch (kind) {
      case Kind::unit_square: {
        const double d = std::min({px, py, 1.0 - px, 1.0 - py});
        return std::max(d, 0.0);
      }
      case Kind::unit_disc: {
        return std::max(1.0 - std::hypot(px, py), 0.0);
      }
      case Kind::annulus: {
        const double r = std::hypot(px, py);
        return std::max(std::min(r - inner_radius, 1.0 - r), 0.0);
      }
      case Kind::polygon: {
        if (!polygon_contains(px, py)) return 0.0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < vertices.size(); ++i) {
          const auto& a = vertices[i];
          const auto& b = vertices[(i + 1) % vertices.size()];
          best = std::min(best, point_segment_distance(px, py, a[0], a[1], b[0], b[1]));
        }
        return best;
      }
    }
    return 0.0;
  }

  // Axis-aligned bounding box of the domain.
  std::array<double, 4> bounding_box() const {
    switch (kind) {
      case Kind::unit_square: return {0.0, 0.0, 1.0, 1.0};
      case Kind::unit_disc: return {-1.0, -1.0, 1.0, 1.0};
      case Kind::annulus: return {-1.0, -1.0, 1.0, 1.0};
      case Kind::polygon: {
        double x0 = vertices[0][0], y0 = vertices[0][1], x1 = x0, y1 = y0;
        for (const auto& v : vertices) {
          x0 = std::min(x0, v[0]); y0 = std::min(y0, v[1]);
          x1 = std::max(x1, v[0]); y1 = std::max(y1, v[1]);
        }
        return {x0, y0, x1, y1};
      }
    }
    return {0, 0, 1, 1};
  }

 private:
  bool polygon_contains(double px, double py) const {
    bool inside = false;
    for (std::size_t i = 0, j = vertices.size() - 1; i < vertices.size(); j = i++) {
      const double xi = vertices[i][0], yi = vertices[i][1];
      const double xj = vertices[j][0], yj = vertices[j][1];
      if ((yi > py) != (yj > py) &&
          px < (xj - xi) * (py - yi) / (yj - yi) + xi)
        inside = !inside;
    }
    return inside;
  }

  static double point_segment_distance(double px, double py, double ax, double ay,
                                       double bx, double by) {
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
  }
};

// --- discretized domain -------------------------------------------------------

struct LatticeDomain {
  double n = 0.0;          // log side scale
  std::int64_t N = 1;      // floor(e^n)
  DomainShape shape;
  std::vector<Vertex> vertices;  // sorted lexicographically

  std::size_t size() const { return vertices.size(); }
};

// Vertex set {x : d(x/N, D^c) > 1/N} enumerated over the scaled bounding box.
inline LatticeDomain discretize_domain(const DomainShape& shape, double n) {
  if (n < 0.0) throw std::invalid_argument("discretize_domain: n must be >= 0");
  LatticeDomain d;
  d.n = n;
  d.N = floor_exp(n);
  d.shape = shape;
  const auto box = shape.bounding_box();
  const auto lo_x = static_cast<std::int64_t>(std::floor(box[0] * d.N)) - 1;
  const auto lo_y = static_cast<std::int64_t>(std::floor(box[1] * d.N)) - 1;
  const auto hi_x = static_cast<std::int64_t>(std::ceil(box[2] * d.N)) + 1;
  const auto hi_y = static_cast<std::int64_t>(std::ceil(box[3] * d.N)) + 1;
  const double margin = 1.0 / static_cast<double>(d.N);
  for (std::int64_t x = lo_x; x <= hi_x; ++x)
    for (std::int64_t y = lo_y; y <= hi_y; ++y) {
      const double dist = shape.distance_to_complement(
          static_cast<double>(x) / d.N, static_cast<double>(y) / d.N);
      if (dist > margin)
        d.vertices.push_back({static_cast<std::int32_t>(x), static_cast<std::int32_t>(y)});
    }
  std::sort(d.vertices.begin(), d.vertices.end());
  if (d.vertices.empty())
    throw std::runtime_error("discretize_domain: empty interior for " + shape.name() +
                             " at n=" + std::to_string(n) + " (N=" + std::to_string(d.N) + ")");
  return d;
}

// --- wired graph ---------------------------------------------------------------

// Interior vertices indexed 0..m-1, the contracted boundary vertex is index m.
// slots lists one entry per edge end, so multiplicity to the boundary and the
// walk's uniform-edge jump law both come for free.
class WiredGraph {
 public:
  static constexpr std::uint32_t npos = 0xffffffffu;

  static WiredGraph from_vertices(std::span<const Vertex> vs) {
    WiredGraph g;
    g.coords_.assign(vs.begin(), vs.end());
    std::sort(g.coords_.begin(), g.coords_.end());
    g.coords_.erase(std::unique(g.coords_.begin(), g.coords_.end()), g.coords_.end());
    if (g.coords_.empty()) throw std::invalid_argument("WiredGraph: empty vertex set");
    g.index_.reserve(g.coords_.size() * 2);
    for (std::uint32_t i = 0; i < g.coords_.size(); ++i) g.index_[key_of(g.coords_[i])] = i;
    const auto m = static_cast<std::uint32_t>(g.coords_.size());
    g.slots_.assign(m + 1, {});
    for (std::uint32_t i = 0; i < m; ++i) {
      const Vertex v = g.coords_[i];
      for (const Vertex nb : {Vertex{v.x + 1, v.y}, Vertex{v.x - 1, v.y},
                              Vertex{v.x, v.y + 1}, Vertex{v.x, v.y - 1}}) {
        const auto it = g.index_.find(key_of(nb));
        if (it != g.index_.end()) {
          g.slots_[i].push_back(it->second);
        } else {
          g.slots_[i].push_back(m);
          g.slots_[m].push_back(i);
        }
      }
    }
    g.lattice_embedded_ = true;
    return g;
  }

  static WiredGraph from_domain(const LatticeDomain& d) { return from_vertices(d.vertices); }

  // Wired linear graph 0-1-...-(m+1): interior {1..m}, both ends contracted.
  static WiredGraph path(std::uint32_t interior_count) {
    if (interior_count == 0) throw std::invalid_argument("path: empty interior");
    WiredGraph g;
    const std::uint32_t m = interior_count;
    g.slots_.assign(m + 1, {});
    g.coords_.resize(m);
    for (std::uint32_t i = 0; i < m; ++i) {
      g.coords_[i] = {static_cast<std::int32_t>(i), 0};
      if (i > 0) g.slots_[i].push_back(i - 1);
      if (i + 1 < m) g.slots_[i].push_back(i + 1);
      if (i == 0 || i + 1 == m) {
        g.slots_[i].push_back(m);
        g.slots_[m].push_back(i);
      }
    }
    for (std::uint32_t i = 0; i < m; ++i) g.index_[key_of(g.coords_[i])] = i;
    g.lattice_embedded_ = false;
    return g;
  }

  std::uint32_t interior_count() const { return static_cast<std::uint32_t>(coords_.size()); }
  std::uint32_t boundary_index() const { return interior_count(); }
  bool lattice_embedded() const { return lattice_embedded_; }

  std::uint32_t index_of(Vertex v) const {
    const auto it = index_.find(key_of(v));
    return it == index_.end() ? npos : it->second;
  }
  Vertex coord(std::uint32_t i) const { return coords_.at(i); }
  std::span<const Vertex> coords() const { return coords_; }

  std::span<const std::uint32_t> slots(std::uint32_t i) const { return slots_[i]; }
  std::uint32_t degree(std::uint32_t i) const { return static_cast<std::uint32_t>(slots_[i].size()); }
  std::uint32_t boundary_degree() const { return degree(boundary_index()); }

  std::uint32_t boundary_multiplicity(std::uint32_t i) const {
    std::uint32_t c = 0;
    for (auto s : slots_[i]) c += (s == boundary_index());
    return c;
  }

  std::size_t edge_count() const {
    std::size_t total = 0;
    for (const auto& s : slots_) total += s.size();
    return total / 2;
  }

 private:
  std::vector<Vertex> coords_;
  std::vector<std::vector<std::uint32_t>> slots_;
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
  bool lattice_embedded_ = true;
};

inline WiredGraph wire_boundary(const LatticeDomain& d) {
  if (d.vertices.empty()) throw std::invalid_argument("wire_boundary: empty domain");
  return WiredGraph::from_domain(d);
}

// Square block {1..k}^2 wired; the workhorse test domain.
inline WiredGraph square_block(std::int32_t k) {
  std::vector<Vertex> vs;
  vs.reserve(static_cast<std::size_t>(k) * k);
  for (std::int32_t x = 1; x <= k; ++x)
    for (std::int32_t y = 1; y <= k; ++y) vs.push_back({x, y});
  return WiredGraph::from_vertices(vs);
}

// 1 x m corridor {(0,0)..(m-1,0)} wired.
inline WiredGraph corridor(std::int32_t m) {
  std::vector<Vertex> vs;
  for (std::int32_t x = 0; x < m; ++x) vs.push_back({x, 0});
  return WiredGraph::from_vertices(vs);
}

// --- geometry queries -----------------------------------------------------------

enum class BallKind { log_ball, log_box };

// B(x;r) = {y : ||x-y|| <= floor(e^r)}; Q(x;r) = {y : x-y in (-R/2, R/2]^2}.
inline std::vector<Vertex> geometry_query(Vertex x, double r, BallKind kind) {
  if (r < 0.0) throw std::invalid_argument("geometry_query: r must be >= 0");
  const std::int64_t R = floor_exp(r);
  std::vector<Vertex> out;
  if (kind == BallKind::log_ball) {
    const std::int64_t R2 = R * R;
    for (std::int64_t dx = -R; dx <= R; ++dx)
      for (std::int64_t dy = -R; dy <= R; ++dy)
        if (dx * dx + dy * dy <= R2)
          out.push_back({static_cast<std::int32_t>(x.x + dx), static_cast<std::int32_t>(x.y + dy)});
  } else {
    // x - y in (-R/2, R/2]  <=>  -R < 2(x-y) <= R, exact in integers
    for (std::int64_t dy_ = -R; dy_ <= R; ++dy_)
      for (std::int64_t dx_ = -R; dx_ <= R; ++dx_) {
        const std::int64_t tx = 2 * (-dx_), ty = 2 * (-dy_);
        if (tx > -R && tx <= R && ty > -R && ty <= R)
          out.push_back({static_cast<std::int32_t>(x.x + dx_), static_cast<std::int32_t>(x.y + dy_)});
      }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Bulk of D_n: vertices at Euclidean distance > e^n / n^2 from the complement.
inline std::vector<Vertex> bulk_vertices(const LatticeDomain& d) {
  if (d.vertices.empty()) throw std::invalid_argument("bulk_vertices: empty domain");
  const double margin = std::exp(d.n) / (d.n * d.n);
  std::unordered_set<std::uint64_t> interior;
  interior.reserve(d.vertices.size() * 2);
  for (const auto& v : d.vertices) interior.insert(key_of(v));
  const auto rad = static_cast<std::int64_t>(std::floor(margin));
  const double margin2 = margin * margin;
  std::vector<Vertex> out;
  for (const auto& v : d.vertices) {
    bool ok = true;
    for (std::int64_t dx = -rad - 1; ok && dx <= rad + 1; ++dx)
      for (std::int64_t dy = -rad - 1; dy <= rad + 1; ++dy) {
        const double dd = static_cast<double>(dx * dx + dy * dy);
        if (dd > margin2) continue;
        if (!interior.count(key_of({static_cast<std::int32_t>(v.x + dx),
                                    static_cast<std::int32_t>(v.y + dy)}))) {
          ok = false;
          break;
        }
      }
    if (ok) out.push_back(v);
  }
  return out;
}

// --- clustering -------------------------------------------------------------------

// (r,R)-clustered: no pairwise log-distance falls in the open gap (r, R).
inline bool is_clustered(std::span<const Vertex> s, double r, double R) {
  if (!(0.0 < r && r < R)) throw std::invalid_argument("is_clustered: need 0 < r < R");
  const double lo2 = std::exp(2.0 * r), hi2 = std::exp(2.0 * R);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      const auto d2 = static_cast<double>(dist2(s[i], s[j]));
      if (d2 > lo2 && d2 < hi2) return false;
    }
  return true;
}

struct ClusterCover {
  double radius_log = 0.0;
  std::vector<Vertex> centers;
  std::vector<Vertex> covered_set;
  bool non_minimal = false;  // true when the greedy fallback was used

  bool covers() const {
    const std::int64_t R = floor_exp(radius_log);
    for (const auto& p : covered_set) {
      bool hit = false;
      for (const auto& c : centers)
        if (dist2(p, c) <= R * R) {
          hit = true;
          break;
        }
      if (!hit) return false;
    }
    return true;
  }
};

// One center per connected component under log-distance <= r when that yields
// a valid cover with pairwise-far centers (the clustered case); otherwise an
// explicitly flagged greedy cover.
inline ClusterCover minimal_cover(std::span<const Vertex> s, double r) {
  if (s.empty()) throw std::invalid_argument("minimal_cover: empty set");
  std::vector<Vertex> pts(s.begin(), s.end());
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  ClusterCover cover;
  cover.radius_log = r;
  cover.covered_set = pts;

  const double link2 = std::exp(2.0 * r);
  std::vector<std::size_t> parent(pts.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      if (static_cast<double>(dist2(pts[i], pts[j])) <= link2) parent[find(i)] = find(j);

  std::unordered_map<std::size_t, std::vector<std::size_t>> components;
  for (std::size_t i = 0; i < pts.size(); ++i) components[find(i)].push_back(i);

  const std::int64_t R = floor_exp(r);
  std::vector<Vertex> centers;
  bool exact = true;
  for (auto& [root, members] : components) {
    // minimax member, lexicographically smallest on ties
    Vertex best = pts[members[0]];
    std::int64_t best_rad = -1;
    for (std::size_t ci : members) {
      std::int64_t rad = 0;
      for (std::size_t mi : members) rad = std::max(rad, dist2(pts[ci], pts[mi]));
      if (best_rad < 0 || rad < best_rad || (rad == best_rad && pts[ci] < best)) {
        best_rad = rad;
        best = pts[ci];
      }
    }
    if (best_rad > R * R) exact = false;
    centers.push_back(best);
  }
  if (exact) {
    for (std::size_t i = 0; exact && i < centers.size(); ++i)
      for (std::size_t j = i + 1; j < centers.size(); ++j)
        if (static_cast<double>(dist2(centers[i], centers[j])) <= link2) {
          exact = false;
          break;
        }
  }
  if (exact) {
    std::sort(centers.begin(), centers.end());
    cover.centers = std::move(centers);
    return cover;
  }

  // greedy fallback: scan points in order, every uncovered point becomes a center
  cover.non_minimal = true;
  for (const auto& p : pts) {
    bool covered = false;
    for (const auto& c : cover.centers)
      if (dist2(p, c) <= R * R) {
        covered = true;
        break;
      }
    if (!covered) cover.centers.push_back(p);
  }
  return cover;
}

// --- point measures ------------------------------------------------------------------

struct PointMeasure {
  struct Atom {
    double x = 0.0, y = 0.0, mass = 0.0;
  };
  std::vector<Atom> atoms;

  double total_mass() const {
    double s = 0.0;
    for (const auto& a : atoms) s += a.mass;
    return s;
  }
};

// r-cluster process: unit atom at e^{-n} z per cover center z.
inline PointMeasure cluster_process(std::span<const Vertex> s, double r, double n) {
  PointMeasure mu;
  if (s.empty()) return mu;
  const ClusterCover cover = minimal_cover(s, r);
  const double scale = std::exp(-n);
  for (const auto& c : cover.centers)
    mu.atoms.push_back({scale * c.x, scale * c.y, 1.0});
  return mu;
}

}  // namespace covertime::lattice
