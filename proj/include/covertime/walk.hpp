#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "covertime/lattice.hpp"
#include "covertime/rng.hpp"

namespace covertime::walk {

using lattice::Vertex;
using lattice::WiredGraph;

struct WalkConfig {
  const WiredGraph* graph = nullptr;
  double rate = 1.0;  // per-edge jump rate
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;

  void validate() const {
    if (!graph) throw std::invalid_argument("WalkConfig: graph required");
    if (!(rate > 0.0)) throw std::invalid_argument("WalkConfig: rate must be > 0");
  }
};

struct LocalTimeField {
  std::vector<double> local;  // one entry per vertex, boundary last
  double real_time = 0.0;

  double boundary_time() const { return local.back(); }
  double interior_sum() const {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < local.size(); ++i) s += local[i];
    return s;
  }
  double total() const { return interior_sum() + local.back(); }
};

struct EventRecord {
  std::uint32_t vertex;  // occupied vertex
  double holding;        // time spent there before the jump
};

struct CoverResult {
  double cover_real_time = 0.0;      // arrival instant at the last first-visited vertex
  double cover_boundary_time = 0.0;  // local time at the boundary at that instant
  std::uint32_t last_index = 0;
  Vertex last_vertex;
  LocalTimeField field;              // state at boundary-time = cover boundary-time
};

struct ExcursionResult {
  std::vector<std::uint32_t> visited;  // interior vertices first visited this excursion
  double interior_time = 0.0;
  double boundary_holding = 0.0;  // sojourn at the boundary that launched it
  bool hit(std::uint32_t v) const {
    return std::find(visited.begin(), visited.end(), v) != visited.end();
  }
};

// Event-driven walk. Each step draws one exponential holding time at rate
// (edge rate * degree) and one uniform slot, in that order; any independent
// re-implementation consuming the stream the same way reproduces the
// trajectory bit for bit.
class Walker {
 public:
  explicit Walker(const WalkConfig& cfg, bool retain_log = false)
      : cfg_(cfg), rng_(cfg.seed, RngUse::walk, cfg.replica), retain_log_(retain_log) {
    cfg_.validate();
    const auto total = cfg_.graph->interior_count() + 1;
    field_.local.assign(total, 0.0);
    position_ = cfg_.graph->boundary_index();
    first_visit_time_.assign(total, -1.0);
    first_visit_time_[position_] = 0.0;
    unvisited_ = cfg_.graph->interior_count();
  }

  const LocalTimeField& field() const { return field_; }
  std::uint32_t position() const { return position_; }
  std::uint32_t unvisited_count() const { return unvisited_; }
  const std::vector<EventRecord>& event_log() const { return log_; }
  const std::vector<double>& first_visit_times() const { return first_visit_time_; }

  // One jump; returns the landing vertex.
  std::uint32_t step() {
    const auto deg = cfg_.graph->degree(position_);
    const double hold = rng_.exponential(cfg_.rate * deg);
    occupy(hold);
    const auto slot = rng_.uniform_below(deg);
    position_ = cfg_.graph->slots(position_)[slot];
    arrive();
    return position_;
  }

  // One boundary -> interior -> boundary excursion; walk must sit at the boundary.
  ExcursionResult run_excursion() {
    const auto bd = cfg_.graph->boundary_index();
    if (position_ != bd) throw std::logic_error("run_excursion: walk not at the boundary");
    ExcursionResult ex;
    const double t0 = field_.real_time;
    const double bd_before = field_.local[bd];
    step();  // leaves the boundary
    ex.boundary_holding = field_.local[bd] - bd_before;
    while (position_ != bd) step();
    ex.interior_time = field_.real_time - t0 - ex.boundary_holding;
    for (std::uint32_t v = 0; v < cfg_.graph->interior_count(); ++v)
      if (first_visit_time_[v] > t0) ex.visited.push_back(v);
    return ex;
  }

  // Run until local time at the boundary first exceeds t (mid-sojourn stop).
  void run_to_boundary_time(double t) {
    const auto bd = cfg_.graph->boundary_index();
    if (t < 0.0) throw std::invalid_argument("run_to_boundary_time: t must be >= 0");
    while (true) {
      if (position_ == bd) {
        const double budget = t - field_.local[bd];
        const auto deg = cfg_.graph->degree(bd);
        const double hold = rng_.exponential(cfg_.rate * deg);
        if (hold >= budget) {  // the crossing happens during this sojourn
          occupy(budget);
          return;
        }
        occupy(hold);
        const auto slot = rng_.uniform_below(deg);
        position_ = cfg_.graph->slots(bd)[slot];
        arrive();
      } else {
        step();
      }
    }
  }

  // Run until every interior vertex has been visited; field is frozen at
  // boundary-time equal to the cover boundary-time.
  CoverResult run_to_cover() {
    const auto bd = cfg_.graph->boundary_index();
    CoverResult res;
    while (unvisited_ > 0) step();
    res.cover_real_time = field_.real_time;
    res.cover_boundary_time = field_.local[bd];
    res.last_index = position_;
    res.last_vertex = cfg_.graph->coord(position_);
    while (position_ != bd) step();  // the generalized inverse lands at the next boundary hit
    res.field = field_;
    return res;
  }

  // Run until every vertex of the target set has been visited; returns the
  // boundary local time at the covering instant.
  double run_to_cover_of(std::span<const std::uint32_t> targets, std::uint32_t* last = nullptr) {
    std::vector<std::uint8_t> want(cfg_.graph->interior_count() + 1, 0);
    std::size_t remaining = 0;
    for (auto v : targets)
      if (!want[v]) {
        want[v] = 1;
        if (first_visit_time_[v] < 0.0) ++remaining;
      }
    while (remaining > 0) {
      const auto v = step();
      if (want[v] && first_visit_time_[v] == field_.real_time) --remaining;
    }
    if (last) *last = position_;
    return field_.local[cfg_.graph->boundary_index()];
  }

 private:
  void occupy(double hold) {
    field_.local[position_] += hold;
    field_.real_time += hold;
    if (retain_log_) log_.push_back({position_, hold});
  }

  void arrive() {
    if (first_visit_time_[position_] < 0.0) {
      first_visit_time_[position_] = field_.real_time;
      if (position_ != cfg_.graph->boundary_index()) --unvisited_;
    }
  }

  WalkConfig cfg_;
  RngStream rng_;
  bool retain_log_;
  LocalTimeField field_;
  std::uint32_t position_ = 0;
  std::uint32_t unvisited_ = 0;
  std::vector<double> first_visit_time_;
  std::vector<EventRecord> log_;
};

inline LocalTimeField run_to_boundary_time(const WalkConfig& cfg, double t) {
  Walker w(cfg);
  w.run_to_boundary_time(t);
  return w.field();
}

inline CoverResult run_to_cover(const WalkConfig& cfg) {
  Walker w(cfg);
  return w.run_to_cover();
}

// {x in bulk : L(x) <= u}
inline std::vector<std::uint32_t> low_local_time_set(const LocalTimeField& ltf, double u,
                                                     std::span<const std::uint32_t> bulk) {
  if (u < 0.0) throw std::invalid_argument("low_local_time_set: u must be >= 0");
  std::vector<std::uint32_t> out;
  for (auto i : bulk)
    if (ltf.local[i] <= u) out.push_back(i);
  return out;
}

// --- downcrossing analysis ------------------------------------------------------

struct DowncrossingRecord {
  Vertex center;
  double inner_log = 0.0;  // k
  double outer_log = 0.0;  // l
  std::uint64_t count = 0;             // N_t(x;k,l)
  double normalized = 0.0;             // (l-k) N
  std::vector<Vertex> entries;         // entry points, centered at x
  std::vector<Vertex> exits;           // exit points, centered at x
};

namespace detail {

struct AnnulusScanner {
  std::int64_t r_in2 = 0;   // squared inner radius
  std::int64_t r_out2 = 0;  // squared outer radius
  bool armed = true;        // true while the walk has been outside B(x;l) since the last entry
  std::vector<Vertex> entries, exits;
  std::vector<double> entry_real_times;

  // Feed an arrival at squared distance d2 from the center (the boundary
  // vertex counts as outside both balls). Entries and exits alternate.
  void arrive(std::int64_t d2, Vertex centered, double real_time) {
    if (armed) {
      if (d2 <= r_in2) {
        armed = false;
        entries.push_back(centered);
        entry_real_times.push_back(real_time);
      }
    } else if (d2 > r_out2) {
      armed = true;
      exits.push_back(centered);
    }
  }
};

}  // namespace detail

// Replays an event log and counts (x;k,l)-downcrossings up to boundary time t.
// Entry points land on the inner vertex boundary of B(x;k), exit points on the
// outer boundary of B(x;l). By default the closure of B(x;l) must lie inside
// the domain; strict_geometry = false lifts that for thin domains (corridors),
// where a jump to the contracted boundary counts as an exit and is recorded
// with the sentinel offset (INT32_MIN, INT32_MIN).
inline DowncrossingRecord downcrossing_counts(const WiredGraph& g,
                                              std::span<const EventRecord> log, Vertex x,
                                              double k, double l, double t,
                                              bool strict_geometry = true) {
  if (!(k < l)) throw std::invalid_argument("downcrossing_counts: need k < l");
  const std::int64_t r_in = lattice::floor_exp(k);
  const std::int64_t r_out = lattice::floor_exp(l);
  if (strict_geometry) {
    for (const auto& v : lattice::geometry_query(x, l, lattice::BallKind::log_ball)) {
      for (const Vertex nb : {v, Vertex{v.x + 1, v.y}, Vertex{v.x - 1, v.y},
                              Vertex{v.x, v.y + 1}, Vertex{v.x, v.y - 1}})
        if (g.index_of(nb) == WiredGraph::npos)
          throw std::invalid_argument("downcrossing_counts: closure of B(x;l) leaves the domain");
    }
  }

  detail::AnnulusScanner scan;
  scan.r_in2 = r_in * r_in;
  scan.r_out2 = r_out * r_out;

  const auto bd = g.boundary_index();
  const std::int64_t far = 4 * (r_out + 2) * (r_out + 2);
  double real = 0.0;
  double bd_local = 0.0;
  double stop_real = std::numeric_limits<double>::infinity();
  constexpr Vertex kBoundarySentinel{INT32_MIN, INT32_MIN};
  for (const auto& ev : log) {
    Vertex centered = kBoundarySentinel;
    std::int64_t d2 = far;
    if (ev.vertex != bd) {
      const Vertex c = g.coord(ev.vertex);
      centered = {c.x - x.x, c.y - x.y};
      d2 = static_cast<std::int64_t>(centered.x) * centered.x +
           static_cast<std::int64_t>(centered.y) * centered.y;
    }
    scan.arrive(d2, centered, real);
    real += ev.holding;
    if (ev.vertex == bd) {
      bd_local += ev.holding;
      if (bd_local >= t && stop_real == std::numeric_limits<double>::infinity())
        stop_real = real - (bd_local - t);  // the instant boundary local time crosses t
    }
  }
  if (stop_real == std::numeric_limits<double>::infinity())
    throw std::invalid_argument("downcrossing_counts: log ends before boundary time t");

  DowncrossingRecord rec;
  rec.center = x;
  rec.inner_log = k;
  rec.outer_log = l;
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < scan.entry_real_times.size(); ++i)
    if (scan.entry_real_times[i] <= stop_real) n = i + 1;
  if (scan.exits.size() < n)
    throw std::invalid_argument("downcrossing_counts: log ends inside an excursion");
  rec.count = n;
  rec.normalized = (l - k) * static_cast<double>(n);
  rec.entries.assign(scan.entries.begin(), scan.entries.begin() + n);
  rec.exits.assign(scan.exits.begin(), scan.exits.begin() + n);
  return rec;
}

struct AnnuliRecords {
  double k = 0.0, gamma = 0.0;
  std::vector<DowncrossingRecord> per_annulus;  // i = 1..T
  // Z_t[x;i] first component: sqrt(k^gamma * N_t[x;i])
  std::vector<double> z_sqrt_normalized;
};

// Concentric annuli B-[x;i] = B(x; k+(i-1)k^g), B+[x;i] = B(x; k+i k^g - 4 e^{-k^g}).
// The nesting closure(B+[x;i]) within B-[x;i+1] is validated and reported by index.
inline AnnuliRecords annuli_records(const WiredGraph& g, std::span<const EventRecord> log,
                                    Vertex x, double k, double gamma, int T, double t) {
  if (T < 1) throw std::invalid_argument("annuli_records: T >= 1 required");
  const double kg = std::pow(k, gamma);
  const double eps = 4.0 * std::exp(-kg);
  // validate the whole ladder before any counting, naming the failing index
  for (int i = 1; i <= T; ++i) {
    const double lo = k + (i - 1) * kg;
    const double hi = k + i * kg - eps;
    if (!(hi > lo))
      throw std::invalid_argument("annuli_records: nesting fails at i=" + std::to_string(i) +
                                  " (k too small for gamma: k^gamma <= 4 e^{-k^gamma})");
    if (i < T) {
      const std::int64_t r_plus = lattice::floor_exp(hi);
      const std::int64_t r_minus_next = lattice::floor_exp(k + i * kg);
      if (r_plus + 1 > r_minus_next)
        throw std::invalid_argument("annuli_records: nesting fails at i=" + std::to_string(i));
    }
  }
  AnnuliRecords out;
  out.k = k;
  out.gamma = gamma;
  for (int i = 1; i <= T; ++i) {
    const double lo = k + (i - 1) * kg;
    const double hi = k + i * kg - eps;
    out.per_annulus.push_back(downcrossing_counts(g, log, x, lo, hi, t));
    out.per_annulus.back().normalized = kg * static_cast<double>(out.per_annulus.back().count);
    out.z_sqrt_normalized.push_back(std::sqrt(out.per_annulus.back().normalized));
  }
  return out;
}

// --- phase A observables -----------------------------------------------------------

struct PhaseObservables {
  double t_phase = 0.0;            // boundary time t_n^A
  double unvisited_bulk_scaled = 0.0;  // |W_n(0)| / sqrt(n)
  double cluster_count_scaled = 0.0;   // ||Xi|| / sqrt(n)
  lattice::PointMeasure cluster_measure;
  bool clustered = false;          // (r_n, n - r_n)-clusteredness of the unvisited bulk set
  // vertices with a partner at log-distance inside the gap; removing them
  // always leaves a clustered set, and their scaled count is the quantity the
  // limit theorem sends to zero
  std::size_t gap_violating = 0;
  double gap_violating_scaled = 0.0;
  double time_fluctuation = 0.0;   // (T_{n,t}/|D_n| - t) / (2 sqrt(t))
  double elapsed_real = 0.0;
  std::size_t unvisited_bulk = 0;
};

// Runs the walk to boundary time t_n^A and reports the Phase-A statistics of
// the unvisited bulk set at clustering scale r_n = n^{1/2 - eta0}. The phase
// schedule is stated in the retuned (rate 1/(2pi)) parametrization; boundary
// times scale inversely with the edge rate, so other rates are rescaled here.
inline PhaseObservables phase_observables(const WalkConfig& cfg,
                                          std::span<const std::uint32_t> bulk, double n,
                                          double eta0 = 0.1) {
  if (n < 2.0) throw std::invalid_argument("phase_observables: n >= 2 required");
  const double sqrt_tA = std::sqrt(2.0) * n - 3.0 / (4.0 * std::sqrt(2.0)) * std::log(n);
  const double tA = sqrt_tA * sqrt_tA * (1.0 / (2.0 * M_PI)) / cfg.rate;
  Walker w(cfg);
  w.run_to_boundary_time(tA);
  const auto& ltf = w.field();

  PhaseObservables obs;
  obs.t_phase = tA;
  obs.elapsed_real = ltf.real_time;
  const auto unvisited = low_local_time_set(ltf, 0.0, bulk);
  obs.unvisited_bulk = unvisited.size();
  obs.unvisited_bulk_scaled = static_cast<double>(unvisited.size()) / std::sqrt(n);

  const double r_n = std::pow(n, 0.5 - eta0);
  std::vector<Vertex> pts;
  pts.reserve(unvisited.size());
  for (auto i : unvisited) pts.push_back(cfg.graph->coord(i));
  if (!pts.empty()) {
    obs.cluster_measure = lattice::cluster_process(pts, r_n, n);
    // the gap (r_n, n - r_n) only exists once n^{0.5-eta0} < n/2
    if (r_n < n - r_n) {
      obs.clustered = lattice::is_clustered(pts, r_n, n - r_n);
      const double lo2 = std::exp(2.0 * r_n), hi2 = std::exp(2.0 * (n - r_n));
      std::vector<bool> violating(pts.size(), false);
      for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
          const auto d2 = static_cast<double>(lattice::dist2(pts[i], pts[j]));
          if (d2 > lo2 && d2 < hi2) violating[i] = violating[j] = true;
        }
      for (bool v : violating) obs.gap_violating += v ? 1 : 0;
    } else {
      obs.clustered = pts.size() <= 1;
    }
  } else {
    obs.clustered = true;
  }
  obs.gap_violating_scaled = static_cast<double>(obs.gap_violating) / std::sqrt(n);
  obs.cluster_count_scaled = obs.cluster_measure.total_mass() / std::sqrt(n);

  const double m = static_cast<double>(cfg.graph->interior_count());
  obs.time_fluctuation = (ltf.real_time / m - tA) / (2.0 * std::sqrt(tA));
  return obs;
}

// --- event-log serialization ---------------------------------------------------------
// Byte layout: little-endian records of (vertex id: u32, holding time: f64),
// 12 bytes per record, no header.

inline std::vector<std::uint8_t> serialize_event_log(std::span<const EventRecord> log) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(log.size() * 12);
  for (const auto& ev : log) {
    for (int b = 0; b < 4; ++b)
      bytes.push_back(static_cast<std::uint8_t>((ev.vertex >> (8 * b)) & 0xff));
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(ev.holding));
    std::memcpy(&bits, &ev.holding, 8);
    for (int b = 0; b < 8; ++b)
      bytes.push_back(static_cast<std::uint8_t>((bits >> (8 * b)) & 0xff));
  }
  return bytes;
}

inline std::vector<EventRecord> deserialize_event_log(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 12 != 0)
    throw std::invalid_argument("deserialize_event_log: byte count not a multiple of 12");
  std::vector<EventRecord> log(bytes.size() / 12);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto* p = bytes.data() + i * 12;
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(p[b]) << (8 * b);
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[4 + b]) << (8 * b);
    double h;
    std::memcpy(&h, &bits, 8);
    log[i] = {v, h};
  }
  return log;
}

inline std::uint64_t event_log_hash(std::span<const EventRecord> log) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto b : serialize_event_log(log)) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace covertime::walk
