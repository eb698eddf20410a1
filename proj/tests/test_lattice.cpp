#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "covertime/lattice.hpp"

namespace lat = covertime::lattice;
using lat::Vertex;

namespace {

// Independent oracle: enumerate every x in a box and test d(x/N, D^c) > 1/N
// directly against the shape's distance function.
std::vector<Vertex> brute_force_domain(const lat::DomainShape& shape, std::int64_t N,
                                       std::int64_t box) {
  std::vector<Vertex> out;
  for (std::int64_t x = -box; x <= box; ++x)
    for (std::int64_t y = -box; y <= box; ++y) {
      const double d = shape.distance_to_complement(static_cast<double>(x) / N,
                                                    static_cast<double>(y) / N);
      if (d > 1.0 / static_cast<double>(N))
        out.push_back({static_cast<std::int32_t>(x), static_cast<std::int32_t>(y)});
    }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("discretize_domain matches brute-force enumeration on the unit square") {
  const auto d = lat::discretize_domain(lat::DomainShape::unit_square(), std::log(8.0));
  REQUIRE(d.N == 8);
  const auto oracle = brute_force_domain(lat::DomainShape::unit_square(), 8, 9);
  REQUIRE(d.vertices == oracle);
  // frozen oracle output: the strict margin removes two layers per side
  REQUIRE(d.vertices.size() == 25);
  REQUIRE(d.vertices.front() == Vertex{2, 2});
  REQUIRE(d.vertices.back() == Vertex{6, 6});
}

TEST_CASE("discretize_domain empty interior is an explicit error") {
  REQUIRE_THROWS_AS(lat::discretize_domain(lat::DomainShape::unit_square(), 0.0),
                    std::runtime_error);
}

TEST_CASE("discretize_domain disc count equals exhaustive predicate scan") {
  const auto d = lat::discretize_domain(lat::DomainShape::unit_disc(), std::log(16.0));
  REQUIRE(d.N == 16);
  const auto oracle = brute_force_domain(lat::DomainShape::unit_disc(), 16, 16);
  REQUIRE(d.vertices == oracle);
  // disc predicate reduces to ||x|| < N - 1
  std::size_t direct = 0;
  for (int x = -16; x <= 16; ++x)
    for (int y = -16; y <= 16; ++y)
      if (x * x + y * y < 225) ++direct;
  REQUIRE(d.vertices.size() == direct);
}

TEST_CASE("discretize_domain annulus and polygon agree with the oracle") {
  const auto ann = lat::DomainShape::annulus(0.4);
  const auto da = lat::discretize_domain(ann, std::log(32.0));
  REQUIRE(da.vertices == brute_force_domain(ann, 32, 33));

  const auto poly = lat::DomainShape::polygon({{0.0, 0.0}, {1.0, 0.0}, {0.5, 1.0}});
  const auto dp = lat::discretize_domain(poly, std::log(24.0));
  REQUIRE(dp.vertices == brute_force_domain(poly, 24, 25));
  REQUIRE_FALSE(dp.vertices.empty());
}

TEST_CASE("vertex count is nondecreasing in n and fills the square") {
  const auto shape = lat::DomainShape::unit_square();
  std::size_t prev = 0;
  for (double n = 2.2; n < 4.4; n += 0.2) {
    const auto d = lat::discretize_domain(shape, n);
    REQUIRE(d.vertices.size() >= prev);
    prev = d.vertices.size();
  }
  const auto d64 = lat::discretize_domain(shape, std::log(64.0));
  const double ratio = static_cast<double>(d64.size()) / (64.0 * 64.0);
  REQUIRE(ratio >= 0.9);
  REQUIRE(ratio <= 1.0);
  const auto d128 = lat::discretize_domain(shape, std::log(128.0));
  const double ratio128 = static_cast<double>(d128.size()) / (128.0 * 128.0);
  REQUIRE(ratio128 >= 0.9);
  REQUIRE(ratio128 <= 1.0);
}

TEST_CASE("wire_boundary degree accounting") {
  SECTION("single interior vertex") {
    const auto g = lat::WiredGraph::from_vertices(std::vector<Vertex>{{0, 0}});
    REQUIRE(g.interior_count() == 1);
    REQUIRE(g.boundary_multiplicity(0) == 4);
    REQUIRE(g.boundary_degree() == 4);
    REQUIRE(g.degree(0) == 4);
  }
  SECTION("two-vertex corridor") {
    const auto g = lat::corridor(2);
    REQUIRE(g.interior_count() == 2);
    REQUIRE(g.boundary_multiplicity(0) == 3);
    REQUIRE(g.boundary_multiplicity(1) == 3);
    REQUIRE(g.boundary_degree() == 6);
    REQUIRE(g.degree(0) == 4);
  }
  SECTION("7x7 block has 28 border edges") {
    const auto g = lat::square_block(7);
    REQUIRE(g.interior_count() == 49);
    REQUIRE(g.boundary_degree() == 28);
    for (std::uint32_t i = 0; i < g.interior_count(); ++i) REQUIRE(g.degree(i) == 4);
  }
  SECTION("degree conservation: interior degrees + boundary degree = 2 x edges") {
    const auto d = lat::discretize_domain(lat::DomainShape::unit_disc(), std::log(12.0));
    const auto g = lat::wire_boundary(d);
    std::size_t total = g.boundary_degree();
    for (std::uint32_t i = 0; i < g.interior_count(); ++i) total += g.degree(i);
    REQUIRE(total == 2 * g.edge_count());
  }
}

TEST_CASE("geometry_query log-ball and log-box") {
  SECTION("r = 0 ball is the 5-point plus") {
    const auto b = lat::geometry_query({0, 0}, 0.0, lat::BallKind::log_ball);
    REQUIRE(b.size() == 5);
  }
  SECTION("r = log 2 box has 4 vertices") {
    const auto q = lat::geometry_query({0, 0}, std::log(2.0), lat::BallKind::log_box);
    REQUIRE(q.size() == 4);
  }
  SECTION("boundary inclusion: ||(3,4)|| = 5 <= floor(e^{log 5})") {
    const auto b = lat::geometry_query({3, 4}, std::log(5.0), lat::BallKind::log_ball);
    REQUIRE(std::find(b.begin(), b.end(), Vertex{0, 0}) != b.end());
  }
  SECTION("ball size matches direct counting") {
    const auto b = lat::geometry_query({2, -1}, 1.7, lat::BallKind::log_ball);
    const std::int64_t R = lat::floor_exp(1.7);
    std::size_t direct = 0;
    for (std::int64_t dx = -R - 1; dx <= R + 1; ++dx)
      for (std::int64_t dy = -R - 1; dy <= R + 1; ++dy)
        if (dx * dx + dy * dy <= R * R) ++direct;
    REQUIRE(b.size() == direct);
  }
}

TEST_CASE("bulk_vertices") {
  SECTION("bulk of the n = log 8 square keeps vertices two steps inside") {
    const auto d = lat::discretize_domain(lat::DomainShape::unit_square(), std::log(8.0));
    const double margin = std::exp(d.n) / (d.n * d.n);  // about 1.85
    const auto bulk = lat::bulk_vertices(d);
    // oracle: distance to the complement of the vertex set must exceed margin
    std::set<std::pair<int, int>> interior;
    for (const auto& v : d.vertices) interior.insert({v.x, v.y});
    std::vector<Vertex> expected;
    for (const auto& v : d.vertices) {
      bool ok = true;
      const int r = static_cast<int>(margin) + 1;
      for (int dx = -r; ok && dx <= r; ++dx)
        for (int dy = -r; dy <= r; ++dy) {
          if (dx * dx + dy * dy > margin * margin) continue;
          if (!interior.count({v.x + dx, v.y + dy})) {
            ok = false;
            break;
          }
        }
      if (ok) expected.push_back(v);
    }
    REQUIRE(bulk == expected);
    REQUIRE_FALSE(bulk.empty());
    // every bulk vertex is interior with positive margin
    for (const auto& v : bulk) REQUIRE(interior.count({v.x, v.y}) == 1);
  }
  SECTION("tiny domain where the margin exceeds the in-radius is empty") {
    // n = log 5: margin e^n/n^2 = 5/2.59 ~ 1.93, interior is a single ring
    const auto d = lat::discretize_domain(lat::DomainShape::unit_square(), std::log(5.0));
    REQUIRE(d.size() == 4);  // {2,3}^2
    REQUIRE(lat::bulk_vertices(d).empty());
  }
}

TEST_CASE("is_clustered") {
  const double r = 1.0, R = 3.0;
  SECTION("singleton") {
    std::vector<Vertex> s = {{5, 5}};
    REQUIRE(lat::is_clustered(s, r, R));
  }
  SECTION("one pair inside the gap") {
    const auto mid = static_cast<std::int32_t>(std::floor(std::exp((r + R) / 2.0)));
    std::vector<Vertex> s = {{0, 0}, {0, mid}};
    REQUIRE_FALSE(lat::is_clustered(s, r, R));
  }
  SECTION("two tight clumps separated beyond e^R") {
    const auto far = static_cast<std::int32_t>(std::ceil(std::exp(R))) + 2;
    std::vector<Vertex> s = {{0, 0}, {1, 0}, {far, 0}, {far + 1, 0}};
    REQUIRE(lat::is_clustered(s, r, R));
    // pairwise oracle
    bool ok = true;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        const double logd = 0.5 * std::log(static_cast<double>(lat::dist2(s[i], s[j])));
        if (logd > r && logd < R) ok = false;
      }
    REQUIRE(ok);
  }
}

TEST_CASE("minimal_cover") {
  const double r = 1.0;  // ball radius floor(e) = 2
  SECTION("single clump gets one center inside it") {
    std::vector<Vertex> s = {{0, 0}, {1, 0}, {0, 1}};
    const auto cover = lat::minimal_cover(s, r);
    REQUIRE(cover.centers.size() == 1);
    REQUIRE_FALSE(cover.non_minimal);
    REQUIRE(std::find(s.begin(), s.end(), cover.centers[0]) != s.end());
    REQUIRE(cover.covers());
  }
  SECTION("three far clumps give three centers (union-find oracle)") {
    std::vector<Vertex> s;
    const std::int32_t sep = 40;  // well beyond e^{r + log 4}
    for (std::int32_t c = 0; c < 3; ++c) {
      s.push_back({c * sep, 0});
      s.push_back({c * sep + 1, 0});
    }
    const auto cover = lat::minimal_cover(s, r);
    REQUIRE(cover.centers.size() == 3);
    REQUIRE_FALSE(cover.non_minimal);
    REQUIRE(cover.covers());
    // centers pairwise farther than e^r
    for (std::size_t i = 0; i < cover.centers.size(); ++i)
      for (std::size_t j = i + 1; j < cover.centers.size(); ++j)
        REQUIRE(static_cast<double>(lat::dist2(cover.centers[i], cover.centers[j])) >
                std::exp(2.0 * r));
  }
  SECTION("chain with gaps at e^r still gets covered") {
    const auto step = static_cast<std::int32_t>(std::floor(std::exp(r)));
    std::vector<Vertex> s;
    for (int i = 0; i < 6; ++i) s.push_back({i * step, 0});
    const auto cover = lat::minimal_cover(s, r);
    REQUIRE(cover.centers.size() <= s.size());
    REQUIRE(cover.covers());
  }
  SECTION("empty input rejected") {
    REQUIRE_THROWS_AS(lat::minimal_cover(std::vector<Vertex>{}, r), std::invalid_argument);
  }
}

TEST_CASE("cluster_process") {
  const double n = 3.0, r = 1.0;
  SECTION("single clump gives one unit atom at e^{-n} x") {
    std::vector<Vertex> s = {{7, 7}};
    const auto mu = lat::cluster_process(s, r, n);
    REQUIRE(mu.atoms.size() == 1);
    REQUIRE_THAT(mu.total_mass(), Catch::Matchers::WithinAbs(1.0, 1e-15));
    REQUIRE_THAT(mu.atoms[0].x, Catch::Matchers::WithinRel(std::exp(-n) * 7.0, 1e-12));
  }
  SECTION("empty set gives the zero measure") {
    const auto mu = lat::cluster_process(std::vector<Vertex>{}, r, n);
    REQUIRE(mu.atoms.empty());
    REQUIRE(mu.total_mass() == 0.0);
  }
  SECTION("three separated clumps carry total mass 3 (minimal_cover oracle)") {
    std::vector<Vertex> s = {{0, 0}, {50, 0}, {0, 50}};
    const auto mu = lat::cluster_process(s, r, n);
    const auto cover = lat::minimal_cover(s, r);
    REQUIRE(mu.atoms.size() == cover.centers.size());
    REQUIRE_THAT(mu.total_mass(), Catch::Matchers::WithinAbs(3.0, 1e-15));
  }
}
