#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include <protograph/graph.hpp>

#include "oracles.hpp"

using namespace protograph;

TEST_CASE("pairwise_euclidean matches a plain loop") {
  std::mt19937 eng(2);
  const Matrixd pts = oracles::random_matrix(6, 4, eng);
  const auto d = pairwise_euclidean(pts);
  for (Index i = 0; i < 6; ++i) {
    for (Index j = 0; j < 6; ++j) {
      double sq = 0;
      for (Index c = 0; c < 4; ++c) sq += (pts(i, c) - pts(j, c)) * (pts(i, c) - pts(j, c));
      CHECK(d(i, j) == doctest::Approx(std::sqrt(sq)).epsilon(1e-12));
    }
  }
  CHECK(d.diagonal().isZero(0));
}

TEST_CASE("distance validation rejects malformed matrices") {
  Matrixd ok(3, 3);
  ok << 0, 1, 2, 1, 0, 1.5, 2, 1.5, 0;
  CHECK_NOTHROW(validate_distance_matrix(ok));

  SUBCASE("non-square") {
    CHECK_THROWS_AS(validate_distance_matrix(Matrixd::Zero(2, 3)), InputError);
  }
  SUBCASE("nonzero diagonal") {
    Matrixd m = ok;
    m(1, 1) = 0.1;
    CHECK_THROWS_AS(validate_distance_matrix(m), InputError);
  }
  SUBCASE("negative entry") {
    Matrixd m = ok;
    m(0, 1) = m(1, 0) = -1;
    CHECK_THROWS_AS(validate_distance_matrix(m), InputError);
  }
  SUBCASE("asymmetric") {
    Matrixd m = ok;
    m(0, 1) = 3;
    CHECK_THROWS_AS(validate_distance_matrix(m), InputError);
  }
  SUBCASE("non-finite") {
    Matrixd m = ok;
    m(0, 2) = m(2, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(validate_distance_matrix(m), InputError);
  }
}

TEST_CASE("kg_transform hand example") {
  // Distances from node 0: nearest is node 1 at 1.0, node 2 at 3.0.
  Matrixd d(3, 3);
  d << 0, 1, 3,
       1, 0, 2,
       3, 2, 0;
  const auto g = kg_transform(d, 0.5);
  CHECK(g.a(0, 0) == 1.0);
  CHECK(g.a(0, 1) == 1.0);                                  // row nearest neighbor
  CHECK(g.a(0, 2) == doctest::Approx(std::pow(0.5, 2.0)));  // 0.5^(3-1)
  CHECK(g.a(1, 0) == 1.0);
  CHECK(g.a(2, 1) == 1.0);
  CHECK(g.a(2, 0) == doctest::Approx(std::pow(0.5, 1.0)));
  CHECK(g.decay == 0.5);
  CHECK_FALSE(g.symmetrized);
}

TEST_CASE("kg_transform properties on random distances") {
  std::mt19937 eng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 2 + static_cast<Index>(eng() % 19);
    const Matrixd d = oracles::random_distances(n, eng);
    const auto g = kg_transform(d, 0.4);

    for (Index i = 0; i < n; ++i) {
      CHECK(g.a(i, i) == 1.0);
      double row_min_dist = std::numeric_limits<double>::infinity();
      Index nearest = -1;
      for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        CHECK(g.a(i, j) > 0.0);
        CHECK(g.a(i, j) <= 1.0);
        if (d(i, j) < row_min_dist) {
          row_min_dist = d(i, j);
          nearest = j;
        }
      }
      CHECK(g.a(i, nearest) == 1.0);
      // Strictly farther within a row means strictly smaller affinity.
      for (Index j = 0; j < n; ++j) {
        for (Index l = 0; l < n; ++l) {
          if (j == i || l == i || j == l) continue;
          if (d(i, j) < d(i, l)) CHECK(g.a(i, j) > g.a(i, l));
        }
      }
    }
  }
}

TEST_CASE("kg_transform underflow clamps to the smallest normal") {
  Matrixd d(3, 3);
  d << 0, 1, 1e6,
       1, 0, 1e6,
       1e6, 1e6, 0;
  const auto g = kg_transform(d, 0.5);
  CHECK(g.a(0, 2) == std::numeric_limits<double>::min());
  CHECK(g.a(0, 2) > 0.0);
}

TEST_CASE("kg_transform rejects out-of-range decay") {
  Matrixd d(2, 2);
  d << 0, 1, 1, 0;
  CHECK_THROWS_AS(kg_transform(d, 0.0), ConfigError);
  CHECK_THROWS_AS(kg_transform(d, 1.0), ConfigError);
  CHECK_THROWS_AS(kg_transform(d, -0.3), ConfigError);
  CHECK_THROWS_AS(kg_transform(d, 1.7), ConfigError);
  CHECK_NOTHROW(kg_transform(d, 0.999));
}

TEST_CASE("symmetrize adds transposed affinities and resets the diagonal") {
  Matrixd d(3, 3);
  d << 0, 1, 3,
       1, 0, 2,
       3, 2, 0;
  auto g = kg_transform(d, 0.5);
  const Matrixd before = g.a;
  const auto s = symmetrize(g);
  CHECK(s.symmetrized);
  for (Index i = 0; i < 3; ++i) {
    CHECK(s.a(i, i) == 1.0);
    for (Index j = 0; j < 3; ++j) {
      if (i != j) CHECK(s.a(i, j) == before(i, j) + before(j, i));
    }
  }
  // Nodes 0 and 1 are mutually nearest: both directions map to 1, sum 2.
  CHECK(s.a(0, 1) == 2.0);
  CHECK(s.a == s.a.transpose().eval());
}

TEST_CASE("symmetrize twice is rejected") {
  Matrixd d(2, 2);
  d << 0, 1, 1, 0;
  auto g = kg_transform(d, 0.5);
  auto s = symmetrize(g);
  CHECK_THROWS_AS(symmetrize(s), InputError);
}

TEST_CASE("symmetrized max is exactly 2 when the global closest pair is unique") {
  std::mt19937 eng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrixd d = oracles::random_distances(8, eng);
    auto g = kg_transform(d, 0.4);
    const auto s = symmetrize(g);
    CHECK(s.a.maxCoeff() == 2.0);
  }
}

TEST_CASE("matrix_stats matches hand-computed moments") {
  Matrixd m(2, 2);
  m << 9, 1,
       3, 9;
  SUBCASE("off-diagonal only") {
    const GraphStats s = matrix_stats(m);
    CHECK(s.min == 1.0);
    CHECK(s.max == 3.0);
    CHECK(s.avg == doctest::Approx(2.0));
    CHECK(s.stddev == doctest::Approx(1.0));
  }
  SUBCASE("diagonal included") {
    const GraphStats s = matrix_stats(m, true);
    CHECK(s.min == 1.0);
    CHECK(s.max == 9.0);
    CHECK(s.avg == doctest::Approx(5.5));
    // Population variance of {9,1,3,9}.
    CHECK(s.stddev == doctest::Approx(std::sqrt((12.25 + 20.25 + 6.25 + 12.25) / 4.0)));
  }
}

TEST_CASE("matrix_stats of a constant matrix has exactly zero spread") {
  const Matrixd m = Matrixd::Constant(4, 4, 0.7);
  const GraphStats s = matrix_stats(m);
  CHECK(s.stddev == 0.0);
  CHECK(s.min == s.max);
}

TEST_CASE("mantel of identical matrices saturates r and floors p") {
  std::mt19937 eng(5);
  const Matrixd d = oracles::random_distances(10, eng);
  const MantelResult res = mantel(d, d, 99, 7);
  CHECK(res.r == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(res.p == doctest::Approx(1.0 / 100.0).epsilon(1e-12));
  CHECK(res.n_permutations == 99);
}

TEST_CASE("mantel r matches a loop-based Pearson over upper triangles") {
  std::mt19937 eng(6);
  const Matrixd a = oracles::random_distances(9, eng);
  const Matrixd b = oracles::random_distances(9, eng);
  const MantelResult res = mantel(a, b, 9, 0);
  CHECK(res.r == doctest::Approx(oracles::mantel_r_loops(a, b)).epsilon(1e-12));
}

TEST_CASE("mantel is calibrated on independent inputs") {
  // Under the null, p should rarely be small.
  std::mt19937 eng(7);
  int above = 0;
  const int trials = 50;
  for (int t = 0; t < trials; ++t) {
    const Matrixd a = oracles::random_distances(12, eng);
    const Matrixd b = oracles::random_distances(12, eng);
    if (mantel(a, b, 99, static_cast<std::uint64_t>(t)).p > 0.05) ++above;
  }
  CHECK(above >= 40);
}

TEST_CASE("mantel detects a noisy copy") {
  std::mt19937 eng(8);
  const Matrixd a = oracles::random_distances(12, eng);
  const Matrixd b = perturb_distances(a, 0.05, 3);
  const MantelResult res = mantel(a, b, 999, 0);
  CHECK(res.r > 0.9);
  CHECK(res.p == doctest::Approx(0.001).epsilon(1e-12));
}

TEST_CASE("mantel input validation") {
  std::mt19937 eng(9);
  const Matrixd d3 = oracles::random_distances(3, eng);
  SUBCASE("size mismatch") {
    const Matrixd d4 = oracles::random_distances(4, eng);
    CHECK_THROWS_AS(mantel(d3, d4, 9, 0), InputError);
  }
  SUBCASE("too few nodes") {
    Matrixd d2(2, 2);
    d2 << 0, 1, 1, 0;
    CHECK_THROWS_AS(mantel(d2, d2, 9, 0), InputError);
  }
  SUBCASE("zero permutations") { CHECK_THROWS_AS(mantel(d3, d3, 0, 0), InputError); }
  SUBCASE("constant matrix has undefined correlation") {
    Matrixd c = Matrixd::Constant(3, 3, 2.0);
    c.diagonal().setZero();
    CHECK_THROWS_AS(mantel(c, d3, 9, 0), InputError);
  }
}

TEST_CASE("uniform baseline sets every entry to 1/n") {
  const auto g = baseline_graph<double>(5, BaselineKind::Uniform);
  CHECK(g.a.rows() == 5);
  CHECK((g.a.array() == 0.2).all());
}

TEST_CASE("random baseline is deterministic in (0,1) and seed-sensitive") {
  const auto g1 = baseline_graph<double>(6, BaselineKind::Random, 11);
  const auto g2 = baseline_graph<double>(6, BaselineKind::Random, 11);
  const auto g3 = baseline_graph<double>(6, BaselineKind::Random, 12);
  CHECK(g1.a == g2.a);
  CHECK(g1.a != g3.a);
  CHECK((g1.a.array() >= 0).all());
  CHECK((g1.a.array() < 1).all());
}

TEST_CASE("perturb_distances keeps symmetry, zero diagonal, and nonnegativity") {
  std::mt19937 eng(10);
  const Matrixd d = oracles::random_distances(7, eng);
  const auto noisy = perturb_distances(d, 5.0, 42);
  CHECK_NOTHROW(validate_distance_matrix(noisy));
  CHECK(noisy.diagonal().isZero(0));
  CHECK(noisy != d);
  // Zero noise is the identity.
  const auto same = perturb_distances(d, 0.0, 42);
  CHECK(same == d);
}
