#include "geolabel/spatial.hpp"
#include "geolabel/synth.hpp"

#include <gtest/gtest.h>

using namespace geolabel;

namespace {

std::vector<NeighborHit> brute_radius(std::span<const Point3> pts, const Point3& c, double r) {
  std::vector<NeighborHit> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d2 = (pts[i] - c).squaredNorm();
    if (d2 <= r * r) out.push_back({static_cast<std::uint32_t>(i), std::sqrt(d2)});
  }
  return out;
}

std::vector<std::uint32_t> ids(std::vector<NeighborHit> h) {
  std::vector<std::uint32_t> v;
  for (const auto& x : h) v.push_back(x.id);
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(SpatialIndex, Singleton) {
  const std::vector<Point3> pts{{1, 2, 3}};
  const auto idx = build_index(pts);
  const auto nn = idx.nearest_neighbor({-50, 7, 100});
  ASSERT_TRUE(nn);
  EXPECT_EQ(nn->id, 0u);
}

TEST(SpatialIndex, EmptyIndex) {
  const SpatialIndex idx;
  EXPECT_FALSE(idx.nearest_neighbor({0, 0, 0}));
  EXPECT_TRUE(idx.query_radius({0, 0, 0}, 1.0).empty());
}

TEST(SpatialIndex, DuplicatesKept) {
  const std::vector<Point3> pts{{1, 1, 1}, {1, 1, 1}};
  EXPECT_EQ(ids(build_index(pts).query_radius({1, 1, 1}, 0.1)), (std::vector<std::uint32_t>{0, 1}));
}

TEST(SpatialIndex, SelfHitAtZeroDistance) {
  const std::vector<Point3> pts{{0, 0, 0}, {3, 0, 0}};
  const auto hits = build_index(pts).query_radius({3, 0, 0}, 1e-3);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].id, 1u);
  EXPECT_EQ(hits[0].distance, 0.0);
}

TEST(SpatialIndex, GridQueries) {
  std::vector<Point3> pts;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j)
      for (int k = 0; k < 7; ++k) pts.emplace_back(0.5 * i, 0.5 * j, 0.5 * k);
  const auto idx = build_index(pts);
  const Point3 node(1.5, 1.5, 1.5);
  EXPECT_EQ(idx.query_radius(node, 0.2).size(), 1u);
  EXPECT_EQ(idx.query_radius(node, 0.6).size(), 7u);
}

TEST(SpatialIndex, NearestHandArithmetic) {
  const std::vector<Point3> one{{0, 0, 0}};
  auto nn = build_index(one).nearest_neighbor({0.1, 0, 0});
  EXPECT_EQ(nn->id, 0u);
  EXPECT_DOUBLE_EQ(nn->distance, 0.1);

  const std::vector<Point3> two{{0, 0, 0}, {1, 0, 0}};
  const auto idx = build_index(two);
  nn = idx.nearest_neighbor({0.4, 0, 0});
  EXPECT_EQ(nn->id, 0u);
  EXPECT_DOUBLE_EQ(nn->distance, 0.4);
  EXPECT_EQ(idx.nearest_neighbor({0.5, 0, 0})->id, 0u);
  const std::vector<Point3> rev{{1, 0, 0}, {0, 0, 0}};
  EXPECT_EQ(build_index(rev).nearest_neighbor({0.5, 0, 0})->id, 0u);
}

TEST(SpatialIndex, NearestWithinRespectsRadius) {
  const std::vector<Point3> pts{{0, 0, 0}};
  const auto idx = build_index(pts);
  EXPECT_FALSE(idx.nearest_within({0.31, 0, 0}, 0.3));
  EXPECT_TRUE(idx.nearest_within({0.3, 0, 0}, 0.3));
}

TEST(SpatialIndex, RejectsNonPositiveRadius) {
  const std::vector<Point3> pts{{0, 0, 0}};
  EXPECT_THROW(build_index(pts).query_radius({0, 0, 0}, 0.0), ParameterError);
}

TEST(SpatialIndex, MatchesBruteForceUniform1000) {
  Rng rng(42);
  std::vector<Point3> pts;
  for (int i = 0; i < 1000; ++i) pts.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
  const auto idx = build_index(pts);
  for (int q = 0; q < 200; ++q) {
    const Point3 c(rng.uniform(), rng.uniform(), rng.uniform());
    EXPECT_EQ(ids(idx.query_radius(c, 0.2)), ids(brute_radius(pts, c, 0.2)));
  }
}

TEST(SpatialIndex, PropertyRandomSetsMatchBruteForce) {
  for (int trial = 0; trial < 120; ++trial) {
    Rng rng(1000 + trial);
    const int n = 1 + static_cast<int>(rng.below(2000));
    std::vector<Point3> pts;
    for (int i = 0; i < n; ++i) {
      // Clustered and duplicated coordinates stress tie handling.
      if (i > 0 && rng.uniform() < 0.05)
        pts.push_back(pts[rng.below(pts.size())]);
      else
        pts.emplace_back(std::round(rng.uniform(-5, 5) * 4) / 4, rng.uniform(-5, 5), rng.uniform(-1, 1));
    }
    const auto idx = build_index(pts, 1 + rng.below(32));
    for (int q = 0; q < 10; ++q) {
      const Point3 c(rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(-2, 2));
      const double r = rng.uniform(0.05, 3.0);
      auto got = idx.query_radius(c, r);
      auto want = brute_radius(pts, c, r);
      std::sort(got.begin(), got.end(), [](auto& a, auto& b) { return a.id < b.id; });
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t k = 0; k < got.size(); ++k) {
        EXPECT_EQ(got[k].id, want[k].id);
        EXPECT_DOUBLE_EQ(got[k].distance, want[k].distance);
      }
      // Nearest: smallest distance, lowest id among exact ties.
      std::uint32_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d = (pts[i] - c).squaredNorm();
        if (d < bd) {
          bd = d;
          best = static_cast<std::uint32_t>(i);
        }
      }
      const auto nn = idx.nearest_neighbor(c);
      ASSERT_TRUE(nn);
      EXPECT_EQ(nn->id, best);
      EXPECT_EQ(nn->distance, std::sqrt(bd));
    }
  }
}

TEST(Spherical, HandValues) {
  const auto s = cart_to_spherical({3, 4, 0});
  EXPECT_DOUBLE_EQ(s.r, 5.0);
  EXPECT_NEAR(s.theta, 0.9272952180016122, 1e-15);
  EXPECT_EQ(s.phi, 0.0);
  const auto pole = cart_to_spherical({0, 0, 1});
  EXPECT_DOUBLE_EQ(pole.r, 1.0);
  EXPECT_EQ(pole.theta, 0.0);
  EXPECT_DOUBLE_EQ(pole.phi, M_PI / 2);
}

TEST(Spherical, BranchCutIsPositivePi) {
  EXPECT_EQ(cart_to_spherical({-1, 0, 0}).theta, M_PI);
  EXPECT_EQ(cart_to_spherical({-1, -0.0, 0}).theta, M_PI);
}

TEST(Spherical, DegenerateRangeRejected) {
  EXPECT_THROW(cart_to_spherical({0, 0, 0}), ParameterError);
  EXPECT_THROW(cart_to_spherical({1e-7, 0, 0}), ParameterError);
}

TEST(Spherical, RoundTrip) {
  Rng rng(5);
  for (int i = 0; i < 100000; ++i) {
    const Eigen::Vector3d d = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
    const Point3 p = d * rng.uniform(0.1, 500.0);
    const auto s = cart_to_spherical(p);
    ASSERT_LT((spherical_to_cart(s) - p).norm(), 1e-9);
    ASSERT_GT(s.theta, -M_PI);
    ASSERT_LE(s.theta, M_PI);
    ASSERT_LE(std::abs(s.phi), M_PI / 2);
  }
}
