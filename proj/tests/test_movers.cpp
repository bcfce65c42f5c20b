#include "geolabel/movers.hpp"
#include "geolabel/synth.hpp"

#include <gtest/gtest.h>

#include <functional>

using namespace geolabel;

namespace {

Scan scan_of(std::vector<Point3> pts, std::int64_t t = 0) {
  Scan s;
  s.points = std::move(pts);
  s.intensities.assign(s.points.size(), 0.0f);
  s.timestamp_index = t;
  return s;
}

SemanticMap map_of(std::span<const Point3> pts) {
  std::vector<MapPoint> mp;
  for (const auto& p : pts) {
    MapPoint m;
    m.position = p;
    mp.push_back(m);
  }
  return SemanticMap(std::move(mp));
}

std::vector<Point3> blob(const Point3& c, int n, double spacing) {
  std::vector<Point3> out;
  for (int i = 0; i < n; ++i) out.push_back(c + Point3(spacing * (i % 6), spacing * (i / 6), 0));
  return out;
}

/// Reference DBSCAN cluster membership via connected components of core points.
std::set<std::set<std::uint32_t>> reference_dbscan(std::span<const Point3> pts, double eps, int min_pts) {
  const std::size_t n = pts.size();
  std::vector<std::vector<std::uint32_t>> nb(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if ((pts[i] - pts[j]).squaredNorm() <= eps * eps) nb[i].push_back(static_cast<std::uint32_t>(j));
  std::vector<int> comp(n, -1);
  int nc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (comp[i] >= 0 || static_cast<int>(nb[i].size()) < min_pts) continue;
    std::vector<std::uint32_t> stack{static_cast<std::uint32_t>(i)};
    comp[i] = nc;
    while (!stack.empty()) {
      const auto p = stack.back();
      stack.pop_back();
      for (auto q : nb[p])
        if (comp[q] < 0 && static_cast<int>(nb[q].size()) >= min_pts) {
          comp[q] = nc;
          stack.push_back(q);
        }
    }
    ++nc;
  }
  std::vector<std::set<std::uint32_t>> groups(nc);
  for (std::size_t i = 0; i < n; ++i)
    if (comp[i] >= 0) groups[comp[i]].insert(static_cast<std::uint32_t>(i));
  return {groups.begin(), groups.end()};
}

}  // namespace

TEST(ExtractMovers, ScanIdenticalToMapIsStatic) {
  Rng rng(1);
  std::vector<Point3> pts;
  for (int i = 0; i < 500; ++i) pts.emplace_back(rng.uniform(0, 10), rng.uniform(0, 10), 0);
  const auto m = extract_movers(scan_of(pts), Pose::identity(), map_of(pts));
  EXPECT_EQ(m.count(), 0u);
}

TEST(ExtractMovers, IsolatedCandidateFailsSupport) {
  const std::vector<Point3> map_pts{{0, 0, 0}};
  const auto m = extract_movers(scan_of({{0, 0, 0}, {5, 5, 0}}), Pose::identity(), map_of(map_pts));
  EXPECT_EQ(m.moving, (std::vector<std::uint8_t>{0, 0}));
}

TEST(ExtractMovers, ThreeMutualCandidatesFlagged) {
  const std::vector<Point3> map_pts{{0, 0, 0}};
  const auto m = extract_movers(scan_of({{5, 5, 0}, {5.5, 5, 0}, {5, 5.5, 0}, {0, 0, 0}}), Pose::identity(),
                                map_of(map_pts));
  EXPECT_EQ(m.moving, (std::vector<std::uint8_t>{1, 1, 1, 0}));
}

TEST(ExtractMovers, TwoCandidatesNotEnough) {
  const std::vector<Point3> map_pts{{0, 0, 0}};
  const auto m = extract_movers(scan_of({{5, 5, 0}, {5.5, 5, 0}}), Pose::identity(), map_of(map_pts));
  EXPECT_EQ(m.count(), 0u);
}

TEST(ExtractMovers, UsesPose) {
  const std::vector<Point3> map_pts{{10, 0, 0}, {10.2, 0, 0}, {10, 0.2, 0}};
  const Pose p = Pose::from_yaw(0, Point3(10, 0, 0));
  const auto m = extract_movers(scan_of({{0, 0, 0}, {0.2, 0, 0}, {0, 0.2, 0}}), p, map_of(map_pts));
  EXPECT_EQ(m.count(), 0u);
}

TEST(ExtractMovers, StaticSyntheticWorldAllFalse) {
  SceneSpec s = default_scene();
  s.movers.clear();
  s.cameras.clear();
  s.sensor.beams = 16;
  s.sensor.azimuth_columns = 360;
  s.sensor.frames = 3;
  const auto frames = generate_scene(s, false);
  // Map sampled at 0.2 m over the area seen by the sensor; corr_radius 0.3 >= spacing.
  const auto surf = sample_static_surfaces(s, 0.2, {-70, -45}, {130, 45});
  const SemanticMap map = map_of(surf);
  for (const auto& f : frames) EXPECT_EQ(extract_movers(f.scan, f.pose, map).count(), 0u);
}

TEST(Dbscan, TwoBlobs) {
  auto pts = blob({0, 0, 0}, 30, 0.5);
  const auto b = blob({10, 0, 0}, 30, 0.5);
  pts.insert(pts.end(), b.begin(), b.end());
  const auto c = dbscan(pts, 1.0, 3);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].size(), 30u);
  EXPECT_EQ(c[0].front(), 0u);
  EXPECT_EQ(c[1].front(), 30u);
}

TEST(Dbscan, IsolatedPointsAreNoise) {
  const std::vector<Point3> pts{{0, 0, 0}, {5, 0, 0}};
  EXPECT_TRUE(dbscan(pts, 1.0, 3).empty());
  EXPECT_THROW(dbscan(pts, 0.0, 3), ParameterError);
}

TEST(Dbscan, MatchesReferenceOnCorePoints) {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(300 + trial);
    std::vector<Point3> pts;
    const int n = 10 + static_cast<int>(rng.below(400));
    for (int i = 0; i < n; ++i) pts.emplace_back(rng.uniform(0, 12), rng.uniform(0, 12), rng.uniform(0, 1));
    const double eps = rng.uniform(0.5, 1.5);
    const int min_pts = 2 + static_cast<int>(rng.below(5));
    const auto got = dbscan(pts, eps, min_pts);
    // Core-point partition must equal the connected components; every
    // non-core member must be within eps of a core point of its cluster.
    std::vector<int> deg(pts.size(), 0);
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = 0; j < pts.size(); ++j) deg[i] += (pts[i] - pts[j]).squaredNorm() <= eps * eps;
    std::set<std::set<std::uint32_t>> cores;
    for (const auto& c : got) {
      std::set<std::uint32_t> core;
      for (auto id : c)
        if (deg[id] >= min_pts) core.insert(id);
      ASSERT_FALSE(core.empty());
      for (auto id : c) {
        if (deg[id] >= min_pts) continue;
        bool near = false;
        for (auto k : core) near |= (pts[id] - pts[k]).squaredNorm() <= eps * eps;
        ASSERT_TRUE(near);
      }
      cores.insert(core);
    }
    ASSERT_EQ(cores, reference_dbscan(pts, eps, min_pts)) << trial;
    for (std::size_t k = 1; k < got.size(); ++k) ASSERT_LT(got[k - 1].front(), got[k].front());
  }
}

TEST(Dbscan, PermutationInvariantMembership) {
  Rng rng(8);
  std::vector<Point3> pts;
  for (int i = 0; i < 300; ++i) pts.emplace_back(rng.uniform(0, 10), rng.uniform(0, 10), 0);
  std::vector<std::uint32_t> perm(pts.size());
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  std::vector<Point3> shuffled;
  for (auto k : perm) shuffled.push_back(pts[k]);
  auto cores = [&](std::span<const Point3> p, const std::vector<std::vector<std::uint32_t>>& c,
                   std::function<std::uint32_t(std::uint32_t)> map) {
    std::set<std::set<std::uint32_t>> s;
    for (const auto& cl : c) {
      std::set<std::uint32_t> core;
      for (auto id : cl) {
        int deg = 0;
        for (const auto& q : p) deg += (q - p[id]).squaredNorm() <= 0.64;
        if (deg >= 3) core.insert(map(id));
      }
      s.insert(core);
    }
    return s;
  };
  const auto a = cores(pts, dbscan(pts, 0.8, 3), [](std::uint32_t i) { return i; });
  const auto b = cores(shuffled, dbscan(shuffled, 0.8, 3), [&](std::uint32_t i) { return perm[i]; });
  EXPECT_EQ(a, b);
}

TEST(Dbscan, DensityChainBound) {
  Rng rng(12);
  std::vector<Point3> pts;
  for (int i = 0; i < 500; ++i) pts.emplace_back(rng.uniform(0, 20), rng.uniform(0, 3), 0);
  for (const auto& c : dbscan(pts, 0.7, 3))
    for (auto a : c)
      for (auto b : c) ASSERT_LE((pts[a] - pts[b]).norm(), (static_cast<double>(c.size()) - 1) * 0.7 + 1e-12);
}

TEST(ClusterMovers, BlobSpanningThreeScans) {
  std::vector<Scan> scans;
  std::vector<MoverMask> masks;
  for (int t = 0; t < 3; ++t) {
    scans.push_back(scan_of(blob({0.5 * t, 0, 0}, 12, 0.3), t));
    masks.push_back({std::vector<std::uint8_t>(12, 1), t});
  }
  std::vector<MoverFrame> window;
  for (int t = 0; t < 3; ++t) window.push_back({&scans[t], Pose::identity(t), &masks[t]});
  const auto c = cluster_movers(window, 1);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].timestamp_index, 1);
  std::set<std::int64_t> frames;
  for (const auto& m : c[0].members) frames.insert(m.frame);
  EXPECT_EQ(frames, (std::set<std::int64_t>{0, 1, 2}));
  EXPECT_EQ(c[0].members.size(), 36u);
}

TEST(ClusterMovers, OnlyMaskedPointsAndWorldFrame) {
  const Scan s = scan_of({{0, 0, 0}, {0.2, 0, 0}, {0.4, 0, 0}, {50, 0, 0}});
  const MoverMask m{{1, 1, 1, 0}, 0};
  const std::vector<MoverFrame> w{{&s, Pose::from_yaw(0, Point3(100, 0, 0)), &m}};
  const auto c = cluster_movers(w, 0);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].members.size(), 3u);
  EXPECT_NEAR(c[0].centroid.x(), 100.2, 1e-12);
  const MoverMask bad{{1, 1}, 0};
  const std::vector<MoverFrame> wb{{&s, Pose::identity(), &bad}};
  EXPECT_THROW(cluster_movers(wb, 0), AlignmentError);
  EXPECT_THROW(cluster_movers(w, 1), ParameterError);
}
