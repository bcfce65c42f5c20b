#include "geolabel/propagation.hpp"
#include "geolabel/synth.hpp"

#include <gtest/gtest.h>

using namespace geolabel;

namespace {

MapPoint labeled(const Point3& p, ClassId l) {
  MapPoint m;
  m.position = p;
  if (l != kUnlabeled) m.histogram.add(l);
  return m;
}

/// O(N^2) synchronous reference.
std::vector<ClassId> brute_propagate(std::span<const Point3> pos, std::vector<ClassId> labels, double radius,
                                     int passes) {
  const double sigma = radius / 2;
  for (int pass = 0; pass < passes; ++pass) {
    std::vector<ClassId> next = labels;
    for (std::size_t i = 0; i < pos.size(); ++i) {
      std::map<ClassId, double> score;
      std::vector<ClassId> order;
      for (std::size_t j = 0; j < pos.size(); ++j) {
        const double d2 = (pos[j] - pos[i]).squaredNorm();
        if (d2 > radius * radius || labels[j] == kUnlabeled || labels[j] == kIgnore) continue;
        if (!score.count(labels[j])) order.push_back(labels[j]);
        score[labels[j]] += std::exp(-d2 / (2 * sigma * sigma));
      }
      if (order.empty()) continue;
      ClassId best = order[0];
      for (ClassId l : order)
        if (score[l] > score[best] || (score[l] == score[best] && l < best)) best = l;
      next[i] = best;
    }
    labels = std::move(next);
  }
  return labels;
}

}  // namespace

TEST(GaussianWeight, HandValues) {
  EXPECT_EQ(gaussian_weight(0, 0.1), 1.0);
  EXPECT_NEAR(gaussian_weight(0.1, 0.1), 0.6065306597126334, 1e-15);
  EXPECT_NEAR(gaussian_weight(0.2, 0.1), 0.1353352832366127, 1e-15);
  EXPECT_THROW(gaussian_weight(0.1, 0), ParameterError);
  EXPECT_THROW(gaussian_weight(-0.1, 1), ParameterError);
}

TEST(Propagate, IsolatedPointKeepsLabel) {
  SemanticMap map({labeled({0, 0, 0}, 9), labeled({5, 0, 0}, 4)});
  EXPECT_EQ(propagate_labels(map, {}), (std::vector<ClassId>{9, 4}));
}

TEST(Propagate, WeightedVoteHandSummation) {
  // sigma = 0.5 (radius 1). Distances give weights 0.8, 0.5 (class 9) and 0.9 (class 4).
  const double s = 0.5;
  auto dist = [&](double w) { return std::sqrt(-2 * s * s * std::log(w)); };
  SemanticMap map({labeled({0, 0, 0}, kUnlabeled), labeled({dist(0.8), 0, 0}, 9), labeled({0, dist(0.5), 0}, 9),
                   labeled({0, 0, dist(0.9)}, 4)});
  PropagationConfig cfg;
  cfg.radius = 1.0;
  EXPECT_EQ(propagate_labels(map, cfg)[0], 9);
}

TEST(Propagate, FillsUnlabeledGap) {
  std::vector<MapPoint> pts{labeled({0, 0, 0}, kUnlabeled)};
  for (int k = 0; k < 6; ++k) pts.push_back(labeled({0.1 * std::cos(k), 0.1 * std::sin(k), 0}, 9));
  SemanticMap map(std::move(pts));
  EXPECT_EQ(propagate_labels(map, {})[0], 9);
}

TEST(Propagate, IgnoreLabelNeverVotes) {
  SemanticMap map({labeled({0, 0, 0}, kUnlabeled), labeled({0.01, 0, 0}, kIgnore), labeled({0.15, 0, 0}, 7)});
  EXPECT_EQ(propagate_labels(map, {})[0], 7);
}

TEST(Propagate, ExactTieGoesToLowestId) {
  SemanticMap map({labeled({0, 0, 0}, kUnlabeled), labeled({0.1, 0, 0}, 9), labeled({-0.1, 0, 0}, 4)});
  EXPECT_EQ(propagate_labels(map, {})[0], 4);
}

TEST(Propagate, MatchesBruteForce) {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(500 + trial);
    const int n = 1 + static_cast<int>(rng.below(1000));
    std::vector<Point3> pos;
    std::vector<ClassId> lab;
    for (int i = 0; i < n; ++i) {
      pos.emplace_back(rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 0.3));
      lab.push_back(static_cast<ClassId>(rng.below(4)));
    }
    PropagationConfig cfg;
    cfg.radius = rng.uniform(0.05, 0.4);
    cfg.passes = 1 + static_cast<int>(rng.below(2));
    const SpatialIndex idx(pos, 1 + rng.below(20));
    ASSERT_EQ(propagate_labels(idx, pos, lab, cfg), brute_propagate(pos, lab, cfg.radius, cfg.passes)) << trial;
  }
}

TEST(Propagate, ConsensusIsIdentity) {
  Rng rng(9);
  std::vector<Point3> pos;
  std::vector<ClassId> lab;
  for (int blob = 0; blob < 5; ++blob)
    for (int i = 0; i < 100; ++i) {
      pos.emplace_back(blob * 3 + rng.uniform(0, 1), rng.uniform(0, 1), 0);
      lab.push_back(static_cast<ClassId>(10 + blob));
    }
  PropagationConfig cfg;
  cfg.radius = 0.5;
  EXPECT_EQ(propagate_labels(SpatialIndex(pos), pos, lab, cfg), lab);
}

TEST(Propagate, IndependentOfPointOrder) {
  Rng rng(10);
  std::vector<Point3> pos;
  std::vector<ClassId> lab;
  for (int i = 0; i < 600; ++i) {
    pos.emplace_back(rng.uniform(0, 1), rng.uniform(0, 1), 0);
    lab.push_back(static_cast<ClassId>(rng.below(3)));
  }
  PropagationConfig cfg;
  const auto base = propagate_labels(SpatialIndex(pos), pos, lab, cfg);
  std::vector<std::size_t> perm(pos.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  std::vector<Point3> p2;
  std::vector<ClassId> l2;
  for (auto k : perm) {
    p2.push_back(pos[k]);
    l2.push_back(lab[k]);
  }
  const auto out = propagate_labels(SpatialIndex(p2), p2, l2, cfg);
  // Exact ties between classes could in principle depend on summation order;
  // random positions make them measure-zero, so the labels must agree.
  for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(out[i], base[perm[i]]);
}

TEST(Propagate, DenoisesFlippedGrid) {
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(77 + trial);
    std::vector<Point3> pos;
    std::vector<ClassId> lab;
    for (int i = 0; i < 60; ++i)
      for (int j = 0; j < 60; ++j) {
        pos.emplace_back(0.05 * i, 0.05 * j, 0);
        lab.push_back(rng.uniform() < 0.2 ? 2 : 1);
      }
    PropagationConfig cfg;
    const auto out = propagate_labels(SpatialIndex(pos), pos, lab, cfg);
    const auto ok = std::count(out.begin(), out.end(), ClassId{1});
    EXPECT_GE(static_cast<double>(ok) / static_cast<double>(out.size()), 0.95);
  }
}

TEST(Propagate, SequentialModeReadsUpdatedLabels) {
  // Chain spaced 0.15 m with the labeled end first in id order.
  SemanticMap map({labeled({0.3, 0, 0}, 5), labeled({0.15, 0, 0}, kUnlabeled), labeled({0, 0, 0}, kUnlabeled)});
  PropagationConfig sync;
  sync.radius = 0.16;
  EXPECT_EQ(propagate_labels(map, sync), (std::vector<ClassId>{5, 5, 0}));
  PropagationConfig seq = sync;
  seq.sequential = true;
  EXPECT_EQ(propagate_labels(map, seq), (std::vector<ClassId>{5, 5, 5}));
  sync.passes = 2;
  EXPECT_EQ(propagate_labels(map, sync), (std::vector<ClassId>{5, 5, 5}));
}

TEST(ScanLabelsFromMap, MatchFallbackAndEmptyHistogram) {
  SemanticMap map({labeled({0, 0, 0}, 9), labeled({10, 0, 0}, kUnlabeled)});
  Scan s;
  s.points = {{0.05, 0, 0}, {2, 2, 0}, {10, 0, 0.01}};
  s.intensities.assign(3, 0);
  const std::vector<ClassId> fb{4, 4, 4};
  EXPECT_EQ(scan_labels_from_map(s, Pose::identity(), map, fb, 0.3), (std::vector<ClassId>{9, 4, 4}));
  const std::vector<ClassId> ml{3, 6};
  EXPECT_EQ(scan_labels_from_map(s, Pose::identity(), map, fb, 0.3, ml), (std::vector<ClassId>{3, 4, 6}));
  EXPECT_THROW(scan_labels_from_map(s, Pose::identity(), map, std::vector<ClassId>{4}, 0.3), AlignmentError);
}
