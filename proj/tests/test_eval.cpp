#include "geolabel/eval.hpp"

#include <gtest/gtest.h>

using namespace geolabel;

namespace {

Box3D box_at(double x, double y, std::int64_t t, double score = 1.0) {
  Box3D b;
  b.center = Point3(x, y, 1);
  b.timestamp_index = t;
  b.score = score;
  return b;
}

}  // namespace

TEST(Semantic, PerfectPrediction) {
  SemanticEvaluator ev;
  const std::vector<ClassId> t{1, 1, 2, 3, 3, 3};
  ev.add(t, t);
  const auto s = ev.scores();
  EXPECT_EQ(s.miou, 1.0);
  EXPECT_EQ(s.accuracy, 1.0);
  EXPECT_EQ(s.points, 6u);
}

TEST(Semantic, HalfAndHalfAllPredictedA) {
  SemanticEvaluator ev;
  std::vector<ClassId> truth(100, 1), pred(100, 1);
  std::fill(truth.begin() + 50, truth.end(), 2);
  ev.add(pred, truth);
  const auto s = ev.scores();
  EXPECT_DOUBLE_EQ(s.iou.at(1), 0.5);
  EXPECT_DOUBLE_EQ(s.iou.at(2), 0.0);
  EXPECT_DOUBLE_EQ(s.miou, 0.25);
  EXPECT_DOUBLE_EQ(s.accuracy, 0.5);
}

TEST(Semantic, AccumulatesAcrossFramesAndRejectsEmpty) {
  SemanticEvaluator ev;
  EXPECT_THROW(ev.scores(), ParameterError);
  const std::vector<ClassId> a{1, 2}, b{1, 1};
  ev.add(a, a);
  ev.add(b, a);
  EXPECT_DOUBLE_EQ(ev.scores().accuracy, 0.75);
  EXPECT_THROW(ev.add(std::vector<ClassId>{1}, a), AlignmentError);
}

TEST(Movers, Rates) {
  MoverScores m;
  const std::vector<std::uint8_t> pred{1, 1, 0, 0, 1}, truth{1, 0, 1, 0, 1};
  m.add(pred, truth);
  EXPECT_DOUBLE_EQ(m.precision(), 2.0 / 3);
  EXPECT_DOUBLE_EQ(m.recall(), 2.0 / 3);
  EXPECT_DOUBLE_EQ(m.static_false_rate(), 0.5);
  EXPECT_EQ(MoverScores{}.precision(), 1.0);
}

TEST(AveragePrecision, PerfectIsOne) {
  std::vector<Box3D> pred;
  std::vector<GroundTruthBox> gt;
  for (int t = 0; t < 10; ++t) {
    pred.push_back(box_at(t, 0, t));
    gt.push_back({box_at(t, 0, t)});
  }
  EXPECT_DOUBLE_EQ(average_precision(pred, gt, 0.5), 1.0);
}

TEST(AveragePrecision, ThresholdDecidesMatch) {
  const std::vector<Box3D> pred{box_at(1.5, 0, 0)};
  const std::vector<GroundTruthBox> gt{{box_at(0, 0, 0)}};
  EXPECT_DOUBLE_EQ(average_precision(pred, gt, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(pred, gt, 1.0), 0.0);
  EXPECT_THROW(average_precision(pred, gt, 0.0), ParameterError);
}

TEST(AveragePrecision, HandComputedCurve) {
  // Ranked TP, FP, TP over 2 positives: interpolated precision 1, 2/3, 2/3.
  const std::vector<Box3D> pred{box_at(0, 0, 0, 0.9), box_at(50, 0, 0, 0.8), box_at(10, 0, 1, 0.7)};
  const std::vector<GroundTruthBox> gt{{box_at(0, 0, 0)}, {box_at(10, 0, 1)}};
  EXPECT_NEAR(average_precision(pred, gt, 1.0), 0.5 + 0.5 * 2.0 / 3.0, 1e-15);
}

TEST(AveragePrecision, OneGroundTruthMatchesOnce) {
  const std::vector<Box3D> pred{box_at(0, 0, 0, 0.9), box_at(0.1, 0, 0, 0.8)};
  const std::vector<GroundTruthBox> gt{{box_at(0, 0, 0)}};
  EXPECT_DOUBLE_EQ(average_precision(pred, gt, 1.0), 1.0);  // the duplicate ranks after full recall
  const std::vector<Box3D> other_frame{box_at(0, 0, 1)};
  EXPECT_DOUBLE_EQ(average_precision(other_frame, gt, 1.0), 0.0);
}

TEST(AveragePrecision, IgnoredTruthIsNeitherTpNorFp) {
  const std::vector<Box3D> pred{box_at(0, 0, 0, 0.9), box_at(20, 0, 0, 0.95)};
  const std::vector<GroundTruthBox> gt{{box_at(0, 0, 0)}, {box_at(20, 0, 0), true}};
  EXPECT_DOUBLE_EQ(average_precision(pred, gt, 1.0), 1.0);
  const std::vector<GroundTruthBox> only_ignored{{box_at(0, 0, 0), true}};
  EXPECT_DOUBLE_EQ(average_precision(std::vector<Box3D>{}, only_ignored, 1.0), 1.0);
  // A missed valid box still costs recall.
  const std::vector<GroundTruthBox> two{{box_at(0, 0, 0)}, {box_at(40, 0, 0)}};
  EXPECT_DOUBLE_EQ(average_precision(std::vector<Box3D>{pred[0]}, two, 1.0), 0.5);
}

TEST(AveragePrecision, StaysInUnitInterval) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Box3D> pred;
    std::vector<GroundTruthBox> gt;
    for (int i = 0; i < 20; ++i) {
      const auto t = static_cast<std::int64_t>(rng.below(5));
      gt.push_back({box_at(rng.uniform(0, 30), rng.uniform(0, 30), t), rng.uniform() < 0.1});
      pred.push_back(box_at(rng.uniform(0, 30), rng.uniform(0, 30), static_cast<std::int64_t>(rng.below(5)), rng.uniform()));
    }
    for (double thr : {0.5, 1.0, 2.0, 4.0, 100.0}) {
      const double ap = average_precision(pred, gt, thr);
      ASSERT_GE(ap, 0.0);
      ASSERT_LE(ap, 1.0 + 1e-12);
    }
  }
}

TEST(Density, BandsAndRatio) {
  const std::vector<Point3> pts{{10, 0, 0}, {79.9, 0, 0}, {80, 0, 0}, {0, 149, 0}, {0, 0, 300}};
  const auto c = band_counts(pts, default_range_bands());
  EXPECT_EQ(c, (std::vector<std::uint64_t>{2, 2, 0}));
  EXPECT_DOUBLE_EQ((DensityBand{{0, 80}, 4, 14}).ratio(), 3.5);
  EXPECT_EQ((DensityBand{{0, 80}, 0, 14}).ratio(), 0.0);
}

TEST(Report, JsonShape) {
  EvalReport r;
  r.tracks = 2;
  r.ap[2.0] = 0.9;
  r.ap[0.5] = 0.1;
  r.density.push_back({{0, 80}, 10, 50});
  const json j = report_to_json(r);
  EXPECT_EQ(j["tracks"], 2);
  EXPECT_EQ(j["box_ap"]["2"], 0.9);
  EXPECT_EQ(j["box_ap"]["0.5"], 0.1);
  EXPECT_EQ(j["density"][0]["ratio"], 5.0);
  EXPECT_FALSE(j.contains("semantics"));
}
