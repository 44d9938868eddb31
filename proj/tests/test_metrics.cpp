#include <gtest/gtest.h>

#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "ussg/error.hpp"
#include "ussg/metrics.hpp"

using namespace ussg;
using namespace ussg::metrics;

namespace {

SceneGraph single(std::string id) {
  SceneGraph g;
  g.image_id = std::move(id);
  g.width = 100;
  g.height = 100;
  return g;
}

// Five structures, seven relations over distinct ordered pairs.
SceneGraph seven_triplets() {
  SceneGraph g = single("seven");
  g.width = 829;
  g.height = 770;
  g.detections = {{EntityClass::kCCA, {100, 300, 80, 80}, 1.0},
                  {EntityClass::kIJV, {190, 280, 90, 60}, 1.0},
                  {EntityClass::kCR, {380, 200, 90, 90}, 1.0},
                  {EntityClass::kTH, {280, 220, 200, 120}, 1.0},
                  {EntityClass::kVB, {300, 500, 160, 120}, 1.0}};
  using P = PredicateClass;
  g.triplets = {{0, P::kContiguousWith, 1, 1.0}, {3, P::kPartiallyEncases, 2, 1.0},
                {2, P::kSuperiorTo, 4, 1.0},     {3, P::kSuperiorTo, 4, 1.0},
                {0, P::kSuperiorTo, 4, 1.0},     {1, P::kContiguousWith, 0, 1.0},
                {3, P::kContiguousWith, 0, 1.0}};
  return g;
}

std::vector<SceneGraph> flipped(const std::vector<SceneGraph>& v) {
  std::vector<SceneGraph> out;
  for (const auto& g : v) out.push_back(flip_horizontal(g));
  return out;
}

}  // namespace

TEST(DetectionAp, PerfectPredictions) {
  const auto g = seven_triplets();
  const auto r = detection_ap({g}, {g});
  for (double m : r.map_per_threshold) EXPECT_EQ(m, 1.0);
  EXPECT_EQ(r.ap50, 1.0);
  EXPECT_EQ(r.ap_range, 1.0);
}

TEST(DetectionAp, FalsePositiveRankedFirstHalvesAp) {
  SceneGraph gt = single("a");
  gt.detections = {{EntityClass::kCCA, {10, 10, 20, 20}, std::nullopt}};
  SceneGraph pred = single("a");
  pred.detections = {{EntityClass::kCCA, {60, 60, 20, 20}, 0.9},
                     {EntityClass::kCCA, {10, 10, 20, 20}, 0.8}};
  EXPECT_EQ(detection_ap({pred}, {gt}).ap50, 0.5);
}

TEST(DetectionAp, NoPredictions) {
  const auto g = seven_triplets();
  SceneGraph empty = single("seven");
  const auto r = detection_ap({empty}, {g});
  EXPECT_EQ(r.ap50, 0.0);
  EXPECT_EQ(r.ap_range, 0.0);
}

TEST(DetectionAp, ClassesWithoutGtAreFlagged) {
  SceneGraph gt = single("a");
  gt.detections = {{EntityClass::kTH, {10, 10, 20, 20}, std::nullopt}};
  const auto r = detection_ap({gt}, {gt});
  EXPECT_EQ(r.no_gt_classes.size(), 4u);
  EXPECT_FALSE(r.per_class_ap[index_of(EntityClass::kCCA)]);
  EXPECT_EQ(r.ap50, 1.0);
}

TEST(DetectionAp, IdMismatch) {
  try {
    detection_ap({single("a")}, {single("b")});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIdMismatch);
  }
}

TEST(Recall, SevenTriplets) {
  const auto g = seven_triplets();
  const auto r = relation_recall({g}, {g});
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].k, 5);
  EXPECT_EQ(r[0].value, 5.0 / 7.0);
  EXPECT_EQ(r[1].value, 1.0);
  const auto mr = mean_relation_recall({g}, {g});
  EXPECT_EQ(mr[1].value, 1.0);
}

TEST(Recall, OnlyContiguityRecovered) {
  const auto gt = seven_triplets();
  auto pred = gt;
  std::erase_if(pred.triplets,
                [](const Triplet& t) { return t.pred != PredicateClass::kContiguousWith; });
  const auto mr = mean_relation_recall({pred}, {gt});
  EXPECT_DOUBLE_EQ(mr[1].value, 1.0 / 3.0);
  EXPECT_EQ(*mr[1].per_predicate[0], 1.0);
  EXPECT_EQ(*mr[1].per_predicate[1], 0.0);
}

TEST(Recall, SinglePredicateMeanEqualsRecall) {
  auto gt = seven_triplets();
  std::erase_if(gt.triplets,
                [](const Triplet& t) { return t.pred != PredicateClass::kSuperiorTo; });
  auto pred = gt;
  pred.triplets.pop_back();
  EXPECT_EQ(mean_relation_recall({pred}, {gt})[0].value, relation_recall({pred}, {gt})[0].value);
}

TEST(Recall, NoPredictedTriplets) {
  const auto gt = seven_triplets();
  auto pred = gt;
  pred.triplets.clear();
  for (const auto& r : relation_recall({pred}, {gt})) EXPECT_EQ(r.value, 0.0);
}

TEST(Text, WorkedValues) {
  EXPECT_EQ(lcs_length({"a", "b", "c", "d", "e"}, {"a", "b", "c", "d", "e"}), 5u);
  EXPECT_EQ(lcs_length({"a", "b", "c"}, {"a", "c", "b"}), 2u);
  EXPECT_EQ(lcs_length({"a", "b"}, {"c", "d"}), 0u);

  const auto r = rouge_l("the carotid artery is visible", "the carotid artery appears clearly");
  EXPECT_DOUBLE_EQ(r.precision, 0.6);
  EXPECT_DOUBLE_EQ(r.recall, 0.6);
  EXPECT_DOUBLE_EQ(r.f, 0.6);
  EXPECT_EQ(rouge_l("", "x").f, 0.0);
  EXPECT_EQ(rouge_l("same words here", "Same words, here!").f, 1.0);

  const std::string ten = "one two three four five six seven eight nine ten";
  const auto m = meteor_detail(tokenize(ten), tokenize(ten));
  EXPECT_EQ(m.matches, 10u);
  EXPECT_EQ(m.chunks, 1u);
  EXPECT_DOUBLE_EQ(m.f_mean, 1.0);
  EXPECT_DOUBLE_EQ(m.penalty, 0.0005);
  EXPECT_DOUBLE_EQ(m.score, 0.9995);
  EXPECT_EQ(meteor("b a", "a b"), 0.5);
  EXPECT_EQ(meteor("x y", "a b"), 0.0);
}

TEST(Text, Tokenize) {
  EXPECT_EQ(tokenize("The CCA's wall -- 3mm"),
            (std::vector<std::string>{"the", "cca", "s", "wall", "3mm"}));
  EXPECT_EQ(tokenize("caf\xc3\xa9 ok"), (std::vector<std::string>{"caf\xc3\xa9", "ok"}));
}

TEST(Oracle, MicroInstancesAgree) {
  gen::Rng rng(17);
  const DetectionEvalConfig dcfg;
  for (int i = 0; i < 1200; ++i) {
    const auto m = gen::micro_instance(rng);
    const auto det = detection_ap(m.preds, m.gts);
    for (std::size_t t = 0; t < dcfg.iou_thresholds.size(); ++t) {
      const double thr = dcfg.iou_thresholds[t];
      for (auto cls : kAllEntities) {
        const auto want = oracle::class_ap(m.preds, m.gts, cls, thr);
        const auto& got = det.per_class_ap[index_of(cls)];
        ASSERT_EQ(want.has_value(), got.has_value());
        if (want) ASSERT_NEAR((*got)[t], *want, 1e-9) << "instance " << i << " thr " << thr;
      }
      ASSERT_NEAR(det.map_per_threshold[t], oracle::map_at(m.preds, m.gts, thr), 1e-9);
    }
    for (bool constrained : {true, false}) {
      RelationEvalConfig rcfg;
      rcfg.k_values = {1, 2, 5, 20};
      rcfg.constrained = constrained;
      const auto r = relation_recall(m.preds, m.gts, rcfg);
      const auto mr = mean_relation_recall(m.preds, m.gts, rcfg);
      for (std::size_t k = 0; k < rcfg.k_values.size(); ++k) {
        const auto want = oracle::recall_at(m.preds, m.gts, rcfg.k_values[k], 0.5, constrained);
        ASSERT_NEAR(r[k].value, want.r, 1e-9) << "instance " << i;
        ASSERT_NEAR(mr[k].value, want.mr, 1e-9) << "instance " << i;
        if (k > 0) ASSERT_LE(r[k - 1].value, r[k].value);
      }
    }
    const auto a = gen::tokens(rng);
    const auto b = gen::tokens(rng);
    ASSERT_EQ(lcs_length(a, b), oracle::lcs(a, b));
    ASSERT_NEAR(rouge_l(gen::join(a), gen::join(b)).f, oracle::rouge_f(a, b), 1e-9);
    const auto want = oracle::meteor(a, b);
    const auto got = meteor_detail(a, b);
    ASSERT_EQ(got.matches, want.matches);
    if (want.matches > 0) ASSERT_EQ(got.chunks, want.chunks);
    ASSERT_NEAR(got.score, want.score, 1e-9);
  }
}

TEST(Properties, ScoresInRangeAndApMonotoneInThreshold) {
  gen::Rng rng(23);
  for (int i = 0; i < 500; ++i) {
    const auto m = gen::micro_instance(rng);
    const auto det = detection_ap(m.preds, m.gts);
    for (auto cls : kAllEntities) {
      const auto& ap = det.per_class_ap[index_of(cls)];
      if (!ap) continue;
      for (std::size_t t = 0; t < ap->size(); ++t) {
        ASSERT_GE((*ap)[t], 0.0);
        ASSERT_LE((*ap)[t], 1.0);
        if (t > 0) ASSERT_LE((*ap)[t], (*ap)[t - 1] + 1e-12) << "instance " << i;
      }
    }
  }
}

TEST(Properties, JointFlipLeavesMetricsUnchanged) {
  gen::Rng rng(29);
  for (int i = 0; i < 300; ++i) {
    const auto m = gen::micro_instance(rng);
    const auto fp = flipped(m.preds);
    const auto fg = flipped(m.gts);
    const auto a = detection_ap(m.preds, m.gts);
    const auto b = detection_ap(fp, fg);
    ASSERT_EQ(a.map_per_threshold, b.map_per_threshold);
    const auto ra = relation_recall(m.preds, m.gts);
    const auto rb = relation_recall(fp, fg);
    for (std::size_t k = 0; k < ra.size(); ++k) ASSERT_EQ(ra[k].value, rb[k].value);
    const auto ma = mean_relation_recall(m.preds, m.gts);
    const auto mb = mean_relation_recall(fp, fg);
    for (std::size_t k = 0; k < ma.size(); ++k) ASSERT_EQ(ma[k].value, mb[k].value);
  }
}

TEST(Report, LabelsAndPerfectInputs) {
  const auto labels = parse_labels("pass\n# note\npass\n\nfail\n");
  ASSERT_EQ(labels.size(), 3u);
  const auto g = seven_triplets();
  const auto rep = score_report({g}, {g}, {{"t0", "a b c", "a b c"}}, labels);
  EXPECT_DOUBLE_EQ(*rep.human_acc, 2.0 / 3.0);
  EXPECT_EQ(rep.detection->ap50, 1.0);
  EXPECT_EQ(rep.r_at_k.back().value, 1.0);
  EXPECT_DOUBLE_EQ(rep.text->rouge_l_mean, 1.0);
  EXPECT_EQ(report_to_json(rep), report_to_json(score_report({g}, {g}, {{"t0", "a b c", "a b c"}},
                                                             labels)));
  EXPECT_THROW(parse_labels("maybe\n"), Error);
}

TEST(Config, RejectsBadValues) {
  RelationEvalConfig r;
  r.k_values = {20, 5};
  EXPECT_THROW(r.check(), Error);
  DetectionEvalConfig d;
  d.iou_thresholds = {1.5};
  EXPECT_THROW(d.check(), Error);
  TextMetricConfig t;
  t.meteor_gamma = 0.0;
  EXPECT_THROW(t.check(), Error);
}
