#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support/generators.hpp"
#include "ussg/anatomy.hpp"
#include "ussg/error.hpp"
#include "ussg/grounding.hpp"

using namespace ussg;
using namespace ussg::anatomy;

namespace {

ProbePose random_pose(gen::Rng& rng, LateralSide side = LateralSide::kLeft) {
  // Quarter-step lattice keeps mirrored u exact.
  return {gen::uniform(rng, 0, 80) / 80.0, gen::uniform(rng, -40, 40) / 40.0, side};
}

// Minimum distance between boundary samples, negative when one contains a
// point of the other.
double sampled_gap(const Ellipse& a, const Ellipse& b) {
  constexpr int kN = 1200;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> pb;
  for (int k = 0; k < kN; ++k) {
    const double t = 2.0 * std::numbers::pi * k / kN;
    pb.emplace_back(b.cx + b.rx * std::cos(t), b.cy + b.ry * std::sin(t));
  }
  bool overlap = false;
  for (int k = 0; k < kN; ++k) {
    const double t = 2.0 * std::numbers::pi * k / kN;
    const double x = a.cx + a.rx * std::cos(t);
    const double y = a.cy + a.ry * std::sin(t);
    overlap = overlap || b.implicit(x, y) < 1.0;
    for (const auto& [bx, by] : pb) best = std::min(best, std::hypot(x - bx, y - by));
  }
  for (const auto& [bx, by] : pb) overlap = overlap || a.implicit(bx, by) < 1.0;
  return overlap ? -1.0 : best;
}

// Coverage by marching each ray outward in small increments.
double marched_coverage(const std::vector<Ellipse>& es, std::size_t outer, std::size_t inner,
                        const RuleThresholds& rules) {
  const Ellipse& b = es[inner];
  const double reach = rules.encase_reach * b.max_radius();
  int hits = 0;
  for (int k = 0; k < rules.encase_rays; ++k) {
    const double a = 2.0 * std::numbers::pi * k / rules.encase_rays;
    for (double t = 0.0; t <= reach; t += 0.25) {
      const double x = b.cx + t * std::cos(a);
      const double y = b.cy + t * std::sin(a);
      std::size_t who = es.size();
      for (std::size_t e = 0; e < es.size(); ++e) {
        if (e != inner && es[e].implicit(x, y) < 1.0) {
          who = e;
          break;
        }
      }
      if (who != es.size()) {
        hits += who == outer ? 1 : 0;
        break;
      }
    }
  }
  return 360.0 * hits / rules.encase_rays;
}

bool has_triplet(const SceneGraph& g, std::size_t a, PredicateClass p, std::size_t b) {
  for (const auto& t : g.triplets) {
    if (t.sub == a && t.obj == b && t.pred == p) return true;
  }
  return false;
}

}  // namespace

TEST(CrossSection, ValidGraphsWithUnitScores) {
  gen::Rng rng(1);
  const auto model = NeckModel::default_model();
  for (int i = 0; i < 200; ++i) {
    const auto g = cross_section(model, random_pose(rng, i % 2 ? LateralSide::kRight
                                                              : LateralSide::kLeft));
    ASSERT_TRUE(validate(g).empty());
    for (const auto& d : g.detections) EXPECT_EQ(d.score, 1.0);
  }
}

TEST(CrossSection, RightIsMirrorOfLeft) {
  gen::Rng rng(2);
  const auto model = NeckModel::default_model();
  for (int i = 0; i < 100; ++i) {
    const auto p = random_pose(rng);
    const auto left = cross_section(model, p, "x");
    const auto right = cross_section(model, {p.z, -p.u, LateralSide::kRight}, "x");
    ASSERT_EQ(right, flip_horizontal(left));
    const auto ls = grounding::infer_lateral_side(left);
    const auto rs = grounding::infer_lateral_side(right);
    if (ls != LateralSide::kUnknown) {
      EXPECT_EQ(ls, LateralSide::kLeft);
      EXPECT_EQ(rs, LateralSide::kRight);
    }
  }
}

TEST(CrossSection, TrackPresenceIntervals) {
  const auto model = NeckModel::default_model();
  const auto low = cross_section(model, {0.1, 0.0, LateralSide::kLeft});
  EXPECT_EQ(missing_entities(low),
            (std::vector<EntityClass>{EntityClass::kCR, EntityClass::kTH}));
  const auto mid = cross_section(model, {0.5, 0.0, LateralSide::kLeft});
  EXPECT_TRUE(missing_entities(mid).empty());
}

TEST(Relations, AgreeWithDenseSampling) {
  gen::Rng rng(3);
  const auto model = NeckModel::default_model();
  const auto& rules = model.rules;
  int checked = 0;
  for (int i = 0; i < 20; ++i) {
    const ProbePose p = random_pose(rng);
    const auto es = visible_ellipses(model, p);
    const auto g = cross_section(model, p);
    ASSERT_EQ(es.size(), g.detections.size());
    for (std::size_t a = 0; a < es.size(); ++a) {
      for (std::size_t b = 0; b < es.size(); ++b) {
        if (a == b) continue;
        const double lib = encasement_coverage_deg(es, a, b, rules);
        const double brute = marched_coverage(es, a, b, rules);
        EXPECT_NEAR(lib, brute, 3.0) << "pose " << i;
        if (a < b) {
          const double gap = boundary_distance(es[a], es[b]);
          const double sampled = sampled_gap(es[a], es[b]);
          if (sampled < 0) {
            EXPECT_LT(gap, 0.0);
          } else {
            EXPECT_NEAR(gap, sampled, 1.0);
          }
          ++checked;
        }
        const bool superior = es[a].cy < es[b].cy - rules.superior_margin_px &&
                              std::fabs(es[a].cx - es[b].cx) < es[a].rx + es[b].rx;
        const bool encases = lib >= rules.encase_min_deg && lib < 360.0;
        if (encases) EXPECT_TRUE(has_triplet(g, a, PredicateClass::kPartiallyEncases, b));
        if (!encases && superior) EXPECT_TRUE(has_triplet(g, a, PredicateClass::kSuperiorTo, b));
      }
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(Relations, DefaultLayoutHasAllPredicates) {
  const auto model = NeckModel::default_model();
  const auto g = cross_section(model, {0.5, 0.0, LateralSide::kLeft});
  std::array<bool, 3> seen{};
  for (const auto& t : g.triplets) seen[index_of(t.pred)] = true;
  EXPECT_TRUE(seen[0] && seen[1] && seen[2]);
}

TEST(Noise, DeterministicPerPose) {
  NoiseConfig n;
  n.seed = 42;
  n.box_jitter_px = 4;
  n.drop_probability = 0.2;
  n.score_noise = 0.1;
  n.spurious_triplet_probability = 0.1;
  SimulatorPredictor a(NeckModel::default_model(), n);
  SimulatorPredictor b(NeckModel::default_model(), n);
  gen::Rng rng(4);
  bool differs_from_gt = false;
  for (int i = 0; i < 50; ++i) {
    const auto p = random_pose(rng);
    const auto ga = a.predict({"f", p});
    ASSERT_EQ(ga, b.predict({"f", p}));
    ASSERT_EQ(ga, a.predict({"f", p}));
    ASSERT_TRUE(validate(ga).empty());
    differs_from_gt = differs_from_gt || ga != cross_section(a.model(), p, "f");
  }
  EXPECT_TRUE(differs_from_gt);
}

TEST(Noise, DropEverything) {
  NoiseConfig n;
  n.drop_probability = 1.0;
  SimulatorPredictor p(NeckModel::default_model(), n);
  const auto g = p.predict({"f", ProbePose{}});
  EXPECT_TRUE(g.detections.empty());
  EXPECT_TRUE(g.triplets.empty());
}

TEST(Noise, ZeroNoiseIsGroundTruth) {
  SimulatorPredictor p(NeckModel::default_model(), {});
  const ProbePose pose{0.3, 0.2, LateralSide::kRight};
  EXPECT_EQ(p.predict({"f", pose}), cross_section(p.model(), pose, "f"));
  EXPECT_THROW(p.predict({"f", std::nullopt}), Error);
}

TEST(Model, WriteParseRoundTrip) {
  auto m = NeckModel::default_model();
  m.track(EntityClass::kTH).x0 = 260.5;
  EXPECT_EQ(parse_model(write_model(m)), m);
  EXPECT_THROW(parse_model("{\"bogus\": 1}"), Error);
  EXPECT_THROW(parse_model("{\"tracks\": {\"CCA\": {\"z_lo\": 0.2}}}"), Error);
}

TEST(Oracle, MatchesGridSearch) {
  gen::Rng rng(5);
  const auto model = NeckModel::default_model();
  const double step = kDefaultStep;
  int single = 0;
  for (int i = 0; i < 300; ++i) {
    const ProbePose p = random_pose(rng, i % 2 ? LateralSide::kRight : LateralSide::kLeft);
    for (auto target : kAllEntities) {
      const auto g = oracle_guidance(model, p, target, step);
      if (target_visible(model, p, target)) {
        EXPECT_TRUE(g.already_visible);
        continue;
      }
      // Shortest single-axis z walk, then u walk, by brute force.
      auto shortest = [&](GuidanceDirection d1, GuidanceDirection d2) {
        for (int k = 1; k <= 40; ++k) {
          for (auto d : {d1, d2}) {
            ProbePose q = p;
            for (int s = 0; s < k; ++s) q = step_pose(q, d, step);
            if (target_visible(model, q, target)) return std::make_pair(d, k);
          }
        }
        return std::make_pair(d1, 0);
      };
      const auto z = shortest(GuidanceDirection::kCranial, GuidanceDirection::kCaudal);
      const auto u = shortest(GuidanceDirection::kMedial, GuidanceDirection::kLateral);
      if (z.second > 0) {
        EXPECT_EQ(g.direction, z.first);
        EXPECT_EQ(g.steps, z.second);
        EXPECT_FALSE(g.then_direction);
        ++single;
      } else if (u.second > 0) {
        EXPECT_EQ(g.direction, u.first);
        EXPECT_EQ(g.steps, u.second);
      }
      ProbePose q = p;
      for (int s = 0; s < g.steps; ++s) q = step_pose(q, g.direction, step);
      if (g.then_direction) {
        for (int s = 0; s < g.then_steps; ++s) q = step_pose(q, *g.then_direction, step);
      }
      EXPECT_TRUE(target_visible(model, q, target));
    }
  }
  EXPECT_GT(single, 50);
}

TEST(Oracle, LateralIsMirroredBySide) {
  EXPECT_EQ(step_pose({0.5, 0.0, LateralSide::kLeft}, GuidanceDirection::kLateral, 0.1).u, 0.1);
  EXPECT_EQ(step_pose({0.5, 0.0, LateralSide::kRight}, GuidanceDirection::kLateral, 0.1).u,
            -0.1);
  EXPECT_EQ(step_pose({1.0, 0.0, LateralSide::kLeft}, GuidanceDirection::kCranial, 0.1).z, 1.0);
}

TEST(Oracle, UnreachableTarget) {
  auto m = NeckModel::default_model();
  m.track(EntityClass::kTH).x0 = 5000;
  try {
    oracle_guidance(m, {0.5, 0.0, LateralSide::kLeft}, EntityClass::kTH);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnreachable);
  }
}
