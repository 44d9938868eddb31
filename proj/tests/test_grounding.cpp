#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "support/generators.hpp"
#include "ussg/anatomy.hpp"
#include "ussg/error.hpp"
#include "ussg/grounding.hpp"

using namespace ussg;
using namespace ussg::grounding;

namespace {

// Set USSG_UPDATE_GOLDEN=1 to rewrite the files after an intended change.
void expect_golden(const std::string& name, const std::string& actual) {
  const std::string path = std::string(USSG_TEST_DATA) + "/golden/" + name;
  if (std::getenv("USSG_UPDATE_GOLDEN")) {
    std::ofstream(path, std::ios::binary) << actual;
    return;
  }
  std::ifstream in(path, std::ios::binary);
  ASSERT_TRUE(in) << "missing " << path;
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(actual, ss.str()) << name;
}

Detection det(EntityClass c, double cx, double cy) { return {c, {cx - 20, cy - 20, 40, 40}, 1.0}; }

SceneGraph side_graph() {
  SceneGraph g;
  g.image_id = "s";
  g.width = 829;
  g.height = 770;
  g.detections = {det(EntityClass::kCCA, 300, 300), det(EntityClass::kCR, 450, 200)};
  return g;
}

SceneGraph neck_frame() {
  return anatomy::cross_section(anatomy::NeckModel::default_model(),
                                {0.5, 0.0, LateralSide::kLeft}, "golden");
}

}  // namespace

TEST(Side, RuleAndMirror) {
  const auto g = side_graph();
  EXPECT_EQ(infer_lateral_side(g), LateralSide::kRight);
  EXPECT_EQ(infer_lateral_side(flip_horizontal(g)), LateralSide::kLeft);
  EXPECT_EQ(infer_lateral_side(g, {false}), LateralSide::kLeft);
  auto no_cca = g;
  no_cca.detections.erase(no_cca.detections.begin());
  EXPECT_EQ(infer_lateral_side(no_cca), LateralSide::kUnknown);
  auto vb = g;
  vb.detections[1].cls = EntityClass::kVB;
  EXPECT_EQ(infer_lateral_side(vb), LateralSide::kRight);
}

TEST(Side, FlipDualityOnRandomGraphs) {
  gen::Rng rng(31);
  for (int i = 0; i < 1000; ++i) {
    const auto g = gen::valid_graph(rng, "r");
    const auto s = infer_lateral_side(g);
    const auto f = infer_lateral_side(flip_horizontal(g));
    EXPECT_EQ(f, opposite(s)) << i;
  }
}

TEST(Movement, WorkedValues) {
  SceneGraph a = side_graph();
  SceneGraph b = a;
  b.detections[0].box.x += 30;
  auto m = infer_lateral_movement(a, b);
  EXPECT_EQ(m.direction, MovementDirection::kImageLeft);
  EXPECT_EQ(m.magnitude_px, 30.0);
  EXPECT_EQ(m.anatomy_shift_px, 30.0);
  EXPECT_EQ(m.reference, EntityClass::kCCA);

  b = a;
  b.detections[0].box.x += 4;
  EXPECT_EQ(infer_lateral_movement(a, b).direction, MovementDirection::kStatic);

  b = a;
  b.detections = {det(EntityClass::kVB, 100, 100)};
  a.detections = {det(EntityClass::kTH, 100, 100)};
  EXPECT_EQ(infer_lateral_movement(a, b).direction, MovementDirection::kUnknown);

  b.width = 100;
  try {
    infer_lateral_movement(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(Movement, Antisymmetry) {
  gen::Rng rng(37);
  for (int i = 0; i < 500; ++i) {
    const auto a = gen::valid_graph(rng, "a");
    const auto b = gen::valid_graph(rng, "b");
    const auto ab = infer_lateral_movement(a, b);
    const auto ba = infer_lateral_movement(b, a);
    EXPECT_EQ(ab.magnitude_px, ba.magnitude_px);
    switch (ab.direction) {
      case MovementDirection::kImageLeft:
        EXPECT_EQ(ba.direction, MovementDirection::kImageRight);
        break;
      case MovementDirection::kImageRight:
        EXPECT_EQ(ba.direction, MovementDirection::kImageLeft);
        break;
      default: EXPECT_EQ(ba.direction, ab.direction);
    }
  }
}

TEST(Render, LineCounts) {
  auto g = neck_frame();
  g.triplets.resize(3);
  const auto sum = render_grounding(g, LateralSide::kRight, std::nullopt, TaskKind::kSummarization);
  EXPECT_EQ(sum.line_count(), 4u);
  EXPECT_EQ(sum.side_line, "Scanned side: right neck.");
  LateralMovement still;
  still.direction = MovementDirection::kStatic;
  const auto guide = render_grounding(g, LateralSide::kRight, still, TaskKind::kGuidance);
  EXPECT_EQ(guide.line_count(), 5u);
  EXPECT_EQ(*guide.movement_line, "Probe lateral movement: static.");
  EXPECT_TRUE(guide.text().ends_with("Probe lateral movement: static."));
  const auto ignored = render_grounding(g, LateralSide::kRight, still, TaskKind::kSummarization);
  EXPECT_EQ(ignored.text(), sum.text());
  EXPECT_EQ(side_line(LateralSide::kUnknown), "Scanned side: undetermined neck.");
  EXPECT_EQ(movement_line(MovementDirection::kImageLeft),
            "Probe lateral movement: toward image-left.");
  try {
    render_grounding(g, LateralSide::kRight, std::nullopt, TaskKind::kGuidance);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingMovement);
  }
}

TEST(Render, TripletLineFormat) {
  SceneGraph g = side_graph();
  g.detections.push_back(det(EntityClass::kTH, 420, 260));
  g.triplets = {{2, PredicateClass::kPartiallyEncases, 1, std::nullopt}};
  EXPECT_EQ(triplet_line(g, g.triplets[0]), "<Thyroid, partially encases, Cartilage Ring>");
}

TEST(Render, EveryTripletOnceInCanonicalOrder) {
  gen::Rng rng(41);
  for (int i = 0; i < 500; ++i) {
    const auto g = gen::valid_graph(rng, "r");
    const auto p = render_grounding(g, LateralSide::kLeft, std::nullopt, TaskKind::kSummarization);
    std::multiset<std::string> want;
    std::set<std::string> names;
    for (const auto& d : g.detections) names.insert(std::string(display_name(d.cls)));
    for (const auto& t : g.triplets) want.insert(triplet_line(g, t));
    EXPECT_EQ(std::multiset<std::string>(p.triplet_lines.begin(), p.triplet_lines.end()), want);
    const auto parsed = parse_user_message(render_user_message(p, "q"));
    ASSERT_EQ(parsed.triplets.size(), g.triplets.size());
    for (std::size_t k = 1; k < parsed.triplets.size(); ++k) {
      const auto& a = parsed.triplets[k - 1];
      const auto& b = parsed.triplets[k];
      EXPECT_LE(std::pair(index_of(a.subject), index_of(a.object)),
                std::pair(index_of(b.subject), index_of(b.object)));
    }
    for (const auto& t : parsed.triplets) {
      EXPECT_TRUE(names.count(std::string(display_name(t.subject))));
      EXPECT_TRUE(names.count(std::string(display_name(t.object))));
    }
    EXPECT_EQ(render_grounding(g, LateralSide::kLeft, std::nullopt, TaskKind::kSummarization).text(),
              p.text());
  }
}

TEST(Instruction, TemplatesEmbedQuery) {
  const auto s = render_task_instruction(TaskKind::kSummarization, "focus on the thyroid");
  EXPECT_NE(s.find("User query: focus on the thyroid"), std::string::npos);
  EXPECT_EQ(s, render_task_instruction(TaskKind::kSummarization, "focus on the thyroid"));
  const auto g = render_task_instruction(TaskKind::kGuidance, "where is the cartilage ring?");
  EXPECT_NE(g.find("where is the cartilage ring?"), std::string::npos);
  try {
    render_task_instruction(TaskKind::kGuidance, "");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyQuery);
  }
  EXPECT_THROW(task_template(TaskKind::kGuidance, 99), Error);
}

TEST(Instruction, PlaceholderRules) {
  EXPECT_EQ(render_template("a {QUERY} {y} {}", {{"QUERY", "1"}}), "a 1 {y} {}");
  EXPECT_EQ(render_template("[{SIDE}]", {}), "[]");
  EXPECT_THROW(render_template("{NOPE}", {}), Error);
  // Substituted values are not rescanned.
  EXPECT_EQ(render_template("{QUERY}", {{"QUERY", "{QUERY}"}}), "{QUERY}");
}

TEST(Parse, RoundTripsGuidancePrompt) {
  const auto g = neck_frame();
  LateralMovement m;
  m.direction = MovementDirection::kImageRight;
  const auto p = render_grounding(g, LateralSide::kLeft, m, TaskKind::kGuidance);
  const auto parsed = parse_user_message(render_user_message(p, "where is the thyroid?"));
  EXPECT_EQ(parsed.side, LateralSide::kLeft);
  EXPECT_EQ(parsed.movement, MovementDirection::kImageRight);
  EXPECT_EQ(parsed.query, "where is the thyroid?");
  EXPECT_EQ(parsed.triplets.size(), g.triplets.size());
  EXPECT_EQ(mentioned_entity("where is the thyroid?"), EntityClass::kTH);
  EXPECT_EQ(mentioned_entity("show me the jugular vein"), EntityClass::kIJV);
  EXPECT_THROW(parse_user_message("<Thyroid, hugs, Cartilage Ring>\nScanned side: left neck."),
               Error);
}

TEST(Golden, Prompts) {
  const auto g = neck_frame();
  const auto sum = render_grounding(g, infer_lateral_side(g), std::nullopt,
                                    TaskKind::kSummarization);
  expect_golden("summarize_user.txt", render_user_message(sum, "focus on the thyroid"));
  expect_golden("summarize_system.txt",
                render_task_instruction(TaskKind::kSummarization, "focus on the thyroid"));
  auto low = anatomy::cross_section(anatomy::NeckModel::default_model(),
                                    {0.1, 0.0, LateralSide::kRight}, "golden_low");
  const auto mv = infer_lateral_movement(g, low);
  const auto guide = render_grounding(low, infer_lateral_side(low), mv, TaskKind::kGuidance);
  expect_golden("guide_user.txt", render_user_message(guide, "where is the cartilage ring?"));
  expect_golden("guide_system.txt",
                render_task_instruction(TaskKind::kGuidance, "where is the cartilage ring?"));
}
