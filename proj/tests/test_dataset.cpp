#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "support/generators.hpp"
#include "ussg/dataset.hpp"
#include "ussg/error.hpp"

using namespace ussg;

namespace {

std::string fixture(const std::string& name) {
  std::ifstream in(std::string(USSG_TEST_DATA) + "/fixtures/dataset/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ErrorCode code_of(const std::string& text, ParseOptions opts = {}) {
  try {
    parse_dataset(text, opts);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kUsage;
}

}  // namespace

TEST(Parse, MinimalFile) {
  const auto d = parse_dataset(fixture("valid_minimal.json"));
  ASSERT_EQ(d.images.size(), 1u);
  EXPECT_EQ(d.images[0].boxes.size(), 2u);
  EXPECT_EQ(d.images[0].relations.size(), 1u);
  EXPECT_EQ(d.images[0].side, LateralSide::kLeft);
}

TEST(Parse, FixturesReachEveryCode) {
  const std::pair<const char*, ErrorCode> cases[] = {
      {"syntax.json", ErrorCode::kSyntax},
      {"schema.json", ErrorCode::kSchema},
      {"schema_extra_field.json", ErrorCode::kSchema},
      {"vocab.json", ErrorCode::kVocab},
      {"vocab_predicate.json", ErrorCode::kVocab},
      {"ref.json", ErrorCode::kRef},
      {"bounds.json", ErrorCode::kBounds},
      {"self_relation.json", ErrorCode::kSelfRelation},
      {"duplicate_pair.json", ErrorCode::kDuplicatePair},
      {"duplicate_triplet.json", ErrorCode::kDuplicateTriplet},
      {"duplicate_id.json", ErrorCode::kDuplicateId},
  };
  for (const auto& [file, code] : cases) {
    EXPECT_EQ(code_of(fixture(file)), code) << file;
  }
}

TEST(Parse, RefErrorNamesImageAndField) {
  try {
    parse_dataset(fixture("ref.json"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRef);
    EXPECT_EQ(e.path().rfind("images[0].relations[0]", 0), 0u) << e.path();
    EXPECT_NE(std::string(e.what()).find("img0"), std::string::npos) << e.what();
  }
}

TEST(Parse, LenientModeWarnsOnExtraFields) {
  std::vector<std::string> warnings;
  const auto d = parse_dataset(fixture("schema_extra_field.json"), {false}, &warnings);
  EXPECT_EQ(d.images.size(), 1u);
  EXPECT_FALSE(warnings.empty());
}

TEST(Write, EmptyFileHasHeader) {
  const std::string text = write_dataset({});
  EXPECT_NE(text.find("\"images\": []"), std::string::npos);
  EXPECT_EQ(parse_dataset(text), DatasetFile{});
}

TEST(RoundTrip, GeneratedDatasets) {
  gen::Rng rng(2024);
  for (int i = 0; i < 100; ++i) {
    const auto d = gen::dataset(rng);
    const std::string text = write_dataset(d);
    const auto back = parse_dataset(text);
    ASSERT_EQ(back, d) << "dataset " << i;
    EXPECT_EQ(write_dataset(back), text);
    for (const auto& img : back.images) EXPECT_TRUE(validate(img.to_scene_graph()).empty());
  }
}

TEST(Augment, DoublesAndSwapsSides) {
  gen::Rng rng(9);
  DatasetFile d;
  for (int i = 0; i < 262; ++i) {
    const LateralSide s[] = {LateralSide::kLeft, LateralSide::kRight, LateralSide::kUnknown};
    d.images.push_back(ImageRecord::from_scene_graph(
        gen::valid_graph(rng, "us_" + std::to_string(i)), s[i % 3]));
  }
  const auto a = augment_flip(d);
  ASSERT_EQ(a.images.size(), 524u);
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    const auto& src = d.images[i];
    const auto& copy = a.images[d.images.size() + i];
    EXPECT_EQ(a.images[i], src);
    EXPECT_EQ(copy.id, src.id + "_hf");
    EXPECT_EQ(copy.side, opposite(src.side));
    EXPECT_EQ(copy.relations, src.relations);
    ASSERT_EQ(copy.boxes.size(), src.boxes.size());
    for (std::size_t b = 0; b < src.boxes.size(); ++b) {
      EXPECT_EQ(copy.boxes[b].cls, src.boxes[b].cls);
      EXPECT_EQ(copy.boxes[b].x, src.width - src.boxes[b].x - src.boxes[b].w);
    }
  }
  try {
    augment_flip(a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDuplicateId);
  }
}

TEST(Replay, ServesStoredGraphs) {
  const auto d = parse_dataset(fixture("scored.json"));
  ReplayPredictor p(d);
  EXPECT_EQ(p.predict({"img0", std::nullopt}), d.images[0].to_scene_graph());
  try {
    p.predict({"nope", std::nullopt});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownImage);
  }
}

TEST(Replay, RejectsUnscoredInput) {
  try {
    ReplayPredictor p(parse_dataset(fixture("valid_minimal.json")));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingScores);
  }
}
