#include <gtest/gtest.h>

#include <httplib.h>

#include <filesystem>
#include <thread>

#include <unistd.h>

#include <json.hpp>

#include "support/generators.hpp"
#include "ussg/error.hpp"
#include "ussg/service.hpp"

using namespace ussg;
using namespace ussg::service;
using anatomy::GuidanceDirection;
using json = nlohmann::json;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kUsage;
}

QueryRequest guide(const std::string& q) {
  QueryRequest r;
  r.task = grounding::TaskKind::kGuidance;
  r.query = q;
  return r;
}

}  // namespace

TEST(Service, DeterministicIdsAndFrames) {
  ScanService a({});
  ScanService b({});
  const CreateOptions opts{{0.3, 0.1, LateralSide::kLeft}, ""};
  const auto ia = a.create_session(opts);
  const auto ib = b.create_session(opts);
  EXPECT_EQ(ia, "s000001");
  EXPECT_EQ(ia, ib);
  EXPECT_EQ(frame_to_json(a.current_frame(ia)), frame_to_json(b.current_frame(ib)));
  EXPECT_EQ(a.current_frame(ia).graph.image_id, "s000001_f000000");
  EXPECT_FALSE(a.current_frame(ia).movement);
}

TEST(Service, UnknownSessionAndBadConfig) {
  ScanService s({});
  EXPECT_EQ(code_of([&] { s.current_frame("nope"); }), ErrorCode::kNoSession);
  EXPECT_EQ(code_of([&] { s.move("nope", {}); }), ErrorCode::kNoSession);
  EXPECT_EQ(code_of([&] { s.query("nope", guide("q")); }), ErrorCode::kNoSession);
  EXPECT_EQ(code_of([&] { s.create_session({{2.0, 0.0, LateralSide::kLeft}, ""}); }),
            ErrorCode::kBadConfig);
  EXPECT_EQ(code_of([&] { s.create_session({{}, "missing"}); }), ErrorCode::kBadConfig);
  const auto id = s.create_session({});
  EXPECT_TRUE(s.close_session(id));
  EXPECT_FALSE(s.close_session(id));
}

TEST(Service, GuidanceNeedsTwoFrames) {
  ScanService s({});
  const auto id = s.create_session({});
  EXPECT_EQ(code_of([&] { s.query(id, guide("where is the thyroid?")); }),
            ErrorCode::kPrecondition);
  auto q = guide("where is the thyroid?");
  q.allow_unknown_movement = true;
  const auto a = s.query(id, q);
  EXPECT_NE(a.user.find("Probe lateral movement: undetermined."), std::string::npos);
  s.move(id, {});
  const auto b = s.query(id, guide("where is the thyroid?"));
  EXPECT_NE(b.user.find("Probe lateral movement: static."), std::string::npos);
  EXPECT_EQ(b.request_id, id + "-q0002");
}

TEST(Service, EmptyQueryRejected) {
  ScanService s({});
  const auto id = s.create_session({});
  QueryRequest q;
  q.query = "";
  EXPECT_EQ(code_of([&] { s.query(id, q); }), ErrorCode::kEmptyQuery);
}

TEST(Service, ToggleSideMirrorsFrame) {
  ScanService s({});
  const auto id = s.create_session({{0.5, 0.2, LateralSide::kLeft}, ""});
  const auto before = s.current_frame(id);
  MoveCommand t;
  t.toggle_side = true;
  const auto after = s.move(id, t);
  EXPECT_EQ(after.pose, (ProbePose{0.5, -0.2, LateralSide::kRight}));
  auto mirrored = flip_horizontal(before.graph);
  mirrored.image_id = after.graph.image_id;
  EXPECT_EQ(after.graph, mirrored);
  EXPECT_EQ(before.side, LateralSide::kLeft);
  EXPECT_EQ(after.side, LateralSide::kRight);
}

TEST(Service, MovesClampAndStep) {
  const ProbePose p{0.98, 0.0, LateralSide::kRight};
  MoveCommand m;
  m.dz = 0.5;
  EXPECT_EQ(apply_move(p, m, 0.05).z, 1.0);
  MoveCommand d;
  d.direction = GuidanceDirection::kLateral;
  d.steps = 2;
  EXPECT_DOUBLE_EQ(apply_move(p, d, 0.05).u, -0.1);
}

TEST(Service, SummaryAuditMatchesTranscript) {
  const auto path = (std::filesystem::temp_directory_path() /
                     ("svc_" + std::to_string(::getpid()) + ".jsonl"))
                        .string();
  std::filesystem::remove(path);
  ServiceConfig cfg;
  cfg.transcript_path = path;
  ScanService s(cfg);
  const auto id = s.create_session({});
  QueryRequest q;
  q.query = "focus on the thyroid";
  const auto a = s.query(id, q);
  EXPECT_NE(a.response.find("The Thyroid"), std::string::npos) << a.response;
  const auto recs = llm::TranscriptLog::read(path);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].request_id, a.request_id);
  EXPECT_EQ(recs[0].system, a.system);
  EXPECT_EQ(recs[0].user, a.user);
  EXPECT_EQ(recs[0].response, a.response);
  EXPECT_EQ(recs[0].meta.at("task"), "summarize");
  std::filesystem::remove(path);
}

TEST(Text, DirectionWords) {
  EXPECT_EQ(extract_directions("Slide up toward the head, then medially.", LateralSide::kLeft),
            (std::vector<GuidanceDirection>{GuidanceDirection::kCranial,
                                            GuidanceDirection::kMedial}));
  EXPECT_EQ(extract_directions("move left", LateralSide::kLeft),
            (std::vector<GuidanceDirection>{GuidanceDirection::kLateral}));
  EXPECT_EQ(extract_directions("move left", LateralSide::kRight),
            (std::vector<GuidanceDirection>{GuidanceDirection::kMedial}));
  EXPECT_TRUE(extract_directions("move left", LateralSide::kUnknown).empty());
  const auto moves =
      moves_from_text("Move in the caudal direction by 3 steps, then lateral by 2 steps.",
                      LateralSide::kLeft);
  ASSERT_EQ(moves.size(), 2u);
  EXPECT_EQ(moves[0].direction, GuidanceDirection::kCaudal);
  EXPECT_EQ(moves[0].steps, 3);
  EXPECT_EQ(moves[1].steps, 2);
}

TEST(Evaluate, MembershipAndParseError) {
  llm::TranscriptRecord a;
  a.request_id = "a";
  a.response = "Go cranial, not caudal.";
  a.meta = {{"task", "guide"}, {"oracle_direction", "caudal"}, {"side", "left"}};
  llm::TranscriptRecord b = a;
  b.request_id = "b";
  b.response = "Go medially.";
  llm::TranscriptRecord c = a;
  c.request_id = "c";
  c.meta["oracle_direction"] = "visible";
  const auto ev = evaluate_guidance({a, b, c});
  EXPECT_EQ(ev.records, 3u);
  EXPECT_EQ(ev.scored, 2u);
  EXPECT_EQ(ev.correct, 1u);
  EXPECT_DOUBLE_EQ(ev.accuracy, 0.5);
  llm::TranscriptRecord sum = a;
  sum.meta["task"] = "summarize";
  EXPECT_EQ(code_of([&] { evaluate_guidance({sum}); }), ErrorCode::kParse);
}

TEST(ClosedLoop, OracleMockReachesTarget) {
  ScanService s({});
  gen::Rng rng(77);
  int runs = 0;
  for (int attempt = 0; attempt < 400 && runs < 30; ++attempt) {
    const ProbePose p{gen::uniform(rng, 0, 20) / 20.0, gen::uniform(rng, -10, 10) / 20.0,
                      attempt % 2 ? LateralSide::kLeft : LateralSide::kRight};
    const auto target = kAllEntities[static_cast<std::size_t>(gen::uniform(rng, 0, 4))];
    const auto& model = s.config().model;
    if (anatomy::target_visible(model, p, target)) continue;
    const auto oracle = anatomy::oracle_guidance(model, p, target, s.config().step);
    const auto id = s.create_session({p, ""});
    s.move(id, {});
    const auto a = s.query(id, guide("where is the " +
                                     std::string(display_name(target)) + "?"));
    ASSERT_EQ(a.target, target);
    ASSERT_TRUE(a.direction_match.value_or(false)) << a.response;
    int used = 0;
    for (const auto& m : moves_from_text(a.response, a.side)) {
      s.move(id, m);
      used += m.steps;
    }
    EXPECT_LE(used, oracle.total_steps());
    EXPECT_TRUE(anatomy::target_visible(model, s.pose(id), target)) << a.response;
    bool seen = false;
    for (const auto& d : s.current_frame(id).graph.detections) seen = seen || d.cls == target;
    EXPECT_TRUE(seen);
    s.close_session(id);
    ++runs;
  }
  EXPECT_EQ(runs, 30);
}

TEST(Config, ParsesAndRejectsUnknownKeys) {
  const auto cfg = parse_service_config(
      R"({"step": 0.1, "history_limit": 8, "noise": {"seed": 3, "box_jitter_px": 2},)"
      R"( "backends": {"mock": {"kind": "mock"}}})");
  EXPECT_EQ(cfg.step, 0.1);
  EXPECT_EQ(cfg.history_limit, 8u);
  EXPECT_EQ(cfg.noise.seed, 3u);
  EXPECT_EQ(code_of([&] { parse_service_config(R"({"stepp": 1})"); }), ErrorCode::kBadConfig);
}

TEST(Http, RoutesRoundTrip) {
  ScanService svc({});
  HttpFrontEnd fe(svc);
  const int port = fe.bind_any("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&fe] { fe.run(); });
  httplib::Client c("127.0.0.1", port);

  auto health = c.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);

  auto created = c.Post("/sessions", R"({"z":0.1,"u":0.0,"side":"left"})", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  const auto cj = json::parse(created->body);
  const std::string id = cj["id"];
  EXPECT_EQ(cj["frame"]["index"], 0);

  auto early = c.Post("/sessions/" + id + "/query",
                      R"({"task":"guide","query":"where is the thyroid?"})", "application/json");
  EXPECT_EQ(early->status, 409);
  EXPECT_EQ(json::parse(early->body)["error"]["code"], "PRECONDITION");

  auto moved = c.Post("/sessions/" + id + "/move", R"({"dz":0.0})", "application/json");
  EXPECT_EQ(json::parse(moved->body)["movement"]["direction"], "static");

  auto q = c.Post("/sessions/" + id + "/query",
                  R"({"task":"guide","query":"where is the thyroid?"})", "application/json");
  ASSERT_EQ(q->status, 200);
  const auto qj = json::parse(q->body);
  EXPECT_EQ(qj["audit"]["match"], true);
  EXPECT_EQ(qj["audit"]["oracle"]["direction"], "cranial");

  auto hist = c.Get("/sessions/" + id + "/history");
  const auto hj = json::parse(hist->body);
  EXPECT_EQ(hj["frames"].size(), 2u);
  ASSERT_EQ(hj["chats"].size(), 1u);
  EXPECT_EQ(hj["chats"][0]["prompt"], qj["prompt"]);

  auto bad = c.Post("/sessions/" + id + "/move", R"({"direction":"sideways"})",
                    "application/json");
  EXPECT_EQ(bad->status, 400);
  auto junk = c.Post("/sessions/" + id + "/move", "{", "application/json");
  EXPECT_EQ(junk->status, 400);

  auto del = c.Delete("/sessions/" + id);
  EXPECT_EQ(del->status, 204);
  auto gone = c.Get("/sessions/" + id + "/frame");
  EXPECT_EQ(gone->status, 404);

  fe.stop();
  t.join();
}
