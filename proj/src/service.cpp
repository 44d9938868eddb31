#include "ussg/service.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "ussg/error.hpp"

namespace ussg::service {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, path, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

llm::BackendConfig default_mock() {
  llm::BackendConfig b;
  b.kind = llm::BackendKind::kMock;
  b.mock_mode = llm::MockMode::kOracle;
  return b;
}

}  // namespace

void ServiceConfig::check() const {
  model.check();
  noise.check();
  if (!(step > 0.0 && step <= 1.0)) throw Error(ErrorCode::kBadConfig, "step", "must be in (0, 1]");
  if (history_limit < 2) throw Error(ErrorCode::kBadConfig, "history_limit", "must be >= 2");
  movement.check();
  for (const auto& [name, b] : backends) b.check();
  if (!backends.empty() && backends.count(default_backend) == 0) {
    throw Error(ErrorCode::kBadConfig, "default_backend",
                "no backend named '" + default_backend + "'");
  }
}

ServiceConfig parse_service_config(std::string_view json_text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kBadConfig, "config", e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kBadConfig, "config", "must be a JSON object");
  static const std::set<std::string> kKnown = {
      "model_file", "model", "noise", "step", "history_limit", "default_backend", "backends",
      "transcript", "allow_single_frame_guidance", "static_fraction"};
  for (const auto& [k, v] : j.items()) {
    if (kKnown.count(k) == 0) throw Error(ErrorCode::kBadConfig, k, "unknown config field");
  }

  ServiceConfig cfg;
  try {
    if (j.contains("model_file")) {
      cfg.model = anatomy::read_model_file(resolve(base_dir, j["model_file"].get<std::string>()));
    } else if (j.contains("model")) {
      cfg.model = anatomy::parse_model(j["model"].dump());
    }
    if (j.contains("noise")) {
      const json& n = j["noise"];
      cfg.noise.seed = n.value("seed", cfg.noise.seed);
      cfg.noise.box_jitter_px = n.value("box_jitter_px", 0.0);
      cfg.noise.drop_probability = n.value("drop_probability", 0.0);
      cfg.noise.score_noise = n.value("score_noise", 0.0);
      cfg.noise.spurious_triplet_probability = n.value("spurious_triplet_probability", 0.0);
    }
    cfg.step = j.value("step", cfg.step);
    cfg.history_limit = j.value("history_limit", cfg.history_limit);
    cfg.default_backend = j.value("default_backend", cfg.default_backend);
    if (j.contains("backends")) {
      for (const auto& [name, b] : j["backends"].items()) {
        cfg.backends[name] = llm::parse_backend_config(b.dump());
      }
    }
    if (j.contains("transcript")) {
      cfg.transcript_path = resolve(base_dir, j["transcript"].get<std::string>());
    }
    cfg.allow_single_frame_guidance =
        j.value("allow_single_frame_guidance", cfg.allow_single_frame_guidance);
    cfg.movement.static_fraction = j.value("static_fraction", cfg.movement.static_fraction);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadConfig, "config", e.what());
  }
  cfg.check();
  return cfg;
}

ServiceConfig read_service_config(const std::string& path) {
  const std::string dir = fs::path(path).parent_path().string();
  return parse_service_config(slurp(path), dir.empty() ? "." : dir);
}

ProbePose apply_move(const ProbePose& pose, const MoveCommand& cmd, double step) {
  ProbePose p = pose;
  if (cmd.toggle_side) {
    p.u = -p.u;
    p.side = opposite(p.side);
  }
  if (cmd.direction) {
    for (int i = 0; i < cmd.steps; ++i) p = anatomy::step_pose(p, *cmd.direction, step);
  }
  p.z = std::clamp(p.z + cmd.dz, 0.0, 1.0);
  p.u = std::clamp(p.u + cmd.du, -1.0, 1.0);
  return p;
}

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

struct ScanService::Session {
  std::string id;
  std::string backend;
  std::mutex mu;
  ProbePose pose;
  std::deque<Frame> frames;
  std::deque<QueryAudit> chats;
  std::uint64_t next_frame = 0;
  std::uint64_t next_query = 1;
};

ScanService::ScanService(ServiceConfig cfg) : ScanService(std::move(cfg), nullptr) {}

ScanService::ScanService(ServiceConfig cfg, std::shared_ptr<llm::Gateway> gateway)
    : cfg_(std::move(cfg)) {
  if (cfg_.backends.empty()) cfg_.backends[cfg_.default_backend] = default_mock();
  cfg_.check();
  if (!cfg_.transcript_path.empty()) {
    log_ = std::make_shared<llm::TranscriptLog>(cfg_.transcript_path);
  }
  if (gateway) {
    gateway_ = std::move(gateway);
  } else {
    gateway_ = std::make_shared<llm::Gateway>(log_);
    for (const auto& [name, b] : cfg_.backends) gateway_->add_backend(name, b);
  }
  sim_ = std::make_unique<anatomy::SimulatorPredictor>(cfg_.model, cfg_.noise);
}

ScanService::~ScanService() = default;

std::shared_ptr<ScanService::Session> ScanService::find(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::kNoSession, id, "no such session");
  return it->second;
}

Frame ScanService::capture(Session& s, const ProbePose& pose) const {
  Frame f;
  f.index = s.next_frame++;
  f.pose = pose;
  char id[96];
  std::snprintf(id, sizeof id, "%s_f%06llu", s.id.c_str(),
                static_cast<unsigned long long>(f.index));
  // The simulator keeps no mutable state, so sharing it across sessions is safe.
  f.graph = sim_->predict({id, pose});
  f.side = grounding::infer_lateral_side(f.graph, cfg_.side_convention);
  if (!s.frames.empty()) {
    f.movement = grounding::infer_lateral_movement(s.frames.back().graph, f.graph, cfg_.movement);
  }
  s.pose = pose;
  s.frames.push_back(f);
  while (s.frames.size() > cfg_.history_limit) s.frames.pop_front();
  return f;
}

std::string ScanService::create_session(const CreateOptions& opts) {
  if (!opts.pose.valid()) throw Error(ErrorCode::kBadConfig, "pose", "probe pose out of range");
  const std::string backend = opts.backend.empty() ? cfg_.default_backend : opts.backend;
  if (!gateway_->has_backend(backend)) {
    throw Error(ErrorCode::kBadConfig, "backend", "unknown backend '" + backend + "'");
  }
  auto s = std::make_shared<Session>();
  s->backend = backend;
  {
    std::unique_lock lock(mu_);
    char id[32];
    std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(next_id_++));
    s->id = id;
    sessions_[s->id] = s;
  }
  std::lock_guard lock(s->mu);
  capture(*s, opts.pose);
  return s->id;
}

bool ScanService::close_session(const std::string& id) {
  std::unique_lock lock(mu_);
  return sessions_.erase(id) > 0;
}

std::vector<std::string> ScanService::session_ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

Frame ScanService::move(const std::string& id, const MoveCommand& cmd) {
  if (cmd.steps < 0) throw Error(ErrorCode::kBadConfig, "steps", "must be >= 0");
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return capture(*s, apply_move(s->pose, cmd, cfg_.step));
}

Frame ScanService::current_frame(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->frames.back();
}

std::vector<Frame> ScanService::history(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return {s->frames.begin(), s->frames.end()};
}

ProbePose ScanService::pose(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->pose;
}

QueryAudit ScanService::query(const std::string& id, const QueryRequest& req) {
  using grounding::TaskKind;
  auto s = find(id);
  QueryAudit a;
  llm::ChatRequest chat;
  {
    std::lock_guard lock(s->mu);
    const Frame& frame = s->frames.back();

    std::optional<LateralMovement> movement = frame.movement;
    if (req.task == TaskKind::kGuidance && !movement) {
      if (!cfg_.allow_single_frame_guidance && !req.allow_unknown_movement) {
        throw Error(ErrorCode::kPrecondition, id,
                    "guidance needs two frames; move the probe first");
      }
      movement = LateralMovement{};
    }

    a.session_id = s->id;
    a.frame_index = frame.index;
    a.pose = frame.pose;
    a.task = req.task;
    a.query = req.query;
    a.side = frame.side;
    a.movement = req.task == TaskKind::kGuidance ? movement : std::nullopt;
    a.missing = missing_entities(frame.graph);
    a.backend = req.backend.empty() ? s->backend : req.backend;

    const auto prompt =
        grounding::render_grounding(frame.graph, frame.side, a.movement, req.task);
    a.triplet_lines = prompt.triplet_lines;
    a.system = grounding::render_task_instruction(req.task, req.query);
    a.user = grounding::render_user_message(prompt, req.query);

    char rid[64];
    std::snprintf(rid, sizeof rid, "%s-q%04llu", s->id.c_str(),
                  static_cast<unsigned long long>(s->next_query++));
    a.request_id = rid;
  }

  a.target = grounding::mentioned_entity(req.query);
  if (!a.target && !a.missing.empty()) a.target = a.missing.front();

  const anatomy::NeckModel& model = cfg_.model;
  const ProbePose pose = a.pose;
  const double step = cfg_.step;
  if (req.task == TaskKind::kGuidance && a.target) {
    try {
      a.oracle = anatomy::oracle_guidance(model, pose, *a.target, step);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUnreachable) throw;
      a.oracle_unreachable = true;
    }
  }

  chat.request_id = a.request_id;
  chat.backend = a.backend;
  chat.system = a.system;
  chat.user = a.user;
  chat.meta["session"] = a.session_id;
  chat.meta["task"] = std::string(grounding::task_name(req.task));
  chat.meta["frame"] = std::to_string(a.frame_index);
  chat.meta["side"] = std::string(side_name(a.side));
  if (a.target) chat.meta["target"] = std::string(short_key(*a.target));
  if (req.task == TaskKind::kGuidance) {
    if (a.oracle && !a.oracle->already_visible) {
      chat.meta["oracle_direction"] = std::string(anatomy::direction_name(a.oracle->direction));
    } else if (a.oracle) {
      chat.meta["oracle_direction"] = "visible";
    } else {
      chat.meta["oracle_direction"] = "none";
    }
    chat.guidance_oracle = [&model, pose, step](EntityClass target) {
      return anatomy::oracle_guidance(model, pose, target, step);
    };
  }

  a.response = gateway_->send(chat).text;

  if (req.task == TaskKind::kGuidance) {
    a.extracted = extract_directions(a.response, a.side);
    if (a.oracle && !a.oracle->already_visible) {
      a.direction_match = std::find(a.extracted.begin(), a.extracted.end(),
                                    a.oracle->direction) != a.extracted.end();
    }
  }

  std::lock_guard lock(s->mu);
  s->chats.push_back(a);
  while (s->chats.size() > cfg_.history_limit) s->chats.pop_front();
  return a;
}

std::vector<QueryAudit> ScanService::chats(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return {s->chats.begin(), s->chats.end()};
}

// ---------------------------------------------------------------------------
// Direction extraction and evaluation
// ---------------------------------------------------------------------------

namespace {

std::optional<anatomy::GuidanceDirection> direction_word(std::string_view tok,
                                                         LateralSide side) {
  using anatomy::GuidanceDirection;
  static const std::map<std::string, GuidanceDirection, std::less<>> kWords = {
      {"cranial", GuidanceDirection::kCranial},   {"cranially", GuidanceDirection::kCranial},
      {"up", GuidanceDirection::kCranial},        {"upward", GuidanceDirection::kCranial},
      {"upwards", GuidanceDirection::kCranial},   {"superior", GuidanceDirection::kCranial},
      {"superiorly", GuidanceDirection::kCranial}, {"head", GuidanceDirection::kCranial},
      {"headward", GuidanceDirection::kCranial},  {"caudal", GuidanceDirection::kCaudal},
      {"caudally", GuidanceDirection::kCaudal},   {"down", GuidanceDirection::kCaudal},
      {"downward", GuidanceDirection::kCaudal},   {"downwards", GuidanceDirection::kCaudal},
      {"inferior", GuidanceDirection::kCaudal},   {"inferiorly", GuidanceDirection::kCaudal},
      {"feet", GuidanceDirection::kCaudal},       {"medial", GuidanceDirection::kMedial},
      {"medially", GuidanceDirection::kMedial},   {"midline", GuidanceDirection::kMedial},
      {"inward", GuidanceDirection::kMedial},     {"inwards", GuidanceDirection::kMedial},
      {"lateral", GuidanceDirection::kLateral},   {"laterally", GuidanceDirection::kLateral},
      {"outward", GuidanceDirection::kLateral},   {"outwards", GuidanceDirection::kLateral},
  };
  if (auto it = kWords.find(tok); it != kWords.end()) return it->second;
  if ((tok == "left" || tok == "right") && side != LateralSide::kUnknown) {
    // Toward the patient's own scanned side is lateral.
    const bool toward_scanned = (tok == "left") == (side == LateralSide::kLeft);
    return toward_scanned ? GuidanceDirection::kLateral : GuidanceDirection::kMedial;
  }
  return std::nullopt;
}

}  // namespace

std::vector<anatomy::GuidanceDirection> extract_directions(std::string_view text,
                                                           LateralSide side) {
  std::vector<anatomy::GuidanceDirection> out;
  for (const auto& tok : metrics::tokenize(text)) {
    const auto d = direction_word(tok, side);
    if (d && std::find(out.begin(), out.end(), *d) == out.end()) out.push_back(*d);
  }
  return out;
}

std::vector<MoveCommand> moves_from_text(std::string_view text, LateralSide side) {
  std::vector<MoveCommand> out;
  bool counted = false;
  for (const auto& tok : metrics::tokenize(text)) {
    if (const auto d = direction_word(tok, side)) {
      MoveCommand m;
      m.direction = d;
      m.steps = 1;
      out.push_back(m);
      counted = false;
    } else if (!out.empty() && !counted && !tok.empty() &&
               std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }) &&
               tok.size() < 6) {
      out.back().steps = std::stoi(tok);
      counted = true;
    }
  }
  return out;
}

GuidanceEvaluation evaluate_guidance(const std::vector<llm::TranscriptRecord>& records,
                                     const std::map<std::string, std::string>* references,
                                     const metrics::TextMetricConfig& text_cfg) {
  GuidanceEvaluation ev;
  std::vector<metrics::TextPair> pairs;
  for (const auto& rec : records) {
    auto task = rec.meta.find("task");
    if (task == rec.meta.end() || task->second != "guide") continue;
    ++ev.records;
    if (references && rec.response) {
      auto ref = references->find(rec.request_id);
      if (ref != references->end()) pairs.push_back({rec.request_id, *rec.response, ref->second});
    }
    auto expected = rec.meta.find("oracle_direction");
    if (expected == rec.meta.end() || !rec.response) continue;
    const auto dir = anatomy::direction_from_name(expected->second);
    if (!dir) continue;
    LateralSide side = LateralSide::kUnknown;
    if (auto it = rec.meta.find("side"); it != rec.meta.end()) {
      side = side_from_name(it->second).value_or(LateralSide::kUnknown);
    }
    GuidanceItem item;
    item.request_id = rec.request_id;
    item.expected = expected->second;
    item.extracted = extract_directions(*rec.response, side);
    item.correct =
        std::find(item.extracted.begin(), item.extracted.end(), *dir) != item.extracted.end();
    ++ev.scored;
    if (item.correct) ++ev.correct;
    ev.items.push_back(std::move(item));
  }
  if (ev.records == 0) throw Error(ErrorCode::kParse, "transcript", "no guidance records");
  ev.accuracy = ev.scored ? static_cast<double>(ev.correct) / static_cast<double>(ev.scored) : 0.0;
  if (!pairs.empty()) ev.text = metrics::score_texts(pairs, text_cfg);
  return ev;
}

// ---------------------------------------------------------------------------
// JSON views
// ---------------------------------------------------------------------------

namespace {

ordered_json pose_json(const ProbePose& p) {
  return {{"z", p.z}, {"u", p.u}, {"side", std::string(side_name(p.side))}};
}

ordered_json movement_json(const LateralMovement& m) {
  ordered_json j;
  j["direction"] = std::string(movement_name(m.direction));
  j["magnitude_px"] = m.magnitude_px;
  j["anatomy_shift_px"] = m.anatomy_shift_px;
  j["reference"] = m.reference ? ordered_json(std::string(short_key(*m.reference))) : nullptr;
  return j;
}

ordered_json guidance_json(const anatomy::Guidance& g) {
  ordered_json j;
  j["already_visible"] = g.already_visible;
  if (!g.already_visible) {
    j["direction"] = std::string(anatomy::direction_name(g.direction));
    j["steps"] = g.steps;
    if (g.then_direction) {
      j["then_direction"] = std::string(anatomy::direction_name(*g.then_direction));
      j["then_steps"] = g.then_steps;
    }
  }
  return j;
}

ordered_json frame_json(const Frame& f) {
  ordered_json j;
  j["index"] = f.index;
  j["pose"] = pose_json(f.pose);
  j["image_id"] = f.graph.image_id;
  j["width"] = f.graph.width;
  j["height"] = f.graph.height;
  ordered_json boxes = ordered_json::array();
  for (const auto& d : f.graph.detections) {
    ordered_json b;
    b["category"] = std::string(short_key(d.cls));
    b["bbox"] = {d.box.x, d.box.y, d.box.w, d.box.h};
    if (d.score) b["score"] = *d.score;
    boxes.push_back(b);
  }
  j["boxes"] = boxes;
  ordered_json rels = ordered_json::array();
  for (const auto& t : f.graph.triplets) {
    ordered_json r;
    r["sub"] = t.sub;
    r["predicate"] = std::string(display_string(t.pred));
    r["obj"] = t.obj;
    if (t.score) r["score"] = *t.score;
    rels.push_back(r);
  }
  j["relations"] = rels;
  j["side"] = std::string(side_name(f.side));
  j["movement"] = f.movement ? movement_json(*f.movement) : ordered_json(nullptr);
  ordered_json missing = ordered_json::array();
  for (auto cls : missing_entities(f.graph)) missing.push_back(std::string(short_key(cls)));
  j["missing"] = missing;
  return j;
}

}  // namespace

std::string frame_to_json(const Frame& f) { return frame_json(f).dump(); }

namespace {

ordered_json audit_json(const QueryAudit& a) {
  ordered_json audit;
  audit["session_id"] = a.session_id;
  audit["frame_index"] = a.frame_index;
  audit["pose"] = pose_json(a.pose);
  audit["task"] = std::string(grounding::task_name(a.task));
  audit["query"] = a.query;
  audit["backend"] = a.backend;
  audit["triplets"] = a.triplet_lines;
  audit["side"] = std::string(side_name(a.side));
  audit["movement"] = a.movement ? movement_json(*a.movement) : ordered_json(nullptr);
  ordered_json missing = ordered_json::array();
  for (auto cls : a.missing) missing.push_back(std::string(short_key(cls)));
  audit["missing"] = missing;
  audit["target"] = a.target ? ordered_json(std::string(short_key(*a.target))) : nullptr;
  if (a.task == grounding::TaskKind::kGuidance) {
    audit["oracle"] = a.oracle ? guidance_json(*a.oracle) : ordered_json(nullptr);
    audit["oracle_unreachable"] = a.oracle_unreachable;
    ordered_json ex = ordered_json::array();
    for (auto d : a.extracted) ex.push_back(std::string(anatomy::direction_name(d)));
    audit["extracted_directions"] = ex;
    audit["match"] = a.direction_match ? ordered_json(*a.direction_match) : nullptr;
  }

  ordered_json j;
  j["request_id"] = a.request_id;
  j["prompt"] = {{"system", a.system}, {"user", a.user}};
  j["response"] = a.response;
  j["audit"] = audit;
  return j;
}

}  // namespace

std::string audit_to_json(const QueryAudit& a) { return audit_json(a).dump(); }

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNoSession: return 404;
    case ErrorCode::kPrecondition: return 409;
    case ErrorCode::kTimeout: return 504;
    case ErrorCode::kAuth:
    case ErrorCode::kTransport:
    case ErrorCode::kBadResponse:
    case ErrorCode::kUnscripted: return 502;
    case ErrorCode::kIo: return 500;
    default: return 400;
  }
}

void send_error(httplib::Response& res, const Error& e) {
  ordered_json j;
  j["error"] = {{"code", std::string(error_code_name(e.code()))},
                {"path", e.path()},
                {"message", e.detail()}};
  res.status = http_status(e.code());
  res.set_content(j.dump(), "application/json");
}

json body_json(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorCode::kParse, "body", "expected a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, "body", e.what());
  }
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const json::exception& e) {
      send_error(res, Error(ErrorCode::kParse, "body", e.what()));
    }
  };
}

}  // namespace

HttpFrontEnd::HttpFrontEnd(ScanService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  routes();
}

HttpFrontEnd::~HttpFrontEnd() { stop(); }

void HttpFrontEnd::routes() {
  auto& svc = service_;
  server_->Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });

  server_->Post("/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const json j = body_json(req);
    CreateOptions opts;
    opts.pose.z = j.value("z", opts.pose.z);
    opts.pose.u = j.value("u", opts.pose.u);
    if (j.contains("side")) {
      auto side = side_from_name(j["side"].get<std::string>());
      if (!side || *side == LateralSide::kUnknown) {
        throw Error(ErrorCode::kBadConfig, "side", "side must be left or right");
      }
      opts.pose.side = *side;
    }
    opts.backend = j.value("backend", std::string());
    const std::string id = svc.create_session(opts);
    ordered_json out;
    out["id"] = id;
    out["frame"] = frame_json(svc.current_frame(id));
    res.status = 201;
    res.set_content(out.dump(), "application/json");
  }));

  server_->Post(R"(/sessions/([^/]+)/move)",
                guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  const json j = body_json(req);
                  MoveCommand cmd;
                  cmd.dz = j.value("dz", 0.0);
                  cmd.du = j.value("du", 0.0);
                  cmd.toggle_side = j.value("toggle_side", false);
                  if (j.contains("direction")) {
                    const std::string name = j["direction"].get<std::string>();
                    cmd.direction = anatomy::direction_from_name(name);
                    if (!cmd.direction) {
                      throw Error(ErrorCode::kBadConfig, "direction",
                                  "unknown direction '" + name + "'");
                    }
                    cmd.steps = j.value("steps", 1);
                  }
                  res.set_content(frame_to_json(svc.move(req.matches[1], cmd)),
                                  "application/json");
                }));

  server_->Get(R"(/sessions/([^/]+)/frame)",
               guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 res.set_content(frame_to_json(svc.current_frame(req.matches[1])),
                                 "application/json");
               }));

  server_->Get(R"(/sessions/([^/]+)/history)",
               guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 ordered_json frames = ordered_json::array();
                 for (const auto& f : svc.history(req.matches[1])) frames.push_back(frame_json(f));
                 ordered_json chats = ordered_json::array();
                 for (const auto& c : svc.chats(req.matches[1])) chats.push_back(audit_json(c));
                 ordered_json out;
                 out["frames"] = frames;
                 out["chats"] = chats;
                 res.set_content(out.dump(), "application/json");
               }));

  server_->Post(R"(/sessions/([^/]+)/query)",
                guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  const json j = body_json(req);
                  QueryRequest q;
                  const std::string task = j.value("task", std::string("summarize"));
                  auto kind = grounding::task_from_name(task);
                  if (!kind) throw Error(ErrorCode::kBadConfig, "task", "unknown task '" + task + "'");
                  q.task = *kind;
                  q.query = j.value("query", std::string());
                  q.backend = j.value("backend", std::string());
                  q.allow_unknown_movement = j.value("allow_unknown_movement", false);
                  res.set_content(audit_to_json(svc.query(req.matches[1], q)),
                                  "application/json");
                }));

  server_->Delete(R"(/sessions/([^/]+))",
                  guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                    if (!svc.close_session(req.matches[1])) {
                      throw Error(ErrorCode::kNoSession, req.matches[1], "no such session");
                    }
                    res.status = 204;
                  }));
}

bool HttpFrontEnd::listen(const std::string& host, int port) {
  return server_->listen(host, port);
}

int HttpFrontEnd::bind_any(const std::string& host) { return server_->bind_to_any_port(host); }

void HttpFrontEnd::run() { server_->listen_after_bind(); }

void HttpFrontEnd::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

bool HttpFrontEnd::running() const { return server_->is_running(); }

}  // namespace ussg::service
