#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "ussg/anatomy.hpp"
#include "ussg/core.hpp"
#include "ussg/grounding.hpp"
#include "ussg/llm.hpp"
#include "ussg/metrics.hpp"

namespace httplib {
class Server;
}

namespace ussg::service {

struct ServiceConfig {
  anatomy::NeckModel model = anatomy::NeckModel::default_model();
  anatomy::NoiseConfig noise;
  double step = anatomy::kDefaultStep;
  std::size_t history_limit = 64;
  std::string default_backend = "mock";
  // An oracle mock named "mock" is added when the map is empty.
  std::map<std::string, llm::BackendConfig> backends;
  std::string transcript_path;  // empty: no transcript
  // Lets guidance run on the first frame with an undetermined movement line.
  bool allow_single_frame_guidance = false;
  grounding::MovementConfig movement;
  grounding::SideConvention side_convention;

  // Throws BAD_CONFIG.
  void check() const;
};

// JSON config: {"model_file", "model", "noise": {...}, "step", "history_limit",
// "default_backend", "backends": {name: {...}}, "transcript",
// "allow_single_frame_guidance", "static_fraction"}. Relative paths resolve
// against `base_dir`. Throws BAD_CONFIG or IO.
ServiceConfig parse_service_config(std::string_view json_text, const std::string& base_dir = ".");
ServiceConfig read_service_config(const std::string& path);

struct Frame {
  std::uint64_t index = 0;
  ProbePose pose;
  SceneGraph graph;
  LateralSide side = LateralSide::kUnknown;  // inferred from the graph
  std::optional<LateralMovement> movement;   // relative to the previous frame
};

struct MoveCommand {
  double dz = 0.0;
  double du = 0.0;  // patient frame, positive toward the patient's left
  bool toggle_side = false;
  // Alternative to dz/du: quantised steps through step_pose.
  std::optional<anatomy::GuidanceDirection> direction;
  int steps = 1;
};

// Applies a move with clamping. A side toggle keeps the probe over the same
// anatomy: (z, u, side) becomes (z, -u, other side).
ProbePose apply_move(const ProbePose& pose, const MoveCommand& cmd, double step);

struct QueryRequest {
  grounding::TaskKind task = grounding::TaskKind::kSummarization;
  std::string query;
  std::string backend;  // empty: the service default
  // Accept an undetermined movement line on a single-frame session.
  bool allow_unknown_movement = false;
};

struct QueryAudit {
  std::string session_id;
  std::string request_id;
  std::uint64_t frame_index = 0;
  ProbePose pose;
  grounding::TaskKind task = grounding::TaskKind::kSummarization;
  std::string query;
  std::vector<std::string> triplet_lines;
  LateralSide side = LateralSide::kUnknown;
  std::optional<LateralMovement> movement;
  std::vector<EntityClass> missing;
  std::optional<EntityClass> target;
  std::string system;
  std::string user;
  std::string backend;
  std::string response;
  // Guidance only.
  std::optional<anatomy::Guidance> oracle;
  bool oracle_unreachable = false;
  std::vector<anatomy::GuidanceDirection> extracted;
  // Oracle direction is among the extracted ones.
  std::optional<bool> direction_match;
};

struct CreateOptions {
  ProbePose pose;
  std::string backend;  // empty: the service default
};

class ScanService {
 public:
  explicit ScanService(ServiceConfig cfg);
  // Uses a caller-supplied gateway (tests inject fake backends).
  ScanService(ServiceConfig cfg, std::shared_ptr<llm::Gateway> gateway);
  ~ScanService();

  // Captures frame 0. Throws BAD_CONFIG for an invalid pose or backend.
  std::string create_session(const CreateOptions& opts);
  bool close_session(const std::string& id);
  std::vector<std::string> session_ids() const;

  // All of these throw NO_SESSION for unknown ids.
  Frame move(const std::string& id, const MoveCommand& cmd);
  Frame current_frame(const std::string& id) const;
  std::vector<Frame> history(const std::string& id) const;
  std::vector<QueryAudit> chats(const std::string& id) const;
  ProbePose pose(const std::string& id) const;
  // Guidance on a single-frame session throws PRECONDITION unless allowed.
  // The session is locked only while the prompt is assembled and while the
  // result is recorded, not during the backend call.
  QueryAudit query(const std::string& id, const QueryRequest& req);

  const ServiceConfig& config() const { return cfg_; }
  llm::Gateway& gateway() { return *gateway_; }

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  Frame capture(Session& s, const ProbePose& pose) const;

  ServiceConfig cfg_;
  std::shared_ptr<llm::TranscriptLog> log_;
  std::shared_ptr<llm::Gateway> gateway_;
  std::unique_ptr<anatomy::SimulatorPredictor> sim_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

// ---------------------------------------------------------------------------
// Direction words in free text
// ---------------------------------------------------------------------------

// Directions named in `text`, in order of first appearance. "left"/"right"
// are read in the patient frame and mapped through the scanned side; they
// are ignored when the side is unknown.
std::vector<anatomy::GuidanceDirection> extract_directions(std::string_view text,
                                                           LateralSide side);

// Reads "<direction> ... <N> steps" legs from a guidance answer. A leg
// without a count is one step.
std::vector<MoveCommand> moves_from_text(std::string_view text, LateralSide side);

struct GuidanceItem {
  std::string request_id;
  std::string expected;  // oracle direction name
  std::vector<anatomy::GuidanceDirection> extracted;
  bool correct = false;
};

struct GuidanceEvaluation {
  std::size_t records = 0;  // guidance records seen
  std::size_t scored = 0;   // with an oracle direction and a response
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::vector<GuidanceItem> items;
  std::optional<metrics::TextReport> text;
};

// Scores guidance records in a transcript against the oracle direction
// stored in each record's meta; a record matches when that direction is in
// the extracted set. With `references` (request id -> reference text)
// METEOR and ROUGE-L are added. Throws PARSE when no guidance record is
// present.
GuidanceEvaluation evaluate_guidance(const std::vector<llm::TranscriptRecord>& records,
                                     const std::map<std::string, std::string>* references = nullptr,
                                     const metrics::TextMetricConfig& text_cfg = {});

// ---------------------------------------------------------------------------
// JSON views and HTTP front end
// ---------------------------------------------------------------------------

std::string frame_to_json(const Frame& f);
std::string audit_to_json(const QueryAudit& a);

class HttpFrontEnd {
 public:
  explicit HttpFrontEnd(ScanService& service);
  ~HttpFrontEnd();

  // Blocks until stop(). Returns false when the address cannot be bound.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port; call run() afterwards.
  int bind_any(const std::string& host);
  void run();
  void stop();
  bool running() const;

 private:
  void routes();
  ScanService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace ussg::service
