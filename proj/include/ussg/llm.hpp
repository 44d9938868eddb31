#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ussg/anatomy.hpp"
#include "ussg/core.hpp"

namespace ussg::llm {

// Answers "how do I reach this structure from here" for oracle-mode mocks.
using GuidanceOracle = std::function<anatomy::Guidance(EntityClass target)>;

struct ChatRequest {
  std::string request_id;
  std::string backend;  // registered backend name
  std::string system;
  std::string user;
  double temperature = 0.0;
  int max_tokens = 512;
  // Free-form annotations copied into the transcript (task, session, ...).
  std::map<std::string, std::string> meta;
  // Not serialised. Only the oracle mock looks at it.
  GuidanceOracle guidance_oracle;
};

struct ChatResponse {
  std::string text;
  std::string backend;
  std::string model;
  std::string finish_reason;
  double latency_ms = 0.0;
  int attempts = 1;
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;
};

enum class BackendKind { kHttpChat, kMock };
enum class MockMode { kMapping, kOracle };

struct BackendConfig {
  BackendKind kind = BackendKind::kMock;
  // http-chat: full URL of the chat-completions endpoint.
  std::string endpoint;
  std::string model = "mock";
  // Name of the environment variable holding the API key. The key itself is
  // never stored in configs or transcripts.
  std::string api_key_env;
  int timeout_ms = 30000;
  int retries = 2;
  int backoff_ms = 200;
  int max_in_flight = 4;

  MockMode mock_mode = MockMode::kOracle;
  // Mapping mode: fingerprint -> response text.
  std::map<std::string, std::string> mock_responses;
  int mock_delay_ms = 0;

  // Throws BAD_CONFIG.
  void check() const;
};

// Accepts {"kind": "http-chat"|"mock", "endpoint", "model", "api_key_env",
// "timeout_ms", "retries", "backoff_ms", "max_in_flight", "mock_mode":
// "mapping"|"oracle", "responses": {fingerprint: text}, "delay_ms"}.
BackendConfig parse_backend_config(std::string_view json_text);

// FNV-1a 64 over system, a 0x1f separator and user; 16 lowercase hex digits.
std::string request_fingerprint(std::string_view system, std::string_view user);

class Backend {
 public:
  virtual ~Backend() = default;
  // One attempt. Throws TIMEOUT or TRANSPORT for retryable failures and
  // AUTH, BAD_RESPONSE or UNSCRIPTED otherwise.
  virtual ChatResponse complete(const ChatRequest& req) = 0;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg);

// Deterministic responder used offline and in tests.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(BackendConfig cfg);
  ChatResponse complete(const ChatRequest& req) override;

 private:
  std::string oracle_answer(const ChatRequest& req) const;
  BackendConfig cfg_;
};

// OpenAI-style chat-completions over HTTP(S).
class HttpChatBackend final : public Backend {
 public:
  explicit HttpChatBackend(BackendConfig cfg);
  ChatResponse complete(const ChatRequest& req) override;

 private:
  BackendConfig cfg_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
};

// ---------------------------------------------------------------------------
// Transcript
// ---------------------------------------------------------------------------

struct TranscriptRecord {
  std::string request_id;
  std::string started_at;   // ISO-8601 UTC
  std::string finished_at;
  std::string backend;
  std::string model;
  double temperature = 0.0;
  int max_tokens = 0;
  std::string system;
  std::string user;
  std::optional<std::string> response;
  std::string finish_reason;
  double latency_ms = 0.0;
  int attempts = 0;
  std::optional<std::string> error_code;
  std::optional<std::string> error_message;
  std::map<std::string, std::string> meta;
};

std::string record_to_json_line(const TranscriptRecord& rec);
// Throws PARSE.
TranscriptRecord record_from_json_line(std::string_view line);

// Append-only JSONL file; one line per send, written under a lock.
class TranscriptLog {
 public:
  explicit TranscriptLog(std::string path);
  void append(const TranscriptRecord& rec);
  const std::string& path() const { return path_; }

  // Throws IO or PARSE (with the line number in the path).
  static std::vector<TranscriptRecord> read(const std::string& path);

 private:
  std::string path_;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

class Gateway {
 public:
  explicit Gateway(std::shared_ptr<TranscriptLog> log = nullptr);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void add_backend(const std::string& name, const BackendConfig& cfg);
  void add_backend(const std::string& name, const BackendConfig& cfg,
                   std::unique_ptr<Backend> impl);
  bool has_backend(const std::string& name) const;
  std::vector<std::string> backend_names() const;

  // Retries TIMEOUT and TRANSPORT with exponential backoff, waits for an
  // in-flight slot, and logs exactly one transcript record whatever the
  // outcome. Unknown backend names throw BAD_CONFIG.
  ChatResponse send(const ChatRequest& req);

  // Highest concurrency observed on a backend so far.
  int peak_in_flight(const std::string& name) const;

 private:
  struct Slot;
  std::map<std::string, std::unique_ptr<Slot>> slots_;
  std::shared_ptr<TranscriptLog> log_;
};

}  // namespace ussg::llm
