#include "ussg/llm.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ussg/error.hpp"
#include "ussg/grounding.hpp"

namespace ussg::llm {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<int>(ms % 1000));
  return buf;
}

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

bool retryable(ErrorCode code) {
  return code == ErrorCode::kTimeout || code == ErrorCode::kTransport;
}

std::string join_names(const std::vector<EntityClass>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += (i + 1 == v.size()) ? " and the " : ", the ";
    out += display_name(v[i]);
  }
  return out;
}

}  // namespace

void BackendConfig::check() const {
  if (kind == BackendKind::kHttpChat) {
    if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
      throw Error(ErrorCode::kBadConfig, "endpoint", "must be an http:// or https:// URL");
    }
    if (model.empty()) throw Error(ErrorCode::kBadConfig, "model", "must not be empty");
  }
  if (timeout_ms <= 0) throw Error(ErrorCode::kBadConfig, "timeout_ms", "must be positive");
  if (retries < 0) throw Error(ErrorCode::kBadConfig, "retries", "must be >= 0");
  if (backoff_ms < 0) throw Error(ErrorCode::kBadConfig, "backoff_ms", "must be >= 0");
  if (max_in_flight < 1) throw Error(ErrorCode::kBadConfig, "max_in_flight", "must be >= 1");
  if (mock_delay_ms < 0) throw Error(ErrorCode::kBadConfig, "delay_ms", "must be >= 0");
}

BackendConfig parse_backend_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kBadConfig, "backend", e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kBadConfig, "backend", "must be an object");
  BackendConfig cfg;
  try {
    const std::string kind = j.value("kind", std::string("mock"));
    if (kind == "http-chat") {
      cfg.kind = BackendKind::kHttpChat;
      cfg.model.clear();
    } else if (kind != "mock") {
      throw Error(ErrorCode::kBadConfig, "kind", "unknown backend kind '" + kind + "'");
    }
    cfg.endpoint = j.value("endpoint", cfg.endpoint);
    cfg.model = j.value("model", cfg.model);
    cfg.api_key_env = j.value("api_key_env", cfg.api_key_env);
    cfg.timeout_ms = j.value("timeout_ms", cfg.timeout_ms);
    cfg.retries = j.value("retries", cfg.retries);
    cfg.backoff_ms = j.value("backoff_ms", cfg.backoff_ms);
    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
    cfg.mock_delay_ms = j.value("delay_ms", cfg.mock_delay_ms);
    const std::string mode = j.value("mock_mode", std::string("oracle"));
    if (mode == "mapping") {
      cfg.mock_mode = MockMode::kMapping;
    } else if (mode != "oracle") {
      throw Error(ErrorCode::kBadConfig, "mock_mode", "unknown mock mode '" + mode + "'");
    }
    if (j.contains("responses")) {
      for (const auto& [k, v] : j.at("responses").items()) {
        cfg.mock_responses[k] = v.get<std::string>();
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadConfig, "backend", e.what());
  }
  cfg.check();
  return cfg;
}

std::string request_fingerprint(std::string_view system, std::string_view user) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  feed(system);
  feed(std::string_view("\x1f", 1));
  feed(user);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg) {
  cfg.check();
  if (cfg.kind == BackendKind::kHttpChat) return std::make_unique<HttpChatBackend>(cfg);
  return std::make_unique<MockBackend>(cfg);
}

// ---------------------------------------------------------------------------
// Mock
// ---------------------------------------------------------------------------

MockBackend::MockBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {}

ChatResponse MockBackend::complete(const ChatRequest& req) {
  if (cfg_.mock_delay_ms > 0) {
    const int wait = std::min(cfg_.mock_delay_ms, cfg_.timeout_ms);
    std::this_thread::sleep_for(std::chrono::milliseconds(wait));
    if (cfg_.mock_delay_ms > cfg_.timeout_ms) {
      throw Error(ErrorCode::kTimeout, req.request_id,
                  "no response within " + std::to_string(cfg_.timeout_ms) + " ms");
    }
  }
  ChatResponse out;
  out.model = cfg_.model;
  out.finish_reason = "stop";
  if (cfg_.mock_mode == MockMode::kMapping) {
    const std::string fp = request_fingerprint(req.system, req.user);
    auto it = cfg_.mock_responses.find(fp);
    if (it == cfg_.mock_responses.end()) {
      throw Error(ErrorCode::kUnscripted, req.request_id,
                  "no scripted response for fingerprint " + fp);
    }
    out.text = it->second;
  } else {
    out.text = oracle_answer(req);
  }
  return out;
}

std::string MockBackend::oracle_answer(const ChatRequest& req) const {
  grounding::ParsedPrompt parsed;
  try {
    parsed = grounding::parse_user_message(req.user);
  } catch (const Error& e) {
    throw Error(ErrorCode::kBadResponse, req.request_id,
                std::string("oracle mock cannot read the prompt: ") + e.detail());
  }
  const auto missing = parsed.missing();
  const bool guidance = parsed.movement.has_value();

  if (!guidance) {
    std::vector<EntityClass> seen;
    for (auto cls : kAllEntities) {
      if (std::find(missing.begin(), missing.end(), cls) == missing.end()) seen.push_back(cls);
    }
    if (seen.empty()) return "No structures of interest are identified in this image.";
    std::string text = "This image shows the " + join_names(seen) + ".";
    const auto focus = grounding::mentioned_entity(parsed.query);
    if (focus && std::find(seen.begin(), seen.end(), *focus) != seen.end()) {
      for (const auto& t : parsed.triplets) {
        if (t.subject != *focus && t.object != *focus) continue;
        text += " The ";
        text += display_name(t.subject);
        text += " ";
        text += display_string(t.predicate);
        text += " the ";
        text += display_name(t.object);
        text += ".";
      }
    } else if (focus) {
      text += " The ";
      text += display_name(*focus);
      text += " is not visible.";
    }
    return text;
  }

  std::optional<EntityClass> target = grounding::mentioned_entity(parsed.query);
  if (!target && !missing.empty()) target = missing.front();
  if (!target) return "All five structures are already visible; hold the probe steady.";
  const std::string name(display_name(*target));
  if (!req.guidance_oracle) {
    return "The " + name + " is not visible, and no guidance is available for this view.";
  }
  const anatomy::Guidance g = req.guidance_oracle(*target);
  if (g.already_visible) return "The " + name + " is already in view; hold the probe steady.";
  std::string text = "The " + name + " is not in view. Move the probe in the " +
                     std::string(anatomy::direction_name(g.direction)) + " direction by " +
                     std::to_string(g.steps) + (g.steps == 1 ? " step" : " steps");
  if (g.then_direction) {
    text += ", then in the " + std::string(anatomy::direction_name(*g.then_direction)) +
            " direction by " + std::to_string(g.then_steps) +
            (g.then_steps == 1 ? " step" : " steps");
  }
  text += ".";
  return text;
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

HttpChatBackend::HttpChatBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.check();
  const std::size_t scheme_end = cfg_.endpoint.find("://");
  const std::size_t path_start = cfg_.endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    base_ = cfg_.endpoint;
    path_ = "/";
  } else {
    base_ = cfg_.endpoint.substr(0, path_start);
    path_ = cfg_.endpoint.substr(path_start);
  }
}

ChatResponse HttpChatBackend::complete(const ChatRequest& req) {
  httplib::Headers headers;
  if (!cfg_.api_key_env.empty()) {
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw Error(ErrorCode::kAuth, req.request_id,
                  "environment variable " + cfg_.api_key_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  json body = {{"model", cfg_.model},
               {"messages",
                json::array({{{"role", "system"}, {"content", req.system}},
                             {{"role", "user"}, {"content", req.user}}})},
               {"temperature", req.temperature},
               {"max_tokens", req.max_tokens}};

  httplib::Client client(base_);
  const auto secs = cfg_.timeout_ms / 1000;
  const auto usecs = (cfg_.timeout_ms % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    const std::string what = httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      throw Error(ErrorCode::kTimeout, req.request_id, what);
    }
    throw Error(ErrorCode::kTransport, req.request_id, what);
  }
  if (res->status == 401 || res->status == 403) {
    throw Error(ErrorCode::kAuth, req.request_id,
                "endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
  }
  if (res->status == 429 || res->status >= 500) {
    throw Error(ErrorCode::kTransport, req.request_id,
                "HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kBadResponse, req.request_id,
                "HTTP " + std::to_string(res->status));
  }

  ChatResponse out;
  out.model = cfg_.model;
  try {
    const json j = json::parse(res->body);
    const json& choice = j.at("choices").at(0);
    out.text = choice.at("message").at("content").get<std::string>();
    out.finish_reason = choice.value("finish_reason", std::string("stop"));
    if (j.contains("model") && j["model"].is_string()) out.model = j["model"];
    if (j.contains("usage") && j["usage"].is_object()) {
      const json& u = j["usage"];
      if (u.contains("prompt_tokens")) out.prompt_tokens = u["prompt_tokens"].get<int>();
      if (u.contains("completion_tokens")) {
        out.completion_tokens = u["completion_tokens"].get<int>();
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadResponse, req.request_id,
                std::string("malformed completion body: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transcript
// ---------------------------------------------------------------------------

std::string record_to_json_line(const TranscriptRecord& rec) {
  nlohmann::ordered_json j;
  j["request_id"] = rec.request_id;
  j["started_at"] = rec.started_at;
  j["finished_at"] = rec.finished_at;
  j["backend"] = rec.backend;
  j["model"] = rec.model;
  j["temperature"] = rec.temperature;
  j["max_tokens"] = rec.max_tokens;
  j["system"] = rec.system;
  j["user"] = rec.user;
  j["response"] = rec.response ? nlohmann::ordered_json(*rec.response) : nullptr;
  j["finish_reason"] = rec.finish_reason;
  j["latency_ms"] = rec.latency_ms;
  j["attempts"] = rec.attempts;
  if (rec.error_code) {
    j["error"] = {{"code", *rec.error_code}, {"message", rec.error_message.value_or("")}};
  } else {
    j["error"] = nullptr;
  }
  j["meta"] = rec.meta;
  return j.dump();
}

TranscriptRecord record_from_json_line(std::string_view line) {
  TranscriptRecord rec;
  try {
    const json j = json::parse(line);
    rec.request_id = j.at("request_id").get<std::string>();
    rec.started_at = j.value("started_at", std::string());
    rec.finished_at = j.value("finished_at", std::string());
    rec.backend = j.at("backend").get<std::string>();
    rec.model = j.value("model", std::string());
    rec.temperature = j.value("temperature", 0.0);
    rec.max_tokens = j.value("max_tokens", 0);
    rec.system = j.at("system").get<std::string>();
    rec.user = j.at("user").get<std::string>();
    if (j.contains("response") && j["response"].is_string()) rec.response = j["response"];
    rec.finish_reason = j.value("finish_reason", std::string());
    rec.latency_ms = j.value("latency_ms", 0.0);
    rec.attempts = j.value("attempts", 0);
    if (j.contains("error") && j["error"].is_object()) {
      rec.error_code = j["error"].at("code").get<std::string>();
      rec.error_message = j["error"].value("message", std::string());
    }
    if (j.contains("meta")) rec.meta = j["meta"].get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "transcript", e.what());
  }
  return rec;
}

TranscriptLog::TranscriptLog(std::string path) : path_(std::move(path)) {}

void TranscriptLog::append(const TranscriptRecord& rec) {
  const std::string line = record_to_json_line(rec) + "\n";
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, path_, "cannot open transcript for appending");
  out << line;
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, path_, "transcript write failed");
}

std::vector<TranscriptRecord> TranscriptLog::read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, path, "cannot open transcript");
  std::vector<TranscriptRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json_line(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, path + ":" + std::to_string(n), e.detail());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

struct Gateway::Slot {
  BackendConfig cfg;
  std::unique_ptr<Backend> impl;
  mutable std::mutex mu;
  std::condition_variable cv;
  int in_flight = 0;
  int peak = 0;
};

Gateway::Gateway(std::shared_ptr<TranscriptLog> log) : log_(std::move(log)) {}
Gateway::~Gateway() = default;

void Gateway::add_backend(const std::string& name, const BackendConfig& cfg) {
  add_backend(name, cfg, make_backend(cfg));
}

void Gateway::add_backend(const std::string& name, const BackendConfig& cfg,
                          std::unique_ptr<Backend> impl) {
  cfg.check();
  if (name.empty()) throw Error(ErrorCode::kBadConfig, "backends", "empty backend name");
  auto slot = std::make_unique<Slot>();
  slot->cfg = cfg;
  slot->impl = std::move(impl);
  slots_[name] = std::move(slot);
}

bool Gateway::has_backend(const std::string& name) const { return slots_.count(name) > 0; }

std::vector<std::string> Gateway::backend_names() const {
  std::vector<std::string> out;
  for (const auto& [name, slot] : slots_) out.push_back(name);
  return out;
}

int Gateway::peak_in_flight(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) return 0;
  std::lock_guard lock(it->second->mu);
  return it->second->peak;
}

ChatResponse Gateway::send(const ChatRequest& req) {
  auto it = slots_.find(req.backend);
  if (it == slots_.end()) {
    throw Error(ErrorCode::kBadConfig, "backend", "unknown backend '" + req.backend + "'");
  }
  Slot& slot = *it->second;

  {
    std::unique_lock lock(slot.mu);
    slot.cv.wait(lock, [&slot] { return slot.in_flight < slot.cfg.max_in_flight; });
    ++slot.in_flight;
    slot.peak = std::max(slot.peak, slot.in_flight);
  }
  struct Release {
    Slot& s;
    ~Release() {
      {
        std::lock_guard lock(s.mu);
        --s.in_flight;
      }
      s.cv.notify_one();
    }
  } release{slot};

  TranscriptRecord rec;
  rec.request_id = req.request_id;
  rec.backend = req.backend;
  rec.model = slot.cfg.model;
  rec.temperature = req.temperature;
  rec.max_tokens = req.max_tokens;
  rec.system = req.system;
  rec.user = req.user;
  rec.meta = req.meta;
  rec.started_at = iso_now();
  const auto start = Clock::now();

  std::optional<Error> last;
  int attempt = 0;
  for (; attempt <= slot.cfg.retries; ++attempt) {
    if (attempt > 0 && slot.cfg.backoff_ms > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(slot.cfg.backoff_ms << (attempt - 1)));
    }
    try {
      ChatResponse resp = slot.impl->complete(req);
      resp.backend = req.backend;
      resp.attempts = attempt + 1;
      resp.latency_ms = elapsed_ms(start);
      rec.finished_at = iso_now();
      rec.model = resp.model;
      rec.response = resp.text;
      rec.finish_reason = resp.finish_reason;
      rec.latency_ms = resp.latency_ms;
      rec.attempts = resp.attempts;
      if (log_) log_->append(rec);
      return resp;
    } catch (const Error& e) {
      last = e;
      if (!retryable(e.code())) {
        ++attempt;
        break;
      }
    }
  }
  rec.finished_at = iso_now();
  rec.latency_ms = elapsed_ms(start);
  rec.attempts = attempt;
  rec.error_code = std::string(error_code_name(last->code()));
  rec.error_message = last->detail();
  if (log_) log_->append(rec);
  throw *last;
}

}  // namespace ussg::llm
