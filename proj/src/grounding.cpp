#include "ussg/grounding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <tuple>
#include <array>
#include <sstream>

#include "templates_embedded.hpp"
#include "ussg/error.hpp"
#include "ussg/metrics.hpp"

namespace ussg::grounding {

namespace {

constexpr std::string_view kSidePrefix = "Scanned side: ";
constexpr std::string_view kMovementPrefix = "Probe lateral movement: ";
constexpr std::string_view kQueryPrefix = "User query: ";

std::string_view side_word(LateralSide side) {
  switch (side) {
    case LateralSide::kLeft: return "left";
    case LateralSide::kRight: return "right";
    case LateralSide::kUnknown: return "undetermined";
  }
  return "undetermined";
}

std::string_view movement_words(MovementDirection dir) {
  switch (dir) {
    case MovementDirection::kImageLeft: return "toward image-left";
    case MovementDirection::kImageRight: return "toward image-right";
    case MovementDirection::kStatic: return "static";
    case MovementDirection::kUnknown: return "undetermined";
  }
  return "undetermined";
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view task_name(TaskKind task) {
  return task == TaskKind::kSummarization ? "summarize" : "guide";
}

std::optional<TaskKind> task_from_name(std::string_view name) {
  if (name == "summarize" || name == "summarization") return TaskKind::kSummarization;
  if (name == "guide" || name == "guidance") return TaskKind::kGuidance;
  return std::nullopt;
}

void MovementConfig::check() const {
  std::vector<EntityClass> sorted = reference_priority;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.size() != kAllEntities.size() ||
      !std::equal(sorted.begin(), sorted.end(), kAllEntities.begin())) {
    throw Error(ErrorCode::kBadConfig, "reference_priority",
                "must be a permutation of the five entities");
  }
  if (!(static_fraction > 0.0)) {
    throw Error(ErrorCode::kBadConfig, "static_fraction", "must be positive");
  }
}

LateralSide infer_lateral_side(const SceneGraph& sg, const SideConvention& conv) {
  const auto cca = best_detection(sg, EntityClass::kCCA);
  if (!cca) return LateralSide::kUnknown;
  auto midline = best_detection(sg, EntityClass::kCR);
  if (!midline) midline = best_detection(sg, EntityClass::kVB);
  if (!midline) return LateralSide::kUnknown;

  const double cca_x = sg.detections[*cca].box.center_x();
  const double mid_x = sg.detections[*midline].box.center_x();
  if (cca_x == mid_x) return LateralSide::kUnknown;
  const bool cca_on_image_left = cca_x < mid_x;
  // With the default convention image-left is the patient's right.
  const bool patient_right = cca_on_image_left == conv.image_left_is_patient_right;
  return patient_right ? LateralSide::kRight : LateralSide::kLeft;
}

LateralMovement infer_lateral_movement(const SceneGraph& prev, const SceneGraph& curr,
                                       const MovementConfig& cfg) {
  cfg.check();
  if (prev.width != curr.width || prev.height != curr.height) {
    throw Error(ErrorCode::kDimensionMismatch, curr.image_id,
                "frames have different image dimensions");
  }
  LateralMovement out;
  for (auto cls : cfg.reference_priority) {
    const auto a = best_detection(prev, cls);
    const auto b = best_detection(curr, cls);
    if (!a || !b) continue;
    const double shift =
        curr.detections[*b].box.center_x() - prev.detections[*a].box.center_x();
    const double eps = cfg.static_fraction * curr.width;
    out.reference = cls;
    out.anatomy_shift_px = shift;
    out.magnitude_px = std::fabs(shift);
    if (out.magnitude_px <= eps) {
      out.direction = MovementDirection::kStatic;
    } else if (shift > 0.0) {
      out.direction = MovementDirection::kImageLeft;
    } else {
      out.direction = MovementDirection::kImageRight;
    }
    return out;
  }
  return out;
}

std::string GroundingPrompt::text() const {
  std::string out;
  for (const auto& line : triplet_lines) {
    out += line;
    out += '\n';
  }
  out += side_line;
  if (movement_line) {
    out += '\n';
    out += *movement_line;
  }
  return out;
}

std::string triplet_line(const SceneGraph& sg, const Triplet& t) {
  std::string out = "<";
  out += display_name(sg.detections[t.sub].cls);
  out += ", ";
  out += display_string(t.pred);
  out += ", ";
  out += display_name(sg.detections[t.obj].cls);
  out += ">";
  return out;
}

std::string side_line(LateralSide side) {
  return std::string(kSidePrefix) + std::string(side_word(side)) + " neck.";
}

std::string movement_line(MovementDirection dir) {
  return std::string(kMovementPrefix) + std::string(movement_words(dir)) + ".";
}

GroundingPrompt render_grounding(const SceneGraph& sg, LateralSide side,
                                 const std::optional<LateralMovement>& movement,
                                 TaskKind task) {
  if (task == TaskKind::kGuidance && !movement) {
    throw Error(ErrorCode::kMissingMovement, sg.image_id,
                "guidance prompts need the lateral movement");
  }
  std::vector<std::size_t> order(sg.triplets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&sg](std::size_t a, std::size_t b) {
    const auto& ta = sg.triplets[a];
    const auto& tb = sg.triplets[b];
    const auto key = [&sg](const Triplet& t) {
      return std::tuple(index_of(sg.detections[t.sub].cls), index_of(sg.detections[t.obj].cls),
                        index_of(t.pred));
    };
    return key(ta) < key(tb);
  });

  GroundingPrompt p;
  for (std::size_t i : order) p.triplet_lines.push_back(triplet_line(sg, sg.triplets[i]));
  p.side_line = side_line(side);
  if (task == TaskKind::kGuidance) p.movement_line = movement_line(movement->direction);
  return p;
}

std::string_view task_template(TaskKind task, int version) {
  if (version == 1) {
    return task == TaskKind::kSummarization ? embedded::kSummarizationV1
                                            : embedded::kGuidanceV1;
  }
  throw Error(ErrorCode::kBadConfig, "template",
              "no template version " + std::to_string(version) + " for task '" +
                  std::string(task_name(task)) + "'");
}

std::string render_template(std::string_view text,
                            const std::map<std::string, std::string>& values) {
  static const std::set<std::string, std::less<>> kKnown = {"TRIPLETS", "SIDE", "MOVEMENT",
                                                            "QUERY"};
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      const std::size_t close = text.find('}', i + 1);
      if (close != std::string_view::npos) {
        const std::string_view name = text.substr(i + 1, close - i - 1);
        const bool is_name =
            !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
              return (c >= 'A' && c <= 'Z') || c == '_';
            });
        if (is_name) {
          if (kKnown.find(name) == kKnown.end()) {
            throw Error(ErrorCode::kBadConfig, "template",
                        "unknown placeholder {" + std::string(name) + "}");
          }
          auto it = values.find(std::string(name));
          if (it != values.end()) out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += text[i++];
  }
  return out;
}

std::string render_task_instruction(TaskKind task, std::string_view user_query, int version) {
  if (trim(user_query).empty()) {
    throw Error(ErrorCode::kEmptyQuery, "query", "the user query is empty");
  }
  return render_template(task_template(task, version),
                         {{"QUERY", std::string(user_query)}});
}

std::string render_user_message(const GroundingPrompt& prompt, std::string_view user_query) {
  return prompt.text() + "\n\n" + std::string(kQueryPrefix) + std::string(user_query);
}

std::vector<EntityClass> ParsedPrompt::missing() const {
  std::array<bool, 5> seen{};
  for (const auto& t : triplets) {
    seen[index_of(t.subject)] = true;
    seen[index_of(t.object)] = true;
  }
  std::vector<EntityClass> out;
  for (auto cls : kAllEntities) {
    if (!seen[index_of(cls)]) out.push_back(cls);
  }
  return out;
}

ParsedPrompt parse_user_message(std::string_view text) {
  ParsedPrompt out;
  bool have_side = false;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    if (line.front() == '<') {
      if (line.back() != '>') throw Error(ErrorCode::kParse, where, "unterminated triplet");
      const std::string_view body = line.substr(1, line.size() - 2);
      const auto c1 = body.find(", ");
      const auto c2 = body.rfind(", ");
      if (c1 == std::string_view::npos || c2 == c1) {
        throw Error(ErrorCode::kParse, where, "triplet needs three fields");
      }
      auto sub = entity_from_display_name(body.substr(0, c1));
      auto pred = predicate_from_string(body.substr(c1 + 2, c2 - c1 - 2));
      auto obj = entity_from_display_name(body.substr(c2 + 2));
      if (!sub || !pred || !obj) throw Error(ErrorCode::kParse, where, "unknown vocabulary");
      out.triplets.push_back({*sub, *pred, *obj});
    } else if (starts_with(line, kSidePrefix)) {
      const auto word = line.substr(kSidePrefix.size());
      if (word == "left neck.") {
        out.side = LateralSide::kLeft;
      } else if (word == "right neck.") {
        out.side = LateralSide::kRight;
      } else if (word == "undetermined neck.") {
        out.side = LateralSide::kUnknown;
      } else {
        throw Error(ErrorCode::kParse, where, "unrecognised side line");
      }
      have_side = true;
    } else if (starts_with(line, kMovementPrefix)) {
      const auto rest = line.substr(kMovementPrefix.size());
      for (auto dir : {MovementDirection::kImageLeft, MovementDirection::kImageRight,
                       MovementDirection::kStatic, MovementDirection::kUnknown}) {
        if (rest == std::string(movement_words(dir)) + ".") out.movement = dir;
      }
      if (!out.movement) throw Error(ErrorCode::kParse, where, "unrecognised movement line");
    } else if (starts_with(line, kQueryPrefix)) {
      out.query = std::string(line.substr(kQueryPrefix.size()));
    }
  }
  if (!have_side) throw Error(ErrorCode::kParse, "prompt", "no scanned-side line");
  return out;
}

std::optional<EntityClass> mentioned_entity(std::string_view text) {
  static const std::vector<std::pair<std::string_view, EntityClass>> kWords = {
      {"cca", EntityClass::kCCA},      {"carotid", EntityClass::kCCA},
      {"artery", EntityClass::kCCA},   {"ijv", EntityClass::kIJV},
      {"jugular", EntityClass::kIJV},  {"vein", EntityClass::kIJV},
      {"cr", EntityClass::kCR},        {"cartilage", EntityClass::kCR},
      {"ring", EntityClass::kCR},      {"trachea", EntityClass::kCR},
      {"th", EntityClass::kTH},        {"thyroid", EntityClass::kTH},
      {"vb", EntityClass::kVB},        {"vertebral", EntityClass::kVB},
      {"vertebra", EntityClass::kVB},  {"vertebrae", EntityClass::kVB},
      {"spine", EntityClass::kVB},
  };
  for (const auto& tok : metrics::tokenize(text)) {
    for (const auto& [word, cls] : kWords) {
      if (tok == word) return cls;
    }
  }
  return std::nullopt;
}

}  // namespace ussg::grounding
