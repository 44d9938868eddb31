#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ussg/core.hpp"

namespace ussg::grounding {

enum class TaskKind { kSummarization, kGuidance };

std::string_view task_name(TaskKind task);  // "summarize" | "guide"
std::optional<TaskKind> task_from_name(std::string_view name);

struct SideConvention {
  // Probe marker convention: the patient's right appears on image-left.
  bool image_left_is_patient_right = true;
};

struct MovementConfig {
  std::vector<EntityClass> reference_priority = {EntityClass::kCCA, EntityClass::kIJV,
                                                 EntityClass::kTH, EntityClass::kCR,
                                                 EntityClass::kVB};
  // Static threshold as a fraction of image width.
  double static_fraction = 0.01;

  // Throws BAD_CONFIG.
  void check() const;
};

// CCA position relative to a midline structure (CR, else VB).
LateralSide infer_lateral_side(const SceneGraph& sg, const SideConvention& conv = {});

// Reported in the probe frame: anatomy drifting image-right means the probe
// moved toward image-left. Throws DIMENSION_MISMATCH.
LateralMovement infer_lateral_movement(const SceneGraph& prev, const SceneGraph& curr,
                                       const MovementConfig& cfg = {});

struct GroundingPrompt {
  std::vector<std::string> triplet_lines;
  std::string side_line;
  std::optional<std::string> movement_line;

  std::size_t line_count() const {
    return triplet_lines.size() + 1 + (movement_line ? 1 : 0);
  }
  // Lines joined by '\n', no trailing newline.
  std::string text() const;
};

// "<Thyroid, partially encases, Cartilage Ring>"
std::string triplet_line(const SceneGraph& sg, const Triplet& t);
std::string side_line(LateralSide side);
std::string movement_line(MovementDirection dir);

// The movement line appears only for guidance. Throws MISSING_MOVEMENT.
GroundingPrompt render_grounding(const SceneGraph& sg, LateralSide side,
                                 const std::optional<LateralMovement>& movement,
                                 TaskKind task);

// ---------------------------------------------------------------------------
// Task instructions
// ---------------------------------------------------------------------------

inline constexpr int kTemplateVersion = 1;

// Raw template text for (task, version); throws BAD_CONFIG when unknown.
std::string_view task_template(TaskKind task, int version = kTemplateVersion);

// Replaces {NAME} placeholders. Unknown placeholder names throw BAD_CONFIG;
// braces around anything that is not an upper-case name are left alone.
std::string render_template(std::string_view text,
                            const std::map<std::string, std::string>& values);

// Throws EMPTY_QUERY.
std::string render_task_instruction(TaskKind task, std::string_view user_query,
                                    int version = kTemplateVersion);

// User message sent alongside the instruction.
std::string render_user_message(const GroundingPrompt& prompt, std::string_view user_query);

// ---------------------------------------------------------------------------
// Reading prompts back
// ---------------------------------------------------------------------------

struct ParsedTriplet {
  EntityClass subject;
  PredicateClass predicate;
  EntityClass object;
};

struct ParsedPrompt {
  std::vector<ParsedTriplet> triplets;
  LateralSide side = LateralSide::kUnknown;
  std::optional<MovementDirection> movement;
  std::string query;

  // Entities named in no triplet line.
  std::vector<EntityClass> missing() const;
};

// Parses the grounding block of a user message. Throws PARSE on a malformed
// triplet or side line.
ParsedPrompt parse_user_message(std::string_view text);

// First structure mentioned in free text ("where is the thyroid?").
std::optional<EntityClass> mentioned_entity(std::string_view text);

}  // namespace ussg::grounding
