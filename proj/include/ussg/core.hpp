#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ussg {

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

enum class EntityClass : std::uint8_t { kCCA, kIJV, kCR, kTH, kVB };

inline constexpr std::array<EntityClass, 5> kAllEntities = {
    EntityClass::kCCA, EntityClass::kIJV, EntityClass::kCR, EntityClass::kTH,
    EntityClass::kVB};

// "Carotid Common Artery", "Internal Jugular Vein", ...
std::string_view display_name(EntityClass cls);
// "CCA", "IJV", "CR", "TH", "VB"
std::string_view short_key(EntityClass cls);
std::optional<EntityClass> entity_from_key(std::string_view key);
std::optional<EntityClass> entity_from_display_name(std::string_view name);

enum class PredicateClass : std::uint8_t {
  kContiguousWith,
  kPartiallyEncases,
  kSuperiorTo
};

inline constexpr std::array<PredicateClass, 3> kAllPredicates = {
    PredicateClass::kContiguousWith, PredicateClass::kPartiallyEncases,
    PredicateClass::kSuperiorTo};

// "is contiguous with", "partially encases", "is superior to"
std::string_view display_string(PredicateClass pred);
std::optional<PredicateClass> predicate_from_string(std::string_view text);

constexpr std::size_t index_of(EntityClass cls) {
  return static_cast<std::size_t>(cls);
}
constexpr std::size_t index_of(PredicateClass pred) {
  return static_cast<std::size_t>(pred);
}

// ---------------------------------------------------------------------------
// Geometry and graph model
// ---------------------------------------------------------------------------

// Axis-aligned box in pixels, origin top-left, y grows downward.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double center_x() const { return x + w / 2.0; }
  double center_y() const { return y + h / 2.0; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

double iou(const BBox& a, const BBox& b);

struct Detection {
  EntityClass cls = EntityClass::kCCA;
  BBox box;
  // Absent for ground truth; treated as 1.0.
  std::optional<double> score;

  double effective_score() const { return score.value_or(1.0); }

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct Triplet {
  std::size_t sub = 0;
  PredicateClass pred = PredicateClass::kContiguousWith;
  std::size_t obj = 0;
  std::optional<double> score;

  double effective_score() const { return score.value_or(1.0); }

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct SceneGraph {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<Detection> detections;
  std::vector<Triplet> triplets;

  friend bool operator==(const SceneGraph&, const SceneGraph&) = default;
};

enum class LateralSide : std::uint8_t { kLeft, kRight, kUnknown };

std::string_view side_name(LateralSide side);  // "left" | "right" | "unknown"
std::optional<LateralSide> side_from_name(std::string_view name);
LateralSide opposite(LateralSide side);

enum class MovementDirection : std::uint8_t {
  kImageLeft,
  kImageRight,
  kStatic,
  kUnknown
};

std::string_view movement_name(MovementDirection dir);
std::optional<MovementDirection> movement_from_name(std::string_view name);

// Probe motion inferred from consecutive frames. `direction` is in the probe
// frame; `anatomy_shift_px` keeps the signed image-frame shift of the
// reference entity so both conventions stay auditable.
struct LateralMovement {
  MovementDirection direction = MovementDirection::kUnknown;
  double magnitude_px = 0.0;
  double anatomy_shift_px = 0.0;
  std::optional<EntityClass> reference;

  friend bool operator==(const LateralMovement&,
                         const LateralMovement&) = default;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Mirrors every box about the vertical image axis. Classes, scores and
// triplets are untouched: none of the predicates depends on left/right.
SceneGraph flip_horizontal(const SceneGraph& sg);

// Vocabulary entries with no detection in `sg`, in enum order.
std::vector<EntityClass> missing_entities(const SceneGraph& sg);

enum class ViolationCode {
  kBadDimensions,
  kBadBox,
  kBoxOutOfBounds,
  kBadScore,
  kIndexOutOfRange,
  kSelfRelation,
  kDuplicatePair,
  kDuplicateTriplet,
};

std::string_view violation_code_name(ViolationCode code);

struct Violation {
  ViolationCode code;
  std::string path;  // e.g. "triplets[2]"
  std::string message;
};

// Every invariant violation, empty when the graph is well formed.
std::vector<Violation> validate(const SceneGraph& sg);

// Highest-scoring detection of `cls` (first one on ties), if any.
std::optional<std::size_t> best_detection(const SceneGraph& sg,
                                          EntityClass cls);

// ---------------------------------------------------------------------------
// Predictor abstraction
// ---------------------------------------------------------------------------

// Virtual probe state. z runs caudal (0) to cranial (1); u is a lateral offset
// in the patient frame, positive toward the patient's left, 0 centred over
// the vessel bundle.
struct ProbePose {
  double z = 0.5;
  double u = 0.0;
  LateralSide side = LateralSide::kLeft;

  bool valid() const;

  friend bool operator==(const ProbePose&, const ProbePose&) = default;
};

// What a predictor is asked about: a stored image id, a simulated pose, or
// both.
struct FrameRef {
  std::string image_id;
  std::optional<ProbePose> pose;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string_view name() const = 0;
  virtual SceneGraph predict(const FrameRef& frame) = 0;
};

// Name -> factory table ("replay", "simulator", ...). The factory receives an
// opaque configuration string (usually a path or JSON text).
class PredictorRegistry {
 public:
  using Factory =
      std::function<std::unique_ptr<Predictor>(const std::string& config)>;

  void add(std::string name, Factory factory);
  bool contains(std::string_view name) const;
  std::unique_ptr<Predictor> create(std::string_view name,
                                    const std::string& config) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, Factory, std::less<>> factories_;
};

}  // namespace ussg
