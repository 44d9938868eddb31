#include "ussg/core.hpp"

#include <algorithm>
#include <set>
#include <tuple>
#include <utility>

#include "ussg/error.hpp"

namespace ussg {

namespace {

constexpr std::array<std::string_view, 5> kEntityNames = {
    "Carotid Common Artery", "Internal Jugular Vein", "Cartilage Ring",
    "Thyroid", "Vertebral Body"};
constexpr std::array<std::string_view, 5> kEntityKeys = {"CCA", "IJV", "CR",
                                                         "TH", "VB"};
constexpr std::array<std::string_view, 3> kPredicateStrings = {
    "is contiguous with", "partially encases", "is superior to"};

// Absorbs rounding in x' = width - x - w for fractional coordinates.
constexpr double kBoundsSlack = 1e-6;

}  // namespace

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSyntax: return "SYNTAX";
    case ErrorCode::kSchema: return "SCHEMA";
    case ErrorCode::kVocab: return "VOCAB";
    case ErrorCode::kRef: return "REF";
    case ErrorCode::kBounds: return "BOUNDS";
    case ErrorCode::kSelfRelation: return "SELF_RELATION";
    case ErrorCode::kDuplicatePair: return "DUPLICATE_PAIR";
    case ErrorCode::kDuplicateTriplet: return "DUPLICATE_TRIPLET";
    case ErrorCode::kDuplicateId: return "DUPLICATE_ID";
    case ErrorCode::kUnknownImage: return "UNKNOWN_IMAGE";
    case ErrorCode::kMissingScores: return "MISSING_SCORES";
    case ErrorCode::kIdMismatch: return "ID_MISMATCH";
    case ErrorCode::kDimensionMismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::kUnreachable: return "UNREACHABLE";
    case ErrorCode::kMissingMovement: return "MISSING_MOVEMENT";
    case ErrorCode::kEmptyQuery: return "EMPTY_QUERY";
    case ErrorCode::kTimeout: return "TIMEOUT";
    case ErrorCode::kAuth: return "AUTH";
    case ErrorCode::kTransport: return "TRANSPORT";
    case ErrorCode::kBadResponse: return "BAD_RESPONSE";
    case ErrorCode::kUnscripted: return "UNSCRIPTED";
    case ErrorCode::kIo: return "IO";
    case ErrorCode::kNoSession: return "NO_SESSION";
    case ErrorCode::kBadConfig: return "BAD_CONFIG";
    case ErrorCode::kPrecondition: return "PRECONDITION";
    case ErrorCode::kParse: return "PARSE";
    case ErrorCode::kUsage: return "USAGE";
  }
  return "UNKNOWN";
}

std::string Error::format(ErrorCode code, const std::string& path,
                          const std::string& message) {
  std::string out(error_code_name(code));
  if (!path.empty()) out += " at " + path;
  if (!message.empty()) out += ": " + message;
  return out;
}

std::string_view display_name(EntityClass cls) {
  return kEntityNames[index_of(cls)];
}

std::string_view short_key(EntityClass cls) {
  return kEntityKeys[index_of(cls)];
}

std::optional<EntityClass> entity_from_key(std::string_view key) {
  for (auto cls : kAllEntities) {
    if (short_key(cls) == key) return cls;
  }
  return std::nullopt;
}

std::optional<EntityClass> entity_from_display_name(std::string_view name) {
  for (auto cls : kAllEntities) {
    if (display_name(cls) == name) return cls;
  }
  return std::nullopt;
}

std::string_view display_string(PredicateClass pred) {
  return kPredicateStrings[index_of(pred)];
}

std::optional<PredicateClass> predicate_from_string(std::string_view text) {
  for (auto pred : kAllPredicates) {
    if (display_string(pred) == text) return pred;
  }
  return std::nullopt;
}

std::string_view side_name(LateralSide side) {
  switch (side) {
    case LateralSide::kLeft: return "left";
    case LateralSide::kRight: return "right";
    case LateralSide::kUnknown: return "unknown";
  }
  return "unknown";
}

std::optional<LateralSide> side_from_name(std::string_view name) {
  if (name == "left") return LateralSide::kLeft;
  if (name == "right") return LateralSide::kRight;
  if (name == "unknown") return LateralSide::kUnknown;
  return std::nullopt;
}

LateralSide opposite(LateralSide side) {
  switch (side) {
    case LateralSide::kLeft: return LateralSide::kRight;
    case LateralSide::kRight: return LateralSide::kLeft;
    case LateralSide::kUnknown: return LateralSide::kUnknown;
  }
  return LateralSide::kUnknown;
}

std::string_view movement_name(MovementDirection dir) {
  switch (dir) {
    case MovementDirection::kImageLeft: return "image_left";
    case MovementDirection::kImageRight: return "image_right";
    case MovementDirection::kStatic: return "static";
    case MovementDirection::kUnknown: return "unknown";
  }
  return "unknown";
}

std::optional<MovementDirection> movement_from_name(std::string_view name) {
  if (name == "image_left") return MovementDirection::kImageLeft;
  if (name == "image_right") return MovementDirection::kImageRight;
  if (name == "static") return MovementDirection::kStatic;
  if (name == "unknown") return MovementDirection::kUnknown;
  return std::nullopt;
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

SceneGraph flip_horizontal(const SceneGraph& sg) {
  SceneGraph out = sg;
  for (auto& det : out.detections) {
    det.box.x = sg.width - det.box.x - det.box.w;
  }
  return out;
}

std::vector<EntityClass> missing_entities(const SceneGraph& sg) {
  std::array<bool, kAllEntities.size()> seen{};
  for (const auto& det : sg.detections) seen[index_of(det.cls)] = true;
  std::vector<EntityClass> out;
  for (auto cls : kAllEntities) {
    if (!seen[index_of(cls)]) out.push_back(cls);
  }
  return out;
}

std::string_view violation_code_name(ViolationCode code) {
  switch (code) {
    case ViolationCode::kBadDimensions: return "BAD_DIMENSIONS";
    case ViolationCode::kBadBox: return "BAD_BOX";
    case ViolationCode::kBoxOutOfBounds: return "BOX_OUT_OF_BOUNDS";
    case ViolationCode::kBadScore: return "BAD_SCORE";
    case ViolationCode::kIndexOutOfRange: return "INDEX_OUT_OF_RANGE";
    case ViolationCode::kSelfRelation: return "SELF_RELATION";
    case ViolationCode::kDuplicatePair: return "DUPLICATE_PAIR";
    case ViolationCode::kDuplicateTriplet: return "DUPLICATE_TRIPLET";
  }
  return "UNKNOWN";
}

std::vector<Violation> validate(const SceneGraph& sg) {
  std::vector<Violation> out;
  auto add = [&out](ViolationCode code, std::string path, std::string msg) {
    out.push_back({code, std::move(path), std::move(msg)});
  };
  auto score_ok = [](const std::optional<double>& s) {
    return !s || (*s >= 0.0 && *s <= 1.0);
  };

  if (!(sg.width > 0.0) || !(sg.height > 0.0)) {
    add(ViolationCode::kBadDimensions, "", "width and height must be positive");
  }
  for (std::size_t i = 0; i < sg.detections.size(); ++i) {
    const auto& det = sg.detections[i];
    const std::string path = "detections[" + std::to_string(i) + "]";
    if (!(det.box.w > 0.0) || !(det.box.h > 0.0)) {
      add(ViolationCode::kBadBox, path, "box width and height must be positive");
    } else if (det.box.x < -kBoundsSlack || det.box.y < -kBoundsSlack ||
               det.box.right() > sg.width + kBoundsSlack ||
               det.box.bottom() > sg.height + kBoundsSlack) {
      add(ViolationCode::kBoxOutOfBounds, path, "box extends outside the image");
    }
    if (!score_ok(det.score)) {
      add(ViolationCode::kBadScore, path, "score outside [0,1]");
    }
  }

  std::set<std::pair<std::size_t, std::size_t>> pairs;
  std::set<std::tuple<std::size_t, int, std::size_t>> seen;
  const std::size_t n = sg.detections.size();
  for (std::size_t i = 0; i < sg.triplets.size(); ++i) {
    const auto& t = sg.triplets[i];
    const std::string path = "triplets[" + std::to_string(i) + "]";
    if (t.sub >= n || t.obj >= n) {
      add(ViolationCode::kIndexOutOfRange, path,
          "detection index out of range (have " + std::to_string(n) + ")");
      continue;
    }
    if (t.sub == t.obj) {
      add(ViolationCode::kSelfRelation, path, "subject equals object");
      continue;
    }
    if (!score_ok(t.score)) {
      add(ViolationCode::kBadScore, path, "score outside [0,1]");
    }
    if (!seen.emplace(t.sub, static_cast<int>(t.pred), t.obj).second) {
      add(ViolationCode::kDuplicateTriplet, path, "triplet repeated");
    } else if (!pairs.emplace(t.sub, t.obj).second) {
      add(ViolationCode::kDuplicatePair, path,
          "more than one predicate on the same ordered pair");
    }
  }
  return out;
}

std::optional<std::size_t> best_detection(const SceneGraph& sg,
                                          EntityClass cls) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < sg.detections.size(); ++i) {
    if (sg.detections[i].cls != cls) continue;
    if (!best || sg.detections[i].effective_score() >
                     sg.detections[*best].effective_score()) {
      best = i;
    }
  }
  return best;
}

bool ProbePose::valid() const {
  return z >= 0.0 && z <= 1.0 && u >= -1.0 && u <= 1.0 &&
         side != LateralSide::kUnknown;
}

void PredictorRegistry::add(std::string name, Factory factory) {
  factories_[std::move(name)] = std::move(factory);
}

bool PredictorRegistry::contains(std::string_view name) const {
  return factories_.find(name) != factories_.end();
}

std::unique_ptr<Predictor> PredictorRegistry::create(
    std::string_view name, const std::string& config) const {
  auto it = factories_.find(name);
  if (it == factories_.end()) {
    throw Error(ErrorCode::kBadConfig,
                "unknown predictor '" + std::string(name) + "'");
  }
  return it->second(config);
}

std::vector<std::string> PredictorRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : factories_) out.push_back(name);
  return out;
}

}  // namespace ussg
